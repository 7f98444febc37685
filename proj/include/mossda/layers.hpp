#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mossda/rng.hpp"
#include "mossda/tensor.hpp"

namespace mossda {

// Named view of one parameter tensor and its gradient buffer. Shapes are
// logical; data pointers address the layer's own storage.
template <typename Scalar>
struct ParamRef {
    std::string name;
    Scalar* value = nullptr;
    Scalar* grad = nullptr;  // null for non-trainable state (running stats)
    std::vector<int> shape;
    std::size_t count = 0;
};

namespace init {

// Fan-in-scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
void uniform_fan_in(Scalar* data, std::size_t count, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i)
        data[i] = static_cast<Scalar>((2.0 * rng.uniform01() - 1.0) * bound);
}

}  // namespace init

// 1D convolution over (n, channels, steps) batches. Weights are stored as a
// (out_channels x in_channels*kernel) matrix so forward/backward reduce to
// one GEMM per sample through an im2col buffer.
template <typename Scalar>
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(int in_channels, int out_channels, int kernel, int stride, int pad_left, int pad_right,
           int dilation, Rng& rng)
        : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride),
          pad_left_(pad_left), pad_right_(pad_right), dilation_(dilation) {
        weight_.resize(out_channels, in_channels * kernel);
        bias_ = VecX<Scalar>::Zero(out_channels);
        d_weight_ = MatX<Scalar>::Zero(out_channels, in_channels * kernel);
        d_bias_ = VecX<Scalar>::Zero(out_channels);
        const int fan_in = in_channels * kernel;
        init::uniform_fan_in(weight_.data(), weight_.size(), fan_in, rng);
        init::uniform_fan_in(bias_.data(), bias_.size(), fan_in, rng);
    }

    struct Cache {
        MatX<Scalar> col;  // (in_channels*kernel, n*out_steps); sample s owns columns [s*T', (s+1)*T')
        int in_steps = 0;
    };

    int out_steps(int in_steps) const {
        const int span = (kernel_ - 1) * dilation_ + 1;
        const int padded = in_steps + pad_left_ + pad_right_;
        require(padded >= span, "Conv1d: sequence too short for kernel span");
        return (padded - span) / stride_ + 1;
    }

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache) const {
        require(x.channels == in_channels_, "Conv1d: channel mismatch");
        const int t_out = out_steps(x.steps);
        Tensor3<Scalar> y(x.n, out_channels_, t_out);
        cache.in_steps = x.steps;
        cache.col = MatX<Scalar>::Zero(in_channels_ * kernel_, static_cast<Eigen::Index>(x.n) * t_out);
        for (int s = 0; s < x.n; ++s) {
            const Eigen::Index base = static_cast<Eigen::Index>(s) * t_out;
            for (int c = 0; c < in_channels_; ++c) {
                const Scalar* xc = x.sample(s) + static_cast<std::size_t>(c) * x.steps;
                for (int k = 0; k < kernel_; ++k) {
                    const int row = c * kernel_ + k;
                    for (int t = 0; t < t_out; ++t) {
                        const int t_in = t * stride_ - pad_left_ + k * dilation_;
                        if (t_in >= 0 && t_in < x.steps) cache.col(row, base + t) = xc[t_in];
                    }
                }
            }
        }
        const MatX<Scalar> prod = weight_ * cache.col;  // (out_channels, n*t_out)
        for (int s = 0; s < x.n; ++s) {
            const Eigen::Index base = static_cast<Eigen::Index>(s) * t_out;
            for (int c = 0; c < out_channels_; ++c) {
                Scalar* yc = y.sample(s) + static_cast<std::size_t>(c) * t_out;
                for (int t = 0; t < t_out; ++t) yc[t] = prod(c, base + t) + bias_[c];
            }
        }
        return y;
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, const Cache& cache) {
        const int t_out = dy.steps;
        MatX<Scalar> g(out_channels_, static_cast<Eigen::Index>(dy.n) * t_out);
        for (int s = 0; s < dy.n; ++s) {
            const Eigen::Index base = static_cast<Eigen::Index>(s) * t_out;
            for (int c = 0; c < out_channels_; ++c) {
                const Scalar* dyc = dy.sample(s) + static_cast<std::size_t>(c) * t_out;
                for (int t = 0; t < t_out; ++t) g(c, base + t) = dyc[t];
            }
        }
        d_weight_.noalias() += g * cache.col.transpose();
        d_bias_ += g.rowwise().sum();
        const MatX<Scalar> dcol = weight_.transpose() * g;  // (in*kernel, n*t_out)

        Tensor3<Scalar> dx(dy.n, in_channels_, cache.in_steps);
        for (int s = 0; s < dy.n; ++s) {
            const Eigen::Index base = static_cast<Eigen::Index>(s) * t_out;
            for (int c = 0; c < in_channels_; ++c) {
                Scalar* dxc = dx.sample(s) + static_cast<std::size_t>(c) * cache.in_steps;
                for (int k = 0; k < kernel_; ++k) {
                    const int row = c * kernel_ + k;
                    for (int t = 0; t < t_out; ++t) {
                        const int t_in = t * stride_ - pad_left_ + k * dilation_;
                        if (t_in >= 0 && t_in < cache.in_steps) dxc[t_in] += dcol(row, base + t);
                    }
                }
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", weight_.data(), d_weight_.data(),
                       {out_channels_, in_channels_, kernel_},
                       static_cast<std::size_t>(weight_.size())});
        out.push_back({prefix + ".bias", bias_.data(), d_bias_.data(), {out_channels_},
                       static_cast<std::size_t>(bias_.size())});
    }

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }

private:
    int in_channels_ = 0, out_channels_ = 0, kernel_ = 1, stride_ = 1;
    int pad_left_ = 0, pad_right_ = 0, dilation_ = 1;
    MatX<Scalar> weight_, d_weight_;
    VecX<Scalar> bias_, d_bias_;
};

// Helper: symmetric "same" padding for stride-1 convolutions.
inline std::pair<int, int> same_padding(int kernel, int dilation = 1) {
    const int total = (kernel - 1) * dilation;
    return {total / 2, total - total / 2};
}

// Batch normalization over channels of (n, channels, steps) batches.
// Training uses per-batch statistics and updates running averages with
// momentum 0.1; evaluation uses the running averages.
template <typename Scalar>
class BatchNorm1d {
public:
    BatchNorm1d() = default;
    explicit BatchNorm1d(int channels) : channels_(channels) {
        gamma_ = VecX<Scalar>::Ones(channels);
        beta_ = VecX<Scalar>::Zero(channels);
        d_gamma_ = VecX<Scalar>::Zero(channels);
        d_beta_ = VecX<Scalar>::Zero(channels);
        running_mean_ = VecX<Scalar>::Zero(channels);
        running_var_ = VecX<Scalar>::Ones(channels);
    }

    struct Cache {
        Tensor3<Scalar> x_hat;
        VecX<Scalar> inv_std;
        bool train = false;
    };

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache, bool train) {
        require(x.channels == channels_, "BatchNorm1d: channel mismatch");
        const std::size_t per_channel = static_cast<std::size_t>(x.n) * x.steps;
        VecX<Scalar> mean(channels_), var(channels_);
        if (train) {
            for (int c = 0; c < channels_; ++c) {
                double sum = 0.0, sq = 0.0;
                for (int s = 0; s < x.n; ++s) {
                    const Scalar* xc = x.sample(s) + static_cast<std::size_t>(c) * x.steps;
                    for (int t = 0; t < x.steps; ++t) {
                        sum += xc[t];
                        sq += double(xc[t]) * xc[t];
                    }
                }
                const double m = sum / per_channel;
                mean[c] = static_cast<Scalar>(m);
                var[c] = static_cast<Scalar>(std::max(0.0, sq / per_channel - m * m));
            }
            running_mean_ = (Scalar(1) - momentum_) * running_mean_ + momentum_ * mean;
            running_var_ = (Scalar(1) - momentum_) * running_var_ + momentum_ * var;
        } else {
            mean = running_mean_;
            var = running_var_;
        }

        cache.train = train;
        cache.inv_std.resize(channels_);
        for (int c = 0; c < channels_; ++c)
            cache.inv_std[c] = Scalar(1) / std::sqrt(var[c] + eps_);

        Tensor3<Scalar> y(x.n, channels_, x.steps);
        cache.x_hat = Tensor3<Scalar>(x.n, channels_, x.steps);
        for (int s = 0; s < x.n; ++s) {
            for (int c = 0; c < channels_; ++c) {
                const Scalar* xc = x.sample(s) + static_cast<std::size_t>(c) * x.steps;
                Scalar* hc = cache.x_hat.sample(s) + static_cast<std::size_t>(c) * x.steps;
                Scalar* yc = y.sample(s) + static_cast<std::size_t>(c) * x.steps;
                for (int t = 0; t < x.steps; ++t) {
                    hc[t] = (xc[t] - mean[c]) * cache.inv_std[c];
                    yc[t] = gamma_[c] * hc[t] + beta_[c];
                }
            }
        }
        return y;
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, const Cache& cache) {
        const std::size_t per_channel = static_cast<std::size_t>(dy.n) * dy.steps;
        Tensor3<Scalar> dx(dy.n, channels_, dy.steps);
        for (int c = 0; c < channels_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int s = 0; s < dy.n; ++s) {
                const Scalar* dyc = dy.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                const Scalar* hc = cache.x_hat.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                for (int t = 0; t < dy.steps; ++t) {
                    sum_dy += dyc[t];
                    sum_dy_xhat += double(dyc[t]) * hc[t];
                }
            }
            d_gamma_[c] += static_cast<Scalar>(sum_dy_xhat);
            d_beta_[c] += static_cast<Scalar>(sum_dy);
            const double inv_n = 1.0 / static_cast<double>(per_channel);
            for (int s = 0; s < dy.n; ++s) {
                const Scalar* dyc = dy.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                const Scalar* hc = cache.x_hat.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                Scalar* dxc = dx.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                for (int t = 0; t < dy.steps; ++t) {
                    if (cache.train) {
                        dxc[t] = static_cast<Scalar>(
                            gamma_[c] * cache.inv_std[c] *
                            (dyc[t] - inv_n * sum_dy - hc[t] * inv_n * sum_dy_xhat));
                    } else {
                        dxc[t] = gamma_[c] * cache.inv_std[c] * dyc[t];
                    }
                }
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", gamma_.data(), d_gamma_.data(), {channels_},
                       static_cast<std::size_t>(channels_)});
        out.push_back({prefix + ".beta", beta_.data(), d_beta_.data(), {channels_},
                       static_cast<std::size_t>(channels_)});
    }

    void collect_state(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        out.push_back({prefix + ".running_mean", running_mean_.data(), nullptr, {channels_},
                       static_cast<std::size_t>(channels_)});
        out.push_back({prefix + ".running_var", running_var_.data(), nullptr, {channels_},
                       static_cast<std::size_t>(channels_)});
    }

private:
    int channels_ = 0;
    Scalar eps_ = Scalar(1e-5);
    Scalar momentum_ = Scalar(0.1);
    VecX<Scalar> gamma_, beta_, d_gamma_, d_beta_;
    VecX<Scalar> running_mean_, running_var_;
};

template <typename Scalar>
struct Relu3 {
    struct Cache {
        Tensor3<Scalar> x;
    };

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache) const {
        cache.x = x;
        Tensor3<Scalar> y = x;
        for (auto& v : y.data) v = std::max(v, Scalar(0));
        return y;
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, const Cache& cache) const {
        Tensor3<Scalar> dx = dy;
        for (std::size_t i = 0; i < dx.data.size(); ++i)
            if (cache.x.data[i] <= Scalar(0)) dx.data[i] = Scalar(0);
        return dx;
    }
};

// Non-overlapping max pooling with window 2, stride 2; a trailing odd step
// is dropped.
template <typename Scalar>
struct MaxPool1d {
    struct Cache {
        std::vector<int> argmax;  // flat index per output element
        int in_steps = 0;
    };

    Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache) const {
        require(x.steps >= 2, "MaxPool1d: sequence too short to pool");
        const int t_out = x.steps / 2;
        Tensor3<Scalar> y(x.n, x.channels, t_out);
        cache.argmax.assign(y.size(), 0);
        cache.in_steps = x.steps;
        std::size_t idx = 0;
        for (int s = 0; s < x.n; ++s) {
            for (int c = 0; c < x.channels; ++c) {
                const Scalar* xc = x.sample(s) + static_cast<std::size_t>(c) * x.steps;
                Scalar* yc = y.sample(s) + static_cast<std::size_t>(c) * t_out;
                for (int t = 0; t < t_out; ++t, ++idx) {
                    const int a = 2 * t, b = 2 * t + 1;
                    if (xc[a] >= xc[b]) {
                        yc[t] = xc[a];
                        cache.argmax[idx] = a;
                    } else {
                        yc[t] = xc[b];
                        cache.argmax[idx] = b;
                    }
                }
            }
        }
        return y;
    }

    Tensor3<Scalar> backward(const Tensor3<Scalar>& dy, const Cache& cache) const {
        Tensor3<Scalar> dx(dy.n, dy.channels, cache.in_steps);
        std::size_t idx = 0;
        for (int s = 0; s < dy.n; ++s) {
            for (int c = 0; c < dy.channels; ++c) {
                const Scalar* dyc = dy.sample(s) + static_cast<std::size_t>(c) * dy.steps;
                Scalar* dxc = dx.sample(s) + static_cast<std::size_t>(c) * cache.in_steps;
                for (int t = 0; t < dy.steps; ++t, ++idx) dxc[cache.argmax[idx]] += dyc[t];
            }
        }
        return dx;
    }
};

// Mean over the time axis: (n, channels, steps) -> (n, channels).
template <typename Scalar>
struct GlobalAvgPool {
    struct Cache {
        int steps = 0;
    };

    MatX<Scalar> forward(const Tensor3<Scalar>& x, Cache& cache) const {
        cache.steps = x.steps;
        MatX<Scalar> y(x.n, x.channels);
        for (int s = 0; s < x.n; ++s)
            for (int c = 0; c < x.channels; ++c) {
                const Scalar* xc = x.sample(s) + static_cast<std::size_t>(c) * x.steps;
                Scalar sum = 0;
                for (int t = 0; t < x.steps; ++t) sum += xc[t];
                y(s, c) = sum / static_cast<Scalar>(x.steps);
            }
        return y;
    }

    Tensor3<Scalar> backward(const MatX<Scalar>& dy, const Cache& cache) const {
        Tensor3<Scalar> dx(static_cast<int>(dy.rows()), static_cast<int>(dy.cols()), cache.steps);
        for (int s = 0; s < dx.n; ++s)
            for (int c = 0; c < dx.channels; ++c) {
                Scalar* dxc = dx.sample(s) + static_cast<std::size_t>(c) * cache.steps;
                const Scalar g = dy(s, c) / static_cast<Scalar>(cache.steps);
                for (int t = 0; t < cache.steps; ++t) dxc[t] = g;
            }
        return dx;
    }
};

// Affine map on row-vector batches: y = x W^T + b.
template <typename Scalar>
class Linear {
public:
    Linear() = default;
    Linear(int in_features, int out_features, Rng& rng)
        : in_features_(in_features), out_features_(out_features) {
        weight_.resize(out_features, in_features);
        bias_ = VecX<Scalar>::Zero(out_features);
        d_weight_ = MatX<Scalar>::Zero(out_features, in_features);
        d_bias_ = VecX<Scalar>::Zero(out_features);
        init::uniform_fan_in(weight_.data(), weight_.size(), in_features, rng);
        init::uniform_fan_in(bias_.data(), bias_.size(), in_features, rng);
    }

    struct Cache {
        MatX<Scalar> x;
    };

    MatX<Scalar> forward(const MatX<Scalar>& x, Cache& cache) const {
        require(x.cols() == in_features_, "Linear: input width mismatch");
        cache.x = x;
        MatX<Scalar> y = x * weight_.transpose();
        y.rowwise() += bias_.transpose();
        return y;
    }

    MatX<Scalar> backward(const MatX<Scalar>& dy, const Cache& cache) {
        d_weight_.noalias() += dy.transpose() * cache.x;
        d_bias_ += dy.colwise().sum().transpose();
        return dy * weight_;
    }

    void collect_params(std::vector<ParamRef<Scalar>>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", weight_.data(), d_weight_.data(),
                       {out_features_, in_features_},
                       static_cast<std::size_t>(weight_.size())});
        out.push_back({prefix + ".bias", bias_.data(), d_bias_.data(), {out_features_},
                       static_cast<std::size_t>(bias_.size())});
    }

    int in_features() const { return in_features_; }
    int out_features() const { return out_features_; }
    MatX<Scalar>& weight() { return weight_; }
    VecX<Scalar>& bias() { return bias_; }

private:
    int in_features_ = 0, out_features_ = 0;
    MatX<Scalar> weight_, d_weight_;
    VecX<Scalar> bias_, d_bias_;
};

template <typename Scalar>
struct ReluMat {
    struct Cache {
        MatX<Scalar> x;
    };

    MatX<Scalar> forward(const MatX<Scalar>& x, Cache& cache) const {
        cache.x = x;
        return x.cwiseMax(Scalar(0));
    }

    MatX<Scalar> backward(const MatX<Scalar>& dy, const Cache& cache) const {
        return ((cache.x.array() > Scalar(0)).template cast<Scalar>() * dy.array()).matrix();
    }
};

}  // namespace mossda
