#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mossda {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Batch of multichannel sequences, laid out row-major as (n, channels, steps).
template <typename Scalar>
struct Tensor3 {
    int n = 0;
    int channels = 0;
    int steps = 0;
    std::vector<Scalar> data;

    Tensor3() = default;
    Tensor3(int n_, int c_, int t_)
        : n(n_), channels(c_), steps(t_),
          data(static_cast<std::size_t>(n_) * c_ * t_, Scalar(0)) {}

    Scalar& at(int i, int c, int t) {
        return data[(static_cast<std::size_t>(i) * channels + c) * steps + t];
    }
    Scalar at(int i, int c, int t) const {
        return data[(static_cast<std::size_t>(i) * channels + c) * steps + t];
    }

    Scalar* sample(int i) { return data.data() + static_cast<std::size_t>(i) * channels * steps; }
    const Scalar* sample(int i) const {
        return data.data() + static_cast<std::size_t>(i) * channels * steps;
    }

    std::size_t size() const { return data.size(); }

    void set_zero() { std::fill(data.begin(), data.end(), Scalar(0)); }

    template <typename Other>
    Tensor3<Other> cast() const {
        Tensor3<Other> out(n, channels, steps);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
        return out;
    }

    bool all_finite() const {
        for (Scalar v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw std::invalid_argument(message);
}

}  // namespace mossda
