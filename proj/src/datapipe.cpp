#include "mossda/datapipe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swaps");

namespace mossda {

namespace {

using nlohmann::json;

void write_blob(const std::filesystem::path& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("short write: " + path.string());
}

std::vector<char> read_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    const std::streamsize bytes = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(bytes));
    in.read(buf.data(), bytes);
    if (!in) throw std::runtime_error("short read: " + path.string());
    return buf;
}

void load_split(const std::filesystem::path& dir, const std::string& split, int n, int d, int t,
                int num_classes, Tensor3f& x, std::vector<int>& y) {
    const auto x_path = dir / ("X_" + split + ".f32");
    const auto x_bytes = read_blob(x_path);
    const std::size_t expected = static_cast<std::size_t>(n) * d * t * sizeof(float);
    if (x_bytes.size() != expected) {
        std::ostringstream msg;
        msg << x_path.string() << ": manifest implies " << n << "x" << d << "x" << t << " = "
            << expected << " bytes but file holds " << x_bytes.size() << " bytes";
        throw std::runtime_error(msg.str());
    }
    x = Tensor3f(n, d, t);
    std::memcpy(x.data.data(), x_bytes.data(), expected);

    const auto y_path = dir / ("y_" + split + ".i32");
    const auto y_bytes = read_blob(y_path);
    if (y_bytes.size() != static_cast<std::size_t>(n) * sizeof(std::int32_t)) {
        std::ostringstream msg;
        msg << y_path.string() << ": manifest implies " << n << " labels but file holds "
            << y_bytes.size() / sizeof(std::int32_t);
        throw std::runtime_error(msg.str());
    }
    std::vector<std::int32_t> raw(n);
    std::memcpy(raw.data(), y_bytes.data(), y_bytes.size());
    y.assign(raw.begin(), raw.end());
    for (int i = 0; i < n; ++i)
        if (y[i] < 0 || y[i] >= num_classes) {
            std::ostringstream msg;
            msg << y_path.string() << ": label " << y[i] << " at row " << i
                << " outside [0, " << num_classes << ")";
            throw std::runtime_error(msg.str());
        }
}

void shuffle(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

// Round half to even, the convention the labeled-count arithmetic assumes.
long round_half_even(double x) {
    const double f = std::floor(x);
    const double frac = x - f;
    long r = static_cast<long>(f);
    if (frac > 0.5) return r + 1;
    if (frac < 0.5) return r;
    return (r % 2 == 0) ? r : r + 1;
}

}  // namespace

void DomainDataset::compute_normalization() {
    channel_mean.assign(channels, 0.0);
    channel_std.assign(channels, 1.0);
    const std::size_t per_channel = static_cast<std::size_t>(n_train()) * seq_len;
    for (int c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (int i = 0; i < n_train(); ++i) {
            const float* row = x_train.sample(i) + static_cast<std::size_t>(c) * seq_len;
            for (int t = 0; t < seq_len; ++t) sum += row[t];
        }
        const double mean = sum / per_channel;
        double sq = 0.0;
        for (int i = 0; i < n_train(); ++i) {
            const float* row = x_train.sample(i) + static_cast<std::size_t>(c) * seq_len;
            for (int t = 0; t < seq_len; ++t) sq += (row[t] - mean) * (row[t] - mean);
        }
        double std_dev = std::sqrt(sq / per_channel);
        if (std_dev < 1e-12) std_dev = 1.0;  // constant channel guard
        channel_mean[c] = mean;
        channel_std[c] = std_dev;
    }
}

void DomainDataset::validate() const {
    require(channels >= 1 && seq_len >= 1 && num_classes >= 1, "DomainDataset: bad dims");
    require(x_train.channels == channels && x_train.steps == seq_len,
            "DomainDataset: train tensor dims inconsistent");
    require(x_test.channels == channels && x_test.steps == seq_len,
            "DomainDataset: test tensor dims inconsistent");
    require(static_cast<int>(y_train.size()) == n_train(), "DomainDataset: train label count");
    require(static_cast<int>(y_test.size()) == n_test(), "DomainDataset: test label count");
    for (int v : y_train) require(v >= 0 && v < num_classes, "DomainDataset: train label range");
    for (int v : y_test) require(v >= 0 && v < num_classes, "DomainDataset: test label range");
}

Tensor3f DomainDataset::normalized_rows(const std::vector<int>& indices, bool from_test) const {
    const Tensor3f& src = from_test ? x_test : x_train;
    Tensor3f out(static_cast<int>(indices.size()), channels, seq_len);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const float* in_row = src.sample(indices[k]);
        float* out_row = out.sample(static_cast<int>(k));
        for (int c = 0; c < channels; ++c) {
            const double mean = channel_mean[c];
            const double inv = 1.0 / channel_std[c];
            for (int t = 0; t < seq_len; ++t) {
                const std::size_t off = static_cast<std::size_t>(c) * seq_len + t;
                out_row[off] = static_cast<float>((in_row[off] - mean) * inv);
            }
        }
    }
    return out;
}

Tensor3f DomainDataset::normalized_split(bool test) const {
    std::vector<int> all(test ? n_test() : n_train());
    std::iota(all.begin(), all.end(), 0);
    return normalized_rows(all, test);
}

DomainDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("missing file: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
    if (manifest.value("format_version", 0) != 1)
        throw std::runtime_error(manifest_path.string() + ": unsupported format_version");

    DomainDataset ds;
    ds.name = manifest.value("name", dir.filename().string());
    ds.channels = manifest.at("D").get<int>();
    ds.seq_len = manifest.at("T").get<int>();
    ds.num_classes = manifest.at("C").get<int>();
    const int n_train = manifest.at("n_train").get<int>();
    const int n_test = manifest.at("n_test").get<int>();

    load_split(dir, "train", n_train, ds.channels, ds.seq_len, ds.num_classes, ds.x_train,
               ds.y_train);
    load_split(dir, "test", n_test, ds.channels, ds.seq_len, ds.num_classes, ds.x_test, ds.y_test);
    ds.validate();
    ds.compute_normalization();
    return ds;
}

void save_dataset(const DomainDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["name"] = ds.name;
    manifest["D"] = ds.channels;
    manifest["T"] = ds.seq_len;
    manifest["C"] = ds.num_classes;
    manifest["n_train"] = ds.n_train();
    manifest["n_test"] = ds.n_test();
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";

    write_blob(dir / "X_train.f32", ds.x_train.data.data(), ds.x_train.size() * sizeof(float));
    write_blob(dir / "X_test.f32", ds.x_test.data.data(), ds.x_test.size() * sizeof(float));
    std::vector<std::int32_t> y32(ds.y_train.begin(), ds.y_train.end());
    write_blob(dir / "y_train.i32", y32.data(), y32.size() * sizeof(std::int32_t));
    y32.assign(ds.y_test.begin(), ds.y_test.end());
    write_blob(dir / "y_test.i32", y32.data(), y32.size() * sizeof(std::int32_t));
}

TargetPartition apply_unlabeled_ratio(const DomainDataset& dataset, double u, std::uint64_t seed) {
    require(u > 0.0 && u < 1.0, "apply_unlabeled_ratio: u must lie in (0, 1)");
    std::vector<std::vector<int>> by_class(dataset.num_classes);
    for (int i = 0; i < dataset.n_train(); ++i) by_class[dataset.y_train[i]].push_back(i);

    TargetPartition part;
    part.u = u;
    part.seed = seed;
    Rng rng(derive_seed(seed, 0x706172ULL));  // partition stream
    for (int c = 0; c < dataset.num_classes; ++c) {
        auto& rows = by_class[c];
        if (rows.empty())
            throw std::runtime_error("apply_unlabeled_ratio: class " + std::to_string(c) +
                                     " has no training samples");
        shuffle(rows, rng);
        const long labeled =
            std::max<long>(1, round_half_even(static_cast<double>(rows.size()) * (1.0 - u)));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (static_cast<long>(k) < labeled)
                part.labeled_idx.push_back(rows[k]);
            else
                part.unlabeled_idx.push_back(rows[k]);
        }
    }
    std::sort(part.labeled_idx.begin(), part.labeled_idx.end());
    std::sort(part.unlabeled_idx.begin(), part.unlabeled_idx.end());
    return part;
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw std::invalid_argument("SyntheticSpec: at least 2 classes required");
    require(channels >= 1 && seq_len >= 2, "SyntheticSpec: bad dims");
    require(train_per_class >= 1 && test_per_class >= 1, "SyntheticSpec: samples per class");
    if (!class_freq.empty())
        require(static_cast<int>(class_freq.size()) == num_classes,
                "SyntheticSpec: class_freq size");
    if (!class_phase.empty())
        require(static_cast<int>(class_phase.size()) == num_classes,
                "SyntheticSpec: class_phase size");
    for (const DomainShift* shift : {&source, &target}) {
        require(shift->noise_sigma >= 0.0, "SyntheticSpec: negative noise sigma");
        require(shift->amplitude.empty() || shift->amplitude.size() == 1 ||
                    static_cast<int>(shift->amplitude.size()) == channels,
                "SyntheticSpec: amplitude must be scalar or per-channel");
    }
}

namespace {

double amplitude_for(const DomainShift& shift, int channel) {
    if (shift.amplitude.empty()) return 1.0;
    if (shift.amplitude.size() == 1) return shift.amplitude[0];
    return shift.amplitude[channel];
}

DomainDataset generate_domain(const SyntheticSpec& spec, const DomainShift& shift,
                              const std::string& name, std::uint64_t stream) {
    Rng rng(derive_seed(spec.seed, stream));
    // Default class code: distinct but nearly equal frequencies, evenly spaced
    // phases. Class identity then lives mostly in the phase, which a domain
    // phase offset genuinely disturbs while labels remain recoverable.
    std::vector<double> freq = spec.class_freq;
    if (freq.empty()) {
        freq.resize(spec.num_classes);
        for (int c = 0; c < spec.num_classes; ++c) freq[c] = 2.0 + 0.05 * c;
    }
    std::vector<double> phase = spec.class_phase;
    if (phase.empty()) {
        phase.resize(spec.num_classes);
        for (int c = 0; c < spec.num_classes; ++c)
            phase[c] = 2.0 * M_PI * c / spec.num_classes;
    }

    DomainDataset ds;
    ds.name = name;
    ds.channels = spec.channels;
    ds.seq_len = spec.seq_len;
    ds.num_classes = spec.num_classes;

    auto fill_split = [&](int per_class, Tensor3f& x, std::vector<int>& y) {
        const int n = per_class * spec.num_classes;
        x = Tensor3f(n, spec.channels, spec.seq_len);
        y.resize(n);
        int row = 0;
        for (int c = 0; c < spec.num_classes; ++c) {
            for (int s = 0; s < per_class; ++s, ++row) {
                y[row] = c;
                for (int ch = 0; ch < spec.channels; ++ch) {
                    const double amp = amplitude_for(shift, ch);
                    float* dst = x.sample(row) + static_cast<std::size_t>(ch) * spec.seq_len;
                    for (int t = 0; t < spec.seq_len; ++t) {
                        const double angle = 2.0 * M_PI * freq[c] * t / spec.seq_len + phase[c] +
                                             shift.phase_offset;
                        const double v = amp * std::sin(angle) + rng.normal(0.0, shift.noise_sigma);
                        dst[static_cast<std::size_t>(t)] = static_cast<float>(v);
                    }
                }
            }
        }
    };

    fill_split(spec.train_per_class, ds.x_train, ds.y_train);
    fill_split(spec.test_per_class, ds.x_test, ds.y_test);
    ds.compute_normalization();
    return ds;
}

}  // namespace

std::pair<DomainDataset, DomainDataset> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    return {generate_domain(spec, spec.source, "source", 0x737263ULL),
            generate_domain(spec, spec.target, "target", 0x747267ULL)};
}

BatchPlan::BatchPlan(const DomainDataset& src, const DomainDataset& trg,
                     const TargetPartition& part, int batch_size, std::uint64_t seed)
    : src_(&src), trg_(&trg), part_(part), batch_size_(batch_size), seed_(seed) {
    require(batch_size >= 2, "BatchPlan: batch size must be at least 2");
    require(!part.labeled_idx.empty(), "BatchPlan: empty labeled target pool");
    const int n_src = src.n_train();
    const int n_trg = trg.n_train();
    batches_per_epoch_ = (std::max(n_src, n_trg) + batch_size - 1) / batch_size;
    labeled_per_batch_ = std::max(
        1, static_cast<int>(std::ceil(batch_size * (1.0 - part.u) - 1e-9)));
    require(labeled_per_batch_ <= batch_size, "BatchPlan: labeled rows exceed batch size");
}

BatchPlan::EpochIndices BatchPlan::epoch_indices(int epoch) const {
    EpochIndices out;
    const int steps = batches_per_epoch_;
    const int b_lab = labeled_per_batch_;
    const int b_unl = batch_size_ - b_lab;

    // Source stream: full permutation, topped up with replacement when the
    // epoch needs more rows than the dataset holds.
    Rng src_rng(derive_seed(seed_, 0x1000ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<int> src_order(src_->n_train());
    std::iota(src_order.begin(), src_order.end(), 0);
    shuffle(src_order, src_rng);
    while (static_cast<int>(src_order.size()) < steps * batch_size_)
        src_order.push_back(static_cast<int>(src_rng.uniform_int(src_->n_train())));

    // Unlabeled target stream, same treatment.
    Rng unl_rng(derive_seed(seed_, 0x2000ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<int> unl_order = part_.unlabeled_idx;
    shuffle(unl_order, unl_rng);
    if (!unl_order.empty())
        while (static_cast<int>(unl_order.size()) < steps * b_unl)
            unl_order.push_back(
                part_.unlabeled_idx[unl_rng.uniform_int(part_.unlabeled_idx.size())]);

    // Labeled target rows are oversampled with replacement.
    Rng lab_rng(derive_seed(seed_, 0x3000ULL + static_cast<std::uint64_t>(epoch)));

    out.src.resize(steps);
    out.trg_lab.resize(steps);
    out.trg_unl.resize(steps);
    for (int b = 0; b < steps; ++b) {
        out.src[b].assign(src_order.begin() + static_cast<std::ptrdiff_t>(b) * batch_size_,
                          src_order.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch_size_);
        out.trg_lab[b].resize(b_lab);
        for (int k = 0; k < b_lab; ++k)
            out.trg_lab[b][k] = part_.labeled_idx[lab_rng.uniform_int(part_.labeled_idx.size())];
        if (!unl_order.empty()) {
            out.trg_unl[b].assign(unl_order.begin() + static_cast<std::ptrdiff_t>(b) * b_unl,
                                  unl_order.begin() + static_cast<std::ptrdiff_t>(b + 1) * b_unl);
        }
    }
    return out;
}

std::vector<PairedBatch> BatchPlan::epoch(int epoch) const {
    const EpochIndices idx = epoch_indices(epoch);
    std::vector<PairedBatch> batches(idx.src.size());
    for (std::size_t b = 0; b < idx.src.size(); ++b) {
        PairedBatch& batch = batches[b];
        batch.src_x = src_->normalized_rows(idx.src[b]);
        batch.src_y.resize(static_cast<int>(idx.src[b].size()));
        for (std::size_t k = 0; k < idx.src[b].size(); ++k)
            batch.src_y[static_cast<int>(k)] = src_->y_train[idx.src[b][k]];

        batch.trg_lab_x = trg_->normalized_rows(idx.trg_lab[b]);
        batch.trg_lab_y.resize(static_cast<int>(idx.trg_lab[b].size()));
        for (std::size_t k = 0; k < idx.trg_lab[b].size(); ++k)
            batch.trg_lab_y[static_cast<int>(k)] = trg_->y_train[idx.trg_lab[b][k]];

        batch.trg_unl_x = trg_->normalized_rows(idx.trg_unl[b]);
    }
    return batches;
}

}  // namespace mossda
