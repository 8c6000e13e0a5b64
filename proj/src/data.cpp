#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace cloth {

Dataset::Dataset(Mat features, std::vector<int> labels, DomainTag domain, int class_count)
    : features_(std::move(features)), labels_(std::move(labels)), domain_(domain), class_count_(class_count) {
    if (!labels_.empty() && static_cast<int>(labels_.size()) != features_.rows)
        throw DimensionError("Dataset: label count does not match feature rows");
    for (int y : labels_)
        if (y < 1 || y > class_count_) throw DataError("Dataset: label out of range [1..M]");
    if (!all_finite(features_)) throw DataError("Dataset: non-finite feature");
}

const std::vector<int>& Dataset::train_labels() const {
    if (domain_ == DomainTag::Target)
        throw ContractError("Dataset: target labels are not available to the training path");
    if (labels_.empty()) throw DataError("Dataset: no labels present");
    return labels_;
}

const std::vector<int>& Dataset::eval_labels() const {
    if (labels_.empty()) throw DataError("Dataset: no labels present");
    return labels_;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
    Mat f(static_cast<int>(indices.size()), features_.cols);
    std::vector<int> l;
    l.reserve(labels_.empty() ? 0 : indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        const int i = indices[k];
        if (i < 0 || i >= features_.rows) throw ParameterError("Dataset::subset: index out of range");
        std::copy(features_.row_ptr(i), features_.row_ptr(i) + features_.cols, f.row_ptr(static_cast<int>(k)));
        if (!labels_.empty()) l.push_back(labels_[i]);
    }
    return Dataset(std::move(f), std::move(l), domain_, class_count_);
}

void SyntheticSpec::validate() const {
    if (class_count < 2) throw ParameterError("SyntheticSpec: need at least 2 classes");
    if (n_per_domain < class_count) throw ParameterError("SyntheticSpec: n_per_domain too small");
    if (dim < 2) throw ParameterError("SyntheticSpec: dim must be >= 2");
    if (!means.empty() && static_cast<int>(means.size()) != class_count)
        throw ParameterError("SyntheticSpec: means must list one vector per class");
    for (const auto& mu : means)
        if (static_cast<int>(mu.size()) != dim) throw ParameterError("SyntheticSpec: mean dimension mismatch");
    if (!sigmas.empty() && static_cast<int>(sigmas.size()) != class_count)
        throw ParameterError("SyntheticSpec: sigmas must list one value per class");
    for (double s : sigmas)
        if (s <= 0.0) throw ParameterError("SyntheticSpec: degenerate covariance");
    if (noise_scale <= 0.0) throw ParameterError("SyntheticSpec: degenerate covariance");
    if (!target_proportions.empty()) {
        if (static_cast<int>(target_proportions.size()) != class_count)
            throw ParameterError("SyntheticSpec: target_proportions length mismatch");
        double s = 0.0;
        for (double x : target_proportions) {
            if (x < 0.0) throw ParameterError("SyntheticSpec: negative proportion");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ParameterError("SyntheticSpec: proportions must sum to 1");
    }
    if (!translation.empty() && static_cast<int>(translation.size()) != dim)
        throw ParameterError("SyntheticSpec: translation dimension mismatch");
}

namespace {

std::vector<Vec> default_circle_means(int m, int dim, double radius) {
    std::vector<Vec> means(static_cast<size_t>(m), Vec(static_cast<size_t>(dim), 0.0));
    for (int k = 0; k < m; ++k) {
        const double a = 2.0 * M_PI * k / m;
        means[k][0] = radius * std::cos(a);
        means[k][1] = radius * std::sin(a);
    }
    return means;
}

// Rotation in the first two coordinates; higher coordinates pass through.
Vec rotate2(const Vec& x, double cos_a, double sin_a) {
    Vec y = x;
    y[0] = cos_a * x[0] - sin_a * x[1];
    y[1] = sin_a * x[0] + cos_a * x[1];
    return y;
}

}  // namespace

DomainPair make_gaussian_shift(const SyntheticSpec& spec) {
    spec.validate();
    const int m = spec.class_count;
    const int n = spec.n_per_domain;
    const int d = spec.dim;

    std::vector<Vec> means = spec.means.empty() ? default_circle_means(m, d, spec.mean_radius) : spec.means;
    Vec sigmas = spec.sigmas.empty() ? Vec(static_cast<size_t>(m), spec.noise_scale) : spec.sigmas;
    Vec props = spec.target_proportions.empty() ? Vec(static_cast<size_t>(m), 1.0 / m) : spec.target_proportions;
    Vec shift = spec.translation.empty() ? Vec(static_cast<size_t>(d), 0.0) : spec.translation;

    SeededStream root(spec.seed, "gaussian_shift");

    // source: balanced labels, shuffled
    SeededStream src_stream = root.derive("source");
    std::vector<int> src_labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) src_labels[i] = i % m + 1;
    const std::vector<int> perm = seeded_permutation(src_stream, n);
    std::vector<int> shuffled(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) shuffled[i] = src_labels[perm[i]];
    src_labels = std::move(shuffled);

    Mat src(n, d);
    for (int i = 0; i < n; ++i) {
        const int c = src_labels[i] - 1;
        for (int j = 0; j < d; ++j) src(i, j) = means[c][j] + sigmas[c] * src_stream.next_gaussian();
    }

    // target: label-shift proportions, rotated+translated class means
    const double rad = spec.rotation_deg * M_PI / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    SeededStream tgt_stream = root.derive("target");
    Vec cum(props.size());
    double acc = 0.0;
    for (size_t k = 0; k < props.size(); ++k) {
        acc += props[k];
        cum[k] = acc;
    }
    std::vector<int> tgt_labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = tgt_stream.next_double();
        int c = m - 1;
        for (int k = 0; k < m; ++k)
            if (u < cum[k]) {
                c = k;
                break;
            }
        tgt_labels[i] = c + 1;
    }
    Mat tgt(n, d);
    for (int i = 0; i < n; ++i) {
        const int c = tgt_labels[i] - 1;
        const Vec mu = rotate2(means[c], ca, sa);
        for (int j = 0; j < d; ++j) tgt(i, j) = mu[j] + shift[j] + sigmas[c] * tgt_stream.next_gaussian();
    }

    DomainPair pair;
    pair.source = Dataset(std::move(src), std::move(src_labels), DomainTag::Source, m);
    pair.target = Dataset(std::move(tgt), std::move(tgt_labels), DomainTag::Target, m);
    return pair;
}

namespace {

// n points on two interleaving half circles plus isotropic noise.
Dataset sample_moons(int n, double angle_deg, double noise, SeededStream& stream, DomainTag domain) {
    const int n1 = n / 2;
    const double rad = angle_deg * M_PI / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cx = 0.5, cy = 0.25;  // centroid of the two arcs
    Mat f(n, 2);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool upper = i < n1;
        const double t = M_PI * stream.next_double();
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        x -= cx;
        y -= cy;
        const double xr = ca * x - sa * y + cx;
        const double yr = sa * x + ca * y + cy;
        f(i, 0) = xr + noise * stream.next_gaussian();
        f(i, 1) = yr + noise * stream.next_gaussian();
        labels[i] = upper ? 1 : 2;
    }
    return Dataset(std::move(f), std::move(labels), domain, 2);
}

}  // namespace

DomainPair make_two_moons_rotated(int n, double angle_deg, double noise, uint64_t seed) {
    if (n < 4) throw ParameterError("make_two_moons_rotated: n must be >= 4");
    SeededStream root(seed, "two_moons");
    SeededStream src_stream = root.derive("source");
    SeededStream tgt_stream = root.derive("target");
    DomainPair pair;
    pair.source = sample_moons(n, 0.0, noise, src_stream, DomainTag::Source);
    pair.target = sample_moons(n, angle_deg, noise, tgt_stream, DomainTag::Target);
    return pair;
}

namespace {

uint32_t read_be32(std::ifstream& f, const std::string& path, size_t offset) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (!f)
        throw FormatError(path + ": truncated at byte " + std::to_string(offset));
    return (static_cast<uint32_t>(buf[0]) << 24) | (static_cast<uint32_t>(buf[1]) << 16) |
           (static_cast<uint32_t>(buf[2]) << 8) | static_cast<uint32_t>(buf[3]);
}

// Area-average box filter from src_side x src_side to dst_side x dst_side.
Vec downsample_image(const std::vector<unsigned char>& pixels, int src_rows, int src_cols, int dst_side) {
    Vec out(static_cast<size_t>(dst_side) * dst_side, 0.0);
    const double ry = static_cast<double>(src_rows) / dst_side;
    const double rx = static_cast<double>(src_cols) / dst_side;
    for (int oy = 0; oy < dst_side; ++oy) {
        const double y0 = oy * ry, y1 = (oy + 1) * ry;
        for (int ox = 0; ox < dst_side; ++ox) {
            const double x0 = ox * rx, x1 = (ox + 1) * rx;
            double acc = 0.0, area = 0.0;
            for (int sy = static_cast<int>(y0); sy < src_rows && sy < y1; ++sy) {
                const double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
                if (wy <= 0.0) continue;
                for (int sx = static_cast<int>(x0); sx < src_cols && sx < x1; ++sx) {
                    const double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
                    if (wx <= 0.0) continue;
                    acc += wy * wx * pixels[static_cast<size_t>(sy) * src_cols + sx];
                    area += wy * wx;
                }
            }
            out[static_cast<size_t>(oy) * dst_side + ox] = area > 0.0 ? acc / (area * 255.0) : 0.0;
        }
    }
    return out;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int downsample_to,
                 long limit, DomainTag domain) {
    if (downsample_to <= 0) throw ParameterError("load_idx: downsample side must be positive");
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(images_path + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError(labels_path + ": cannot open");

    const uint32_t img_magic = read_be32(img, images_path, 0);
    if (img_magic != 0x00000803u)
        throw FormatError(images_path + ": bad magic at byte 0 (expected 0x00000803)");
    const uint32_t n_img = read_be32(img, images_path, 4);
    const uint32_t rows = read_be32(img, images_path, 8);
    const uint32_t cols = read_be32(img, images_path, 12);

    const uint32_t lab_magic = read_be32(lab, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw FormatError(labels_path + ": bad magic at byte 0 (expected 0x00000801)");
    const uint32_t n_lab = read_be32(lab, labels_path, 4);
    if (n_img != n_lab) throw FormatError(images_path + ": image/label counts differ");

    long keep = limit < 0 ? static_cast<long>(n_img) : std::min<long>(limit, static_cast<long>(n_img));
    if (keep < 0) keep = 0;

    const size_t img_bytes = static_cast<size_t>(rows) * cols;
    std::vector<unsigned char> buf(img_bytes);
    Mat features(static_cast<int>(keep), downsample_to * downsample_to);
    std::vector<int> labels(static_cast<size_t>(keep));
    int max_label = 0;
    for (long i = 0; i < keep; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(img_bytes));
        if (!img)
            throw FormatError(images_path + ": truncated at byte " + std::to_string(16 + i * static_cast<long>(img_bytes)));
        unsigned char y;
        lab.read(reinterpret_cast<char*>(&y), 1);
        if (!lab) throw FormatError(labels_path + ": truncated at byte " + std::to_string(8 + i));
        const Vec px = downsample_image(buf, static_cast<int>(rows), static_cast<int>(cols), downsample_to);
        std::copy(px.begin(), px.end(), features.row_ptr(static_cast<int>(i)));
        labels[static_cast<size_t>(i)] = static_cast<int>(y) + 1;  // 1-based labels
        max_label = std::max(max_label, labels[static_cast<size_t>(i)]);
    }
    const int class_count = std::max(max_label, 10);  // digit files have 10 classes even if a slice misses some
    return Dataset(std::move(features), std::move(labels), domain, class_count);
}

BatchIter::BatchIter(int dataset_size, int batch_size, SeededStream stream)
    : n_(dataset_size), b_(batch_size), cursor_(0), stream_(stream) {
    if (b_ <= 0) throw ParameterError("BatchIter: batch size must be positive");
    if (b_ > n_) throw ParameterError("BatchIter: batch size exceeds dataset size");
    order_ = seeded_permutation(stream_, n_);
}

std::vector<int> BatchIter::next() {
    if (cursor_ >= order_.size()) {
        order_ = seeded_permutation(stream_, n_);
        cursor_ = 0;
    }
    const size_t take = std::min<size_t>(static_cast<size_t>(b_), order_.size() - cursor_);
    std::vector<int> batch(order_.begin() + static_cast<long>(cursor_), order_.begin() + static_cast<long>(cursor_ + take));
    cursor_ += take;
    return batch;
}

}  // namespace cloth
