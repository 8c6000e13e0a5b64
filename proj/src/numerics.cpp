#include "numerics.hpp"

#include <algorithm>
#include <cmath>

namespace cloth {

uint64_t SeededStream::mix(uint64_t key, uint64_t counter) {
    // splitmix64 finalizer over key + golden-ratio-striped counter
    uint64_t z = key + 0x9e3779b97f4a7c15ull * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t SeededStream::fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

double SeededStream::next_gaussian() {
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t SeededStream::next_below(uint64_t n) {
    if (n == 0) throw ParameterError("next_below: n must be positive");
    // rejection sampling to avoid modulo bias
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

Vec seeded_uniform(SeededStream& stream, int n) {
    if (n < 0) throw ParameterError("seeded_uniform: negative count");
    Vec out(static_cast<size_t>(n));
    for (auto& x : out) x = stream.next_double();
    return out;
}

std::vector<int> seeded_permutation(SeededStream& stream, int n) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(stream.next_below(static_cast<uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

Vec softmax(const Vec& v) {
    if (v.empty()) throw DimensionError("softmax: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double z = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        z += out[i];
    }
    for (auto& x : out) x /= z;
    return out;
}

double logsumexp(const Vec& v) {
    if (v.empty()) throw DimensionError("logsumexp: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf) dominates
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double entropy(const Vec& p) {
    double h = 0.0;
    for (double x : p) {
        if (x < 0.0) throw DomainError("entropy: negative entry");
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

double cross_entropy(const Vec& target, const Vec& pred, double floor) {
    if (target.size() != pred.size()) throw DimensionError("cross_entropy: length mismatch");
    double ce = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        if (target[i] != 0.0) ce -= target[i] * std::log(clamp_prob(pred[i], floor));
    }
    return ce;
}

double clamped_log(double x, double floor, double* dlog_dx) {
    const double c = clamp_prob(x, floor);
    if (dlog_dx) *dlog_dx = (x >= floor && x <= 1.0) ? 1.0 / c : 0.0;
    return std::log(c);
}

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    return dot(a.data(), b.data(), static_cast<int>(a.size()));
}

double vec_sum(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw DimensionError("matmul_nt: column counts differ");
    Mat c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) ci[j] = dot(ai, b.row_ptr(j), a.cols);
    }
    return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw DimensionError("matmul_tn: row counts differ");
    Mat c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* ak = a.row_ptr(k);
        const double* bk = b.row_ptr(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row_ptr(i);
            for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Mat& m) { return all_finite(m.data); }

bool is_prob_vector(const Vec& p, double tol) {
    double s = 0.0;
    for (double x : p) {
        if (x < -tol || x > 1.0 + tol) return false;
        s += x;
    }
    return std::abs(s - 1.0) <= tol;
}

}  // namespace cloth
