#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace cloth {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Everything in this project is 64-bit:
// q-th powers of inner products amplify roundoff too much for floats.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    double* row_ptr(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row_ptr(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    Vec row(int i) const { return Vec(row_ptr(i), row_ptr(i) + cols); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Counter-based pseudo-random stream. The key is derived from (seed, label
// path); each draw advances only the counter, so identical seeds reproduce
// identical sequences on any platform. Sub-streams derived with distinct
// labels are statistically independent, which lets data sampling, weight
// init and dropout each own their own stream.
class SeededStream {
  public:
    explicit SeededStream(uint64_t seed) : key_(mix(seed, 0x43f6a8885a308d31ull)), counter_(0) {}
    SeededStream(uint64_t seed, std::string_view label) : SeededStream(seed) { key_ = mix(key_, fnv1a(label)); }

    // Child stream with an independent key; does not advance this stream.
    SeededStream derive(std::string_view label) const {
        SeededStream s(*this);
        s.key_ = mix(s.key_, fnv1a(label));
        s.counter_ = 0;
        return s;
    }

    uint64_t next_u64() { return mix(key_, ++counter_); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (two uniforms per draw).
    double next_gaussian();

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n);

    uint64_t seed_key() const { return key_; }

  private:
    static uint64_t mix(uint64_t key, uint64_t counter);
    static uint64_t fnv1a(std::string_view s);

    uint64_t key_;
    uint64_t counter_;
};

Vec seeded_uniform(SeededStream& stream, int n);

// Fisher-Yates permutation of 0..n-1 driven by the stream.
std::vector<int> seeded_permutation(SeededStream& stream, int n);

// Max-shifted softmax; output sums to 1 for any finite input.
Vec softmax(const Vec& v);

// log(sum(exp(v))) with max shift; tolerates -inf entries.
double logsumexp(const Vec& v);

// Shannon entropy in nats, 0*log(0) := 0. Throws DomainError on negative entries.
double entropy(const Vec& p);

// -sum target_i * log(clamp(pred_i)). pred need not sum to 1.
double cross_entropy(const Vec& target, const Vec& pred, double floor = 1e-12);

// All log arguments in losses go through this: clamp to [floor, 1].
inline double clamp_prob(double x, double floor = 1e-12) {
    if (x < floor) return floor;
    if (x > 1.0) return 1.0;
    return x;
}

// log of clamped probability plus d(log clamp(x))/dx (zero outside the clamp window).
double clamped_log(double x, double floor, double* dlog_dx);

double dot(const Vec& a, const Vec& b);
double dot(const double* a, const double* b, int n);
double vec_sum(const Vec& v);

// C = A * B
Mat matmul(const Mat& a, const Mat& b);
// C = A * B^T (rows of A dotted with rows of B); used for Gram matrices.
Mat matmul_nt(const Mat& a, const Mat& b);
// C = A^T * B
Mat matmul_tn(const Mat& a, const Mat& b);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// True when entries are in [0,1] and sum to 1 within tol.
bool is_prob_vector(const Vec& p, double tol = 1e-9);

}  // namespace cloth
