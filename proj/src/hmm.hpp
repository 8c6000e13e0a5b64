#pragma once

#include <vector>

#include "numerics.hpp"

namespace cloth {

// Batch of latent vectors; rows are samples.
struct LatentBatch {
    Mat values;  // n x p
    int size() const { return values.rows; }
    int dim() const { return values.cols; }
};

// q-order moment feature map: flattened tensor of all degree-q coordinate
// products, row-major multi-index order, length p^q. Oracle-scale only.
Vec phi_flatten(const Vec& z, int q);

// Squared L2 distance between empirical means of phi_flatten over the two
// batches (V-statistic convention). Oracle route, O(p^q) space.
double hm_bruteforce(const LatentBatch& u, const LatentBatch& v, int q);

// Same distance via the dot-product identity <phi_q(z), phi_q(z')> =
// <z,z'>^q: E_UU[(s<z,z'>)^q] + E_VV[...] - 2 E_UV[...], all-pairs empirical
// means. O((n_u+n_v)^2 * p) time, O(p) space. Equals hm_bruteforce when
// scale = 1.
double hm_kernel(const LatentBatch& u, const LatentBatch& v, int q, double scale = 1.0);

struct CahommResult {
    double value = 0.0;
    Mat grad_source;       // n_S x p
    Mat grad_target;       // n_T x p
    Mat grad_tprobs;       // n_T x M
    int classes_present = 0;
    int classes_skipped = 0;
};

// Class-aware moment matching: averages, over classes present in the source
// batch, the squared distance between the class-conditional source moment
// mean and the transport-probability-weighted target moment mean, computed
// through the three kernel terms. source_labels are 1-based; t_probs rows
// are the transport probabilities for each target sample.
CahommResult cahomm_loss(const LatentBatch& source, const std::vector<int>& source_labels, int class_count,
                         const LatentBatch& target, const Mat& t_probs, int q, double scale,
                         bool with_grads = true);

// Flatten-route evaluation of the same class-aware loss; used as the second
// route in verification and the benchmark. O(p^q) space.
double cahomm_bruteforce(const LatentBatch& source, const std::vector<int>& source_labels, int class_count,
                         const LatentBatch& target, const Mat& t_probs, int q, double scale = 1.0);

}  // namespace cloth
