#pragma once

#include <optional>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace cloth {

enum class DomainTag { Source, Target };

// Feature matrix plus optional 1-based labels. Target labels are only
// reachable through eval_labels(); the training path uses train_labels(),
// which refuses to hand out target labels.
class Dataset {
  public:
    Dataset() = default;
    Dataset(Mat features, std::vector<int> labels, DomainTag domain, int class_count);

    const Mat& features() const { return features_; }
    int size() const { return features_.rows; }
    int dim() const { return features_.cols; }
    int class_count() const { return class_count_; }
    DomainTag domain() const { return domain_; }
    bool has_labels() const { return !labels_.empty(); }

    // Labels for supervised updates; target-domain labels are off limits here.
    const std::vector<int>& train_labels() const;
    // Labels for accuracy evaluation only.
    const std::vector<int>& eval_labels() const;

    Dataset subset(const std::vector<int>& indices) const;

  private:
    Mat features_;
    std::vector<int> labels_;
    DomainTag domain_ = DomainTag::Source;
    int class_count_ = 0;
};

struct SyntheticSpec {
    int class_count = 3;
    int n_per_domain = 1500;
    int dim = 2;
    std::vector<Vec> means;     // per-class source means; defaults to a circle layout
    Vec sigmas;                 // per-class isotropic stddev; defaults to noise_scale
    double mean_radius = 2.5;   // circle layout radius when means are not given
    double rotation_deg = 0.0;  // target transform (first two coordinates)
    Vec translation;            // target translation, defaults to zero
    Vec target_proportions;     // label-shift proportions, defaults to balanced
    double noise_scale = 0.5;
    uint64_t seed = 0;
    void validate() const;
};

struct DomainPair {
    Dataset source;
    Dataset target;
};

// Class-conditional Gaussians; the target domain applies a rotation +
// translation to the class means and draws labels from the shifted
// proportions. Target labels are retained for evaluation only.
DomainPair make_gaussian_shift(const SyntheticSpec& spec);

// Two interleaving half circles (M=2); target is the same geometry rotated
// about the figure centroid with fresh noise.
DomainPair make_two_moons_rotated(int n, double angle_deg, double noise, uint64_t seed);

// IDX (big-endian magic + dims + raw bytes) image/label reader with
// area-average downsampling to side x side and pixel scaling to [0,1].
// limit = 0 keeps nothing; pass a negative limit to keep everything.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int downsample_to,
                 long limit, DomainTag domain);

// Epoch-shuffled minibatch index source: within an epoch samples are drawn
// without replacement, each epoch gets a fresh permutation from the stream.
class BatchIter {
  public:
    BatchIter(int dataset_size, int batch_size, SeededStream stream);
    std::vector<int> next();

  private:
    int n_;
    int b_;
    size_t cursor_;
    std::vector<int> order_;
    SeededStream stream_;
};

}  // namespace cloth
