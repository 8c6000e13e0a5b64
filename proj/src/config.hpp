#pragma once

#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "numerics.hpp"

namespace cloth {

struct DatasetConfig {
    std::string kind;  // gaussian_shift | two_moons | idx

    // gaussian_shift
    int classes = 3;
    int n_per_domain = 1500;
    int dim = 2;
    double mean_radius = 2.5;
    double sigma = 0.5;
    std::vector<Vec> means;  // optional explicit means
    Vec sigmas;              // optional per-class sigmas
    double rotation_deg = 30.0;
    Vec translation;
    Vec target_proportions;

    // two_moons
    int moons_n = 1000;
    double moons_noise = 0.08;

    // idx
    std::string source_images, source_labels, target_images, target_labels;
    int downsample_to = 8;
    long limit = -1;

    std::optional<uint64_t> seed;  // defaults to the run seed
};

// Every trainable knob in one place; all fields have defaults except seed
// and dataset, and the JSON loader rejects unknown keys so nothing silently
// falls back.
struct TrainConfig {
    uint64_t seed = 0;
    DatasetConfig dataset;

    double alpha = 0.1;
    double beta = 0.1;
    double gamma = 0.01;
    int q = 3;
    double lr = 1e-3;
    int batch_size = 128;
    int iters = 3000;
    int log_interval = 50;

    int latent_dim = 32;
    std::vector<int> g_hidden = {64};
    std::vector<int> c_hidden;
    std::vector<int> t_hidden;
    std::vector<int> d_hidden;
    std::string hidden_activation = "relu";

    double dropout_keep_g = 0.8;
    double dropout_keep_c = 0.8;
    double dropout_keep_t = 0.8;
    double dropout_keep_d = 0.8;
    bool dropout_on_latent = false;  // dropout on the adapted layer feeding the moment loss

    double polyak_decay = 0.998;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clamp_floor = 1e-12;
    std::string hmm_scale = "inv_p";  // inv_p | one

    bool share_ct = false;
    bool binary_discriminator = false;

    bool enable_adv = true;
    bool enable_t = true;
    bool enable_ent = true;
    bool enable_hmm = true;

    bool sinkhorn_mode = false;
    double sinkhorn_epsilon = 0.1;
    int sinkhorn_max_iter = 2000;
    double sinkhorn_tol = 1e-6;

    double w_smoothing = 0.99;
    double val_fraction = 0.1;
    bool snapshot_best = true;

    void validate() const;
    double hmm_scale_value() const;  // resolved against latent_dim
};

// Strict parse: unknown keys anywhere are an error, field types are checked,
// seed and dataset are mandatory.
TrainConfig config_from_json(const std::string& json_text);
TrainConfig config_from_file(const std::string& path);

// Canonical dump (sorted keys); feeds both --print-config and the hash
// stored in checkpoints.
std::string config_to_json(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

// Apply "key=json_value" style overrides (dots select into the dataset
// object, e.g. dataset.kind).
void config_apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

// Environment overrides: any CLOTH_<KEY> (double underscore for nesting,
// e.g. CLOTH_DATASET__KIND) is applied on top of the loaded file.
void config_apply_env(TrainConfig& cfg, const char* prefix = "CLOTH_");

// Build the source/target pair named by the config.
DomainPair build_datasets(const TrainConfig& cfg);

}  // namespace cloth
