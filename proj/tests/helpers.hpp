#pragma once

// Shared test utilities.

#include <cmath>

#include "engine.hpp"

namespace cloth_test {

using namespace cloth;

// Trains a fresh softmax head on fixed features to minimize the amortized
// transport objective (1/N) sum_i sum_m T_m(z_i) c_im with the library
// optimizer. Plain descent on this objective stalls: rows that saturate at a
// wrong vertex have vanishing softmax gradients. The first half of training
// therefore adds an entropy bonus annealed to zero, so each row tracks the
// softmin path down to the argmin vertex; the second half runs the pure
// objective.
struct AmortizedHead {
    MlpSpec spec;
    MlpParams params;
    Mat t_probs;
    double objective = 0.0;
};

inline AmortizedHead train_amortized_head(const Mat& features, const Mat& cost, int hidden, int iters,
                                          double lr, uint64_t seed, double tau0 = 0.5) {
    const int n = features.rows;
    const int m = cost.cols;
    AmortizedHead out;
    out.spec.widths = {features.cols, hidden, m};
    out.spec.output_head = Head::Softmax;
    out.spec.hidden_activation = Activation::Tanh;
    SeededStream init(seed, "amortized_head");
    out.params = glorot_init(out.spec, init);
    AdamState adam = make_adam(out.spec);
    PolyakShadow shadow = make_shadow(out.params, 0.0);

    const int anneal_until = iters / 2;
    for (int it = 0; it < iters; ++it) {
        const double tau =
            it < anneal_until ? tau0 * std::pow(1e-4 / tau0, static_cast<double>(it) / anneal_until) : 0.0;
        ForwardCache cache;
        const Mat probs = forward(out.params, out.spec, features, Mode::Eval, &cache);
        Mat grad_out(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double g = cost(i, j);
                if (tau > 0.0) g += tau * (1.0 + std::log(clamp_prob(probs(i, j))));
                grad_out(i, j) = g / n;
            }
        const Gradients g = backward(out.params, out.spec, cache, grad_out);
        adam_polyak_step(out.params, g.params, adam, shadow, lr);
    }
    out.t_probs = forward(out.params, out.spec, features, Mode::Eval);
    out.objective = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.objective += out.t_probs(i, j) * cost(i, j) / n;
    return out;
}

inline TrainConfig small_synthetic_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.dataset.kind = "gaussian_shift";
    cfg.dataset.classes = 3;
    cfg.dataset.n_per_domain = 240;
    cfg.dataset.rotation_deg = 25.0;
    cfg.dataset.translation = {1.0, 0.0};
    cfg.dataset.target_proportions = {0.5, 0.3, 0.2};
    cfg.batch_size = 32;
    cfg.iters = 60;
    cfg.log_interval = 20;
    cfg.latent_dim = 8;
    cfg.g_hidden = {16};
    cfg.lr = 1e-3;
    cfg.dropout_keep_g = cfg.dropout_keep_c = cfg.dropout_keep_t = cfg.dropout_keep_d = 1.0;
    cfg.snapshot_best = false;  // structural tests want the final model, not the best-val copy
    return cfg;
}

}  // namespace cloth_test
