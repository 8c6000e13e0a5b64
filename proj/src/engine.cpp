#include "engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace cloth {

using nlohmann::json;

namespace {

Activation activation_from(const std::string& name) {
    return name == "tanh" ? Activation::Tanh : Activation::Relu;
}

MlpSpec head_spec(int in, const std::vector<int>& hidden, int out, Activation act, double keep) {
    MlpSpec s;
    s.widths.push_back(in);
    for (int w : hidden) s.widths.push_back(w);
    s.widths.push_back(out);
    s.hidden_activation = act;
    s.output_head = Head::Softmax;
    s.dropout_keep = keep;
    return s;
}

NetBundle make_bundle(const MlpSpec& spec, SeededStream stream, const TrainConfig& cfg) {
    NetBundle b;
    b.spec = spec;
    b.params = glorot_init(spec, stream);
    b.adam = make_adam(spec, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    b.shadow = make_shadow(b.params, cfg.polyak_decay);
    return b;
}

Mat gather_rows(const Mat& m, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), m.cols);
    for (size_t k = 0; k < idx.size(); ++k)
        std::copy(m.row_ptr(idx[k]), m.row_ptr(idx[k]) + m.cols, out.row_ptr(static_cast<int>(k)));
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
    std::vector<int> out(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) out[k] = labels[idx[k]];
    return out;
}

int argmax_row(const double* p, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

int argmin_row(const double* p, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (p[j] < p[best]) best = j;
    return best;
}

}  // namespace

ClothModel build_model(const TrainConfig& cfg, int input_dim, int class_count, SeededStream init) {
    if (class_count < 2) throw ParameterError("build_model: need at least 2 classes");
    const Activation act = activation_from(cfg.hidden_activation);
    ClothModel m;
    m.class_count = class_count;
    m.share_ct = cfg.share_ct;
    m.binary_d = cfg.binary_discriminator;

    MlpSpec gs;
    gs.widths.push_back(input_dim);
    for (int w : cfg.g_hidden) gs.widths.push_back(w);
    gs.widths.push_back(cfg.latent_dim);
    gs.hidden_activation = act;
    gs.output_head = Head::Linear;
    gs.dropout_keep = cfg.dropout_keep_g;

    SeededStream gi = init.derive("G"), ci = init.derive("C"), ti = init.derive("T"), di = init.derive("D");
    m.g = make_bundle(gs, gi, cfg);
    m.c = make_bundle(head_spec(cfg.latent_dim, cfg.c_hidden, class_count, act, cfg.dropout_keep_c), ci, cfg);
    m.t = make_bundle(head_spec(cfg.latent_dim, cfg.t_hidden, class_count, act, cfg.dropout_keep_t), ti, cfg);
    m.d = make_bundle(head_spec(cfg.latent_dim, cfg.d_hidden, m.d_outputs(), act, cfg.dropout_keep_d), di, cfg);
    return m;
}

// ---------------------------------------------------------------------------
// output-space losses

DiscOutputsLoss disc_loss_on_outputs(const Mat& d_source, const Mat& d_target, const std::vector<int>& labels,
                                     int target_slot, double floor) {
    if (d_source.rows == 0 || d_target.rows == 0) throw DimensionError("disc loss: empty batch");
    const bool with_class_term = target_slot > 1;  // binary discriminators have no class outputs
    if (with_class_term && static_cast<int>(labels.size()) != d_source.rows)
        throw DimensionError("disc loss: label count mismatch");
    DiscOutputsLoss out;
    out.grad_d_source = Mat(d_source.rows, d_source.cols);
    out.grad_d_target = Mat(d_target.rows, d_target.cols);
    const double inv_nt = 1.0 / d_target.rows;
    const double inv_ns = 1.0 / d_source.rows;

    // -mean_target log D_slot
    for (int i = 0; i < d_target.rows; ++i) {
        double dlog;
        out.value -= inv_nt * clamped_log(d_target(i, target_slot), floor, &dlog);
        out.grad_d_target(i, target_slot) -= inv_nt * dlog;
    }
    // -mean_source log(1 - D_slot)
    for (int i = 0; i < d_source.rows; ++i) {
        double dlog;
        out.value -= inv_ns * clamped_log(1.0 - d_source(i, target_slot), floor, &dlog);
        out.grad_d_source(i, target_slot) += inv_ns * dlog;
    }
    // +mean_source CE(1_y, D_{1:M})
    if (with_class_term) {
        for (int i = 0; i < d_source.rows; ++i) {
            const int y = labels[i] - 1;
            if (y < 0 || y >= target_slot) throw DataError("disc loss: label out of range");
            double dlog;
            out.value -= inv_ns * clamped_log(d_source(i, y), floor, &dlog);
            out.grad_d_source(i, y) -= inv_ns * dlog;
        }
    }
    return out;
}

TransportOutputsLoss transport_loss_on_outputs(const Mat& t_source, const Mat& t_target, const Mat& d_target,
                                               const std::vector<int>& labels, double floor) {
    if (t_target.rows != d_target.rows) throw DimensionError("transport loss: target batch mismatch");
    if (static_cast<int>(labels.size()) != t_source.rows) throw DimensionError("transport loss: label count mismatch");
    const int m = t_target.cols;
    if (d_target.cols < m + 1) throw DimensionError("transport loss: discriminator lacks class outputs");
    TransportOutputsLoss out;
    out.grad_t_source = Mat(t_source.rows, t_source.cols);
    out.grad_t_target = Mat(t_target.rows, t_target.cols);
    out.grad_d_target = Mat(d_target.rows, d_target.cols);
    const double inv_nt = 1.0 / t_target.rows;
    const double inv_ns = 1.0 / t_source.rows;

    // mean_target sum_m T_m * (-log D_m); gradient reaches both T and the cost
    for (int i = 0; i < t_target.rows; ++i) {
        for (int j = 0; j < m; ++j) {
            double dlog;
            const double neglog = -clamped_log(d_target(i, j), floor, &dlog);
            out.target_term += inv_nt * t_target(i, j) * neglog;
            out.grad_t_target(i, j) += inv_nt * neglog;
            out.grad_d_target(i, j) -= inv_nt * t_target(i, j) * dlog;
        }
    }
    out.value = out.target_term;
    // + mean_source CE(1_y, T)
    for (int i = 0; i < t_source.rows; ++i) {
        const int y = labels[i] - 1;
        if (y < 0 || y >= t_source.cols) throw DataError("transport loss: label out of range");
        double dlog;
        out.value -= inv_ns * clamped_log(t_source(i, y), floor, &dlog);
        out.grad_t_source(i, y) -= inv_ns * dlog;
    }
    return out;
}

EntropyOutputsLoss entropy_loss_on_outputs(const Mat& t_target) {
    if (t_target.rows < 2) throw DimensionError("entropy loss: need at least two target rows");
    EntropyOutputsLoss out;
    out.grad_t_target = Mat(t_target.rows, t_target.cols);
    const int n = t_target.rows, m = t_target.cols;
    const double inv_n = 1.0 / n;
    Vec mean(static_cast<size_t>(m), 0.0);
    double mean_h = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_h += entropy(t_target.row(i)) * inv_n;
        for (int j = 0; j < m; ++j) mean[j] += t_target(i, j) * inv_n;
    }
    out.value = mean_h - entropy(mean);
    // d/dp_ij = (log(mean_j) - log(p_ij)) / n; clamped so saturated rows stay finite
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.grad_t_target(i, j) =
                inv_n * (std::log(clamp_prob(mean[j])) - std::log(clamp_prob(t_target(i, j))));
    return out;
}

AdversarialOutputsLoss adversarial_loss_on_outputs(const Mat& d_source, const Mat& d_target, int target_slot,
                                                   double floor) {
    if (d_source.rows == 0 || d_target.rows == 0) throw DimensionError("adversarial loss: empty batch");
    AdversarialOutputsLoss out;
    out.grad_d_source = Mat(d_source.rows, d_source.cols);
    out.grad_d_target = Mat(d_target.rows, d_target.cols);
    const double inv_ns = 1.0 / d_source.rows;
    const double inv_nt = 1.0 / d_target.rows;
    // -mean_source log D_slot : push source features toward the target region
    for (int i = 0; i < d_source.rows; ++i) {
        double dlog;
        out.value -= inv_ns * clamped_log(d_source(i, target_slot), floor, &dlog);
        out.grad_d_source(i, target_slot) -= inv_ns * dlog;
    }
    // +mean_target log D_slot : push target features toward the source region
    for (int i = 0; i < d_target.rows; ++i) {
        double dlog;
        out.value += inv_nt * clamped_log(d_target(i, target_slot), floor, &dlog);
        out.grad_d_target(i, target_slot) += inv_nt * dlog;
    }
    return out;
}

ClassifierOutputsLoss classifier_loss_on_outputs(const Mat& c_source, const std::vector<int>& labels,
                                                 double floor) {
    if (static_cast<int>(labels.size()) != c_source.rows)
        throw DimensionError("classifier loss: label count mismatch");
    ClassifierOutputsLoss out;
    out.grad_c_source = Mat(c_source.rows, c_source.cols);
    const double inv_n = 1.0 / c_source.rows;
    for (int i = 0; i < c_source.rows; ++i) {
        const int y = labels[i] - 1;
        if (y < 0 || y >= c_source.cols) throw DataError("classifier loss: label out of range");
        double dlog;
        out.value -= inv_n * clamped_log(c_source(i, y), floor, &dlog);
        out.grad_c_source(i, y) -= inv_n * dlog;
    }
    return out;
}

// ---------------------------------------------------------------------------
// model-level losses (eval-mode forwards, exact backward composition)

DiscriminatorLoss loss_discriminator(const ClothModel& model, const Mat& source, const std::vector<int>& labels,
                                     const Mat& target, double floor) {
    const Mat zs = forward(model.g.params, model.g.spec, source, Mode::Eval);
    const Mat zt = forward(model.g.params, model.g.spec, target, Mode::Eval);
    ForwardCache cs, ct;
    const Mat ds = forward(model.d.params, model.d.spec, zs, Mode::Eval, &cs);
    const Mat dt = forward(model.d.params, model.d.spec, zt, Mode::Eval, &ct);
    const auto terms = disc_loss_on_outputs(ds, dt, labels, model.target_slot(), floor);
    if (!std::isfinite(terms.value)) throw TrainingError("discriminator loss is not finite");
    Gradients gs = backward(model.d.params, model.d.spec, cs, terms.grad_d_source);
    const Gradients gt = backward(model.d.params, model.d.spec, ct, terms.grad_d_target);
    gs.params.add_scaled(gt.params, 1.0);
    DiscriminatorLoss out;
    out.value = terms.value;
    out.d_grads = std::move(gs.params);
    return out;
}

TransportLoss loss_transport(const ClothModel& model, const Mat& source, const std::vector<int>& labels,
                             const Mat& target, double floor) {
    const NetBundle& tn = model.t_net();
    ForwardCache gcs, gct, tcs, tct, dct;
    const Mat zs = forward(model.g.params, model.g.spec, source, Mode::Eval, &gcs);
    const Mat zt = forward(model.g.params, model.g.spec, target, Mode::Eval, &gct);
    const Mat ts = forward(tn.params, tn.spec, zs, Mode::Eval, &tcs);
    const Mat tt = forward(tn.params, tn.spec, zt, Mode::Eval, &tct);
    const Mat dt = forward(model.d.params, model.d.spec, zt, Mode::Eval, &dct);
    const auto terms = transport_loss_on_outputs(ts, tt, dt, labels, floor);
    if (!std::isfinite(terms.value)) throw TrainingError("transport loss is not finite");

    Gradients tg_s = backward(tn.params, tn.spec, tcs, terms.grad_t_source);
    const Gradients tg_t = backward(tn.params, tn.spec, tct, terms.grad_t_target);
    const Gradients dg_t = backward(model.d.params, model.d.spec, dct, terms.grad_d_target);  // D frozen

    Mat dz_s = tg_s.inputs;
    Mat dz_t = tg_t.inputs;
    for (size_t k = 0; k < dz_t.data.size(); ++k) dz_t.data[k] += dg_t.inputs.data[k];
    Gradients gg_s = backward(model.g.params, model.g.spec, gcs, dz_s);
    const Gradients gg_t = backward(model.g.params, model.g.spec, gct, dz_t);
    gg_s.params.add_scaled(gg_t.params, 1.0);
    tg_s.params.add_scaled(tg_t.params, 1.0);

    TransportLoss out;
    out.value = terms.value;
    out.target_term = terms.target_term;
    out.t_grads = std::move(tg_s.params);
    out.g_grads = std::move(gg_s.params);
    return out;
}

EntropyLoss loss_entropy(const ClothModel& model, const Mat& target) {
    const NetBundle& tn = model.t_net();
    ForwardCache gct, tct;
    const Mat zt = forward(model.g.params, model.g.spec, target, Mode::Eval, &gct);
    const Mat tt = forward(tn.params, tn.spec, zt, Mode::Eval, &tct);
    const auto terms = entropy_loss_on_outputs(tt);
    Gradients tg = backward(tn.params, tn.spec, tct, terms.grad_t_target);
    const Gradients gg = backward(model.g.params, model.g.spec, gct, tg.inputs);
    EntropyLoss out;
    out.value = terms.value;
    out.t_grads = std::move(tg.params);
    out.g_grads = gg.params;
    return out;
}

AdversarialLoss loss_generator_adversarial(const ClothModel& model, const Mat& source, const Mat& target,
                                           double floor) {
    ForwardCache gcs, gct, dcs, dct;
    const Mat zs = forward(model.g.params, model.g.spec, source, Mode::Eval, &gcs);
    const Mat zt = forward(model.g.params, model.g.spec, target, Mode::Eval, &gct);
    const Mat ds = forward(model.d.params, model.d.spec, zs, Mode::Eval, &dcs);
    const Mat dt = forward(model.d.params, model.d.spec, zt, Mode::Eval, &dct);
    const auto terms = adversarial_loss_on_outputs(ds, dt, model.target_slot(), floor);
    const Gradients dg_s = backward(model.d.params, model.d.spec, dcs, terms.grad_d_source);
    const Gradients dg_t = backward(model.d.params, model.d.spec, dct, terms.grad_d_target);
    Gradients gg_s = backward(model.g.params, model.g.spec, gcs, dg_s.inputs);
    const Gradients gg_t = backward(model.g.params, model.g.spec, gct, dg_t.inputs);
    gg_s.params.add_scaled(gg_t.params, 1.0);
    AdversarialLoss out;
    out.value = terms.value;
    out.g_grads = std::move(gg_s.params);
    return out;
}

ClassifierLoss loss_classifier(const ClothModel& model, const Mat& source, const std::vector<int>& labels,
                               double floor) {
    ForwardCache gcs, ccs;
    const Mat zs = forward(model.g.params, model.g.spec, source, Mode::Eval, &gcs);
    const Mat cs = forward(model.c.params, model.c.spec, zs, Mode::Eval, &ccs);
    const auto terms = classifier_loss_on_outputs(cs, labels, floor);
    Gradients cg = backward(model.c.params, model.c.spec, ccs, terms.grad_c_source);
    const Gradients gg = backward(model.g.params, model.g.spec, gcs, cg.inputs);
    ClassifierLoss out;
    out.value = terms.value;
    out.c_grads = std::move(cg.params);
    out.g_grads = gg.params;
    return out;
}

HmmLoss loss_hmm(const ClothModel& model, const Mat& source, const std::vector<int>& labels, const Mat& target,
                 int q, double scale) {
    const NetBundle& tn = model.t_net();
    ForwardCache gcs, gct, tct;
    const Mat zs = forward(model.g.params, model.g.spec, source, Mode::Eval, &gcs);
    const Mat zt = forward(model.g.params, model.g.spec, target, Mode::Eval, &gct);
    const Mat tt = forward(tn.params, tn.spec, zt, Mode::Eval, &tct);
    const CahommResult hm =
        cahomm_loss(LatentBatch{zs}, labels, model.class_count, LatentBatch{zt}, tt, q, scale);
    Gradients tg = backward(tn.params, tn.spec, tct, hm.grad_tprobs);
    Mat dz_t = tg.inputs;
    for (size_t k = 0; k < dz_t.data.size(); ++k) dz_t.data[k] += hm.grad_target.data[k];
    Gradients gg_s = backward(model.g.params, model.g.spec, gcs, hm.grad_source);
    const Gradients gg_t = backward(model.g.params, model.g.spec, gct, dz_t);
    gg_s.params.add_scaled(gg_t.params, 1.0);
    HmmLoss out;
    out.value = hm.value;
    out.t_grads = std::move(tg.params);
    out.g_grads = std::move(gg_s.params);
    out.classes_skipped = hm.classes_skipped;
    return out;
}

// ---------------------------------------------------------------------------
// evaluation

EvalResult evaluate(const ClothModel& model, const Dataset& dataset) {
    const Mat z = forward(model.g.shadow.params, model.g.spec, dataset.features(), Mode::Eval);
    const Mat p = forward(model.c.shadow.params, model.c.spec, z, Mode::Eval);
    const std::vector<int>& labels = dataset.eval_labels();
    const int m = model.class_count;
    EvalResult r;
    r.confusion.assign(static_cast<size_t>(m), std::vector<long>(static_cast<size_t>(m), 0));
    long correct = 0;
    for (int i = 0; i < p.rows; ++i) {
        const int pred = argmax_row(p.row_ptr(i), m);
        const int truth = labels[i] - 1;
        r.confusion[truth][pred] += 1;
        if (pred == truth) ++correct;
    }
    r.accuracy = p.rows > 0 ? static_cast<double>(correct) / p.rows : 0.0;
    r.per_class_accuracy.assign(static_cast<size_t>(m), 0.0);
    for (int c = 0; c < m; ++c) {
        long total = 0;
        for (int j = 0; j < m; ++j) total += r.confusion[c][j];
        r.per_class_accuracy[c] = total > 0 ? static_cast<double>(r.confusion[c][c]) / total : 0.0;
    }
    return r;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

struct StepLosses {
    double c = 0.0, d = 0.0, t = 0.0, ent = 0.0, hmm = 0.0;
    double t_target_term = 0.0;
    int hmm_skipped = 0;
    bool finite() const {
        return std::isfinite(c) && std::isfinite(d) && std::isfinite(t) && std::isfinite(ent) && std::isfinite(hmm);
    }
};

void add_into(Mat& acc, const Mat& g, double w) {
    for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += w * g.data[k];
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& source, const Dataset& target,
                  const MetricsSink& sink) {
    cfg.validate();
    if (!source.has_labels()) throw DataError("train: source dataset has no labels");
    const int class_count = source.class_count();
    const auto t0 = std::chrono::steady_clock::now();

    SeededStream root(cfg.seed, "train");

    // source validation holdout for best-model snapshots
    std::vector<int> train_idx, val_idx;
    {
        SeededStream split = root.derive("valsplit");
        const std::vector<int> perm = seeded_permutation(split, source.size());
        const int n_val = cfg.snapshot_best ? static_cast<int>(cfg.val_fraction * source.size()) : 0;
        val_idx.assign(perm.begin(), perm.begin() + n_val);
        train_idx.assign(perm.begin() + n_val, perm.end());
    }
    const Dataset src_train = source.subset(train_idx);
    const Dataset src_val = val_idx.empty() ? Dataset() : source.subset(val_idx);

    if (cfg.batch_size > src_train.size() || cfg.batch_size > target.size())
        throw ConfigError("train: batch_size exceeds dataset size");

    ClothModel model = build_model(cfg, source.dim(), class_count, root.derive("init"));
    BatchIter src_iter(src_train.size(), cfg.batch_size, root.derive("batch/source"));
    BatchIter tgt_iter(target.size(), cfg.batch_size, root.derive("batch/target"));
    SeededStream g_drop = root.derive("dropout/G");
    SeededStream c_drop = root.derive("dropout/C");
    SeededStream t_drop = root.derive("dropout/T");
    SeededStream d_drop = root.derive("dropout/D");
    SeededStream latent_drop = root.derive("dropout/latent");

    const double floor = cfg.clamp_floor;
    const double hmm_scale = cfg.hmm_scale_value();
    const bool update_d = cfg.enable_adv || cfg.enable_t || cfg.sinkhorn_mode;
    const bool want_t_tgt = cfg.enable_t || cfg.enable_ent || cfg.enable_hmm;
    const bool want_d_ctg = cfg.enable_adv || cfg.enable_t || cfg.sinkhorn_mode;

    TrainResult result;
    result.model = model;  // placeholder until the first checkpoint
    ClothModel last_good = model;
    ClothModel best = model;
    double best_val = -1.0;
    double w_est = 0.0;
    bool w_init = false;
    int hmm_skipped_total = 0;

    auto wall_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    for (int iter = 1; iter <= cfg.iters; ++iter) {
        StepLosses losses;
        try {
            // -- discriminator step on its own minibatch, G frozen
            if (update_d) {
                const auto si = src_iter.next();
                const auto ti = tgt_iter.next();
                const Mat xs = gather_rows(src_train.features(), si);
                const std::vector<int> ys = gather_labels(src_train.train_labels(), si);
                const Mat xt = gather_rows(target.features(), ti);
                const Mat zs = forward(model.g.params, model.g.spec, xs, Mode::Eval);
                const Mat zt = forward(model.g.params, model.g.spec, xt, Mode::Eval);
                ForwardCache dcs, dct;
                const Mat ds = forward(model.d.params, model.d.spec, zs, Mode::Train, &dcs, &d_drop);
                const Mat dt = forward(model.d.params, model.d.spec, zt, Mode::Train, &dct, &d_drop);
                const auto dl = disc_loss_on_outputs(ds, dt, ys, model.target_slot(), floor);
                losses.d = dl.value;
                if (!std::isfinite(losses.d)) throw TrainingError("discriminator loss diverged");
                Gradients gs = backward(model.d.params, model.d.spec, dcs, dl.grad_d_source);
                const Gradients gt = backward(model.d.params, model.d.spec, dct, dl.grad_d_target);
                gs.params.add_scaled(gt.params, 1.0);
                adam_polyak_step(model.d.params, gs.params, model.d.adam, model.d.shadow, cfg.lr);
            }

            // -- C, T, G step on a fresh minibatch, D frozen
            const auto si = src_iter.next();
            const auto ti = tgt_iter.next();
            const Mat xs = gather_rows(src_train.features(), si);
            const std::vector<int> ys = gather_labels(src_train.train_labels(), si);
            const Mat xt = gather_rows(target.features(), ti);

            NetBundle& tn = model.t_net();
            ForwardCache gcs, gct, ccs, tcs, tct, dcs, dct;
            Mat zs = forward(model.g.params, model.g.spec, xs, Mode::Train, &gcs, &g_drop);
            Mat zt = forward(model.g.params, model.g.spec, xt, Mode::Train, &gct, &g_drop);

            // optional dropout on the adapted layer itself
            Mat zmask_s, zmask_t;
            if (cfg.dropout_on_latent && cfg.dropout_keep_g < 1.0) {
                const double keep = cfg.dropout_keep_g;
                const double inv_keep = 1.0 / keep;
                zmask_s = Mat(zs.rows, zs.cols);
                zmask_t = Mat(zt.rows, zt.cols);
                for (size_t k = 0; k < zmask_s.data.size(); ++k)
                    zmask_s.data[k] = latent_drop.next_double() < keep ? inv_keep : 0.0;
                for (size_t k = 0; k < zmask_t.data.size(); ++k)
                    zmask_t.data[k] = latent_drop.next_double() < keep ? inv_keep : 0.0;
                for (size_t k = 0; k < zs.data.size(); ++k) zs.data[k] *= zmask_s.data[k];
                for (size_t k = 0; k < zt.data.size(); ++k) zt.data[k] *= zmask_t.data[k];
            }

            const Mat cs = forward(model.c.params, model.c.spec, zs, Mode::Train, &ccs, &c_drop);
            Mat ts, tt;
            if (cfg.enable_t) ts = forward(tn.params, tn.spec, zs, Mode::Train, &tcs, &t_drop);
            if (want_t_tgt) tt = forward(tn.params, tn.spec, zt, Mode::Train, &tct, &t_drop);
            Mat ds, dt;
            if (want_d_ctg) {
                ds = forward(model.d.params, model.d.spec, zs, Mode::Eval, &dcs);
                dt = forward(model.d.params, model.d.spec, zt, Mode::Eval, &dct);
            }

            Mat d_cs(cs.rows, cs.cols);
            Mat d_ts, d_tt, d_ds, d_dt;
            if (cfg.enable_t) d_ts = Mat(ts.rows, ts.cols);
            if (want_t_tgt) d_tt = Mat(tt.rows, tt.cols);
            if (want_d_ctg) {
                d_ds = Mat(ds.rows, ds.cols);
                d_dt = Mat(dt.rows, dt.cols);
            }
            Mat dz_s(zs.rows, zs.cols), dz_t(zt.rows, zt.cols);

            const auto cl = classifier_loss_on_outputs(cs, ys, floor);
            losses.c = cl.value;
            add_into(d_cs, cl.grad_c_source, 1.0);

            if (cfg.enable_adv) {
                const auto adv = adversarial_loss_on_outputs(ds, dt, model.target_slot(), floor);
                add_into(d_ds, adv.grad_d_source, 1.0);
                add_into(d_dt, adv.grad_d_target, 1.0);
            }
            if (cfg.enable_t) {
                const auto tr = transport_loss_on_outputs(ts, tt, dt, ys, floor);
                losses.t = tr.value;
                losses.t_target_term = tr.target_term;
                add_into(d_ts, tr.grad_t_source, cfg.alpha);
                add_into(d_tt, tr.grad_t_target, cfg.alpha);
                add_into(d_dt, tr.grad_d_target, cfg.alpha);
            }
            if (cfg.enable_ent) {
                const auto en = entropy_loss_on_outputs(tt);
                losses.ent = en.value;
                add_into(d_tt, en.grad_t_target, cfg.beta);
            }
            CahommResult hm;
            if (cfg.enable_hmm) {
                hm = cahomm_loss(LatentBatch{zs}, ys, class_count, LatentBatch{zt}, tt, cfg.q, hmm_scale);
                losses.hmm = hm.value;
                if (hm.classes_present == 0) ++losses.hmm_skipped;
                add_into(d_tt, hm.grad_tprobs, cfg.gamma);
            }
            if (cfg.sinkhorn_mode) {
                // entropic plan over the joint batch at uniform class masses;
                // gradient reaches G through the cost with the plan held fixed
                const int n_joint = zs.rows + zt.rows;
                const int m = class_count;
                Mat cost(n_joint, m);
                Mat dlogs(n_joint, m);
                for (int i = 0; i < n_joint; ++i) {
                    const Mat& dsrc = i < zs.rows ? ds : dt;
                    const int r = i < zs.rows ? i : i - zs.rows;
                    for (int j = 0; j < m; ++j) {
                        double dlog;
                        cost(i, j) = -clamped_log(dsrc(r, j), floor, &dlog);
                        dlogs(i, j) = dlog;
                    }
                }
                Marginals marg;
                marg.row.assign(static_cast<size_t>(n_joint), 1.0 / n_joint);
                marg.col.assign(static_cast<size_t>(m), 1.0 / m);
                const SinkhornResult sk =
                    sinkhorn(CostMatrix{cost}, marg, cfg.sinkhorn_epsilon, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol);
                double w = 0.0;
                for (int i = 0; i < n_joint; ++i) {
                    const bool src_row = i < zs.rows;
                    const int r = src_row ? i : i - zs.rows;
                    for (int j = 0; j < m; ++j) {
                        const double a = sk.plan.values(i, j);
                        w += a * cost(i, j);
                        const double g = -cfg.alpha * a * dlogs(i, j);
                        if (src_row)
                            d_ds(r, j) += g;
                        else
                            d_dt(r, j) += g;
                    }
                }
                losses.t = w;
                losses.t_target_term = w;
            }

            if (!losses.finite()) throw TrainingError("loss diverged");

            // backward sweep
            Gradients cg = backward(model.c.params, model.c.spec, ccs, d_cs);
            add_into(dz_s, cg.inputs, 1.0);
            MlpParams t_par = zeros_like(tn.spec);
            bool t_used = false;
            if (cfg.enable_t) {
                const Gradients tg = backward(tn.params, tn.spec, tcs, d_ts);
                t_par.add_scaled(tg.params, 1.0);
                add_into(dz_s, tg.inputs, 1.0);
                t_used = true;
            }
            if (want_t_tgt) {
                const Gradients tg = backward(tn.params, tn.spec, tct, d_tt);
                t_par.add_scaled(tg.params, 1.0);
                add_into(dz_t, tg.inputs, 1.0);
                t_used = true;
            }
            if (want_d_ctg) {
                const Gradients dg_s = backward(model.d.params, model.d.spec, dcs, d_ds);
                const Gradients dg_t = backward(model.d.params, model.d.spec, dct, d_dt);
                add_into(dz_s, dg_s.inputs, 1.0);  // D params stay frozen here
                add_into(dz_t, dg_t.inputs, 1.0);
            }
            if (cfg.enable_hmm) {
                add_into(dz_s, hm.grad_source, cfg.gamma);
                add_into(dz_t, hm.grad_target, cfg.gamma);
            }
            if (zmask_s.rows > 0) {
                for (size_t k = 0; k < dz_s.data.size(); ++k) dz_s.data[k] *= zmask_s.data[k];
                for (size_t k = 0; k < dz_t.data.size(); ++k) dz_t.data[k] *= zmask_t.data[k];
            }
            Gradients gg = backward(model.g.params, model.g.spec, gcs, dz_s);
            const Gradients gg_t = backward(model.g.params, model.g.spec, gct, dz_t);
            gg.params.add_scaled(gg_t.params, 1.0);

            if (model.share_ct && t_used) cg.params.add_scaled(t_par, 1.0);
            adam_polyak_step(model.c.params, cg.params, model.c.adam, model.c.shadow, cfg.lr);
            if (!model.share_ct && t_used)
                adam_polyak_step(model.t.params, t_par, model.t.adam, model.t.shadow, cfg.lr);
            adam_polyak_step(model.g.params, gg.params, model.g.adam, model.g.shadow, cfg.lr);
        } catch (const TrainingError&) {
            result.model = last_good;
            result.nan_abort = true;
            result.stop_iter = iter;
            result.hmm_skipped_batches = hmm_skipped_total;
            return result;
        }

        hmm_skipped_total += losses.hmm_skipped;
        if (cfg.enable_t || cfg.sinkhorn_mode) {
            if (!w_init) {
                w_est = losses.t_target_term;
                w_init = true;
            } else {
                w_est = cfg.w_smoothing * w_est + (1.0 - cfg.w_smoothing) * losses.t_target_term;
            }
        }

        if (iter % cfg.log_interval == 0 || iter == cfg.iters) {
            TrainMetricsRow row;
            row.iter = iter;
            row.loss_c = losses.c;
            row.loss_d = losses.d;
            row.loss_t = losses.t;
            row.loss_ent = losses.ent;
            row.loss_hmm = losses.hmm;
            row.w_estimate = w_est;
            row.source_acc = evaluate(model, source).accuracy;
            row.target_acc = target.has_labels() ? evaluate(model, target).accuracy : 0.0;
            row.wall_ms = wall_ms();
            if (sink) sink(row);
            last_good = model;
            if (cfg.snapshot_best && src_val.size() > 0) {
                // ties go to the later model: validation accuracy saturates
                // early while adaptation keeps improving
                const double val_acc = evaluate(model, src_val).accuracy;
                if (val_acc >= best_val) {
                    best_val = val_acc;
                    best = model;
                }
            }
        }
    }

    result.model = (cfg.snapshot_best && best_val >= 0.0) ? best : model;
    result.stop_iter = cfg.iters;
    result.hmm_skipped_batches = hmm_skipped_total;
    result.best_val_acc = best_val;
    result.final_source_acc = evaluate(result.model, source).accuracy;
    result.final_target_acc = target.has_labels() ? evaluate(result.model, target).accuracy : 0.0;
    return result;
}

// ---------------------------------------------------------------------------
// amortization vs exact solvers

CompareReport compare_plan_vs_oracles(const Mat& t_probs, const CostMatrix& cost, double sinkhorn_eps,
                                      int sinkhorn_max_iter, double sinkhorn_tol, double gap_threshold) {
    if (!t_probs.same_shape(cost.values)) throw DimensionError("compare: shape mismatch");
    const int n = t_probs.rows, m = t_probs.cols;
    CompareReport rep;
    rep.rows = n;

    const double row_mass = 1.0 / n;
    double amort = 0.0;
    rep.induced_pi.assign(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            amort += row_mass * t_probs(i, j) * cost.values(i, j);
            rep.induced_pi[j] += row_mass * t_probs(i, j);
        }
    rep.amortized_objective = amort;

    const RowArgminResult exact = row_argmin_plan(cost, row_mass);
    rep.exact_free_pi_objective = exact.objective;
    rep.ratio_amortized_vs_exact = exact.objective != 0.0 ? amort / exact.objective : 1.0;

    Marginals marg;
    marg.row.assign(static_cast<size_t>(n), row_mass);
    marg.col = rep.induced_pi;
    const SinkhornResult sk = sinkhorn(cost, marg, sinkhorn_eps, sinkhorn_max_iter, sinkhorn_tol);
    rep.sinkhorn_objective_at_pi = transport_cost(sk.plan, cost);
    rep.sinkhorn_converged = sk.converged;

    int agree = 0, conf_agree = 0, conf_rows = 0;
    for (int i = 0; i < n; ++i) {
        const int pick = argmax_row(t_probs.row_ptr(i), m);
        const int best = argmin_row(cost.values.row_ptr(i), m);
        if (pick == best) ++agree;
        double lowest = cost.values(i, best);
        double second = std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j)
            if (j != best) second = std::min(second, cost.values(i, j));
        if (second - lowest > gap_threshold) {
            ++conf_rows;
            if (pick == best) ++conf_agree;
        }
    }
    rep.row_agreement = static_cast<double>(agree) / n;
    rep.confident_rows = conf_rows;
    rep.confident_row_agreement = conf_rows > 0 ? static_cast<double>(conf_agree) / conf_rows : 1.0;
    return rep;
}

CompareReport compare_amortized_vs_exact(const ClothModel& model, const Mat& inputs, double floor,
                                         double sinkhorn_eps, int sinkhorn_max_iter, double sinkhorn_tol) {
    if (model.binary_d) throw ParameterError("compare: needs the multi-class discriminator");
    const NetBundle& tn = model.t_net();
    const Mat z = forward(model.g.params, model.g.spec, inputs, Mode::Eval);
    const Mat tp = forward(tn.params, tn.spec, z, Mode::Eval);
    const Mat d = forward(model.d.params, model.d.spec, z, Mode::Eval);
    Mat cost(z.rows, model.class_count);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < model.class_count; ++j) cost(i, j) = -std::log(clamp_prob(d(i, j), floor));
    return compare_plan_vs_oracles(tp, CostMatrix{cost}, sinkhorn_eps, sinkhorn_max_iter, sinkhorn_tol);
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

json spec_to_json(const MlpSpec& s) {
    json j;
    j["widths"] = s.widths;
    j["hidden_activation"] = s.hidden_activation == Activation::Relu ? "relu" : "tanh";
    j["output_head"] = s.output_head == Head::Linear ? "linear" : "softmax";
    j["dropout_keep"] = s.dropout_keep;
    return j;
}

MlpSpec spec_from_json(const json& j) {
    MlpSpec s;
    j.at("widths").get_to(s.widths);
    s.hidden_activation = j.at("hidden_activation") == "tanh" ? Activation::Tanh : Activation::Relu;
    s.output_head = j.at("output_head") == "linear" ? Head::Linear : Head::Softmax;
    s.dropout_keep = j.at("dropout_keep").get<double>();
    s.validate();
    return s;
}

json bundle_to_json(const NetBundle& b) {
    json j;
    j["spec"] = spec_to_json(b.spec);
    j["params"] = encode_doubles_base64(b.params.flatten());
    j["adam"] = {{"m", encode_doubles_base64(b.adam.m.flatten())},
                 {"v", encode_doubles_base64(b.adam.v.flatten())},
                 {"step", b.adam.step},
                 {"beta1", b.adam.beta1},
                 {"beta2", b.adam.beta2},
                 {"eps", b.adam.eps}};
    j["shadow"] = {{"params", encode_doubles_base64(b.shadow.params.flatten())}, {"decay", b.shadow.decay}};
    return j;
}

NetBundle bundle_from_json(const json& j) {
    NetBundle b;
    b.spec = spec_from_json(j.at("spec"));
    b.params = zeros_like(b.spec);
    b.params.unflatten(decode_doubles_base64(j.at("params").get<std::string>()));
    b.adam = make_adam(b.spec, j.at("adam").at("beta1").get<double>(), j.at("adam").at("beta2").get<double>(),
                       j.at("adam").at("eps").get<double>());
    b.adam.m.unflatten(decode_doubles_base64(j.at("adam").at("m").get<std::string>()));
    b.adam.v.unflatten(decode_doubles_base64(j.at("adam").at("v").get<std::string>()));
    b.adam.step = j.at("adam").at("step").get<long>();
    b.shadow.decay = j.at("shadow").at("decay").get<double>();
    b.shadow.params = zeros_like(b.spec);
    b.shadow.params.unflatten(decode_doubles_base64(j.at("shadow").at("params").get<std::string>()));
    return b;
}

}  // namespace

void save_model(const ClothModel& model, const std::string& cfg_hash, const std::string& path) {
    json j;
    j["format"] = "cloth-model-v1";
    j["config_hash"] = cfg_hash;
    j["class_count"] = model.class_count;
    j["share_ct"] = model.share_ct;
    j["binary_d"] = model.binary_d;
    j["nets"] = {{"G", bundle_to_json(model.g)},
                 {"C", bundle_to_json(model.c)},
                 {"T", bundle_to_json(model.t)},
                 {"D", bundle_to_json(model.d)}};
    std::ofstream f(path);
    if (!f) throw FormatError("save_model: cannot write " + path);
    f << j.dump(1) << "\n";
}

ClothModel load_model(const std::string& path, std::string* cfg_hash_out) {
    std::ifstream f(path);
    if (!f) throw FormatError("load_model: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_model: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "cloth-model-v1") throw FormatError("load_model: unknown format tag");
    ClothModel m;
    m.class_count = j.at("class_count").get<int>();
    m.share_ct = j.at("share_ct").get<bool>();
    m.binary_d = j.at("binary_d").get<bool>();
    m.g = bundle_from_json(j.at("nets").at("G"));
    m.c = bundle_from_json(j.at("nets").at("C"));
    m.t = bundle_from_json(j.at("nets").at("T"));
    m.d = bundle_from_json(j.at("nets").at("D"));
    if (cfg_hash_out) *cfg_hash_out = j.value("config_hash", "");
    return m;
}

}  // namespace cloth
