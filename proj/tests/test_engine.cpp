#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "helpers.hpp"

using namespace cloth;
using cloth_test::small_synthetic_config;

namespace {

Mat mat(int r, int c, std::initializer_list<double> vals) {
    Mat m(r, c);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

constexpr double kFloor = 1e-12;

}  // namespace

TEST_CASE("discriminator loss hand values") {
    // M=2: one target row with D=(0.25,0.25,0.5), one source row label 1 with D=(0.5,0.25,0.25)
    const Mat d_src = mat(1, 3, {0.5, 0.25, 0.25});
    const Mat d_tgt = mat(1, 3, {0.25, 0.25, 0.5});
    const auto l = disc_loss_on_outputs(d_src, d_tgt, {1}, 2, kFloor);
    CHECK(l.value == doctest::Approx(std::log(2.0) + std::log(4.0 / 3.0) + std::log(2.0)).epsilon(1e-9));
    CHECK(l.value == doctest::Approx(1.6740).epsilon(1e-4));

    // a perfect discriminator drives the loss to zero
    const auto perfect =
        disc_loss_on_outputs(mat(1, 3, {1.0, 0.0, 0.0}), mat(1, 3, {0.0, 0.0, 1.0}), {1}, 2, kFloor);
    CHECK(perfect.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("transport loss hand values") {
    // one target row, T=(1,0), D_1=0.5: target term is ln 2
    const Mat t_src = mat(1, 2, {1.0, 0.0});
    const Mat t_tgt = mat(1, 2, {1.0, 0.0});
    const Mat d_tgt = mat(1, 3, {0.5, 0.25, 0.25});
    const auto l = transport_loss_on_outputs(t_src, t_tgt, d_tgt, {1}, kFloor);
    CHECK(l.target_term == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // the source row is an exact one-hot at its label, so the CE term vanishes
    CHECK(l.value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("entropy loss hand values and bound") {
    // two opposite one-hots: mean entropy 0, entropy of mean ln 2
    const auto spread = entropy_loss_on_outputs(mat(2, 2, {1.0, 0.0, 0.0, 1.0}));
    CHECK(spread.value == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

    const auto uniform = entropy_loss_on_outputs(mat(2, 2, {0.5, 0.5, 0.5, 0.5}));
    CHECK(uniform.value == doctest::Approx(0.0).epsilon(1e-12));

    const auto same = entropy_loss_on_outputs(mat(3, 2, {1.0, 0.0, 1.0, 0.0, 1.0, 0.0}));
    CHECK(same.value == doctest::Approx(0.0).epsilon(1e-12));

    SeededStream s(2, "ent");
    for (int t = 0; t < 300; ++t) {
        const int m = 2 + static_cast<int>(s.next_below(5));
        const int n = 2 + static_cast<int>(s.next_below(10));
        Mat probs(n, m);
        for (int i = 0; i < n; ++i) {
            Vec logits(m);
            for (auto& x : logits) x = s.next_uniform(-6.0, 6.0);
            const Vec p = softmax(logits);
            std::copy(p.begin(), p.end(), probs.row_ptr(i));
        }
        const double v = entropy_loss_on_outputs(probs).value;
        CHECK(v <= 1e-9);
        CHECK(v >= -std::log(static_cast<double>(m)) - 1e-9);
    }
}

TEST_CASE("adversarial loss cancels at D_target = 1/2") {
    const Mat half_s = mat(2, 3, {0.25, 0.25, 0.5, 0.25, 0.25, 0.5});
    const Mat half_t = half_s;
    const auto l = adversarial_loss_on_outputs(half_s, half_t, 2, kFloor);
    CHECK(l.value == doctest::Approx(0.0).epsilon(1e-12));

    // fooling succeeded: source looks like target and vice versa
    const auto fooled =
        adversarial_loss_on_outputs(mat(1, 3, {0.0, 0.0, 1.0}), mat(1, 3, {1.0, 0.0, 0.0}), 2, kFloor);
    CHECK(fooled.value < -10.0);
}

TEST_CASE("classifier loss hand values") {
    const auto perfect = classifier_loss_on_outputs(mat(1, 3, {1.0, 0.0, 0.0}), {1}, kFloor);
    CHECK(perfect.value == doctest::Approx(0.0).epsilon(1e-9));
    const Mat uniform(2, 3, 1.0 / 3.0);
    const auto u = classifier_loss_on_outputs(uniform, {2, 3}, kFloor);
    CHECK(u.value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(classifier_loss_on_outputs(uniform, {2, 4}, kFloor), DataError);
}

TEST_CASE("model-level losses gradient-check") {
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.latent_dim = 4;
    cfg.g_hidden = {5};
    cfg.dropout_keep_g = cfg.dropout_keep_c = cfg.dropout_keep_t = cfg.dropout_keep_d = 1.0;
    ClothModel model = build_model(cfg, 3, 3, SeededStream(3, "m"));

    SeededStream s(4, "data");
    Mat xs(5, 3), xt(6, 3);
    for (auto& x : xs.data) x = s.next_uniform(-1.0, 1.0);
    for (auto& x : xt.data) x = s.next_uniform(-1.0, 1.0);
    const std::vector<int> ys = {1, 2, 3, 1, 2};

    // transport loss: T and G both receive exact gradients
    Vec flat = model.t.params.flatten();
    const Vec gflat = model.g.params.flatten();
    flat.insert(flat.end(), gflat.begin(), gflat.end());
    GradFn fn = [&](const Vec& x) -> std::pair<double, Vec> {
        ClothModel m2 = model;
        Vec tpart(x.begin(), x.begin() + m2.t.params.count());
        Vec gpart(x.begin() + m2.t.params.count(), x.end());
        m2.t.params.unflatten(tpart);
        m2.g.params.unflatten(gpart);
        const TransportLoss l = loss_transport(m2, xs, ys, xt, kFloor);
        Vec g = l.t_grads.flatten();
        const Vec gg = l.g_grads.flatten();
        g.insert(g.end(), gg.begin(), gg.end());
        return {l.value, g};
    };
    CHECK(grad_check(fn, flat, 1e-5) < 1e-4);
}

TEST_CASE("evaluate: perfect, constant and confusion accounting") {
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.latent_dim = 3;
    cfg.g_hidden = {};
    ClothModel model = build_model(cfg, 3, 3, SeededStream(5, "m"));

    // identity G (shadow too), classifier reads coordinates: x = e_y scaled
    model.g.shadow.params.fill(0.0);
    for (int i = 0; i < 3; ++i) model.g.shadow.params.weights[0](i, i) = 1.0;
    model.c.shadow.params.fill(0.0);
    for (int i = 0; i < 3; ++i) model.c.shadow.params.weights[0](i, i) = 5.0;

    Mat f(9, 3);
    std::vector<int> labels(9);
    for (int i = 0; i < 9; ++i) {
        labels[i] = i % 3 + 1;
        f(i, labels[i] - 1) = 1.0;
    }
    const Dataset ds(f, labels, DomainTag::Source, 3);
    const EvalResult r = evaluate(model, ds);
    CHECK(r.accuracy == doctest::Approx(1.0));
    long total = 0;
    for (const auto& row : r.confusion)
        for (long v : row) total += v;
    CHECK(total == 9);

    // constant predictor: zero weights everywhere, ties resolve to class 1
    model.c.shadow.params.fill(0.0);
    const EvalResult c = evaluate(model, ds);
    CHECK(c.accuracy == doctest::Approx(1.0 / 3.0));
    for (int cls = 0; cls < 3; ++cls) CHECK(c.confusion[cls][0] == 3);
}

TEST_CASE("training is deterministic and leaves an unused discriminator at init") {
    TrainConfig cfg = small_synthetic_config(11);
    cfg.enable_adv = cfg.enable_t = cfg.enable_ent = cfg.enable_hmm = false;  // source-only
    const DomainPair data = build_datasets(cfg);

    std::vector<TrainMetricsRow> rows1, rows2;
    const TrainResult r1 = train(cfg, data.source, data.target, [&](const TrainMetricsRow& r) { rows1.push_back(r); });
    const TrainResult r2 = train(cfg, data.source, data.target, [&](const TrainMetricsRow& r) { rows2.push_back(r); });

    REQUIRE(rows1.size() == rows2.size());
    for (size_t i = 0; i < rows1.size(); ++i) {
        CHECK(rows1[i].loss_c == rows2[i].loss_c);
        CHECK(rows1[i].source_acc == rows2[i].source_acc);
        CHECK(rows1[i].target_acc == rows2[i].target_acc);
    }
    CHECK(r1.model.g.params.flatten() == r2.model.g.params.flatten());
    CHECK(r1.model.c.params.flatten() == r2.model.c.params.flatten());

    // with every D-consuming loss disabled the discriminator never moves
    SeededStream root(cfg.seed, "train");
    (void)root.derive("valsplit");
    const ClothModel fresh = build_model(cfg, data.source.dim(), 3, root.derive("init"));
    CHECK(r1.model.d.params.flatten() == fresh.d.params.flatten());
    CHECK(r1.model.d.adam.step == 0);
}

TEST_CASE("adversarial-only training updates D every iteration") {
    TrainConfig cfg = small_synthetic_config(12);
    cfg.enable_adv = true;
    cfg.enable_t = cfg.enable_ent = cfg.enable_hmm = false;
    const DomainPair data = build_datasets(cfg);
    const TrainResult r = train(cfg, data.source, data.target);
    CHECK(r.model.d.adam.step == cfg.iters);
    CHECK(r.model.g.adam.step == cfg.iters);
}

TEST_CASE("supervised reduction solves a separable two-Gaussian toy") {
    TrainConfig cfg;
    cfg.seed = 13;
    cfg.dataset.kind = "gaussian_shift";
    cfg.dataset.classes = 2;
    cfg.dataset.n_per_domain = 300;
    cfg.dataset.rotation_deg = 0.0;
    cfg.dataset.mean_radius = 3.0;
    cfg.dataset.sigma = 0.5;
    cfg.alpha = cfg.beta = cfg.gamma = 0.0;
    cfg.enable_t = cfg.enable_ent = cfg.enable_hmm = false;
    cfg.enable_adv = true;  // adversarial mixing stays on; target is an iid copy
    cfg.batch_size = 32;
    cfg.iters = 500;
    cfg.log_interval = 100;
    cfg.lr = 1e-3;
    cfg.latent_dim = 8;
    cfg.g_hidden = {16};
    cfg.dropout_keep_g = cfg.dropout_keep_c = cfg.dropout_keep_t = cfg.dropout_keep_d = 1.0;
    const DomainPair data = build_datasets(cfg);
    const TrainResult r = train(cfg, data.source, data.target);
    CHECK(r.final_source_acc >= 0.95);
}

TEST_CASE("divergence aborts with the last checkpoint intact") {
    TrainConfig cfg = small_synthetic_config(14);
    cfg.hmm_scale = "one";  // overflow the q-th powers on absurd inputs
    cfg.q = 3;

    Mat huge(64, 2);
    SeededStream s(14, "huge");
    for (auto& x : huge.data) x = s.next_uniform(-1e200, 1e200);
    std::vector<int> labels(64);
    for (int i = 0; i < 64; ++i) labels[i] = i % 3 + 1;
    const Dataset source(huge, labels, DomainTag::Source, 3);
    const Dataset target(huge, labels, DomainTag::Target, 3);

    const TrainResult r = train(cfg, source, target);
    CHECK(r.nan_abort);
    CHECK(r.stop_iter == 1);
    // the returned model is the untouched init checkpoint
    SeededStream root(cfg.seed, "train");
    (void)root.derive("valsplit");
    const ClothModel fresh = build_model(cfg, 2, 3, root.derive("init"));
    CHECK(r.model.g.params.flatten() == fresh.g.params.flatten());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    TrainConfig cfg = small_synthetic_config(15);
    cfg.iters = 10;
    const DomainPair data = build_datasets(cfg);
    const TrainResult r = train(cfg, data.source, data.target);
    const std::string path = "model_roundtrip.tmp.json";
    save_model(r.model, "deadbeef", path);
    std::string hash;
    const ClothModel back = load_model(path, &hash);
    CHECK(hash == "deadbeef");
    CHECK(back.g.params.flatten() == r.model.g.params.flatten());
    CHECK(back.c.shadow.params.flatten() == r.model.c.shadow.params.flatten());
    CHECK(back.d.adam.m.flatten() == r.model.d.adam.m.flatten());
    CHECK(back.d.adam.step == r.model.d.adam.step);
    std::remove(path.c_str());
}

TEST_CASE("compare: uniform head gives mean cost per row and sinkhorn undercuts it") {
    SeededStream s(16, "cmp");
    const int n = 24, m = 3;
    Mat cost(n, m);
    for (auto& x : cost.data) x = 0.1 + s.next_double();
    Mat uniform(n, m, 1.0 / m);
    const CompareReport rep = compare_plan_vs_oracles(uniform, CostMatrix{cost}, 0.01, 50000, 1e-9);
    double mean_cost = 0.0;
    for (double x : cost.data) mean_cost += x / (n * m);
    CHECK(rep.amortized_objective == doctest::Approx(mean_cost).epsilon(1e-12));
    CHECK(rep.ratio_amortized_vs_exact >= 1.0);
    CHECK(rep.sinkhorn_objective_at_pi <= rep.amortized_objective + 1e-6);
    CHECK(rep.exact_free_pi_objective <= rep.sinkhorn_objective_at_pi + 1e-9);
}

TEST_CASE("amortized head converges to the exact free-marginal optimum") {
    SeededStream s(17, "amort");
    const int n = 32, m = 3, p = 8;
    Mat features(n, p);
    for (auto& x : features.data) x = s.next_uniform(-1.0, 1.0);
    Mat cost(n, m);
    for (auto& x : cost.data) x = 0.05 + s.next_double();
    const auto head = cloth_test::train_amortized_head(features, cost, 64, 4000, 3e-3, 99);
    const CompareReport rep = compare_plan_vs_oracles(head.t_probs, CostMatrix{cost}, 0.01, 50000, 1e-9);
    CHECK(rep.amortized_objective <= rep.exact_free_pi_objective * 1.05);
    CHECK(rep.row_agreement >= 0.9);
}

TEST_CASE("share_ct trains a single head for C and T") {
    TrainConfig cfg = small_synthetic_config(18);
    cfg.share_ct = true;
    const DomainPair data = build_datasets(cfg);
    const TrainResult r = train(cfg, data.source, data.target);
    // the dedicated T bundle never receives updates when shared
    CHECK(r.model.t.adam.step == 0);
    CHECK(r.model.c.adam.step == cfg.iters);
    CHECK(r.final_source_acc > 0.3);
}

TEST_CASE("sinkhorn-mode training runs and logs the entropic objective") {
    TrainConfig cfg = small_synthetic_config(19);
    cfg.sinkhorn_mode = true;
    cfg.enable_t = cfg.enable_ent = cfg.enable_hmm = false;
    cfg.iters = 20;
    cfg.sinkhorn_epsilon = 0.3;
    cfg.sinkhorn_max_iter = 300;
    const DomainPair data = build_datasets(cfg);
    std::vector<TrainMetricsRow> rows;
    const TrainResult r = train(cfg, data.source, data.target, [&](const TrainMetricsRow& row) { rows.push_back(row); });
    CHECK_FALSE(r.nan_abort);
    REQUIRE(!rows.empty());
    CHECK(rows.back().loss_t > 0.0);
}

TEST_CASE("binary discriminator flag collapses D to two outputs") {
    TrainConfig cfg = small_synthetic_config(20);
    cfg.binary_discriminator = true;
    cfg.enable_t = cfg.enable_hmm = false;
    CHECK_NOTHROW(cfg.validate());
    const DomainPair data = build_datasets(cfg);
    const TrainResult r = train(cfg, data.source, data.target);
    CHECK(r.model.d.spec.output_width() == 2);

    TrainConfig bad = small_synthetic_config(21);
    bad.binary_discriminator = true;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
