#include "verify.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <sstream>

#include "engine.hpp"
#include "hmm.hpp"
#include "ot.hpp"

namespace cloth {

namespace {

struct Collector {
    VerifyReport* rep;
    void pass() { rep->checks += 1; }
    void fail(const std::string& what) {
        rep->checks += 1;
        rep->failures += 1;
        rep->log += "FAIL " + what + "\n";
    }
    void check(bool ok, const std::string& what) { ok ? pass() : fail(what); }
};

Mat random_mat(SeededStream& s, int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Mat m(rows, cols);
    for (auto& x : m.data) x = s.next_uniform(lo, hi);
    return m;
}

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

void verify_hmm(Collector& c) {
    SeededStream stream(20240811, "verify/hmm");
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const int p = 2 + static_cast<int>(stream.next_below(3));
        const int q = 1 + static_cast<int>(stream.next_below(3));
        const int nu = 2 + static_cast<int>(stream.next_below(7));
        const int nv = 2 + static_cast<int>(stream.next_below(7));
        const LatentBatch u{random_mat(stream, nu, p)};
        const LatentBatch v{random_mat(stream, nv, p)};
        const double brute = hm_bruteforce(u, v, q);
        const double kernel = hm_kernel(u, v, q, 1.0);
        const double tol = 1e-10 * std::max(1.0, std::abs(brute));
        c.check(std::abs(kernel - brute) <= tol,
                fmt("hmm identity trial=%d p=%d q=%d nu=%d nv=%d brute=%.17g kernel=%.17g", t, p, q, nu, nv,
                    brute, kernel));
    }
    // symmetry and the exact q=1 mean-difference reduction
    for (int t = 0; t < 50; ++t) {
        const int p = 2 + static_cast<int>(stream.next_below(3));
        const int n = 2 + static_cast<int>(stream.next_below(7));
        const LatentBatch u{random_mat(stream, n, p)};
        const LatentBatch v{random_mat(stream, n, p)};
        const double uv = hm_kernel(u, v, 2, 1.0);
        const double vu = hm_kernel(v, u, 2, 1.0);
        c.check(std::abs(uv - vu) <= 1e-12 * std::max(1.0, std::abs(uv)), fmt("hmm symmetry trial=%d", t));
        c.check(uv >= -1e-12, fmt("hmm nonnegativity trial=%d value=%.3g", t, uv));
        Vec mu(static_cast<size_t>(p), 0.0), mv(static_cast<size_t>(p), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) {
                mu[j] += u.values(i, j) / n;
                mv[j] += v.values(i, j) / n;
            }
        double mean_diff = 0.0;
        for (int j = 0; j < p; ++j) mean_diff += (mu[j] - mv[j]) * (mu[j] - mv[j]);
        const double k1 = hm_kernel(u, v, 1, 1.0);
        c.check(std::abs(k1 - mean_diff) <= 1e-12 * std::max(1.0, mean_diff), fmt("hmm q=1 reduction trial=%d", t));
    }
}

void verify_ot(Collector& c) {
    SeededStream stream(20240811, "verify/ot");
    // marginal feasibility on rectangular instances
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + static_cast<int>(stream.next_below(15));
        const int m = 2 + static_cast<int>(stream.next_below(15));
        const CostMatrix cost{random_mat(stream, n, m, 0.0, 1.0)};
        Marginals marg;
        marg.row.resize(static_cast<size_t>(n));
        marg.col.resize(static_cast<size_t>(m));
        double rs = 0.0, cs = 0.0;
        for (auto& x : marg.row) rs += (x = 0.1 + stream.next_double());
        for (auto& x : marg.col) cs += (x = 0.1 + stream.next_double());
        for (auto& x : marg.row) x /= rs;
        for (auto& x : marg.col) x /= cs;
        const SinkhornResult sk = sinkhorn(cost, marg, 0.1, 5000, 1e-7);
        c.check(sk.marginal_violation <= 1e-6,
                fmt("sinkhorn feasibility trial=%d n=%d m=%d violation=%.3g", t, n, m, sk.marginal_violation));
    }
    // square uniform instances against the exact assignment
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(stream.next_below(7));
        const CostMatrix cost{random_mat(stream, n, n, 0.0, 1.0)};
        const AssignmentResult hung = hungarian(cost);
        const SinkhornResult sk = sinkhorn(cost, uniform_marginals(n, n), 1e-3, 200000, 1e-9);
        const double sk_cost = transport_cost(sk.plan, cost);
        const double exact = hung.optimal_cost / n;
        c.check(std::abs(sk_cost - exact) <= 0.01 * std::max(1e-12, exact),
                fmt("sinkhorn vs assignment trial=%d n=%d sinkhorn=%.9g exact=%.9g", t, n, sk_cost, exact));
    }
}

ClothModel tiny_model(uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.latent_dim = 4;
    cfg.g_hidden = {5};
    cfg.dropout_keep_g = cfg.dropout_keep_c = cfg.dropout_keep_t = cfg.dropout_keep_d = 1.0;
    return build_model(cfg, 3, 3, SeededStream(seed, "verify/model"));
}

struct GradCase {
    const char* name;
    double err;
};

// Concatenates the chosen nets' parameters into one flat vector for the
// finite-difference checker. The pointers must refer into `model`.
template <typename Eval>
double loss_grad_error(ClothModel& model, std::vector<MlpParams*> nets, Eval eval) {
    Vec flat;
    for (auto* n : nets) {
        const Vec f = n->flatten();
        flat.insert(flat.end(), f.begin(), f.end());
    }
    GradFn fn = [&](const Vec& x) -> std::pair<double, Vec> {
        size_t pos = 0;
        for (auto* n : nets) {
            const size_t cnt = n->count();
            Vec piece(x.begin() + pos, x.begin() + pos + cnt);
            n->unflatten(piece);
            pos += cnt;
        }
        auto [value, grads] = eval(model);
        Vec g;
        for (const auto& gp : grads) {
            const Vec f = gp.flatten();
            g.insert(g.end(), f.begin(), f.end());
        }
        return {value, g};
    };
    return grad_check(fn, flat, 1e-5);
}

void verify_grad(Collector& c) {
    SeededStream stream(20240811, "verify/grad");
    const int ns = 6, nt = 7, din = 3;
    const Mat xs = random_mat(stream, ns, din);
    const Mat xt = random_mat(stream, nt, din);
    std::vector<int> ys(ns);
    for (auto& y : ys) y = 1 + static_cast<int>(stream.next_below(3));
    const double floor = 1e-12;

    std::vector<GradCase> cases;
    {
        ClothModel m = tiny_model(11);
        cases.push_back({"classifier", loss_grad_error(m, {&m.c.params, &m.g.params}, [&](ClothModel& mm) {
                             auto l = loss_classifier(mm, xs, ys, floor);
                             return std::make_pair(l.value, std::vector<MlpParams>{l.c_grads, l.g_grads});
                         })});
    }
    {
        ClothModel m = tiny_model(12);
        cases.push_back({"discriminator", loss_grad_error(m, {&m.d.params}, [&](ClothModel& mm) {
                             auto l = loss_discriminator(mm, xs, ys, xt, floor);
                             return std::make_pair(l.value, std::vector<MlpParams>{l.d_grads});
                         })});
    }
    {
        ClothModel m = tiny_model(13);
        cases.push_back({"transport", loss_grad_error(m, {&m.t.params, &m.g.params}, [&](ClothModel& mm) {
                             auto l = loss_transport(mm, xs, ys, xt, floor);
                             return std::make_pair(l.value, std::vector<MlpParams>{l.t_grads, l.g_grads});
                         })});
    }
    {
        ClothModel m = tiny_model(14);
        cases.push_back({"entropy", loss_grad_error(m, {&m.t.params, &m.g.params}, [&](ClothModel& mm) {
                             auto l = loss_entropy(mm, xt);
                             return std::make_pair(l.value, std::vector<MlpParams>{l.t_grads, l.g_grads});
                         })});
    }
    {
        ClothModel m = tiny_model(15);
        cases.push_back({"adversarial", loss_grad_error(m, {&m.g.params}, [&](ClothModel& mm) {
                             auto l = loss_generator_adversarial(mm, xs, xt, floor);
                             return std::make_pair(l.value, std::vector<MlpParams>{l.g_grads});
                         })});
    }
    for (int q = 1; q <= 3; ++q) {
        ClothModel m = tiny_model(16 + static_cast<uint64_t>(q));
        const double err = loss_grad_error(m, {&m.t.params, &m.g.params}, [&](ClothModel& mm) {
            auto l = loss_hmm(mm, xs, ys, xt, q, 0.25);
            return std::make_pair(l.value, std::vector<MlpParams>{l.t_grads, l.g_grads});
        });
        cases.push_back({q == 1 ? "hmm q=1" : (q == 2 ? "hmm q=2" : "hmm q=3"), err});
    }
    for (const auto& gc : cases)
        c.check(gc.err <= 1e-4, fmt("grad %s relative error %.3g exceeds 1e-4", gc.name, gc.err));
}

void verify_entropy(Collector& c) {
    SeededStream stream(20240811, "verify/entropy");
    for (int t = 0; t < 1000; ++t) {
        const int m = 2 + static_cast<int>(stream.next_below(5));
        const int n = 2 + static_cast<int>(stream.next_below(15));
        Mat probs(n, m);
        for (int i = 0; i < n; ++i) {
            Vec logits(static_cast<size_t>(m));
            for (auto& x : logits) x = stream.next_uniform(-4.0, 4.0);
            const Vec p = softmax(logits);
            std::copy(p.begin(), p.end(), probs.row_ptr(i));
        }
        const double v = entropy_loss_on_outputs(probs).value;
        c.check(v >= -std::log(static_cast<double>(m)) - 1e-9 && v <= 1e-9,
                fmt("entropy bound trial=%d M=%d n=%d value=%.12g", t, m, n, v));
    }
    for (int t = 0; t < 20; ++t) {
        const int m = 2 + static_cast<int>(stream.next_below(5));
        const int n = 2 + static_cast<int>(stream.next_below(15));
        Vec logits(static_cast<size_t>(m));
        for (auto& x : logits) x = stream.next_uniform(-4.0, 4.0);
        const Vec p = softmax(logits);
        Mat probs(n, m);
        for (int i = 0; i < n; ++i) std::copy(p.begin(), p.end(), probs.row_ptr(i));
        const double v = entropy_loss_on_outputs(probs).value;
        c.check(std::abs(v) <= 1e-9, fmt("entropy identical-rows trial=%d value=%.12g", t, v));
    }
}

}  // namespace

VerifyReport run_verify(const std::string& suite) {
    VerifyReport rep;
    Collector c{&rep};
    const bool all = suite == "all";
    if (!(all || suite == "hmm" || suite == "ot" || suite == "grad" || suite == "entropy")) {
        rep.failures = 1;
        rep.log = "unknown suite '" + suite + "' (expected hmm|ot|grad|entropy|all)\n";
        return rep;
    }
    if (all || suite == "hmm") verify_hmm(c);
    if (all || suite == "ot") verify_ot(c);
    if (all || suite == "grad") verify_grad(c);
    if (all || suite == "entropy") verify_entropy(c);
    std::ostringstream tail;
    tail << rep.checks << " checks, " << rep.failures << " failures\n";
    rep.log += tail.str();
    return rep;
}

}  // namespace cloth
