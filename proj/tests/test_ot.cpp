#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ot.hpp"

using namespace cloth;

namespace {

Mat mat(int r, int c, std::initializer_list<double> vals) {
    Mat m(r, c);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

CostMatrix random_cost(SeededStream& s, int n, int m) {
    Mat c(n, m);
    for (auto& x : c.data) x = s.next_double();
    return CostMatrix{c};
}

}  // namespace

TEST_CASE("transport_cost") {
    const TransportPlan plan{mat(2, 2, {0.5, 0.0, 0.0, 0.5})};
    CHECK(transport_cost(plan, CostMatrix{mat(2, 2, {0.0, 0.0, 0.0, 0.0})}) == doctest::Approx(0.0));
    CHECK(transport_cost(plan, CostMatrix{mat(2, 2, {0.0, 1.0, 1.0, 0.0})}) == doctest::Approx(0.0));
    CHECK(transport_cost(TransportPlan{mat(1, 1, {1.0})}, CostMatrix{mat(1, 1, {3.25})}) ==
          doctest::Approx(3.25));
    CHECK_THROWS_AS(transport_cost(plan, CostMatrix{mat(1, 2, {0.0, 1.0})}), DimensionError);
}

TEST_CASE("sinkhorn trivial instances") {
    const SinkhornResult one = sinkhorn(CostMatrix{mat(1, 1, {2.0})}, uniform_marginals(1, 1), 0.5);
    CHECK(one.plan.values(0, 0) == doctest::Approx(1.0).epsilon(1e-9));

    // constant cost, uniform marginals: the max-entropy plan is flat
    const SinkhornResult flat =
        sinkhorn(CostMatrix{mat(2, 2, {3.0, 3.0, 3.0, 3.0})}, uniform_marginals(2, 2), 0.1);
    for (double a : flat.plan.values.data) CHECK(a == doctest::Approx(0.25).epsilon(1e-9));

    // strong diagonal structure at small epsilon
    const SinkhornResult diag =
        sinkhorn(CostMatrix{mat(2, 2, {0.0, 1.0, 1.0, 0.0})}, uniform_marginals(2, 2), 0.01, 20000, 1e-9);
    CHECK(diag.plan.values(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(diag.plan.values(1, 1) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(diag.plan.values(0, 1) < 1e-3);

    CHECK_THROWS_AS(sinkhorn(CostMatrix{mat(1, 1, {1.0})}, uniform_marginals(1, 1), 0.0), ParameterError);
}

TEST_CASE("sinkhorn reports honest marginal violations") {
    SeededStream s(100, "ot");
    for (int t = 0; t < 30; ++t) {
        const int n = 2 + static_cast<int>(s.next_below(15));
        const int m = 2 + static_cast<int>(s.next_below(15));
        const CostMatrix cost = random_cost(s, n, m);
        Marginals mg;
        mg.row.resize(n);
        mg.col.resize(m);
        double rs = 0.0, cs = 0.0;
        for (auto& x : mg.row) rs += (x = 0.05 + s.next_double());
        for (auto& x : mg.col) cs += (x = 0.05 + s.next_double());
        for (auto& x : mg.row) x /= rs;
        for (auto& x : mg.col) x /= cs;
        const SinkhornResult r = sinkhorn(cost, mg, 0.05, 5000, 1e-7);
        CHECK(r.marginal_violation <= 1e-6);
        // recompute the violation from the plan itself
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            double rsum = 0.0;
            for (int j = 0; j < m; ++j) rsum += r.plan.values(i, j);
            worst = std::max(worst, std::abs(rsum - mg.row[i]));
        }
        CHECK(worst <= r.marginal_violation + 1e-12);
    }
}

TEST_CASE("sinkhorn objective improves monotonically (dual ascent) and converges") {
    // The scalings are exact block maximizations of the dual, so the dual
    // ascends at every iteration; the primal entropic objective of the
    // iterates meets it at the optimum. (The primal value alone is not
    // monotone: the first row scaling minimizes KL over the row polytope
    // only, which undershoots the constrained optimum.)
    SeededStream s(101, "mono");
    for (int t = 0; t < 10; ++t) {
        const int n = 3 + static_cast<int>(s.next_below(6));
        const CostMatrix cost = random_cost(s, n, n);
        const Marginals mg = uniform_marginals(n, n);
        const double eps = t % 2 == 0 ? 0.05 : 0.01;
        double prev = -std::numeric_limits<double>::infinity();
        for (int iters = 1; iters <= 40; ++iters) {
            const SinkhornResult r = sinkhorn(cost, mg, eps, iters, 0.0);  // tol 0: run exactly iters
            const double dual = sinkhorn_dual_objective(r.f, r.g, cost, mg, eps);
            CHECK(dual >= prev - 1e-9);
            prev = dual;
        }
        // at convergence the primal meets the dual up to the eps * mass
        // offset between the two entropy conventions
        const SinkhornResult conv = sinkhorn(cost, mg, eps, 100000, 1e-12);
        const double primal = sinkhorn_objective(conv.plan, cost, eps);
        const double dual = sinkhorn_dual_objective(conv.f, conv.g, cost, mg, eps);
        double mass = 0.0;
        for (double a : conv.plan.values.data) mass += a;
        CHECK(primal - dual == doctest::Approx(eps * mass).epsilon(1e-7));
    }
}

TEST_CASE("row_argmin_plan") {
    const RowArgminResult r = row_argmin_plan(CostMatrix{mat(2, 2, {0.2, 0.9, 0.7, 0.1})}, 0.5);
    CHECK(r.plan.values(0, 0) == doctest::Approx(0.5));
    CHECK(r.plan.values(1, 1) == doctest::Approx(0.5));
    CHECK(r.induced_pi[0] == doctest::Approx(0.5));
    CHECK(r.induced_pi[1] == doctest::Approx(0.5));
    CHECK(r.objective == doctest::Approx(0.5 * 0.2 + 0.5 * 0.1));

    // ties break to the lowest column index
    const RowArgminResult tie = row_argmin_plan(CostMatrix{mat(1, 3, {0.4, 0.4, 0.4})}, 1.0);
    CHECK(tie.plan.values(0, 0) == doctest::Approx(1.0));
    CHECK(tie.plan.values(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("row_argmin objective lower-bounds sinkhorn over a grid of column masses") {
    SeededStream s(102, "grid");
    const int n = 6, m = 3;
    const CostMatrix cost = random_cost(s, n, m);
    const RowArgminResult free_opt = row_argmin_plan(cost, 1.0 / n);
    for (int a = 1; a <= 4; ++a)
        for (int b = 1; a + b <= 5; ++b) {
            Marginals mg;
            mg.row.assign(n, 1.0 / n);
            mg.col = {a / 6.0, b / 6.0, (6.0 - a - b) / 6.0};
            const SinkhornResult r = sinkhorn(cost, mg, 0.02, 20000, 1e-9);
            CHECK(free_opt.objective <= transport_cost(r.plan, cost) + 1e-6);
        }
}

TEST_CASE("cost scaling invariance") {
    SeededStream s(103, "scale");
    const CostMatrix cost = random_cost(s, 5, 4);
    const double lambda = 3.7;
    Mat scaled = cost.values;
    for (auto& x : scaled.data) x *= lambda;
    const RowArgminResult a = row_argmin_plan(cost, 0.2);
    const RowArgminResult b = row_argmin_plan(CostMatrix{scaled}, 0.2);
    CHECK(b.objective == doctest::Approx(lambda * a.objective).epsilon(1e-12));
    CHECK(a.plan.values.data == b.plan.values.data);  // selected columns unchanged
    const TransportPlan p = a.plan;
    CHECK(transport_cost(p, CostMatrix{scaled}) ==
          doctest::Approx(lambda * transport_cost(p, cost)).epsilon(1e-12));
}

TEST_CASE("hungarian exact cases") {
    const AssignmentResult id2 = hungarian(CostMatrix{mat(2, 2, {0.0, 1.0, 1.0, 0.0})});
    CHECK(id2.permutation == std::vector<int>{0, 1});
    CHECK(id2.optimal_cost == doctest::Approx(0.0));

    Mat anti(5, 5, 1.0);
    for (int i = 0; i < 5; ++i) anti(i, i) = 0.0;
    const AssignmentResult id5 = hungarian(CostMatrix{anti});
    for (int i = 0; i < 5; ++i) CHECK(id5.permutation[i] == i);
    CHECK(id5.optimal_cost == doctest::Approx(0.0));

    CHECK_THROWS_AS(hungarian(CostMatrix{mat(2, 3, {0, 0, 0, 0, 0, 0})}), DimensionError);
}

TEST_CASE("hungarian matches permutation enumeration") {
    SeededStream s(104, "hung");
    for (int t = 0; t < 40; ++t) {
        const int n = 2 + static_cast<int>(s.next_below(4));  // up to 5x5: 120 permutations
        const CostMatrix cost = random_cost(s, n, n);
        const AssignmentResult got = hungarian(cost);
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        double best = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (int i = 0; i < n; ++i) c += cost.values(i, perm[i]);
            best = std::min(best, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got.optimal_cost == doctest::Approx(best).epsilon(1e-10));
    }
}

TEST_CASE("sinkhorn approaches the assignment optimum at small epsilon") {
    SeededStream s(105, "sva");
    for (int t = 0; t < 10; ++t) {
        const int n = 2 + static_cast<int>(s.next_below(7));
        const CostMatrix cost = random_cost(s, n, n);
        const AssignmentResult hung = hungarian(cost);
        const SinkhornResult sk = sinkhorn(cost, uniform_marginals(n, n), 1e-3, 200000, 1e-9);
        const double sk_cost = transport_cost(sk.plan, cost);
        CHECK(std::abs(sk_cost - hung.optimal_cost / n) <= 0.01 * std::max(1e-12, hung.optimal_cost / n));
    }
}
