#include "ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cloth {

void CostMatrix::validate() const {
    if (values.rows <= 0 || values.cols <= 0) throw DimensionError("CostMatrix: empty");
    for (double c : values.data) {
        if (!std::isfinite(c)) throw NumericError("CostMatrix: non-finite entry");
        if (c < 0.0) throw DomainError("CostMatrix: negative entry");
    }
}

void Marginals::validate(double tol) const {
    if (row.empty() || col.empty()) throw DimensionError("Marginals: empty");
    double rs = 0.0, cs = 0.0;
    for (double x : row) {
        if (x < 0.0) throw DomainError("Marginals: negative row mass");
        rs += x;
    }
    for (double x : col) {
        if (x < 0.0) throw DomainError("Marginals: negative col mass");
        cs += x;
    }
    if (std::abs(rs - 1.0) > tol || std::abs(cs - 1.0) > tol)
        throw DomainError("Marginals: masses must each sum to 1");
}

Marginals uniform_marginals(int n, int m) {
    Marginals mg;
    mg.row.assign(static_cast<size_t>(n), 1.0 / n);
    mg.col.assign(static_cast<size_t>(m), 1.0 / m);
    return mg;
}

double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
    if (!plan.values.same_shape(cost.values)) throw DimensionError("transport_cost: shape mismatch");
    double total = 0.0;
    for (size_t k = 0; k < plan.values.data.size(); ++k) total += plan.values.data[k] * cost.values.data[k];
    return total;
}

SinkhornResult sinkhorn(const CostMatrix& cost, const Marginals& marg, double epsilon, int max_iter,
                        double tol) {
    if (epsilon <= 0.0) throw ParameterError("sinkhorn: epsilon must be positive");
    cost.validate();
    marg.validate();
    const int n = cost.values.rows;
    const int m = cost.values.cols;
    if (static_cast<int>(marg.row.size()) != n || static_cast<int>(marg.col.size()) != m)
        throw DimensionError("sinkhorn: marginal lengths do not match cost shape");

    const double neg_inf = -std::numeric_limits<double>::infinity();
    Vec log_mu(static_cast<size_t>(n)), log_nu(static_cast<size_t>(m));
    for (int i = 0; i < n; ++i) log_mu[i] = marg.row[i] > 0.0 ? std::log(marg.row[i]) : neg_inf;
    for (int j = 0; j < m; ++j) log_nu[j] = marg.col[j] > 0.0 ? std::log(marg.col[j]) : neg_inf;

    Vec f(static_cast<size_t>(n), 0.0), g(static_cast<size_t>(m), 0.0);
    Vec scratch(static_cast<size_t>(std::max(n, m)));

    auto build_plan = [&]() {
        Mat plan(n, m);
        for (int i = 0; i < n; ++i) {
            double* pi = plan.row_ptr(i);
            const double* ci = cost.values.row_ptr(i);
            for (int j = 0; j < m; ++j) {
                const double e = (f[i] + g[j] - ci[j]) / epsilon;
                pi[j] = std::isfinite(e) ? std::exp(e) : 0.0;
            }
        }
        return plan;
    };
    auto violation_of = [&](const Mat& plan) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            double rs = 0.0;
            const double* pi = plan.row_ptr(i);
            for (int j = 0; j < m; ++j) rs += pi[j];
            worst = std::max(worst, std::abs(rs - marg.row[i]));
        }
        for (int j = 0; j < m; ++j) {
            double cs = 0.0;
            for (int i = 0; i < n; ++i) cs += plan(i, j);
            worst = std::max(worst, std::abs(cs - marg.col[j]));
        }
        return worst;
    };

    SinkhornResult result;
    int it = 0;
    for (; it < max_iter; ++it) {
        for (int i = 0; i < n; ++i) {
            if (log_mu[i] == neg_inf) {
                f[i] = neg_inf;
                continue;
            }
            scratch.resize(static_cast<size_t>(m));
            const double* ci = cost.values.row_ptr(i);
            for (int j = 0; j < m; ++j) scratch[j] = (g[j] - ci[j]) / epsilon;
            f[i] = epsilon * (log_mu[i] - logsumexp(scratch));
        }
        for (int j = 0; j < m; ++j) {
            if (log_nu[j] == neg_inf) {
                g[j] = neg_inf;
                continue;
            }
            scratch.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) scratch[i] = (f[i] - cost.values(i, j)) / epsilon;
            g[j] = epsilon * (log_nu[j] - logsumexp(scratch));
        }
        if ((it + 1) % 5 == 0 || it + 1 == max_iter) {
            Mat plan = build_plan();
            const double v = violation_of(plan);
            if (!all_finite(plan)) throw NumericError("sinkhorn: non-finite plan");
            if (v < tol) {
                result.plan.values = std::move(plan);
                result.f = std::move(f);
                result.g = std::move(g);
                result.iterations = it + 1;
                result.marginal_violation = v;
                result.converged = true;
                return result;
            }
        }
    }
    Mat plan = build_plan();
    if (!all_finite(plan)) throw NumericError("sinkhorn: non-finite plan");
    result.marginal_violation = violation_of(plan);
    result.plan.values = std::move(plan);
    result.f = std::move(f);
    result.g = std::move(g);
    result.iterations = it;
    result.converged = result.marginal_violation < tol;
    return result;
}

double sinkhorn_dual_objective(const Vec& f, const Vec& g, const CostMatrix& cost, const Marginals& marg,
                               double epsilon) {
    double d = 0.0;
    for (size_t i = 0; i < f.size(); ++i)
        if (marg.row[i] > 0.0) d += f[i] * marg.row[i];
    for (size_t j = 0; j < g.size(); ++j)
        if (marg.col[j] > 0.0) d += g[j] * marg.col[j];
    for (int i = 0; i < cost.values.rows; ++i)
        for (int j = 0; j < cost.values.cols; ++j) {
            const double e = (f[i] + g[j] - cost.values(i, j)) / epsilon;
            if (std::isfinite(e)) d -= epsilon * std::exp(e);
        }
    return d;
}

double sinkhorn_objective(const TransportPlan& plan, const CostMatrix& cost, double epsilon) {
    double obj = 0.0;
    for (size_t k = 0; k < plan.values.data.size(); ++k) {
        const double a = plan.values.data[k];
        obj += a * cost.values.data[k];
        if (a > 0.0) obj += epsilon * a * std::log(a);
    }
    return obj;
}

RowArgminResult row_argmin_plan(const CostMatrix& cost, double row_mass) {
    cost.validate();
    const int n = cost.values.rows;
    const int m = cost.values.cols;
    RowArgminResult r;
    r.plan.values = Mat(n, m);
    r.induced_pi.assign(static_cast<size_t>(m), 0.0);
    r.objective = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* ci = cost.values.row_ptr(i);
        int best = 0;
        for (int j = 1; j < m; ++j)
            if (ci[j] < ci[best]) best = j;  // ties keep the lowest index
        r.plan.values(i, best) = row_mass;
        r.induced_pi[best] += row_mass;
        r.objective += row_mass * ci[best];
    }
    return r;
}

AssignmentResult hungarian(const CostMatrix& cost) {
    cost.validate();
    if (cost.values.rows != cost.values.cols) throw DimensionError("hungarian: matrix must be square");
    const int n = cost.values.rows;
    const double inf = std::numeric_limits<double>::infinity();

    // Jonker-Volgenant shortest augmenting path with 1-based potentials.
    Vec u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        Vec minv(static_cast<size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.values(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    AssignmentResult r;
    r.permutation.assign(static_cast<size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[j]) r.permutation[p[j] - 1] = j - 1;
    r.optimal_cost = 0.0;
    for (int i = 0; i < n; ++i) r.optimal_cost += cost.values(i, r.permutation[i]);
    return r;
}

}  // namespace cloth
