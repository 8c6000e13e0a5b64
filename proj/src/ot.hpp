#pragma once

#include <vector>

#include "numerics.hpp"

namespace cloth {

// N x M matrix of matching costs, entries finite and nonnegative.
struct CostMatrix {
    Mat values;
    void validate() const;
};

struct Marginals {
    Vec row;  // length N, sums to 1
    Vec col;  // length M, sums to 1
    void validate(double tol = 1e-9) const;
};

Marginals uniform_marginals(int n, int m);

struct TransportPlan {
    Mat values;  // N x M, nonnegative
};

double transport_cost(const TransportPlan& plan, const CostMatrix& cost);

struct SinkhornResult {
    TransportPlan plan;
    Vec f, g;  // dual potentials at exit
    int iterations = 0;
    double marginal_violation = 0.0;  // max abs row/col sum deviation at exit
    bool converged = false;
};

// Entropic OT via log-domain Sinkhorn (log-sum-exp scalings); stable down to
// epsilon ~1e-3. Stops when the max marginal violation drops below tol or
// max_iter is reached; the violation at exit is reported either way.
SinkhornResult sinkhorn(const CostMatrix& cost, const Marginals& marg, double epsilon,
                        int max_iter = 2000, double tol = 1e-6);

// Entropic objective sum(a*c) - eps*H(A) with H(A) = -sum a log a.
double sinkhorn_objective(const TransportPlan& plan, const CostMatrix& cost, double epsilon);

// Dual of the entropic problem: <f,mu> + <g,nu> - eps * sum exp((f+g-c)/eps).
// Each Sinkhorn half-update maximizes this exactly in one block, so it
// ascends monotonically along the iteration.
double sinkhorn_dual_objective(const Vec& f, const Vec& g, const CostMatrix& cost, const Marginals& marg,
                               double epsilon);

struct RowArgminResult {
    TransportPlan plan;
    Vec induced_pi;    // column sums of the plan
    double objective;  // sum_i row_mass * min_m c_im
};

// Exact optimum of the free-column-marginal problem: each row sends its full
// mass to its cheapest column (ties break to the lowest column index).
RowArgminResult row_argmin_plan(const CostMatrix& cost, double row_mass);

struct AssignmentResult {
    std::vector<int> permutation;  // permutation[i] = column assigned to row i
    double optimal_cost = 0.0;
};

// Exact linear assignment (Jonker-Volgenant shortest augmenting path).
AssignmentResult hungarian(const CostMatrix& cost);

}  // namespace cloth
