#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "csim/cliques.hpp"

namespace csim {

struct BarrierParams {
  double initial_weight = 1.0;
  double decay = 0.2;
  double floor = 1e-6;
  double inner_tolerance = 1e-7;
  int max_inner_iters = 200;

  void validate() const;
};

// Parameters of the batch selection program
//
//   min_X  tr(X S' X^T) - tr(X diag(S') X^T)
//          - lambda1 * sum_b ||x_b C||_p^p - lambda2 * ||1 X C||_p^p
//   s.t.   X in [0,1]^{B x K},  X 1_K = r 1_B
//
// relaxed by maximizing lambda3 ||X - 0.5||_F^2 to pull the solution toward
// binary points. t^p is smoothed as (t + eps_smooth)^p - eps_smooth^p on the
// nonnegative coverage entries so the gradient stays bounded at zero. The
// smoothing width matters more than it looks: with p = 1/16 every stationary
// point of the relaxed program leaves a residual mass of roughly
// (lambda1 c / 16)^{16/15} ~ 0.05 in each coverage column, and a tiny eps
// credits that residual with most of the column's worth (0.05^{1/16} is about
// 0.83), washing out the coverage term across candidate selections. eps on
// the order of the residual keeps the term discriminative.
struct BatchOptParams {
  int batch_count = 100;       // B
  int cliques_per_batch = 20;  // r
  double p_norm = 1.0 / 16.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double eps_smooth = 1e-2;
  int cccp_max_iters = 20;
  double cccp_tol = 1e-7;
  BarrierParams barrier;

  void validate(int clique_count) const;
};

// Rows are batches, columns are cliques. Continuous iterates live in
// [0,1]^{B x K} with row sums r; rounded assignments are binary with exactly
// r ones per row.
struct BatchAssignment {
  Eigen::MatrixXd x;
  bool rounded = false;

  int batch_count() const { return static_cast<int>(x.rows()); }
  int clique_count() const { return static_cast<int>(x.cols()); }
  void validate(int cliques_per_batch) const;
};

struct SolveReport {
  // Full DC objective u(X) - v(X) after every outer iteration, starting with
  // the initial point. Nonincreasing up to floating-point noise.
  std::vector<double> objective_trace;
  // Inner (barrier) iterations spent per outer iteration.
  std::vector<int> inner_iterations;
  double final_objective = 0.0;
  // objective(rounded) - objective(continuous), both under the unrelaxed
  // program objective.
  double rounding_gap = 0.0;
};

// Unrelaxed program objective at X (continuous or binary).
double objective(const BatchAssignment& x, const Eigen::MatrixXd& clique_sim,
                 const CliqueAssignment& cl, const BatchOptParams& params);

// Full DC objective u(X) - v(X) = objective(X) - lambda3 ||X - 0.5||_F^2.
double dc_objective(const BatchAssignment& x, const Eigen::MatrixXd& clique_sim,
                    const CliqueAssignment& cl, const BatchOptParams& params);

// Gradient of the concave-side function
//   v(X) = tr(X diag(S') X^T) + lambda3 ||X - 0.5||_F^2,
// namely 2 X .* (1 diag(S')^T) + 2 lambda3 (X - 0.5). With lambda3 = 1 this
// is 2 X .* (1 diag(S')^T) + 2 X - 1.
Eigen::MatrixXd grad_v(const BatchAssignment& x,
                       const Eigen::MatrixXd& clique_sim,
                       const BatchOptParams& params);

// Feasible interior starting point: every entry r/K plus a seeded +-1%
// jitter, rows rescaled back to sum r.
BatchAssignment initial_assignment(int batch_count, int clique_count,
                                   int cliques_per_batch, uint64_t seed);

// One convexified subproblem
//   argmin_{X feasible} u(X) - <X, grad_v(x_t)>
// solved with a primal log-barrier method: the box constraints become
// -mu (log x + log(1 - x)) barrier terms, the row-sum equality is handled by
// projecting gradients onto the sum-preserving subspace, and each barrier
// stage runs projected gradient descent with Armijo backtracking while mu
// decays geometrically. Returns a point whose subproblem objective is never
// above the one at x_t. inner_iters, when given, accumulates the number of
// descent steps taken.
BatchAssignment solve_convex_subproblem(const Eigen::MatrixXd& clique_sim,
                                        const CliqueAssignment& cl,
                                        const BatchOptParams& params,
                                        const BatchAssignment& x_t,
                                        int* inner_iters = nullptr);

// Outer CCCP loop: linearize v at the current iterate, solve the convex
// subproblem, repeat until the DC objective stalls (|delta| < cccp_tol) or
// cccp_max_iters is hit. Requires S' PSD up to -1e-9 and lambda3 >= 0.
std::pair<BatchAssignment, SolveReport> cccp_solve(
    const Eigen::MatrixXd& clique_sim, const CliqueAssignment& cl,
    const BatchOptParams& params, const BatchAssignment& init);
std::pair<BatchAssignment, SolveReport> cccp_solve(
    const Eigen::MatrixXd& clique_sim, const CliqueAssignment& cl,
    const BatchOptParams& params, uint64_t seed);

// Deterministic rounding: per row the r largest entries (ties broken toward
// the lower clique index) become 1.
BatchAssignment round_batches(const BatchAssignment& x,
                              const BatchOptParams& params);

}  // namespace csim
