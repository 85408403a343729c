#include "csim/batchopt.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "csim/common.hpp"

namespace csim {
namespace {

// (t + eps)^p - eps^p and its derivative. p = 1/2^m (the default p = 1/16
// included) is evaluated with repeated square roots, which is considerably
// faster than std::pow in the solver's hot loop.
struct SmoothPNorm {
  double p;
  double eps;
  double eps_p;
  int sqrt_steps;  // > 0 when p == 1/2^sqrt_steps

  SmoothPNorm(double p_in, double eps_in) : p(p_in), eps(eps_in) {
    sqrt_steps = 0;
    double q = p;
    for (int m = 1; m <= 6; ++m) {
      q *= 2.0;
      if (q == 1.0) {
        sqrt_steps = m;
        break;
      }
    }
    eps_p = pow_p(eps + 0.0);
  }

  double pow_p(double t) const {
    if (sqrt_steps > 0) {
      double r = t;
      for (int m = 0; m < sqrt_steps; ++m) {
        r = std::sqrt(r);
      }
      return r;
    }
    return std::pow(t, p);
  }

  double value(double t) const { return pow_p(t + eps) - eps_p; }

  // d/dt (t + eps)^p = p (t + eps)^(p-1), reusing the ^p evaluation.
  double deriv(double t) const {
    const double base = t + eps;
    return p * pow_p(base) / base;
  }
};

// The coverage matrix C enters the objective only through ||x_b C||_p^p and
// ||1 X C||_p^p, so identical sample columns can be folded into one column
// with a multiplicity weight and all-zero columns dropped. This is exact and
// shrinks the per-evaluation work substantially on clique data where most
// samples belong to a single clique.
struct Problem {
  Eigen::MatrixXd sp;       // K x K
  Eigen::VectorXd sp_diag;  // K
  Eigen::MatrixXd cov;      // K x U
  Eigen::VectorXd weight;   // U
  BatchOptParams params;
  SmoothPNorm psi;

  Problem(const Eigen::MatrixXd& clique_sim, const CliqueAssignment& cl,
          const BatchOptParams& p)
      : sp(clique_sim),
        sp_diag(clique_sim.diagonal()),
        params(p),
        psi(p.p_norm, p.eps_smooth) {
    const Eigen::MatrixXd c = cl.assignment_matrix();
    std::map<std::vector<double>, double> columns;
    for (Eigen::Index n = 0; n < c.cols(); ++n) {
      if (c.col(n).isZero(0.0)) {
        continue;  // uncovered sample: constant zero contribution
      }
      std::vector<double> key(c.col(n).data(), c.col(n).data() + c.rows());
      columns[std::move(key)] += 1.0;
    }
    cov.resize(c.rows(), static_cast<Eigen::Index>(columns.size()));
    weight.resize(static_cast<Eigen::Index>(columns.size()));
    Eigen::Index u = 0;
    for (const auto& [col, w] : columns) {
      for (Eigen::Index k = 0; k < c.rows(); ++k) {
        cov(k, u) = col[static_cast<std::size_t>(k)];
      }
      weight[u] = w;
      ++u;
    }
  }

  // Trace terms and the two coverage bonuses at X.
  double trace_term(const Eigen::MatrixXd& x) const {
    return (x.array() * (x * sp).array()).sum();
  }

  double diag_term(const Eigen::MatrixXd& x) const {
    return (x.array().square().rowwise() * sp_diag.transpose().array()).sum();
  }

  double coverage_terms(const Eigen::MatrixXd& x) const {
    if (cov.cols() == 0 || (params.lambda1 == 0.0 && params.lambda2 == 0.0)) {
      return 0.0;
    }
    const Eigen::MatrixXd y = x * cov;  // B x U, nonnegative
    double within = 0.0;
    if (params.lambda1 != 0.0) {
      for (Eigen::Index b = 0; b < y.rows(); ++b) {
        for (Eigen::Index u = 0; u < y.cols(); ++u) {
          within += weight[u] * psi.value(y(b, u));
        }
      }
    }
    double across = 0.0;
    if (params.lambda2 != 0.0) {
      const Eigen::RowVectorXd z = y.colwise().sum();
      for (Eigen::Index u = 0; u < z.size(); ++u) {
        across += weight[u] * psi.value(z[u]);
      }
    }
    return params.lambda1 * within + params.lambda2 * across;
  }

  // u(X) = tr(X S' X^T) - lambda1 sum_b ||x_b C||_p^p - lambda2 ||1XC||_p^p.
  double convex_part(const Eigen::MatrixXd& x) const {
    return trace_term(x) - coverage_terms(x);
  }

  Eigen::MatrixXd convex_part_grad(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd g = 2.0 * (x * sp);
    if (cov.cols() == 0) {
      return g;
    }
    const Eigen::MatrixXd y = x * cov;
    if (params.lambda1 != 0.0) {
      Eigen::MatrixXd dpsi(y.rows(), y.cols());
      for (Eigen::Index b = 0; b < y.rows(); ++b) {
        for (Eigen::Index u = 0; u < y.cols(); ++u) {
          dpsi(b, u) = weight[u] * psi.deriv(y(b, u));
        }
      }
      g.noalias() -= params.lambda1 * (dpsi * cov.transpose());
    }
    if (params.lambda2 != 0.0) {
      const Eigen::RowVectorXd z = y.colwise().sum();
      Eigen::RowVectorXd dz(z.size());
      for (Eigen::Index u = 0; u < z.size(); ++u) {
        dz[u] = weight[u] * psi.deriv(z[u]);
      }
      const Eigen::RowVectorXd row = params.lambda2 * (dz * cov.transpose());
      g.rowwise() -= row;  // the across-batch term is identical per row
    }
    return g;
  }

  double program_objective(const Eigen::MatrixXd& x) const {
    return convex_part(x) - diag_term(x);
  }

  double dc(const Eigen::MatrixXd& x) const {
    return program_objective(x) -
           params.lambda3 * (x.array() - 0.5).square().sum();
  }
};

// Project per-row onto the sum-preserving subspace {d : sum_k d_k = 0}.
void project_row_sums(Eigen::MatrixXd& g) {
  const Eigen::VectorXd row_means = g.rowwise().mean();
  g.colwise() -= row_means;
}

// Restore exact row sums after floating-point drift; the additive correction
// is uniform so strict interiority is preserved for tiny drift.
void renormalize_rows(Eigen::MatrixXd& x, double r) {
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double drift = r - x.row(b).sum();
    if (std::abs(drift) > 1e-13 * std::max(1.0, r)) {
      x.row(b).array() += drift / static_cast<double>(x.cols());
    }
  }
}

double barrier_value(const Eigen::MatrixXd& x, double mu) {
  return -mu * ((x.array().log()).sum() + ((1.0 - x.array()).log()).sum());
}

// Largest step along d keeping x strictly inside (0, 1).
double max_feasible_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d) {
  double t = std::numeric_limits<double>::infinity();
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double dir = d(b, k);
      if (dir < 0.0) {
        t = std::min(t, -x(b, k) / dir);
      } else if (dir > 0.0) {
        t = std::min(t, (1.0 - x(b, k)) / dir);
      }
    }
  }
  return t;
}

}  // namespace

void BarrierParams::validate() const {
  if (!(initial_weight > 0.0)) {
    throw std::invalid_argument("barrier initial_weight must be positive");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("barrier decay must lie in (0, 1)");
  }
  if (!(floor > 0.0 && floor <= initial_weight)) {
    throw std::invalid_argument("barrier floor must lie in (0, initial_weight]");
  }
  if (!(inner_tolerance > 0.0)) {
    throw std::invalid_argument("barrier inner_tolerance must be positive");
  }
  if (max_inner_iters < 1) {
    throw std::invalid_argument("barrier max_inner_iters must be >= 1");
  }
}

void BatchOptParams::validate(int clique_count) const {
  if (batch_count < 1) {
    throw std::invalid_argument("batch_count must be >= 1");
  }
  if (cliques_per_batch < 1) {
    throw std::invalid_argument("cliques_per_batch must be >= 1");
  }
  if (cliques_per_batch > clique_count) {
    throw std::invalid_argument(
        "cliques_per_batch (r = " + std::to_string(cliques_per_batch) +
        ") exceeds the clique count K = " + std::to_string(clique_count));
  }
  if (!(p_norm > 0.0 && p_norm < 1.0)) {
    throw std::invalid_argument("p_norm must lie in (0, 1)");
  }
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw std::invalid_argument("lambda weights must be >= 0");
  }
  if (!(eps_smooth > 0.0)) {
    throw std::invalid_argument("eps_smooth must be positive");
  }
  if (cccp_max_iters < 1) {
    throw std::invalid_argument("cccp_max_iters must be >= 1");
  }
  if (!(cccp_tol > 0.0)) {
    throw std::invalid_argument("cccp_tol must be positive");
  }
  barrier.validate();
}

void BatchAssignment::validate(int cliques_per_batch) const {
  if (x.rows() < 1 || x.cols() < 1) {
    throw std::invalid_argument("batch assignment must be at least 1x1");
  }
  if (!x.allFinite()) {
    throw DataError("batch assignment contains non-finite values");
  }
  const double r = static_cast<double>(cliques_per_batch);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double v = x(b, k);
      if (v < -1e-9 || v > 1.0 + 1e-9) {
        throw DataError("batch assignment entry outside [0, 1]");
      }
      if (rounded && v != 0.0 && v != 1.0) {
        throw DataError("rounded batch assignment must be binary");
      }
    }
    if (std::abs(x.row(b).sum() - r) > 1e-6) {
      throw DataError("batch row " + std::to_string(b) +
                      " sums to " + std::to_string(x.row(b).sum()) +
                      ", expected " + std::to_string(r));
    }
  }
}

double objective(const BatchAssignment& x, const Eigen::MatrixXd& clique_sim,
                 const CliqueAssignment& cl, const BatchOptParams& params) {
  params.validate(static_cast<int>(clique_sim.rows()));
  Problem prob(clique_sim, cl, params);
  return prob.program_objective(x.x);
}

double dc_objective(const BatchAssignment& x, const Eigen::MatrixXd& clique_sim,
                    const CliqueAssignment& cl, const BatchOptParams& params) {
  params.validate(static_cast<int>(clique_sim.rows()));
  Problem prob(clique_sim, cl, params);
  return prob.dc(x.x);
}

Eigen::MatrixXd grad_v(const BatchAssignment& x,
                       const Eigen::MatrixXd& clique_sim,
                       const BatchOptParams& params) {
  Eigen::MatrixXd g =
      2.0 * (x.x.array().rowwise() *
             clique_sim.diagonal().transpose().array()).matrix();
  g += 2.0 * params.lambda3 * (x.x.array() - 0.5).matrix();
  return g;
}

BatchAssignment initial_assignment(int batch_count, int clique_count,
                                   int cliques_per_batch, uint64_t seed) {
  if (batch_count < 1 || clique_count < 1 || cliques_per_batch < 1 ||
      cliques_per_batch > clique_count) {
    throw std::invalid_argument("infeasible batch assignment shape");
  }
  BatchAssignment out;
  if (cliques_per_batch == clique_count) {
    out.x = Eigen::MatrixXd::Ones(batch_count, clique_count);
    return out;
  }
  const double base =
      static_cast<double>(cliques_per_batch) / static_cast<double>(clique_count);
  Rng rng(seed);
  out.x.resize(batch_count, clique_count);
  for (int b = 0; b < batch_count; ++b) {
    for (int k = 0; k < clique_count; ++k) {
      out.x(b, k) = base * (1.0 + 0.01 * rng.uniform(-1.0, 1.0));
    }
    out.x.row(b) *= static_cast<double>(cliques_per_batch) / out.x.row(b).sum();
  }
  // Keep strictly inside the box even in near-degenerate shapes.
  out.x = out.x.cwiseMax(1e-9).cwiseMin(1.0 - 1e-9);
  return out;
}

namespace {

// Minimizes h(X) = u(X) - <X, G> over the feasible polytope with the
// log-barrier continuation described in the header.
Eigen::MatrixXd barrier_minimize(const Problem& prob, const Eigen::MatrixXd& g_lin,
                                 Eigen::MatrixXd x, int* inner_iters) {
  const BarrierParams& bp = prob.params.barrier;
  const double r = static_cast<double>(prob.params.cliques_per_batch);

  const auto h = [&](const Eigen::MatrixXd& xx) {
    return prob.convex_part(xx) - (xx.array() * g_lin.array()).sum();
  };
  const auto h_mu = [&](const Eigen::MatrixXd& xx, double mu) {
    return h(xx) + barrier_value(xx, mu);
  };

  double mu = bp.initial_weight;
  bool last_stage = false;
  while (true) {
    double step_hint = 1.0;
    for (int it = 0; it < bp.max_inner_iters; ++it) {
      Eigen::MatrixXd grad = prob.convex_part_grad(x) - g_lin;
      grad.array() -= mu * (1.0 / x.array() - 1.0 / (1.0 - x.array()));
      project_row_sums(grad);
      const double gnorm = grad.cwiseAbs().maxCoeff();
      if (!std::isfinite(gnorm)) {
        throw SolverError(
            "inner solver diverged at barrier weight " + std::to_string(mu) +
            ", iteration " + std::to_string(it) +
            ": non-finite gradient (objective " + std::to_string(h(x)) + ")");
      }
      if (gnorm <= bp.inner_tolerance) {
        break;
      }
      if (inner_iters != nullptr) {
        ++*inner_iters;
      }
      const Eigen::MatrixXd dir = -grad;
      const double tmax = max_feasible_step(x, dir);
      double t = std::min(step_hint * 2.0, 0.99 * tmax);
      const double h0 = h_mu(x, mu);
      const double slope = -grad.squaredNorm();
      bool accepted = false;
      while (t > 1e-18) {
        Eigen::MatrixXd trial = x + t * dir;
        const double ht = h_mu(trial, mu);
        if (std::isfinite(ht) && ht <= h0 + 1e-4 * t * slope) {
          x = std::move(trial);
          renormalize_rows(x, r);
          step_hint = t;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        break;  // no progress possible at this scale
      }
    }
    if (last_stage || mu <= bp.floor) {
      break;
    }
    mu *= bp.decay;
    if (mu <= bp.floor) {
      mu = bp.floor;
      last_stage = true;
    }
  }
  return x;
}

}  // namespace

BatchAssignment solve_convex_subproblem(const Eigen::MatrixXd& clique_sim,
                                        const CliqueAssignment& cl,
                                        const BatchOptParams& params,
                                        const BatchAssignment& x_t,
                                        int* inner_iters) {
  params.validate(static_cast<int>(clique_sim.rows()));
  x_t.validate(params.cliques_per_batch);
  Problem prob(clique_sim, cl, params);
  if (params.cliques_per_batch == static_cast<int>(clique_sim.rows())) {
    return x_t;  // the all-ones point is the only feasible one
  }

  const Eigen::MatrixXd g_lin = grad_v(x_t, clique_sim, params);
  // Pull a (possibly boundary-touching) start strictly inside the box.
  Eigen::MatrixXd x0 = x_t.x.cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
  renormalize_rows(x0, static_cast<double>(params.cliques_per_batch));

  Eigen::MatrixXd x = barrier_minimize(prob, g_lin, x0, inner_iters);

  const auto h = [&](const Eigen::MatrixXd& xx) {
    return prob.convex_part(xx) - (xx.array() * g_lin.array()).sum();
  };
  BatchAssignment out;
  // Never hand back a point worse than the linearization point; this keeps
  // the outer CCCP trace monotone even under floating-point noise.
  out.x = (h(x) <= h(x_t.x)) ? std::move(x) : x_t.x;
  return out;
}

std::pair<BatchAssignment, SolveReport> cccp_solve(
    const Eigen::MatrixXd& clique_sim, const CliqueAssignment& cl,
    const BatchOptParams& params, const BatchAssignment& init) {
  params.validate(static_cast<int>(clique_sim.rows()));
  init.validate(params.cliques_per_batch);
  if (clique_sim.rows() != clique_sim.cols()) {
    throw std::invalid_argument("clique similarity matrix must be square");
  }
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        0.5 * (clique_sim + clique_sim.transpose()), Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
      throw std::invalid_argument(
          "clique similarity is not PSD (min eigenvalue " +
          std::to_string(eig.eigenvalues().minCoeff()) +
          "); run condition_psd first");
    }
  }

  Problem prob(clique_sim, cl, params);
  BatchAssignment x;
  x.x = init.x;
  SolveReport report;
  report.objective_trace.push_back(prob.dc(x.x));

  for (int t = 0; t < params.cccp_max_iters; ++t) {
    int inner = 0;
    BatchAssignment x_next =
        solve_convex_subproblem(clique_sim, cl, params, x, &inner);
    double f_next = prob.dc(x_next.x);
    const double f_prev = report.objective_trace.back();
    if (f_next > f_prev) {
      x_next.x = x.x;  // floating-point regression guard
      f_next = f_prev;
    }
    report.objective_trace.push_back(f_next);
    report.inner_iterations.push_back(inner);
    x.x = x_next.x;
    if (std::abs(f_prev - f_next) < params.cccp_tol) {
      break;
    }
  }

  report.final_objective = report.objective_trace.back();
  const BatchAssignment rounded = round_batches(x, params);
  report.rounding_gap =
      prob.program_objective(rounded.x) - prob.program_objective(x.x);
  return {std::move(x), std::move(report)};
}

std::pair<BatchAssignment, SolveReport> cccp_solve(
    const Eigen::MatrixXd& clique_sim, const CliqueAssignment& cl,
    const BatchOptParams& params, uint64_t seed) {
  return cccp_solve(clique_sim, cl, params,
                    initial_assignment(params.batch_count,
                                       static_cast<int>(clique_sim.rows()),
                                       params.cliques_per_batch, seed));
}

BatchAssignment round_batches(const BatchAssignment& x,
                              const BatchOptParams& params) {
  if (params.cliques_per_batch > x.clique_count()) {
    throw std::invalid_argument("cliques_per_batch exceeds assignment width");
  }
  BatchAssignment out;
  out.x = Eigen::MatrixXd::Zero(x.x.rows(), x.x.cols());
  out.rounded = true;
  std::vector<int> order(static_cast<std::size_t>(x.x.cols()));
  for (Eigen::Index b = 0; b < x.x.rows(); ++b) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
      if (x.x(b, i) != x.x(b, j)) {
        return x.x(b, i) > x.x(b, j);
      }
      return i < j;
    });
    for (int pick = 0; pick < params.cliques_per_batch; ++pick) {
      out.x(b, order[static_cast<std::size_t>(pick)]) = 1.0;
    }
  }
  out.validate(params.cliques_per_batch);
  return out;
}

}  // namespace csim
