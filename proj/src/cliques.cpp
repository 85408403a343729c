#include "csim/cliques.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

#include "csim/common.hpp"

namespace csim {
namespace {

// Pool of the `count` samples most similar to `seed` (seed excluded), ties
// toward the lower index.
std::vector<int> neighbor_pool(const Eigen::MatrixXd& s, int seed, int count) {
  const int n = static_cast<int>(s.rows());
  std::vector<int> order;
  order.reserve(n - 1);
  for (int j = 0; j < n; ++j) {
    if (j != seed) {
      order.push_back(j);
    }
  }
  const int keep = std::min<int>(count, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int a, int b) {
                      if (s(seed, a) != s(seed, b)) {
                        return s(seed, a) > s(seed, b);
                      }
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

double min_link(const Eigen::MatrixXd& s, const std::vector<int>& members,
                int candidate) {
  double m = std::numeric_limits<double>::infinity();
  for (int i : members) {
    m = std::min(m, s(i, candidate));
  }
  return m;
}

// Minimum pairwise similarity between two member lists (farthest-neighbor
// linkage in similarity space).
double clique_linkage(const Eigen::MatrixXd& s, const std::vector<int>& a,
                      const std::vector<int>& b) {
  double m = std::numeric_limits<double>::infinity();
  for (int i : a) {
    for (int j : b) {
      m = std::min(m, s(i, j));
    }
  }
  return m;
}

std::vector<int> merged_members(const std::vector<int>& a,
                                const std::vector<int>& b) {
  std::vector<int> u;
  u.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(u));
  return u;
}

}  // namespace

void CliqueParams::validate() const {
  if (seed_neighbors < 1) {
    throw std::invalid_argument("seed_neighbors must be >= 1");
  }
  if (!(min_mutual_sim_quantile > 0.0 && min_mutual_sim_quantile < 1.0)) {
    throw std::invalid_argument(
        "min_mutual_sim_quantile must lie strictly inside (0, 1)");
  }
  if (merge_stop_ratio != 0.5) {
    throw std::invalid_argument("merge_stop_ratio is fixed at 0.5");
  }
}

Eigen::MatrixXd CliqueAssignment::assignment_matrix() const {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(clique_count(), n_samples);
  for (int k = 0; k < clique_count(); ++k) {
    for (int i : members[k]) {
      c(k, i) = 1.0;
    }
  }
  return c;
}

int CliqueAssignment::covered_samples() const {
  std::vector<char> seen(n_samples, 0);
  for (const auto& m : members) {
    for (int i : m) {
      seen[i] = 1;
    }
  }
  return static_cast<int>(std::count(seen.begin(), seen.end(), 1));
}

double CliqueAssignment::mean_clique_size() const {
  if (members.empty()) {
    return 0.0;
  }
  std::size_t total = 0;
  for (const auto& m : members) {
    total += m.size();
  }
  return static_cast<double>(total) / static_cast<double>(members.size());
}

void CliqueAssignment::validate() const {
  if (n_samples < 1) {
    throw std::invalid_argument("clique assignment needs n_samples >= 1");
  }
  if (members.empty()) {
    throw std::invalid_argument("clique assignment must contain cliques");
  }
  for (const auto& m : members) {
    if (m.empty()) {
      throw std::invalid_argument("cliques must be nonempty");
    }
    if (!std::is_sorted(m.begin(), m.end())) {
      throw std::invalid_argument("clique members must be sorted");
    }
    if (std::adjacent_find(m.begin(), m.end()) != m.end()) {
      throw std::invalid_argument("clique members must be distinct");
    }
    if (m.front() < 0 || m.back() >= n_samples) {
      throw std::invalid_argument("clique member index out of range");
    }
  }
}

double mutual_similarity_threshold(const SimilarityMatrix& s, double quantile) {
  s.validate();
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw std::invalid_argument("quantile must lie strictly inside (0, 1)");
  }
  const Eigen::Index n = s.n();
  if (n < 2) {
    throw std::invalid_argument(
        "similarity matrix has no off-diagonal entries");
  }
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      vals.push_back(s.values(i, j));
    }
  }
  std::sort(vals.begin(), vals.end());
  const double pos = quantile * static_cast<double>(vals.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= vals.size()) {
    return vals.back();
  }
  return vals[lo] * (1.0 - frac) + vals[lo + 1] * frac;
}

CliqueAssignment build_cliques_with_threshold(const SimilarityMatrix& s,
                                              int seed_neighbors, double tau) {
  s.validate();
  if (seed_neighbors < 1) {
    throw std::invalid_argument("seed_neighbors must be >= 1");
  }
  const int n = static_cast<int>(s.n());
  CliqueAssignment out;
  out.n_samples = n;
  std::set<std::vector<int>> seen;
  for (int seed = 0; seed < n; ++seed) {
    std::vector<int> pool = neighbor_pool(s.values, seed, seed_neighbors);
    std::vector<int> clique{seed};
    std::vector<char> used(pool.size(), 0);
    for (;;) {
      int best = -1;
      double best_link = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < pool.size(); ++c) {
        if (used[c]) {
          continue;
        }
        const double link = min_link(s.values, clique, pool[c]);
        if (link > best_link ||
            (link == best_link && best >= 0 && pool[c] < pool[best])) {
          best = static_cast<int>(c);
          best_link = link;
        }
      }
      if (best < 0 || !(best_link > tau)) {
        break;
      }
      used[best] = 1;
      clique.push_back(pool[best]);
    }
    std::sort(clique.begin(), clique.end());
    if (seen.insert(clique).second) {
      out.members.push_back(std::move(clique));
    }
  }
  out.validate();
  return out;
}

CliqueAssignment build_cliques(const SimilarityMatrix& s,
                               const CliqueParams& params) {
  params.validate();
  const double tau =
      mutual_similarity_threshold(s, params.min_mutual_sim_quantile);
  return build_cliques_with_threshold(s, params.seed_neighbors, tau);
}

double intra_clique_similarity(const std::vector<int>& members,
                               const Eigen::MatrixXd& s) {
  if (members.empty()) {
    throw std::invalid_argument("intra-clique similarity of an empty clique");
  }
  if (members.size() == 1) {
    return s(members[0], members[0]);
  }
  double acc = 0.0;
  for (int i : members) {
    for (int j : members) {
      if (i != j) {
        acc += s(i, j);
      }
    }
  }
  const auto m = static_cast<double>(members.size());
  return acc / (m * (m - 1.0));
}

CliqueAssignment merge_cliques(const CliqueAssignment& cl,
                               const SimilarityMatrix& s, double stop_ratio) {
  cl.validate();
  s.validate();
  if (cl.n_samples != static_cast<int>(s.n())) {
    throw std::invalid_argument(
        "clique assignment and similarity matrix disagree on N");
  }

  std::vector<std::vector<int>> cliques = cl.members;
  const std::size_t k0 = cliques.size();
  std::vector<double> intra(k0);
  for (std::size_t i = 0; i < k0; ++i) {
    intra[i] = intra_clique_similarity(cliques[i], s.values);
  }

  // Repeatedly merge the highest-linkage pair that passes the stop rule,
  // ties broken by slot order. Linkage between two cliques only changes when
  // one of them absorbs a merge, so candidates live in a lazy max-heap tagged
  // with per-slot generations: stale entries are discarded on pop, and a
  // popped pair that fails the stop rule is simply not re-pushed until one
  // side changes. Slots keep their original index; the survivor of a merge is
  // the lower slot, which preserves the relative order of the alive set.
  std::vector<int> generation(k0, 0);
  std::vector<char> alive(k0, 1);

  struct Candidate {
    double link;
    int a, b;
    int gen_a, gen_b;
  };
  const auto worse = [](const Candidate& x, const Candidate& y) {
    if (x.link != y.link) {
      return x.link < y.link;
    }
    return std::tie(x.a, x.b) > std::tie(y.a, y.b);
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(
      worse);
  for (std::size_t a = 0; a < k0; ++a) {
    for (std::size_t b = a + 1; b < k0; ++b) {
      heap.push({clique_linkage(s.values, cliques[a], cliques[b]),
                 static_cast<int>(a), static_cast<int>(b), 0, 0});
    }
  }

  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    if (!alive[static_cast<std::size_t>(c.a)] ||
        !alive[static_cast<std::size_t>(c.b)] ||
        generation[static_cast<std::size_t>(c.a)] != c.gen_a ||
        generation[static_cast<std::size_t>(c.b)] != c.gen_b) {
      continue;
    }
    const auto a = static_cast<std::size_t>(c.a);
    const auto b = static_cast<std::size_t>(c.b);
    const bool identical = cliques[a] == cliques[b];
    std::vector<int> u = merged_members(cliques[a], cliques[b]);
    const double merged_intra = intra_clique_similarity(u, s.values);
    if (!identical && merged_intra < stop_ratio * std::min(intra[a], intra[b])) {
      continue;
    }
    cliques[a] = std::move(u);
    intra[a] = merged_intra;
    generation[a] += 1;
    alive[b] = 0;
    for (std::size_t o = 0; o < k0; ++o) {
      if (o == a || !alive[o]) {
        continue;
      }
      Candidate fresh;
      fresh.link = clique_linkage(s.values, cliques[a], cliques[o]);
      fresh.a = static_cast<int>(std::min(a, o));
      fresh.b = static_cast<int>(std::max(a, o));
      fresh.gen_a = generation[static_cast<std::size_t>(fresh.a)];
      fresh.gen_b = generation[static_cast<std::size_t>(fresh.b)];
      heap.push(fresh);
    }
  }

  CliqueAssignment out;
  out.n_samples = cl.n_samples;
  for (std::size_t i = 0; i < k0; ++i) {
    if (alive[i]) {
      out.members.push_back(std::move(cliques[i]));
    }
  }
  out.validate();
  return out;
}

Eigen::MatrixXd clique_similarity(const CliqueAssignment& cl,
                                  const SimilarityMatrix& s) {
  cl.validate();
  s.validate();
  if (cl.n_samples != static_cast<int>(s.n())) {
    throw std::invalid_argument(
        "clique assignment and similarity matrix disagree on N");
  }
  const int k = cl.clique_count();
  Eigen::MatrixXd sp(k, k);
  for (int a = 0; a < k; ++a) {
    sp(a, a) = intra_clique_similarity(cl.members[a], s.values);
    for (int b = a + 1; b < k; ++b) {
      double acc = 0.0;
      for (int i : cl.members[a]) {
        for (int j : cl.members[b]) {
          acc += s.values(i, j);
        }
      }
      sp(a, b) = acc / (static_cast<double>(cl.members[a].size()) *
                        static_cast<double>(cl.members[b].size()));
      sp(b, a) = sp(a, b);
    }
  }
  return sp;
}

Eigen::MatrixXd condition_psd(const Eigen::MatrixXd& sp) {
  if (sp.rows() != sp.cols() || sp.rows() < 1) {
    throw std::invalid_argument("condition_psd needs a square matrix");
  }
  const double asym = (sp - sp.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) {
    throw std::invalid_argument("condition_psd input asymmetric by " +
                                std::to_string(asym));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (sp + sp.transpose()));
  if (eig.info() != Eigen::Success) {
    throw SolverError("eigendecomposition failed in condition_psd");
  }
  Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace csim
