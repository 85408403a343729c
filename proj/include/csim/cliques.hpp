#pragma once

#include <Eigen/Dense>
#include <vector>

#include "csim/similarity.hpp"

namespace csim {

struct CliqueParams {
  // Candidate pool per seed: the clique grown from sample i only considers
  // the seed_neighbors samples most similar to i.
  int seed_neighbors = 10;
  // Threshold quantile: tau is this quantile of the off-diagonal entries of
  // the similarity matrix. Must lie strictly inside (0, 1).
  double min_mutual_sim_quantile = 0.95;
  // A merge is accepted when the merged intra-clique similarity is at least
  // this fraction of the smaller constituent intra-clique similarity.
  double merge_stop_ratio = 0.5;

  void validate() const;
};

// Overlapping clique assignment over N samples. Each clique is a sorted list
// of member indices; the same sample may appear in several cliques, and not
// every sample has to be covered.
struct CliqueAssignment {
  std::vector<std::vector<int>> members;
  int n_samples = 0;

  int clique_count() const { return static_cast<int>(members.size()); }
  // Dense K x N binary membership matrix C.
  Eigen::MatrixXd assignment_matrix() const;
  // Number of distinct samples appearing in at least one clique.
  int covered_samples() const;
  double mean_clique_size() const;

  void validate() const;
};

// tau for build_cliques: interpolated `quantile` of the off-diagonal entries
// of s.
double mutual_similarity_threshold(const SimilarityMatrix& s, double quantile);

// Complete-linkage clique growth. For every seed sample the pool of its
// seed_neighbors most similar samples is scanned greedily: the candidate
// whose minimum similarity to all current members is largest joins as long
// as that minimum exceeds tau. Exact duplicate member sets are emitted once.
CliqueAssignment build_cliques(const SimilarityMatrix& s,
                               const CliqueParams& params);
CliqueAssignment build_cliques_with_threshold(const SimilarityMatrix& s,
                                              int seed_neighbors, double tau);

// Farthest-neighbor (minimum pairwise similarity) agglomerative merging.
// The most mutually similar pair of cliques under that linkage is merged
// when the merged mean intra-clique similarity stays above
// stop_ratio * min(intra(a), intra(b)); identical member sets always merge.
// Runs to fixpoint.
CliqueAssignment merge_cliques(const CliqueAssignment& cl,
                               const SimilarityMatrix& s,
                               double stop_ratio = 0.5);

// Mean pairwise sample similarity within one member list; ordered pairs
// excluding i == j, and s[i][i] for singletons.
double intra_clique_similarity(const std::vector<int>& members,
                               const Eigen::MatrixXd& s);

// K x K matrix of mean cross-clique sample similarity. Diagonal entries use
// the intra-clique convention above.
Eigen::MatrixXd clique_similarity(const CliqueAssignment& cl,
                                  const SimilarityMatrix& s);

// Nearest PSD projection: eigendecompose the (symmetric) input, clamp
// negative eigenvalues to zero, reconstruct. Idempotent.
Eigen::MatrixXd condition_psd(const Eigen::MatrixXd& sp);

}  // namespace csim
