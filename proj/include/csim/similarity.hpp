#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "csim/types.hpp"

namespace csim {

enum class SimilaritySource { whitened_dot, pearson, pooled };

std::string to_string(SimilaritySource source);
SimilaritySource similarity_source_from_string(const std::string& name);

// Dense pairwise similarity matrix. Always square, symmetric and finite;
// Pearson entries additionally lie in [-1, 1].
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  SimilaritySource source = SimilaritySource::whitened_dot;

  Eigen::Index n() const { return values.rows(); }
  void validate() const;
};

// s[i][j] = <w_i, w_j> over whitened rows. Computed pairwise with a fixed
// left-to-right accumulation order, so the result is independent of the
// thread count and exactly symmetric.
SimilarityMatrix dot_similarity(const WhitenedSet& w);

// Pearson correlation between embedding rows (diagonal exactly 1). Requires
// at least 2 embedding dimensions and nonzero variance in every row.
SimilarityMatrix pearson_similarity(const Eigen::MatrixXd& embeddings);

// Temporal average pooling with window radius `radius` around each frame:
// the pooled similarity of (video i, frame k) and (video j, frame l) is the
// mean of <emb(i, k+n), emb(j, l+n)> over the offsets n in [-radius, radius]
// that stay inside both videos. The window shrinks near boundaries and the
// normalizer is the number of offsets valid on both sides. radius = 0
// reproduces the frame-wise dot similarity exactly.
SimilarityMatrix temporal_pool(
    const Eigen::MatrixXd& embeddings,
    const std::optional<std::vector<SequenceEntry>>& sequence, int radius);

// Cumulative |eigenvalue| mass of a similarity matrix, eigenvalues sorted by
// magnitude descending. fractions[k] is the fraction carried by the k+1
// leading eigenvalues; the last entry is 1.
struct CumulativeSpectrum {
  Eigen::VectorXd fractions;

  void validate() const;
};

CumulativeSpectrum spectrum(const SimilarityMatrix& s);

// Smallest number of leading eigenvalues holding at least 90% of the
// absolute spectrum mass (1-based).
int k90(const CumulativeSpectrum& spec);

}  // namespace csim
