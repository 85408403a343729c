#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace csim {

struct SequenceEntry {
  uint32_t video_id = 0;
  uint32_t frame_index = 0;

  friend bool operator==(const SequenceEntry&, const SequenceEntry&) = default;
};

// A set of N exemplar descriptors of dimension D with opaque per-row ids and
// an optional sequence index (video id, frame index) covering every row.
struct ExemplarSet {
  Eigen::MatrixXd descriptors;  // N x D, finite
  std::vector<std::string> ids;
  std::optional<std::vector<SequenceEntry>> sequence;

  Eigen::Index size() const { return descriptors.rows(); }
  Eigen::Index dim() const { return descriptors.cols(); }

  // Throws std::invalid_argument on shape mismatches, DataError on non-finite
  // values or a sequence index that is not strictly increasing per video.
  void validate() const;
};

// Output of whitening: rows of `whitened` are (x - mean) * transform, where
// transform is the symmetric inverse principal square root of the (ridged)
// sample covariance.
struct WhitenedSet {
  Eigen::MatrixXd whitened;   // N x D
  Eigen::VectorXd mean;       // D
  Eigen::MatrixXd transform;  // D x D, symmetric
  std::optional<std::vector<SequenceEntry>> sequence;
  std::vector<std::string> ids;

  void validate() const;
};

// Parameters of the synthetic circular-manifold generator. Each video walks
// a hidden angle at a constant rate (n_cycles full loops over its frames),
// the angle is embedded linearly into the ambient space and perturbed with
// isotropic Gaussian noise.
struct SyntheticSpec {
  int n_videos = 8;
  int frames_per_video = 250;
  int ambient_dim = 32;
  double noise_sigma = 0.3;
  double n_cycles = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

struct QueryLabels {
  std::string query;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
};

// Per-query relevance labels. Positive and negative lists are disjoint and
// never contain the query itself.
struct GroundTruth {
  std::vector<QueryLabels> queries;

  void validate() const;
};

// Full output of the synthetic generator. The latent angles and the embedding
// matrix are exposed so tests can verify the construction analytically; only
// the exemplars and the ground truth are persisted by the CLI.
struct SyntheticData {
  ExemplarSet exemplars;
  GroundTruth ground_truth;
  Eigen::VectorXd latent_angles;     // N
  Eigen::MatrixXd latent_embedding;  // D x 2, orthonormal columns
};

}  // namespace csim
