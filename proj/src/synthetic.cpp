#include "csim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "csim/common.hpp"

namespace csim {
namespace {

double circular_distance(double a, double b) {
  const double two_pi = 2.0 * std::numbers::pi;
  double d = std::fmod(std::abs(a - b), two_pi);
  return std::min(d, two_pi - d);
}

// Gaussian matrix with orthonormalized columns (modified Gram-Schmidt). With
// orthonormal columns the noise-free descriptors keep unit norm and their
// dot products equal the cosine of the latent angle difference exactly.
Eigen::MatrixXd orthonormal_embedding(int dim, Rng& rng) {
  Eigen::MatrixXd q(dim, 2);
  for (int c = 0; c < 2; ++c) {
    for (int r = 0; r < dim; ++r) {
      q(r, c) = rng.gaussian();
    }
  }
  q.col(0).normalize();
  q.col(1) -= q.col(0) * q.col(0).dot(q.col(1));
  const double norm1 = q.col(1).norm();
  if (norm1 > 1e-12) {
    q.col(1) /= norm1;
  } else {
    q.col(1).setZero();  // dim == 1: the sine component has nowhere to live
  }
  return q;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.n_videos * spec.frames_per_video;
  const double two_pi = 2.0 * std::numbers::pi;

  Rng rng(derive_seed(spec.seed, 0x5D17));
  SyntheticData out;
  out.latent_embedding = orthonormal_embedding(spec.ambient_dim, rng);
  out.latent_angles.resize(n);

  std::vector<double> phases(spec.n_videos);
  for (auto& p : phases) {
    p = rng.uniform(0.0, two_pi);
  }

  out.exemplars.descriptors.resize(n, spec.ambient_dim);
  out.exemplars.ids.reserve(n);
  std::vector<SequenceEntry> sequence;
  sequence.reserve(n);
  int row = 0;
  for (int v = 0; v < spec.n_videos; ++v) {
    for (int t = 0; t < spec.frames_per_video; ++t, ++row) {
      const double theta =
          phases[v] + two_pi * spec.n_cycles * t / spec.frames_per_video;
      out.latent_angles[row] = theta;
      Eigen::Vector2d z(std::cos(theta), std::sin(theta));
      Eigen::VectorXd x = out.latent_embedding * z;
      for (int d = 0; d < spec.ambient_dim; ++d) {
        x[d] += spec.noise_sigma * rng.gaussian();
      }
      out.exemplars.descriptors.row(row) = x.transpose();
      out.exemplars.ids.push_back(std::to_string(row));
      sequence.push_back({static_cast<uint32_t>(v), static_cast<uint32_t>(t)});
    }
  }
  out.exemplars.sequence = std::move(sequence);
  out.exemplars.validate();

  // Ground truth by latent circular distance. The boundary between the
  // closest and the farthest lists is trimmed until it is strict, so a
  // positive is always latently closer to its query than any negative.
  const int per_side = std::min(kSyntheticLabelsPerSide, (n - 1) / 2);
  std::vector<int> order(n);
  std::vector<double> dist(n);
  for (int q = 0; q < n; ++q) {
    std::iota(order.begin(), order.end(), 0);
    for (int j = 0; j < n; ++j) {
      dist[j] = circular_distance(out.latent_angles[q], out.latent_angles[j]);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (dist[a] != dist[b]) {
        return dist[a] < dist[b];
      }
      return a < b;
    });
    // order[0] == q (distance zero to itself, lowest index wins ties).
    std::vector<int> pos(order.begin() + 1, order.begin() + 1 + per_side);
    std::vector<int> neg(order.end() - per_side, order.end());
    std::reverse(neg.begin(), neg.end());  // farthest first
    while (!pos.empty() && !neg.empty() &&
           dist[pos.back()] >= dist[neg.back()]) {
      pos.pop_back();
      neg.pop_back();
    }
    if (pos.empty() || neg.empty()) {
      continue;  // degenerate geometry, skip the query
    }
    QueryLabels labels;
    labels.query = out.exemplars.ids[q];
    for (int j : pos) {
      labels.positives.push_back(out.exemplars.ids[j]);
    }
    for (int j : neg) {
      labels.negatives.push_back(out.exemplars.ids[j]);
    }
    out.ground_truth.queries.push_back(std::move(labels));
  }
  out.ground_truth.validate();
  return out;
}

}  // namespace csim
