#include "csim/types.hpp"

#include <map>

#include "csim/common.hpp"

namespace csim {
namespace {

void check_sequence(const std::vector<SequenceEntry>& seq, Eigen::Index n) {
  if (static_cast<Eigen::Index>(seq.size()) != n) {
    throw std::invalid_argument(
        "sequence index must cover all rows: got " +
        std::to_string(seq.size()) + " entries for " + std::to_string(n) +
        " rows");
  }
  std::map<uint32_t, uint32_t> last;
  for (const auto& e : seq) {
    auto it = last.find(e.video_id);
    if (it != last.end() && e.frame_index <= it->second) {
      throw DataError("frame_index not strictly increasing within video " +
                      std::to_string(e.video_id));
    }
    last[e.video_id] = e.frame_index;
  }
}

}  // namespace

void ExemplarSet::validate() const {
  if (descriptors.rows() < 1 || descriptors.cols() < 1) {
    throw std::invalid_argument("descriptor matrix must be at least 1x1");
  }
  if (static_cast<Eigen::Index>(ids.size()) != descriptors.rows()) {
    throw std::invalid_argument("id count does not match row count");
  }
  if (!descriptors.allFinite()) {
    throw DataError("descriptors contain non-finite values");
  }
  if (sequence) {
    check_sequence(*sequence, descriptors.rows());
  }
}

void WhitenedSet::validate() const {
  const Eigen::Index d = whitened.cols();
  if (mean.size() != d || transform.rows() != d || transform.cols() != d) {
    throw std::invalid_argument("whitened set has inconsistent dimensions");
  }
  if (!whitened.allFinite() || !mean.allFinite() || !transform.allFinite()) {
    throw DataError("whitened set contains non-finite values");
  }
  if (sequence) {
    check_sequence(*sequence, whitened.rows());
  }
}

void SyntheticSpec::validate() const {
  if (n_videos < 1 || frames_per_video < 1 || ambient_dim < 1) {
    throw std::invalid_argument("synthetic counts must all be >= 1");
  }
  if (noise_sigma < 0.0) {
    throw std::invalid_argument("noise_sigma must be >= 0");
  }
  if (n_cycles <= 0.0) {
    throw std::invalid_argument("n_cycles must be positive");
  }
}

void GroundTruth::validate() const {
  for (const auto& q : queries) {
    for (const auto& p : q.positives) {
      if (p == q.query) {
        throw DataError("query " + q.query + " appears in its positive list");
      }
    }
    for (const auto& n : q.negatives) {
      if (n == q.query) {
        throw DataError("query " + q.query + " appears in its negative list");
      }
      for (const auto& p : q.positives) {
        if (p == n) {
          throw DataError("id " + p + " is both positive and negative for query " +
                          q.query);
        }
      }
    }
  }
}

}  // namespace csim
