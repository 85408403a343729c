#include "csim/similarity.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>

#include "csim/common.hpp"

namespace csim {
namespace {

// Plain ordered dot product. Kept out of Eigen's GEMM on purpose: the
// accumulation order is pinned, so the result is reproducible bit for bit
// and matches a naive reference exactly.
double ordered_dot(const Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    acc += m(a, d) * m(b, d);
  }
  return acc;
}

// Upper triangle entry by entry (row-parallel), mirrored afterwards.
Eigen::MatrixXd gram(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  Eigen::MatrixXd g(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      for (Eigen::Index j = static_cast<Eigen::Index>(i); j < n; ++j) {
        g(static_cast<Eigen::Index>(i), j) =
            ordered_dot(rows, static_cast<Eigen::Index>(i), j);
      }
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      g(i, j) = g(j, i);
    }
  }
  return g;
}

struct VideoSpan {
  std::vector<int> rows;  // matrix rows ordered by frame_index
};

// Per-row (video, position) layout of a sequence index.
struct SequenceLayout {
  std::vector<int> video_of_row;
  std::vector<int> pos_of_row;
  std::vector<VideoSpan> videos;
};

SequenceLayout layout_sequence(const std::vector<SequenceEntry>& seq) {
  SequenceLayout out;
  const int n = static_cast<int>(seq.size());
  out.video_of_row.resize(n);
  out.pos_of_row.resize(n);
  std::map<uint32_t, std::vector<int>> by_video;
  for (int i = 0; i < n; ++i) {
    by_video[seq[i].video_id].push_back(i);
  }
  int v = 0;
  for (auto& [vid, rows] : by_video) {
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      return seq[a].frame_index < seq[b].frame_index;
    });
    for (int p = 0; p < static_cast<int>(rows.size()); ++p) {
      out.video_of_row[rows[p]] = v;
      out.pos_of_row[rows[p]] = p;
    }
    out.videos.push_back({std::move(rows)});
    ++v;
  }
  return out;
}

}  // namespace

std::string to_string(SimilaritySource source) {
  switch (source) {
    case SimilaritySource::whitened_dot:
      return "whitened_dot";
    case SimilaritySource::pearson:
      return "pearson";
    case SimilaritySource::pooled:
      return "pooled";
  }
  throw std::invalid_argument("unknown similarity source");
}

SimilaritySource similarity_source_from_string(const std::string& name) {
  if (name == "whitened_dot") return SimilaritySource::whitened_dot;
  if (name == "pearson") return SimilaritySource::pearson;
  if (name == "pooled") return SimilaritySource::pooled;
  throw DataError("unknown similarity source: " + name);
}

void SimilarityMatrix::validate() const {
  if (values.rows() != values.cols()) {
    throw std::invalid_argument("similarity matrix must be square");
  }
  if (values.rows() < 1) {
    throw std::invalid_argument("similarity matrix must be at least 1x1");
  }
  if (!values.allFinite()) {
    throw DataError("similarity matrix contains non-finite values");
  }
  const double asym = (values - values.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) {
    throw DataError("similarity matrix asymmetric by " + std::to_string(asym));
  }
  if (source == SimilaritySource::pearson) {
    if (values.maxCoeff() > 1.0 + 1e-9 || values.minCoeff() < -1.0 - 1e-9) {
      throw DataError("pearson similarities must lie in [-1, 1]");
    }
  }
}

SimilarityMatrix dot_similarity(const WhitenedSet& w) {
  w.validate();
  if (w.whitened.rows() < 1) {
    throw std::invalid_argument("empty whitened set");
  }
  SimilarityMatrix out;
  out.values = gram(w.whitened);
  out.source = SimilaritySource::whitened_dot;
  out.validate();
  return out;
}

SimilarityMatrix pearson_similarity(const Eigen::MatrixXd& embeddings) {
  const Eigen::Index n = embeddings.rows();
  const Eigen::Index e = embeddings.cols();
  if (n < 1) {
    throw std::invalid_argument("empty embedding matrix");
  }
  if (e < 2) {
    throw std::invalid_argument(
        "pearson similarity needs embedding dim >= 2, got " +
        std::to_string(e));
  }
  Eigen::MatrixXd centered(n, e);
  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = embeddings.row(i).mean();
    centered.row(i) = embeddings.row(i).array() - mean;
    norms[i] = centered.row(i).norm();
    if (!(norms[i] > 0.0)) {
      throw DataError("embedding row " + std::to_string(i) +
                      " has zero variance; pearson correlation is undefined");
    }
  }
  SimilarityMatrix out;
  out.values.resize(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t ii = lo; ii < hi; ++ii) {
      const auto i = static_cast<Eigen::Index>(ii);
      out.values(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        out.values(i, j) = ordered_dot(centered, i, j) / (norms[i] * norms[j]);
      }
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      out.values(i, j) = out.values(j, i);
    }
  }
  out.source = SimilaritySource::pearson;
  out.validate();
  return out;
}

SimilarityMatrix temporal_pool(
    const Eigen::MatrixXd& embeddings,
    const std::optional<std::vector<SequenceEntry>>& sequence, int radius) {
  if (!sequence) {
    throw DataError(
        "sequence index missing: temporal pooling needs video/frame "
        "structure; use the dot or pearson similarity for unsequenced data");
  }
  if (radius < 0) {
    throw std::invalid_argument("pooling radius must be >= 0");
  }
  if (static_cast<Eigen::Index>(sequence->size()) != embeddings.rows()) {
    throw std::invalid_argument(
        "sequence index length does not match embedding rows");
  }

  const Eigen::Index n = embeddings.rows();
  const SequenceLayout layout = layout_sequence(*sequence);
  const Eigen::MatrixXd g = gram(embeddings);

  SimilarityMatrix out;
  out.values.resize(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t ii = lo; ii < hi; ++ii) {
      const int i = static_cast<int>(ii);
      const auto& vi = layout.videos[layout.video_of_row[i]].rows;
      const int ki = layout.pos_of_row[i];
      for (int j = i; j < n; ++j) {
        const auto& vj = layout.videos[layout.video_of_row[j]].rows;
        const int kj = layout.pos_of_row[j];
        double acc = 0.0;
        int count = 0;
        for (int off = -radius; off <= radius; ++off) {
          const int a = ki + off;
          const int b = kj + off;
          if (a < 0 || b < 0 || a >= static_cast<int>(vi.size()) ||
              b >= static_cast<int>(vj.size())) {
            continue;  // window shrinks at video boundaries
          }
          acc += g(vi[a], vj[b]);
          ++count;
        }
        // count >= 1 always: offset 0 is valid on both sides.
        out.values(i, j) = acc / count;
      }
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      out.values(i, j) = out.values(j, i);
    }
  }
  out.source = SimilaritySource::pooled;
  out.validate();
  return out;
}

void CumulativeSpectrum::validate() const {
  if (fractions.size() < 1) {
    throw std::invalid_argument("empty spectrum");
  }
  for (Eigen::Index i = 0; i + 1 < fractions.size(); ++i) {
    if (fractions[i] > fractions[i + 1] + 1e-12) {
      throw DataError("cumulative spectrum must be nondecreasing");
    }
  }
  if (std::abs(fractions[fractions.size() - 1] - 1.0) > 1e-9) {
    throw DataError("cumulative spectrum must end at 1");
  }
}

CumulativeSpectrum spectrum(const SimilarityMatrix& s) {
  s.validate();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (s.values + s.values.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw SolverError("eigendecomposition of the similarity matrix failed");
  }
  Eigen::VectorXd mags = eig.eigenvalues().cwiseAbs();
  std::sort(mags.data(), mags.data() + mags.size(), std::greater<double>());
  const double total = mags.sum();
  if (!(total > 0.0)) {
    throw DataError("zero spectrum: similarity matrix has no eigenvalue mass");
  }
  CumulativeSpectrum out;
  out.fractions.resize(mags.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mags.size(); ++i) {
    acc += mags[i];
    out.fractions[i] = acc / total;
  }
  // Guard against rounding drift in the last entry.
  out.fractions[mags.size() - 1] = 1.0;
  out.validate();
  return out;
}

int k90(const CumulativeSpectrum& spec) {
  for (Eigen::Index i = 0; i < spec.fractions.size(); ++i) {
    if (spec.fractions[i] >= 0.9) {
      return static_cast<int>(i) + 1;
    }
  }
  return static_cast<int>(spec.fractions.size());
}

}  // namespace csim
