#include "csim/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "csim/common.hpp"

namespace csim {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("scores and labels must be nonempty and equal");
  }
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument(
        "AUC needs at least one positive and one negative label");
  }

  // Rank-sum formulation; tie groups share their average rank, which makes
  // tied positive/negative pairs worth exactly half a pair each.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      ++j;
    }
    // 1-based ranks i+1 .. j averaged over the tie group.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        rank_sum_pos += avg_rank;
      }
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

RetrievalResult retrieval_eval(const SimilarityMatrix& s,
                               const GroundTruth& gt,
                               const std::vector<std::string>& row_ids) {
  s.validate();
  gt.validate();
  if (static_cast<Eigen::Index>(row_ids.size()) != s.n()) {
    throw std::invalid_argument("row id count does not match matrix size");
  }
  if (gt.queries.empty()) {
    throw std::invalid_argument("ground truth has no queries");
  }
  std::map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    index[row_ids[i]] = static_cast<Eigen::Index>(i);
  }
  const auto resolve = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw DataError("unresolvable id in ground truth: " + id);
    }
    return it->second;
  };

  RetrievalResult out;
  out.per_query_auc.reserve(gt.queries.size());
  double acc = 0.0;
  for (const auto& q : gt.queries) {
    const Eigen::Index qi = resolve(q.query);
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(q.positives.size() + q.negatives.size());
    for (const auto& id : q.positives) {
      scores.push_back(s.values(qi, resolve(id)));
      labels.push_back(1);
    }
    for (const auto& id : q.negatives) {
      scores.push_back(s.values(qi, resolve(id)));
      labels.push_back(0);
    }
    const double auc = roc_auc(scores, labels);
    out.per_query_auc.push_back(auc);
    acc += auc;
  }
  out.mean_auc = acc / static_cast<double>(out.per_query_auc.size());
  return out;
}

double knn_classify(const SimilarityMatrix& s, const std::vector<int>& labels,
                    int k, std::span<const int> eval_indices) {
  s.validate();
  const Eigen::Index n = s.n();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("label count does not match matrix size");
  }
  if (k < 1 || k >= n) {
    throw std::invalid_argument("k must lie in [1, N-1], got " +
                                std::to_string(k));
  }
  std::vector<int> all;
  if (eval_indices.empty()) {
    all.resize(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    eval_indices = all;
  }

  std::size_t correct = 0;
  std::vector<int> order;
  for (int q : eval_indices) {
    if (q < 0 || q >= n) {
      throw std::invalid_argument("eval index out of range");
    }
    order.clear();
    for (int j = 0; j < n; ++j) {
      if (j != q) {
        order.push_back(j);
      }
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (s.values(q, a) != s.values(q, b)) {
                          return s.values(q, a) > s.values(q, b);
                        }
                        return a < b;
                      });
    // Majority vote, ties by summed neighbor similarity, then lower label.
    std::map<int, std::pair<int, double>> votes;
    for (int t = 0; t < k; ++t) {
      auto& v = votes[labels[static_cast<std::size_t>(order[t])]];
      v.first += 1;
      v.second += s.values(q, order[t]);
    }
    int best_label = -1;
    int best_count = -1;
    double best_sim = 0.0;
    for (const auto& [label, v] : votes) {
      const auto [count, sim] = v;
      const bool better = count > best_count ||
                          (count == best_count && sim > best_sim) ||
                          (count == best_count && sim == best_sim &&
                           label < best_label);
      if (better) {
        best_label = label;
        best_count = count;
        best_sim = sim;
      }
    }
    correct += (best_label == labels[static_cast<std::size_t>(q)]) ? 1 : 0;
  }
  return static_cast<double>(correct) /
         static_cast<double>(eval_indices.size());
}

int spectrum_report(const SimilarityMatrix& s,
                    const std::filesystem::path& out_csv) {
  const CumulativeSpectrum spec = spectrum(s);
  std::ofstream out(out_csv);
  if (!out) {
    throw DataError("cannot open file for writing: " + out_csv.string());
  }
  out << "k,fraction\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < spec.fractions.size(); ++i) {
    out << (i + 1) << "," << spec.fractions[i] << "\n";
  }
  if (!out) {
    throw DataError("failed writing " + out_csv.string());
  }
  return k90(spec);
}

}  // namespace csim
