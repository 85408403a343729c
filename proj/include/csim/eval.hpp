#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csim/similarity.hpp"

namespace csim {

// Area under the ROC curve of scores against binary labels, computed from
// rank sums (Mann-Whitney). Tied positive/negative scores earn half credit.
// Requires at least one positive and one negative label.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct RetrievalResult {
  std::vector<double> per_query_auc;
  double mean_auc = 0.0;
};

// Per-query AUC of similarity-to-query scores over the labeled positive and
// negative ids, then the mean across queries. row_ids maps matrix rows to
// the id space of the ground truth; unresolvable ids are an error.
RetrievalResult retrieval_eval(const SimilarityMatrix& s,
                               const GroundTruth& gt,
                               const std::vector<std::string>& row_ids);

// Leave-one-out k-nearest-neighbor accuracy under the similarity matrix.
// Neighbors are the k most similar other samples (ties toward the lower
// index); the predicted class is the majority vote, ties broken by summed
// neighbor similarity and then by the lower class label. eval_indices, when
// nonempty, restricts which samples are scored.
double knn_classify(const SimilarityMatrix& s, const std::vector<int>& labels,
                    int k, std::span<const int> eval_indices = {});

// Writes the cumulative spectrum as a two-column CSV (k, fraction) and
// returns k90.
int spectrum_report(const SimilarityMatrix& s,
                    const std::filesystem::path& out_csv);

}  // namespace csim
