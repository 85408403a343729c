#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csim/batchopt.hpp"
#include "csim/cliques.hpp"
#include "csim/similarity.hpp"
#include "csim/trainer.hpp"
#include "csim/types.hpp"
#include "csim/whiten.hpp"

namespace csim {

struct PipelineConfig {
  uint64_t seed = 0;
  int mil_rounds = 3;
  int temporal_radius = 3;
  bool warm_start = true;
  double whiten_ridge = kAutoRidge;
  int clique_target = 100;  // keep at most this many mined cliques per round
  int hidden_dim = 128;
  int embed_dim = 64;
  std::string output_dir = "out";

  SyntheticSpec synth;
  bool synth_seed_explicit = false;  // when false, synth.seed follows seed
  CliqueParams cliques;
  BatchOptParams batches;
  TrainerConfig trainer;

  void validate() const;
  // synth.seed / trainer seed resolution against the top-level seed.
  SyntheticSpec resolved_synth() const;
};

// Per-round scalar summary. Mining fields are absent on the final entry,
// which only carries the similarity the last round produced.
struct RoundMetrics {
  int round = 0;
  std::string similarity_source;
  std::optional<double> mean_auc;
  int k90 = 0;
  std::optional<int> clique_count;
  std::optional<double> mean_clique_size;
  std::optional<double> coverage_fraction;
  std::optional<double> train_accuracy;
  std::optional<double> cccp_final_objective;
};

struct RoundArtifacts {
  SimilarityMatrix similarity;  // working similarity the round consumed
  std::optional<CliqueAssignment> cliques;
  std::optional<BatchAssignment> batches;  // rounded
  std::optional<SolveReport> solve_report;
  std::optional<EmbeddingModel> model;
  std::optional<TrainReport> train_report;
  RoundMetrics metrics;
};

// Seed streams of round `t`. The run command and the stage commands go
// through these same derivations, so composing the stages reproduces a full
// run byte for byte.
uint64_t round_solver_seed(uint64_t seed, int round);
uint64_t round_model_seed(uint64_t seed, int round);
uint64_t round_trainer_seed(uint64_t seed, int round);

// Working-similarity source by round: whitened_dot at round 0, then pooled
// on sequenced data and pearson otherwise.
SimilaritySource round_source(int round, bool sequenced);

// Embedding rows centered and scaled to unit norm, so their dot products are
// Pearson correlations. Temporal pooling runs on these rows, which makes the
// pooled similarity an average of correlations.
Eigen::MatrixXd pearson_normalized_rows(const Eigen::MatrixXd& embeddings);

// The similarity the round after `round` consumes, computed from that
// round's trained model.
SimilarityMatrix next_round_similarity(const EmbeddingModel& model,
                                       const WhitenedSet& w,
                                       const PipelineConfig& cfg);

// Clique mining for one round: build, keep the clique_target largest cliques
// (ties toward the lower seed index), merge to fixpoint.
CliqueAssignment mine_cliques(const SimilarityMatrix& s,
                              const PipelineConfig& cfg);

// Clique-level similarity as the solver consumes it: PSD-conditioned and
// rescaled by its largest magnitude so the lambda weights mean the same
// thing regardless of the similarity scale a round produces.
Eigen::MatrixXd solver_clique_similarity(const CliqueAssignment& cl,
                                         const SimilarityMatrix& s);

// Effective cliques-per-batch after the small-problem scaling rule: when the
// mined clique count K is below 2r, r shrinks to max(2, K / 2).
int effective_cliques_per_batch(int clique_count, const BatchOptParams& p);

// Runs `mil_rounds` rounds of mining, batch selection and training starting
// from the whitened dot-product similarity, each round replacing the working
// similarity with the one computed from the trained embeddings (temporally
// pooled when a sequence index is present, Pearson otherwise). Returns one
// entry per round plus a final entry holding the last learned similarity.
// gt, when given, fills the AUC metrics.
std::vector<RoundArtifacts> run_mil(const ExemplarSet& data,
                                    const PipelineConfig& cfg,
                                    const GroundTruth* gt = nullptr);

// Scalar summary of a round from its artifacts. `whitened` feeds the
// accuracy recomputation and gt (optional) the retrieval AUC.
RoundMetrics compute_round_metrics(int round, const RoundArtifacts& art,
                                   const Eigen::MatrixXd& whitened,
                                   const GroundTruth* gt,
                                   const std::vector<std::string>& row_ids);

// round_{index}/ directory layout: similarity.bin, metrics.json and, on
// mining rounds, cliques.csv, batches.bin, solve_report.json, model.cmdl and
// train_report.csv.
void save_round(const std::filesystem::path& out_dir, int index,
                const RoundArtifacts& round);
RoundArtifacts load_round(const std::filesystem::path& out_dir, int index);

void save_round_metrics(const std::filesystem::path& out_dir, int index,
                        const RoundMetrics& metrics);
RoundMetrics load_round_metrics(const std::filesystem::path& out_dir,
                                int index);

void write_summary_metrics(const std::filesystem::path& out_dir,
                           const std::vector<RoundMetrics>& rounds);

}  // namespace csim
