#include "csim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "csim/common.hpp"
#include "csim/eval.hpp"
#include "csim/io.hpp"

namespace csim {
namespace {

using ordered_json = nlohmann::ordered_json;

std::filesystem::path round_dir(const std::filesystem::path& out_dir,
                                int index) {
  return out_dir / ("round_" + std::to_string(index));
}

template <typename T>
void put_optional(ordered_json& doc, const char* key,
                  const std::optional<T>& v) {
  if (v) {
    doc[key] = *v;
  } else {
    doc[key] = nullptr;
  }
}

template <typename T>
std::optional<T> get_optional(const ordered_json& doc, const char* key) {
  const auto& node = doc.at(key);
  if (node.is_null()) {
    return std::nullopt;
  }
  return node.get<T>();
}

ordered_json metrics_to_json(const RoundMetrics& m) {
  ordered_json doc;
  doc["round"] = m.round;
  doc["similarity_source"] = m.similarity_source;
  put_optional(doc, "mean_auc", m.mean_auc);
  doc["k90"] = m.k90;
  put_optional(doc, "clique_count", m.clique_count);
  put_optional(doc, "mean_clique_size", m.mean_clique_size);
  put_optional(doc, "coverage_fraction", m.coverage_fraction);
  put_optional(doc, "train_accuracy", m.train_accuracy);
  put_optional(doc, "cccp_final_objective", m.cccp_final_objective);
  return doc;
}

RoundMetrics metrics_from_json(const ordered_json& doc,
                               const std::string& where) {
  RoundMetrics m;
  try {
    m.round = doc.at("round").get<int>();
    m.similarity_source = doc.at("similarity_source").get<std::string>();
    m.mean_auc = get_optional<double>(doc, "mean_auc");
    m.k90 = doc.at("k90").get<int>();
    m.clique_count = get_optional<int>(doc, "clique_count");
    m.mean_clique_size = get_optional<double>(doc, "mean_clique_size");
    m.coverage_fraction = get_optional<double>(doc, "coverage_fraction");
    m.train_accuracy = get_optional<double>(doc, "train_accuracy");
    m.cccp_final_objective = get_optional<double>(doc, "cccp_final_objective");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed metrics in " + where + ": " + e.what());
  }
  return m;
}

void write_json_file(const std::filesystem::path& path,
                     const ordered_json& doc) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open file for writing: " + path.string());
  }
  out << doc.dump(2) << "\n";
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

ordered_json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

// Rethrows stage failures with the stage name (and round, where applicable)
// prepended so an aborted run names where it stopped.
template <typename Fn>
auto at_stage(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  } catch (const SolverError& e) {
    throw SolverError(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
}

std::string stage_tag(int round, const char* name) {
  return "round " + std::to_string(round) + " " + name;
}

}  // namespace

void PipelineConfig::validate() const {
  if (mil_rounds < 1) {
    throw std::invalid_argument("mil_rounds must be >= 1");
  }
  if (temporal_radius < 0) {
    throw std::invalid_argument("temporal_radius must be >= 0");
  }
  if (clique_target < 2) {
    throw std::invalid_argument("clique_target must be >= 2");
  }
  if (hidden_dim < 1) {
    throw std::invalid_argument("hidden_dim must be >= 1");
  }
  if (embed_dim < 2) {
    throw std::invalid_argument(
        "embed_dim must be >= 2 so embedding correlations are defined");
  }
  if (whiten_ridge != kAutoRidge && whiten_ridge < 0.0) {
    throw std::invalid_argument("whiten_ridge must be >= 0");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output_dir must not be empty");
  }
  synth.validate();
  cliques.validate();
  if (batches.cliques_per_batch > clique_target) {
    throw std::invalid_argument(
        "cliques_per_batch (r = " + std::to_string(batches.cliques_per_batch) +
        ") exceeds clique_target (K = " + std::to_string(clique_target) +
        "); no batch can draw that many cliques");
  }
  // The r <= K bound also depends on the mined clique count and is re-checked
  // every round; here K is substituted so only the static checks run.
  batches.validate(std::max(batches.cliques_per_batch, 1));
  trainer.validate();
}

SyntheticSpec PipelineConfig::resolved_synth() const {
  SyntheticSpec s = synth;
  if (!synth_seed_explicit) {
    s.seed = seed;
  }
  return s;
}

uint64_t round_solver_seed(uint64_t seed, int round) {
  return derive_seed(seed, 0xB0000u + static_cast<uint64_t>(round));
}

uint64_t round_model_seed(uint64_t seed, int round) {
  return derive_seed(seed, 0x40000u + static_cast<uint64_t>(round));
}

uint64_t round_trainer_seed(uint64_t seed, int round) {
  return derive_seed(seed, 0x50000u + static_cast<uint64_t>(round));
}

SimilaritySource round_source(int round, bool sequenced) {
  if (round == 0) {
    return SimilaritySource::whitened_dot;
  }
  return sequenced ? SimilaritySource::pooled : SimilaritySource::pearson;
}

Eigen::MatrixXd pearson_normalized_rows(const Eigen::MatrixXd& embeddings) {
  if (embeddings.cols() < 2) {
    throw std::invalid_argument(
        "pearson normalization needs embedding dim >= 2, got " +
        std::to_string(embeddings.cols()));
  }
  Eigen::MatrixXd out(embeddings.rows(), embeddings.cols());
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const double mean = embeddings.row(i).mean();
    out.row(i) = embeddings.row(i).array() - mean;
    const double norm = out.row(i).norm();
    if (!(norm > 0.0)) {
      throw DataError("embedding row " + std::to_string(i) +
                      " has zero variance; pearson correlation is undefined");
    }
    out.row(i) /= norm;
  }
  return out;
}

SimilarityMatrix next_round_similarity(const EmbeddingModel& model,
                                       const WhitenedSet& w,
                                       const PipelineConfig& cfg) {
  const Eigen::MatrixXd emb = embed(model, w.whitened);
  if (w.sequence) {
    return temporal_pool(pearson_normalized_rows(emb), w.sequence,
                         cfg.temporal_radius);
  }
  return pearson_similarity(emb);
}

CliqueAssignment mine_cliques(const SimilarityMatrix& s,
                              const PipelineConfig& cfg) {
  // Merge before capping: the clique target bounds the label count handed to
  // batch selection, so it has to apply to the post-merge pool. Capping the
  // raw seed cliques first would starve the merge of the overlap chains it
  // needs and bias the survivors toward whatever happened to grow largest.
  CliqueAssignment merged =
      merge_cliques(build_cliques(s, cfg.cliques), s, cfg.cliques.merge_stop_ratio);
  if (merged.clique_count() <= cfg.clique_target) {
    return merged;
  }
  std::vector<int> order(merged.members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return merged.members[static_cast<std::size_t>(a)].size() >
           merged.members[static_cast<std::size_t>(b)].size();
  });
  order.resize(static_cast<std::size_t>(cfg.clique_target));
  std::sort(order.begin(), order.end());
  CliqueAssignment kept;
  kept.n_samples = merged.n_samples;
  kept.members.reserve(order.size());
  for (int idx : order) {
    kept.members.push_back(std::move(merged.members[static_cast<std::size_t>(idx)]));
  }
  return kept;
}

int effective_cliques_per_batch(int clique_count, const BatchOptParams& p) {
  if (clique_count >= 2 * p.cliques_per_batch) {
    return p.cliques_per_batch;
  }
  return std::max(2, clique_count / 2);
}

Eigen::MatrixXd solver_clique_similarity(const CliqueAssignment& cl,
                                         const SimilarityMatrix& s) {
  Eigen::MatrixXd sp = condition_psd(clique_similarity(cl, s));
  const double scale = sp.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    sp /= scale;
  }
  return sp;
}

RoundMetrics compute_round_metrics(int round, const RoundArtifacts& art,
                                   const Eigen::MatrixXd& whitened,
                                   const GroundTruth* gt,
                                   const std::vector<std::string>& row_ids) {
  RoundMetrics m;
  m.round = round;
  m.similarity_source = to_string(art.similarity.source);
  if (gt != nullptr) {
    m.mean_auc = retrieval_eval(art.similarity, *gt, row_ids).mean_auc;
  }
  m.k90 = k90(spectrum(art.similarity));
  if (art.cliques) {
    m.clique_count = art.cliques->clique_count();
    m.mean_clique_size = art.cliques->mean_clique_size();
  }
  if (art.cliques && art.batches) {
    std::vector<char> covered(
        static_cast<std::size_t>(art.cliques->n_samples), 0);
    for (int b = 0; b < art.batches->batch_count(); ++b) {
      for (int k = 0; k < art.batches->clique_count(); ++k) {
        if (art.batches->x(b, k) != 1.0) {
          continue;
        }
        for (int i : art.cliques->members[static_cast<std::size_t>(k)]) {
          covered[static_cast<std::size_t>(i)] = 1;
        }
      }
    }
    const auto hit = std::count(covered.begin(), covered.end(), 1);
    m.coverage_fraction = static_cast<double>(hit) /
                          static_cast<double>(art.cliques->n_samples);
  }
  if (art.model && art.cliques && art.batches) {
    m.train_accuracy =
        batch_accuracy(*art.model, *art.batches, *art.cliques, whitened);
  }
  if (art.solve_report) {
    m.cccp_final_objective = art.solve_report->final_objective;
  }
  return m;
}

std::vector<RoundArtifacts> run_mil(const ExemplarSet& data,
                                    const PipelineConfig& cfg,
                                    const GroundTruth* gt) {
  cfg.validate();
  data.validate();
  if (gt != nullptr) {
    gt->validate();
  }
  const WhitenedSet w =
      at_stage("whiten", [&] { return whiten(data, cfg.whiten_ridge); });
  SimilarityMatrix working =
      at_stage("similarity", [&] { return dot_similarity(w); });

  std::vector<RoundArtifacts> rounds;
  rounds.reserve(static_cast<std::size_t>(cfg.mil_rounds) + 1);
  EmbeddingModel model;
  bool have_model = false;

  for (int t = 0; t < cfg.mil_rounds; ++t) {
    RoundArtifacts art;
    art.similarity = working;

    CliqueAssignment cl = at_stage(stage_tag(t, "cliques"), [&] {
      CliqueAssignment mined = mine_cliques(working, cfg);
      if (mined.clique_count() < 2) {
        throw DataError("mined " + std::to_string(mined.clique_count()) +
                        " cliques; at least 2 are needed (lower "
                        "cliques.min_mutual_sim_quantile)");
      }
      return mined;
    });

    BatchOptParams bp = cfg.batches;
    bp.cliques_per_batch =
        effective_cliques_per_batch(cl.clique_count(), cfg.batches);
    auto [rounded, report] = at_stage(stage_tag(t, "batches"), [&] {
      bp.validate(cl.clique_count());
      const Eigen::MatrixXd sp = solver_clique_similarity(cl, working);
      auto [solution, rep] =
          cccp_solve(sp, cl, bp, round_solver_seed(cfg.seed, t));
      return std::make_pair(round_batches(solution, bp), std::move(rep));
    });

    EmbeddingModel fresh =
        init_model(static_cast<int>(data.dim()), cfg.hidden_dim, cfg.embed_dim,
                   cl.clique_count(), round_model_seed(cfg.seed, t));
    if (cfg.warm_start && have_model) {
      // Keep the trunk, reinitialize the classifier head: the clique set (and
      // with it the label space) changes between rounds.
      fresh.w1 = model.w1;
      fresh.b1 = model.b1;
      fresh.w2 = model.w2;
      fresh.b2 = model.b2;
    }
    model = std::move(fresh);
    have_model = true;

    TrainerConfig tc = cfg.trainer;
    tc.seed = round_trainer_seed(cfg.seed, t);
    TrainReport train_report = at_stage(stage_tag(t, "train"), [&] {
      return train(model, rounded, cl, w.whitened, tc);
    });

    art.cliques = std::move(cl);
    art.batches = std::move(rounded);
    art.solve_report = std::move(report);
    art.model = model;
    art.train_report = std::move(train_report);
    art.metrics = compute_round_metrics(t, art, w.whitened, gt, data.ids);
    rounds.push_back(std::move(art));

    working = at_stage(stage_tag(t, "pool"), [&] {
      return next_round_similarity(model, w, cfg);
    });
  }

  RoundArtifacts last;
  last.similarity = std::move(working);
  last.metrics =
      compute_round_metrics(cfg.mil_rounds, last, w.whitened, gt, data.ids);
  rounds.push_back(std::move(last));
  return rounds;
}

void save_round(const std::filesystem::path& out_dir, int index,
                const RoundArtifacts& round) {
  const std::filesystem::path dir = round_dir(out_dir, index);
  std::filesystem::create_directories(dir);
  save_matrix(dir / "similarity.bin", round.similarity.values);
  if (round.cliques) {
    save_cliques_csv(dir / "cliques.csv", *round.cliques);
  }
  if (round.batches) {
    save_matrix(dir / "batches.bin", round.batches->x);
  }
  if (round.solve_report) {
    save_solve_report(dir / "solve_report.json", *round.solve_report);
  }
  if (round.model) {
    save_model(dir / "model.cmdl", *round.model);
  }
  if (round.train_report) {
    save_train_report(dir / "train_report.csv", *round.train_report);
  }
  save_round_metrics(out_dir, index, round.metrics);
}

RoundArtifacts load_round(const std::filesystem::path& out_dir, int index) {
  const std::filesystem::path dir = round_dir(out_dir, index);
  if (!std::filesystem::exists(dir)) {
    throw DataError("missing round directory " + dir.string());
  }
  RoundArtifacts art;
  art.metrics = load_round_metrics(out_dir, index);
  art.similarity.values = load_matrix(dir / "similarity.bin");
  art.similarity.source =
      similarity_source_from_string(art.metrics.similarity_source);
  art.similarity.validate();
  if (std::filesystem::exists(dir / "cliques.csv")) {
    art.cliques = load_cliques_csv(dir / "cliques.csv",
                                   static_cast<int>(art.similarity.n()));
    BatchAssignment batches;
    batches.x = load_matrix(dir / "batches.bin");
    batches.rounded = true;
    const int r = static_cast<int>(std::lround(batches.x.row(0).sum()));
    batches.validate(r);
    art.batches = std::move(batches);
    art.solve_report = load_solve_report(dir / "solve_report.json");
    art.model = load_model(dir / "model.cmdl");
    TrainReport train_report = load_train_report(dir / "train_report.csv");
    if (art.metrics.train_accuracy) {
      train_report.final_accuracy = *art.metrics.train_accuracy;
    }
    art.train_report = std::move(train_report);
  }
  return art;
}

void save_round_metrics(const std::filesystem::path& out_dir, int index,
                        const RoundMetrics& metrics) {
  const std::filesystem::path dir = round_dir(out_dir, index);
  std::filesystem::create_directories(dir);
  write_json_file(dir / "metrics.json", metrics_to_json(metrics));
}

RoundMetrics load_round_metrics(const std::filesystem::path& out_dir,
                                int index) {
  const std::filesystem::path path = round_dir(out_dir, index) / "metrics.json";
  return metrics_from_json(read_json_file(path), path.string());
}

void write_summary_metrics(const std::filesystem::path& out_dir,
                           const std::vector<RoundMetrics>& rounds) {
  ordered_json doc;
  doc["rounds"] = ordered_json::array();
  for (const auto& m : rounds) {
    doc["rounds"].push_back(metrics_to_json(m));
  }
  write_json_file(out_dir / "metrics.json", doc);
}

}  // namespace csim
