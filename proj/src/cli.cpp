#include "csim/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csim/common.hpp"
#include "csim/config.hpp"
#include "csim/eval.hpp"
#include "csim/io.hpp"
#include "csim/pipeline.hpp"
#include "csim/synthetic.hpp"
#include "csim/whiten.hpp"

namespace csim::cli {
namespace {

namespace fs = std::filesystem;

class StageTimer {
 public:
  StageTimer(std::string name, int verbose)
      : name_(std::move(name)),
        verbose_(verbose),
        start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    if (verbose_ < 1) {
      return;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    std::fprintf(stderr, "[csim] %s: %.2fs\n", name_.c_str(), seconds);
  }

 private:
  std::string name_;
  int verbose_;
  std::chrono::steady_clock::time_point start_;
};

struct Context {
  PipelineConfig cfg;
  fs::path out;
  int verbose = 0;
  fs::path data_override;
  fs::path groundtruth_override;
  int round = 0;
  bool spectra = false;
};

fs::path round_path(const Context& ctx, int t) {
  return ctx.out / ("round_" + std::to_string(t));
}

fs::path groundtruth_path(const Context& ctx) {
  return ctx.groundtruth_override.empty() ? ctx.out / "groundtruth.json"
                                          : ctx.groundtruth_override;
}

ExemplarSet load_input_data(const Context& ctx) {
  const fs::path path =
      ctx.data_override.empty() ? ctx.out / "data.bin" : ctx.data_override;
  return load_descriptors(path);
}

// Stage commands read the whitened rows back from disk; mean and transform
// are not persisted (nothing downstream needs them), so they are filled with
// neutral values here.
WhitenedSet load_whitened(const Context& ctx) {
  const ExemplarSet set = load_descriptors_binary(ctx.out / "whitened.bin");
  WhitenedSet w;
  w.whitened = set.descriptors;
  w.mean = Eigen::VectorXd::Zero(set.dim());
  w.transform = Eigen::MatrixXd::Identity(set.dim(), set.dim());
  w.sequence = set.sequence;
  w.ids = set.ids;
  return w;
}

SimilarityMatrix load_round_similarity(const Context& ctx, int t,
                                       bool sequenced) {
  SimilarityMatrix s;
  s.values = load_matrix(round_path(ctx, t) / "similarity.bin");
  s.source = round_source(t, sequenced);
  s.validate();
  return s;
}

CliqueAssignment load_round_cliques(const Context& ctx, int t, int n_samples) {
  return load_cliques_csv(round_path(ctx, t) / "cliques.csv", n_samples);
}

BatchAssignment load_round_batches(const Context& ctx, int t) {
  BatchAssignment b;
  b.x = load_matrix(round_path(ctx, t) / "batches.bin");
  b.rounded = true;
  b.validate(static_cast<int>(std::lround(b.x.row(0).sum())));
  return b;
}

void save_whitened(const Context& ctx, const WhitenedSet& w,
                   const std::vector<std::string>& ids) {
  ExemplarSet set;
  set.descriptors = w.whitened;
  set.ids = ids;
  set.sequence = w.sequence;
  save_descriptors_binary(ctx.out / "whitened.bin", set);
}

void print_metrics(const std::vector<RoundMetrics>& rounds) {
  for (const auto& m : rounds) {
    std::printf("round %d [%s] k90=%d", m.round, m.similarity_source.c_str(),
                m.k90);
    if (m.mean_auc) {
      std::printf(" auc=%.4f", *m.mean_auc);
    }
    if (m.clique_count) {
      std::printf(" cliques=%d (mean size %.1f)", *m.clique_count,
                  m.mean_clique_size.value_or(0.0));
    }
    if (m.coverage_fraction) {
      std::printf(" coverage=%.3f", *m.coverage_fraction);
    }
    if (m.train_accuracy) {
      std::printf(" acc=%.3f", *m.train_accuracy);
    }
    std::printf("\n");
  }
}

int cmd_synth(const Context& ctx) {
  StageTimer timer("synth", ctx.verbose);
  fs::create_directories(ctx.out);
  const SyntheticData syn = generate_synthetic(ctx.cfg.resolved_synth());
  save_descriptors_binary(ctx.out / "data.bin", syn.exemplars);
  save_ground_truth(ctx.out / "groundtruth.json", syn.ground_truth);
  if (ctx.verbose > 0) {
    std::fprintf(stderr, "[csim] synth: %lld rows, %lld dims, %zu queries\n",
                 static_cast<long long>(syn.exemplars.size()),
                 static_cast<long long>(syn.exemplars.dim()),
                 syn.ground_truth.queries.size());
  }
  return 0;
}

int cmd_whiten(const Context& ctx) {
  StageTimer timer("whiten", ctx.verbose);
  const ExemplarSet data = load_input_data(ctx);
  const WhitenedSet w = whiten(data, ctx.cfg.whiten_ridge);
  fs::create_directories(ctx.out);
  save_whitened(ctx, w, data.ids);
  return 0;
}

int cmd_sim(const Context& ctx) {
  StageTimer timer("sim", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);
  const SimilarityMatrix s = dot_similarity(w);
  fs::create_directories(round_path(ctx, 0));
  save_matrix(round_path(ctx, 0) / "similarity.bin", s.values);
  return 0;
}

int cmd_cliques(const Context& ctx) {
  StageTimer timer("cliques", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);
  const SimilarityMatrix s =
      load_round_similarity(ctx, ctx.round, w.sequence.has_value());
  const CliqueAssignment cl = mine_cliques(s, ctx.cfg);
  if (cl.clique_count() < 2) {
    throw DataError("round " + std::to_string(ctx.round) + " mined " +
                    std::to_string(cl.clique_count()) +
                    " cliques; at least 2 are needed (lower "
                    "cliques.min_mutual_sim_quantile)");
  }
  save_cliques_csv(round_path(ctx, ctx.round) / "cliques.csv", cl);
  if (ctx.verbose > 0) {
    std::fprintf(stderr, "[csim] cliques: %d cliques, mean size %.2f\n",
                 cl.clique_count(), cl.mean_clique_size());
  }
  return 0;
}

int cmd_batches(const Context& ctx) {
  StageTimer timer("batches", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);
  const SimilarityMatrix s =
      load_round_similarity(ctx, ctx.round, w.sequence.has_value());
  const CliqueAssignment cl =
      load_round_cliques(ctx, ctx.round, static_cast<int>(s.n()));

  BatchOptParams bp = ctx.cfg.batches;
  bp.cliques_per_batch =
      effective_cliques_per_batch(cl.clique_count(), ctx.cfg.batches);
  bp.validate(cl.clique_count());

  const Eigen::MatrixXd sp = solver_clique_similarity(cl, s);
  const auto [solution, report] =
      cccp_solve(sp, cl, bp, round_solver_seed(ctx.cfg.seed, ctx.round));
  const BatchAssignment rounded = round_batches(solution, bp);

  save_matrix(round_path(ctx, ctx.round) / "batches.bin", rounded.x);
  save_solve_report(round_path(ctx, ctx.round) / "solve_report.json", report);
  if (ctx.verbose > 0) {
    std::fprintf(stderr,
                 "[csim] batches: objective %.6f after %zu outer iterations, "
                 "rounding gap %.3g\n",
                 report.final_objective, report.objective_trace.size() - 1,
                 report.rounding_gap);
  }
  return 0;
}

int cmd_train(const Context& ctx) {
  StageTimer timer("train", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);
  const CliqueAssignment cl = load_round_cliques(
      ctx, ctx.round, static_cast<int>(w.whitened.rows()));
  const BatchAssignment batches = load_round_batches(ctx, ctx.round);

  EmbeddingModel model = init_model(
      static_cast<int>(w.whitened.cols()), ctx.cfg.hidden_dim,
      ctx.cfg.embed_dim, cl.clique_count(),
      round_model_seed(ctx.cfg.seed, ctx.round));
  if (ctx.cfg.warm_start && ctx.round > 0) {
    const fs::path prev = round_path(ctx, ctx.round - 1) / "model.cmdl";
    if (!fs::exists(prev)) {
      throw DataError("warm start needs " + prev.string() +
                      "; train round " + std::to_string(ctx.round - 1) +
                      " first or disable warm_start");
    }
    const EmbeddingModel previous = load_model(prev);
    model.w1 = previous.w1;
    model.b1 = previous.b1;
    model.w2 = previous.w2;
    model.b2 = previous.b2;
  }

  TrainerConfig tc = ctx.cfg.trainer;
  tc.seed = round_trainer_seed(ctx.cfg.seed, ctx.round);
  const TrainReport report = train(model, batches, cl, w.whitened, tc);

  save_model(round_path(ctx, ctx.round) / "model.cmdl", model);
  save_train_report(round_path(ctx, ctx.round) / "train_report.csv", report);
  if (ctx.verbose > 0) {
    std::fprintf(stderr, "[csim] train: final accuracy %.3f\n",
                 report.final_accuracy);
  }
  return 0;
}

int cmd_pool(const Context& ctx) {
  StageTimer timer("pool", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);
  const EmbeddingModel model =
      load_model(round_path(ctx, ctx.round) / "model.cmdl");
  const SimilarityMatrix next = next_round_similarity(model, w, ctx.cfg);
  fs::create_directories(round_path(ctx, ctx.round + 1));
  save_matrix(round_path(ctx, ctx.round + 1) / "similarity.bin", next.values);
  return 0;
}

int cmd_eval(const Context& ctx) {
  StageTimer timer("eval", ctx.verbose);
  const WhitenedSet w = load_whitened(ctx);

  RoundArtifacts art;
  art.similarity =
      load_round_similarity(ctx, ctx.round, w.sequence.has_value());
  const fs::path dir = round_path(ctx, ctx.round);
  if (fs::exists(dir / "cliques.csv")) {
    art.cliques = load_round_cliques(ctx, ctx.round,
                                     static_cast<int>(art.similarity.n()));
    art.batches = load_round_batches(ctx, ctx.round);
    art.solve_report = load_solve_report(dir / "solve_report.json");
    art.model = load_model(dir / "model.cmdl");
  }

  GroundTruth gt;
  const GroundTruth* gt_ptr = nullptr;
  if (fs::exists(groundtruth_path(ctx))) {
    gt = load_ground_truth(groundtruth_path(ctx));
    gt_ptr = &gt;
  }

  std::vector<std::string> ids = w.ids;
  const fs::path data_file =
      ctx.data_override.empty() ? ctx.out / "data.bin" : ctx.data_override;
  if (fs::exists(data_file)) {
    ids = load_descriptors(data_file).ids;
  }

  const RoundMetrics metrics =
      compute_round_metrics(ctx.round, art, w.whitened, gt_ptr, ids);
  save_round_metrics(ctx.out, ctx.round, metrics);
  print_metrics({metrics});
  return 0;
}

int cmd_run(const Context& ctx) {
  StageTimer timer("run", ctx.verbose);
  fs::create_directories(ctx.out);

  ExemplarSet data;
  GroundTruth gt;
  bool have_gt = false;
  if (!ctx.data_override.empty()) {
    data = load_descriptors(ctx.data_override);
    if (fs::exists(groundtruth_path(ctx))) {
      gt = load_ground_truth(groundtruth_path(ctx));
      have_gt = true;
    }
  } else {
    StageTimer synth_timer("run/synth", ctx.verbose);
    SyntheticData syn = generate_synthetic(ctx.cfg.resolved_synth());
    save_descriptors_binary(ctx.out / "data.bin", syn.exemplars);
    save_ground_truth(ctx.out / "groundtruth.json", syn.ground_truth);
    data = std::move(syn.exemplars);
    gt = std::move(syn.ground_truth);
    have_gt = true;
  }

  {
    StageTimer whiten_timer("run/whiten", ctx.verbose);
    const WhitenedSet w = whiten(data, ctx.cfg.whiten_ridge);
    save_whitened(ctx, w, data.ids);
  }

  const std::vector<RoundArtifacts> rounds =
      run_mil(data, ctx.cfg, have_gt ? &gt : nullptr);

  std::vector<RoundMetrics> metrics;
  metrics.reserve(rounds.size());
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    save_round(ctx.out, static_cast<int>(i), rounds[i]);
    metrics.push_back(rounds[i].metrics);
  }
  write_summary_metrics(ctx.out, metrics);
  print_metrics(metrics);
  return 0;
}

int cmd_report(const Context& ctx) {
  StageTimer timer("report", ctx.verbose);
  std::vector<RoundMetrics> metrics;
  for (int t = 0;; ++t) {
    if (!fs::exists(round_path(ctx, t) / "metrics.json")) {
      break;
    }
    metrics.push_back(load_round_metrics(ctx.out, t));
  }
  if (metrics.empty()) {
    throw DataError("no round metrics under " + ctx.out.string() +
                    "; run the pipeline (or its stages) first");
  }
  write_summary_metrics(ctx.out, metrics);
  if (ctx.spectra) {
    for (std::size_t t = 0; t < metrics.size(); ++t) {
      const fs::path sim = round_path(ctx, static_cast<int>(t)) /
                           "similarity.bin";
      if (!fs::exists(sim)) {
        continue;
      }
      SimilarityMatrix s;
      s.values = load_matrix(sim);
      s.source =
          similarity_source_from_string(metrics[t].similarity_source);
      s.validate();
      spectrum_report(s, round_path(ctx, static_cast<int>(t)) /
                             "spectrum.csv");
    }
  }
  print_metrics(metrics);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"unsupervised exemplar similarity pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string data_path;
  std::string gt_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  int verbose = 0;
  int round = 0;
  bool spectra = false;

  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--set", overrides,
                 "configuration override key=value (repeatable, dotted keys)");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", out_dir, "working directory (overrides the config)");
  app.add_flag("-v,--verbose", verbose, "print stage timings to stderr");

  CLI::App* c_synth = app.add_subcommand(
      "synth", "generate the synthetic dataset and its ground truth");
  CLI::App* c_whiten =
      app.add_subcommand("whiten", "whiten the descriptors");
  c_whiten->add_option("--data", data_path,
                       "descriptor file (default: <out>/data.bin)");
  CLI::App* c_sim = app.add_subcommand(
      "sim", "whitened dot-product similarity for round 0");
  CLI::App* c_cliques =
      app.add_subcommand("cliques", "mine cliques for one round");
  CLI::App* c_batches = app.add_subcommand(
      "batches", "select the training batches for one round");
  CLI::App* c_train =
      app.add_subcommand("train", "train the embedding for one round");
  CLI::App* c_pool = app.add_subcommand(
      "pool", "similarity of the next round from a trained model");
  CLI::App* c_eval =
      app.add_subcommand("eval", "metrics of one round's artifacts");
  c_eval->add_option("--data", data_path,
                     "descriptor file (default: <out>/data.bin)");
  c_eval->add_option("--groundtruth", gt_path,
                     "ground truth file (default: <out>/groundtruth.json)");
  CLI::App* c_run =
      app.add_subcommand("run", "full pipeline: synth/whiten/mil/report");
  c_run->add_option("--data", data_path,
                    "descriptor file (default: generate synthetic data)");
  c_run->add_option("--groundtruth", gt_path,
                    "ground truth file (default: <out>/groundtruth.json)");
  CLI::App* c_report = app.add_subcommand(
      "report", "collect per-round metrics into the summary");
  c_report->add_flag("--spectra", spectra,
                     "also write per-round cumulative spectrum CSVs");

  for (CLI::App* sub : {c_synth, c_whiten, c_sim, c_cliques, c_batches,
                        c_train, c_pool, c_eval, c_run, c_report}) {
    sub->fallthrough();
  }
  for (CLI::App* sub : {c_cliques, c_batches, c_train, c_pool, c_eval}) {
    sub->add_option("--round", round, "round index (default 0)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Context ctx;
    if (!config_path.empty()) {
      ctx.cfg = load_config(config_path);
    }
    for (const std::string& assignment : overrides) {
      apply_override(ctx.cfg, assignment);
    }
    if (seed_opt->count() > 0) {
      ctx.cfg.seed = seed;
    }
    if (!out_dir.empty()) {
      ctx.cfg.output_dir = out_dir;
    }
    ctx.cfg.validate();
    ctx.out = ctx.cfg.output_dir;
    ctx.verbose = verbose;
    ctx.data_override = data_path;
    ctx.groundtruth_override = gt_path;
    ctx.round = round;
    ctx.spectra = spectra;
    if (round < 0) {
      throw std::invalid_argument("--round must be >= 0");
    }

    if (app.got_subcommand(c_synth)) return cmd_synth(ctx);
    if (app.got_subcommand(c_whiten)) return cmd_whiten(ctx);
    if (app.got_subcommand(c_sim)) return cmd_sim(ctx);
    if (app.got_subcommand(c_cliques)) return cmd_cliques(ctx);
    if (app.got_subcommand(c_batches)) return cmd_batches(ctx);
    if (app.got_subcommand(c_train)) return cmd_train(ctx);
    if (app.got_subcommand(c_pool)) return cmd_pool(ctx);
    if (app.got_subcommand(c_eval)) return cmd_eval(ctx);
    if (app.got_subcommand(c_run)) return cmd_run(ctx);
    if (app.got_subcommand(c_report)) return cmd_report(ctx);
    throw std::invalid_argument("no subcommand given");
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace csim::cli
