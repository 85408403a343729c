#include "csim/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csim/common.hpp"

namespace csim {
namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void bad_key(const std::string& path) {
  throw DataError("unknown config key: " + path);
}

double as_double(const ordered_json& v, const std::string& path) {
  if (!v.is_number()) {
    throw DataError("config key " + path + " must be a number");
  }
  return v.get<double>();
}

int as_int(const ordered_json& v, const std::string& path) {
  if (!v.is_number_integer()) {
    throw DataError("config key " + path + " must be an integer");
  }
  return v.get<int>();
}

uint64_t as_u64(const ordered_json& v, const std::string& path) {
  if (!v.is_number_unsigned() &&
      !(v.is_number_integer() && v.get<int64_t>() >= 0)) {
    throw DataError("config key " + path + " must be a nonnegative integer");
  }
  return v.get<uint64_t>();
}

bool as_bool(const ordered_json& v, const std::string& path) {
  if (!v.is_boolean()) {
    throw DataError("config key " + path + " must be a boolean");
  }
  return v.get<bool>();
}

std::string as_string(const ordered_json& v, const std::string& path) {
  if (!v.is_string()) {
    throw DataError("config key " + path + " must be a string");
  }
  return v.get<std::string>();
}

void apply_synth(SyntheticSpec& s, bool& seed_explicit, const ordered_json& doc,
                 const std::string& prefix) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix + key;
    if (key == "n_videos") {
      s.n_videos = as_int(value, path);
    } else if (key == "frames_per_video") {
      s.frames_per_video = as_int(value, path);
    } else if (key == "ambient_dim") {
      s.ambient_dim = as_int(value, path);
    } else if (key == "noise_sigma") {
      s.noise_sigma = as_double(value, path);
    } else if (key == "n_cycles") {
      s.n_cycles = as_double(value, path);
    } else if (key == "seed") {
      s.seed = as_u64(value, path);
      seed_explicit = true;
    } else {
      bad_key(path);
    }
  }
}

void apply_cliques(CliqueParams& c, const ordered_json& doc,
                   const std::string& prefix) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix + key;
    if (key == "seed_neighbors") {
      c.seed_neighbors = as_int(value, path);
    } else if (key == "min_mutual_sim_quantile") {
      c.min_mutual_sim_quantile = as_double(value, path);
    } else if (key == "merge_stop_ratio") {
      c.merge_stop_ratio = as_double(value, path);
    } else {
      bad_key(path);
    }
  }
}

void apply_batches(BatchOptParams& b, const ordered_json& doc,
                   const std::string& prefix) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix + key;
    if (key == "count") {
      b.batch_count = as_int(value, path);
    } else if (key == "cliques_per_batch") {
      b.cliques_per_batch = as_int(value, path);
    } else if (key == "p_norm") {
      b.p_norm = as_double(value, path);
    } else if (key == "lambda1") {
      b.lambda1 = as_double(value, path);
    } else if (key == "lambda2") {
      b.lambda2 = as_double(value, path);
    } else if (key == "lambda3") {
      b.lambda3 = as_double(value, path);
    } else if (key == "eps_smooth") {
      b.eps_smooth = as_double(value, path);
    } else if (key == "cccp_max_iters") {
      b.cccp_max_iters = as_int(value, path);
    } else if (key == "cccp_tol") {
      b.cccp_tol = as_double(value, path);
    } else if (key == "barrier_initial_weight") {
      b.barrier.initial_weight = as_double(value, path);
    } else if (key == "barrier_decay") {
      b.barrier.decay = as_double(value, path);
    } else if (key == "barrier_floor") {
      b.barrier.floor = as_double(value, path);
    } else if (key == "inner_tolerance") {
      b.barrier.inner_tolerance = as_double(value, path);
    } else if (key == "max_inner_iters") {
      b.barrier.max_inner_iters = as_int(value, path);
    } else {
      bad_key(path);
    }
  }
}

void apply_trainer(TrainerConfig& t, const ordered_json& doc,
                   const std::string& prefix) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix + key;
    if (key == "sgd_batch_size") {
      t.sgd_batch_size = as_int(value, path);
    } else if (key == "learning_rate") {
      t.learning_rate = as_double(value, path);
    } else if (key == "momentum") {
      t.momentum = as_double(value, path);
    } else if (key == "weight_decay") {
      t.weight_decay = as_double(value, path);
    } else if (key == "iterations") {
      t.iterations = as_int(value, path);
    } else if (key == "optimizer") {
      const std::string name = as_string(value, path);
      if (name == "momentum_sgd") {
        t.mode = OptimizerMode::momentum_sgd;
      } else if (name == "adaptive") {
        t.mode = OptimizerMode::adaptive;
      } else {
        throw DataError("config key " + path +
                        " must be 'momentum_sgd' or 'adaptive', got '" + name +
                        "'");
      }
    } else if (key == "adaptive_smoothing") {
      t.adaptive_smoothing = as_double(value, path);
    } else {
      bad_key(path);
    }
  }
}

void apply_json(PipelineConfig& cfg, const ordered_json& doc) {
  if (!doc.is_object()) {
    throw DataError("config root must be a JSON object");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "seed") {
      cfg.seed = as_u64(value, key);
    } else if (key == "output_dir") {
      cfg.output_dir = as_string(value, key);
    } else if (key == "mil_rounds") {
      cfg.mil_rounds = as_int(value, key);
    } else if (key == "temporal_radius") {
      cfg.temporal_radius = as_int(value, key);
    } else if (key == "warm_start") {
      cfg.warm_start = as_bool(value, key);
    } else if (key == "whiten_ridge") {
      if (value.is_string() && value.get<std::string>() == "auto") {
        cfg.whiten_ridge = kAutoRidge;
      } else {
        cfg.whiten_ridge = as_double(value, key);
      }
    } else if (key == "clique_target") {
      cfg.clique_target = as_int(value, key);
    } else if (key == "hidden_dim") {
      cfg.hidden_dim = as_int(value, key);
    } else if (key == "embed_dim") {
      cfg.embed_dim = as_int(value, key);
    } else if (key == "synth") {
      if (!value.is_object()) {
        throw DataError("config key synth must be an object");
      }
      apply_synth(cfg.synth, cfg.synth_seed_explicit, value, "synth.");
    } else if (key == "cliques") {
      if (!value.is_object()) {
        throw DataError("config key cliques must be an object");
      }
      apply_cliques(cfg.cliques, value, "cliques.");
    } else if (key == "batches") {
      if (!value.is_object()) {
        throw DataError("config key batches must be an object");
      }
      apply_batches(cfg.batches, value, "batches.");
    } else if (key == "trainer") {
      if (!value.is_object()) {
        throw DataError("config key trainer must be an object");
      }
      apply_trainer(cfg.trainer, value, "trainer.");
    } else {
      bad_key(key);
    }
  }
}

// Scalar override values come in as plain text: anything JSON would accept as
// a number or boolean is taken as such, the rest stays a string.
ordered_json parse_scalar(const std::string& text) {
  ordered_json v = ordered_json::parse(text, nullptr, false);
  if (!v.is_discarded() && (v.is_number() || v.is_boolean())) {
    return v;
  }
  return ordered_json(text);
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("cannot parse config: ") + e.what());
  }
  PipelineConfig cfg;
  apply_json(cfg, doc);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return config_from_json_text(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key=value, got '" +
                                assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  // Build the nested single-key document and push it through the same schema
  // walker the config file uses.
  ordered_json doc = parse_scalar(value);
  std::size_t end = key.size();
  while (true) {
    const std::size_t dot = key.rfind('.', end == 0 ? 0 : end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    const std::string part = key.substr(begin, end - begin);
    if (part.empty()) {
      throw std::invalid_argument("override key '" + key +
                                  "' has an empty path segment");
    }
    ordered_json wrapped;
    wrapped[part] = std::move(doc);
    doc = std::move(wrapped);
    if (dot == std::string::npos) {
      break;
    }
    end = dot;
  }
  try {
    apply_json(cfg, doc);
  } catch (const DataError& e) {
    // Overrides come from the command line, so schema violations are usage
    // errors there.
    throw std::invalid_argument(e.what());
  }
}

std::string config_to_json_text(const PipelineConfig& cfg) {
  ordered_json doc;
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  doc["mil_rounds"] = cfg.mil_rounds;
  doc["temporal_radius"] = cfg.temporal_radius;
  doc["warm_start"] = cfg.warm_start;
  if (cfg.whiten_ridge == kAutoRidge) {
    doc["whiten_ridge"] = "auto";
  } else {
    doc["whiten_ridge"] = cfg.whiten_ridge;
  }
  doc["clique_target"] = cfg.clique_target;
  doc["hidden_dim"] = cfg.hidden_dim;
  doc["embed_dim"] = cfg.embed_dim;

  ordered_json synth;
  synth["n_videos"] = cfg.synth.n_videos;
  synth["frames_per_video"] = cfg.synth.frames_per_video;
  synth["ambient_dim"] = cfg.synth.ambient_dim;
  synth["noise_sigma"] = cfg.synth.noise_sigma;
  synth["n_cycles"] = cfg.synth.n_cycles;
  if (cfg.synth_seed_explicit) {
    synth["seed"] = cfg.synth.seed;
  }
  doc["synth"] = std::move(synth);

  ordered_json cliques;
  cliques["seed_neighbors"] = cfg.cliques.seed_neighbors;
  cliques["min_mutual_sim_quantile"] = cfg.cliques.min_mutual_sim_quantile;
  cliques["merge_stop_ratio"] = cfg.cliques.merge_stop_ratio;
  doc["cliques"] = std::move(cliques);

  ordered_json batches;
  batches["count"] = cfg.batches.batch_count;
  batches["cliques_per_batch"] = cfg.batches.cliques_per_batch;
  batches["p_norm"] = cfg.batches.p_norm;
  batches["lambda1"] = cfg.batches.lambda1;
  batches["lambda2"] = cfg.batches.lambda2;
  batches["lambda3"] = cfg.batches.lambda3;
  batches["eps_smooth"] = cfg.batches.eps_smooth;
  batches["cccp_max_iters"] = cfg.batches.cccp_max_iters;
  batches["cccp_tol"] = cfg.batches.cccp_tol;
  batches["barrier_initial_weight"] = cfg.batches.barrier.initial_weight;
  batches["barrier_decay"] = cfg.batches.barrier.decay;
  batches["barrier_floor"] = cfg.batches.barrier.floor;
  batches["inner_tolerance"] = cfg.batches.barrier.inner_tolerance;
  batches["max_inner_iters"] = cfg.batches.barrier.max_inner_iters;
  doc["batches"] = std::move(batches);

  ordered_json trainer;
  trainer["sgd_batch_size"] = cfg.trainer.sgd_batch_size;
  trainer["learning_rate"] = cfg.trainer.learning_rate;
  trainer["momentum"] = cfg.trainer.momentum;
  trainer["weight_decay"] = cfg.trainer.weight_decay;
  trainer["iterations"] = cfg.trainer.iterations;
  trainer["optimizer"] = cfg.trainer.mode == OptimizerMode::adaptive
                             ? "adaptive"
                             : "momentum_sgd";
  trainer["adaptive_smoothing"] = cfg.trainer.adaptive_smoothing;
  doc["trainer"] = std::move(trainer);

  return doc.dump(2) + "\n";
}

}  // namespace csim
