#include "csim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "csim/common.hpp"

namespace csim {
namespace {

Eigen::VectorXd relu(const Eigen::VectorXd& v) {
  return v.cwiseMax(0.0);
}

// Softmax log-probabilities restricted to `active` (all classes when empty),
// computed with the usual max-shift for stability. Inactive entries stay at
// -inf.
Eigen::VectorXd masked_log_softmax(const Eigen::VectorXd& logits,
                                   std::span<const int> active) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(
      logits.size(), -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  const auto each = [&](auto&& fn) {
    if (active.empty()) {
      for (Eigen::Index k = 0; k < logits.size(); ++k) {
        fn(static_cast<int>(k));
      }
    } else {
      for (int k : active) {
        fn(k);
      }
    }
  };
  each([&](int k) { mx = std::max(mx, logits[k]); });
  double denom = 0.0;
  each([&](int k) { denom += std::exp(logits[k] - mx); });
  const double log_denom = std::log(denom);
  each([&](int k) { out[k] = logits[k] - mx - log_denom; });
  return out;
}

struct ForwardCache {
  Eigen::VectorXd h1;  // post-relu hidden
  Eigen::VectorXd h2;  // post-relu embedding
  Eigen::VectorXd logits;
};

ForwardCache forward_cached(const EmbeddingModel& m,
                            const Eigen::VectorXd& input) {
  ForwardCache c;
  c.h1 = relu(m.w1 * input + m.b1);
  c.h2 = relu(m.w2 * c.h1 + m.b2);
  c.logits = m.w3 * c.h2 + m.b3;
  return c;
}

void check_active(std::span<const int> active, int class_count) {
  for (int k : active) {
    if (k < 0 || k >= class_count) {
      throw std::invalid_argument("active class " + std::to_string(k) +
                                  " out of range");
    }
  }
}

}  // namespace

void EmbeddingModel::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1 || class_count < 1) {
    throw std::invalid_argument("model dimensions must all be >= 1");
  }
  const bool shapes_ok =
      w1.rows() == hidden_dim && w1.cols() == input_dim &&
      b1.size() == hidden_dim && w2.rows() == embed_dim &&
      w2.cols() == hidden_dim && b2.size() == embed_dim &&
      w3.rows() == class_count && w3.cols() == embed_dim &&
      b3.size() == class_count;
  if (!shapes_ok) {
    throw std::invalid_argument("model parameter shapes are inconsistent");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() ||
      !b2.allFinite() || !w3.allFinite() || !b3.allFinite()) {
    throw DataError("model parameters contain non-finite values");
  }
}

ModelGrad ModelGrad::zeros_like(const EmbeddingModel& m) {
  ModelGrad g;
  g.w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(m.b1.size());
  g.w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  g.b2 = Eigen::VectorXd::Zero(m.b2.size());
  g.w3 = Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols());
  g.b3 = Eigen::VectorXd::Zero(m.b3.size());
  return g;
}

OptimizerState OptimizerState::zeros_like(const EmbeddingModel& m) {
  OptimizerState s;
  s.velocity = ModelGrad::zeros_like(m);
  s.accum_sq = ModelGrad::zeros_like(m);
  return s;
}

void TrainerConfig::validate() const {
  if (sgd_batch_size < 1) {
    throw std::invalid_argument("sgd_batch_size must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("weight_decay must be >= 0");
  }
  if (iterations < 0) {
    throw std::invalid_argument("iterations must be >= 0");
  }
  if (!(adaptive_smoothing > 0.0)) {
    throw std::invalid_argument("adaptive_smoothing must be positive");
  }
}

EmbeddingModel init_model(int input_dim, int hidden_dim, int embed_dim,
                          int class_count, uint64_t seed) {
  EmbeddingModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.embed_dim = embed_dim;
  m.class_count = class_count;
  Rng rng(derive_seed(seed, 0x3D0D));
  const auto fill = [&rng](Eigen::MatrixXd& w, int rows, int cols) {
    w.resize(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        w(i, j) = scale * rng.gaussian();
      }
    }
  };
  fill(m.w1, hidden_dim, input_dim);
  fill(m.w2, embed_dim, hidden_dim);
  fill(m.w3, class_count, embed_dim);
  m.b1 = Eigen::VectorXd::Zero(hidden_dim);
  m.b2 = Eigen::VectorXd::Zero(embed_dim);
  m.b3 = Eigen::VectorXd::Zero(class_count);
  m.validate();
  return m;
}

ForwardResult forward(const EmbeddingModel& m, const Eigen::VectorXd& input) {
  m.validate();
  if (input.size() != m.input_dim) {
    throw std::invalid_argument("input dimension mismatch");
  }
  ForwardCache c = forward_cached(m, input);
  return {std::move(c.h2), std::move(c.logits)};
}

std::pair<double, ModelGrad> loss_and_grad(
    const EmbeddingModel& m, const Eigen::MatrixXd& data,
    std::span<const int> rows, std::span<const int> labels,
    double weight_decay, std::span<const int> active_classes) {
  m.validate();
  if (rows.size() != labels.size() || rows.empty()) {
    throw std::invalid_argument("rows and labels must be nonempty and equal");
  }
  if (data.cols() != m.input_dim) {
    throw std::invalid_argument("data dimension mismatch");
  }
  check_active(active_classes, m.class_count);

  ModelGrad g = ModelGrad::zeros_like(m);
  double loss = 0.0;
  const double inv_m = 1.0 / static_cast<double>(rows.size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    const int row = rows[s];
    const int label = labels[s];
    if (row < 0 || row >= data.rows()) {
      throw std::invalid_argument("sample row out of range");
    }
    if (label < 0 || label >= m.class_count) {
      throw std::invalid_argument("label out of range");
    }
    if (!active_classes.empty() &&
        std::find(active_classes.begin(), active_classes.end(), label) ==
            active_classes.end()) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " not in the active class set");
    }
    const Eigen::VectorXd input = data.row(row).transpose();
    const ForwardCache c = forward_cached(m, input);
    const Eigen::VectorXd logp = masked_log_softmax(c.logits, active_classes);
    loss -= inv_m * logp[label];

    // d loss / d logits = (softmax - onehot) / M on the active set, zero on
    // inactive logits.
    Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(m.class_count);
    if (active_classes.empty()) {
      dlogits = logp.array().exp().matrix() * inv_m;
    } else {
      for (int k : active_classes) {
        dlogits[k] = std::exp(logp[k]) * inv_m;
      }
    }
    dlogits[label] -= inv_m;

    g.w3.noalias() += dlogits * c.h2.transpose();
    g.b3 += dlogits;
    Eigen::VectorXd dh2 = m.w3.transpose() * dlogits;
    for (Eigen::Index i = 0; i < dh2.size(); ++i) {
      if (c.h2[i] <= 0.0) {
        dh2[i] = 0.0;
      }
    }
    g.w2.noalias() += dh2 * c.h1.transpose();
    g.b2 += dh2;
    Eigen::VectorXd dh1 = m.w2.transpose() * dh2;
    for (Eigen::Index i = 0; i < dh1.size(); ++i) {
      if (c.h1[i] <= 0.0) {
        dh1[i] = 0.0;
      }
    }
    g.w1.noalias() += dh1 * input.transpose();
    g.b1 += dh1;
  }

  if (weight_decay > 0.0) {
    loss += 0.5 * weight_decay *
            (m.w1.squaredNorm() + m.w2.squaredNorm() + m.w3.squaredNorm());
    g.w1 += weight_decay * m.w1;
    g.w2 += weight_decay * m.w2;
    g.w3 += weight_decay * m.w3;
  }
  return {loss, std::move(g)};
}

void sgd_step(EmbeddingModel& m, OptimizerState& state, const ModelGrad& grad,
              const TrainerConfig& cfg) {
  cfg.validate();
  const auto update = [&](auto& w, auto& v, auto& acc, const auto& g) {
    if (cfg.mode == OptimizerMode::adaptive) {
      acc.array() += g.array().square();
      const auto lr = cfg.learning_rate /
                      (acc.array().sqrt() + cfg.adaptive_smoothing);
      v = cfg.momentum * v - (lr * g.array()).matrix();
    } else {
      v = cfg.momentum * v - cfg.learning_rate * g;
    }
    w += v;
  };
  update(m.w1, state.velocity.w1, state.accum_sq.w1, grad.w1);
  update(m.b1, state.velocity.b1, state.accum_sq.b1, grad.b1);
  update(m.w2, state.velocity.w2, state.accum_sq.w2, grad.w2);
  update(m.b2, state.velocity.b2, state.accum_sq.b2, grad.b2);
  update(m.w3, state.velocity.w3, state.accum_sq.w3, grad.w3);
  update(m.b3, state.velocity.b3, state.accum_sq.b3, grad.b3);
  state.iteration += 1;
}

namespace {

// Flattened (sample, label) slots of one batch row plus its active cliques.
struct RowSlots {
  std::vector<int> rows;
  std::vector<int> labels;
  std::vector<int> active;
};

std::vector<RowSlots> batch_slots(const BatchAssignment& batches,
                                  const CliqueAssignment& cl) {
  std::vector<RowSlots> out(batches.batch_count());
  for (int b = 0; b < batches.batch_count(); ++b) {
    RowSlots& slots = out[b];
    for (int k = 0; k < batches.clique_count(); ++k) {
      if (batches.x(b, k) != 1.0) {
        continue;
      }
      slots.active.push_back(k);
      for (int i : cl.members[k]) {
        slots.rows.push_back(i);
        slots.labels.push_back(k);
      }
    }
  }
  return out;
}

}  // namespace

TrainReport train(EmbeddingModel& m, const BatchAssignment& batches,
                  const CliqueAssignment& cl, const Eigen::MatrixXd& data,
                  const TrainerConfig& cfg) {
  cfg.validate();
  cl.validate();
  m.validate();
  if (batches.clique_count() != cl.clique_count()) {
    throw std::invalid_argument("batch assignment and cliques disagree on K");
  }
  if (!batches.rounded) {
    throw std::invalid_argument("training expects a rounded batch assignment");
  }
  if (m.class_count != cl.clique_count()) {
    throw std::invalid_argument("model head size must equal the clique count");
  }
  if (data.cols() != m.input_dim) {
    throw std::invalid_argument("data dimension mismatch");
  }

  const std::vector<RowSlots> slots = batch_slots(batches, cl);
  Rng rng(derive_seed(cfg.seed, 0x7A41));
  OptimizerState state = OptimizerState::zeros_like(m);
  TrainReport report;
  report.loss_curve.reserve(cfg.iterations);

  std::vector<int> rows(cfg.sgd_batch_size);
  std::vector<int> labels(cfg.sgd_batch_size);
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto& row_slots = slots[rng.uniform_index(slots.size())];
    for (int s = 0; s < cfg.sgd_batch_size; ++s) {
      const std::size_t pick = rng.uniform_index(row_slots.rows.size());
      rows[s] = row_slots.rows[pick];
      labels[s] = row_slots.labels[pick];
    }
    auto [loss, grad] = loss_and_grad(m, data, rows, labels, cfg.weight_decay,
                                      row_slots.active);
    sgd_step(m, state, grad, cfg);
    report.loss_curve.push_back(loss);
  }

  report.final_accuracy = batch_accuracy(m, batches, cl, data);
  return report;
}

double batch_accuracy(const EmbeddingModel& m, const BatchAssignment& batches,
                      const CliqueAssignment& cl, const Eigen::MatrixXd& data) {
  m.validate();
  cl.validate();
  if (!batches.rounded || batches.clique_count() != cl.clique_count() ||
      m.class_count != cl.clique_count() || data.cols() != m.input_dim) {
    throw std::invalid_argument("batch accuracy inputs are inconsistent");
  }
  const std::vector<RowSlots> slots = batch_slots(batches, cl);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& row_slots : slots) {
    for (std::size_t s = 0; s < row_slots.rows.size(); ++s) {
      const ForwardCache c =
          forward_cached(m, data.row(row_slots.rows[s]).transpose());
      int best = -1;
      double best_logit = -std::numeric_limits<double>::infinity();
      for (int k : row_slots.active) {
        if (c.logits[k] > best_logit) {
          best_logit = c.logits[k];
          best = k;
        }
      }
      correct += (best == row_slots.labels[s]) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(correct) / static_cast<double>(total);
}

Eigen::MatrixXd embed(const EmbeddingModel& m, const Eigen::MatrixXd& data) {
  m.validate();
  if (data.cols() != m.input_dim) {
    throw std::invalid_argument("data dimension mismatch");
  }
  Eigen::MatrixXd out(data.rows(), m.embed_dim);
  parallel_for(static_cast<std::size_t>(data.rows()),
               [&](std::size_t lo, std::size_t hi) {
                 for (std::size_t i = lo; i < hi; ++i) {
                   const auto idx = static_cast<Eigen::Index>(i);
                   const ForwardCache c =
                       forward_cached(m, data.row(idx).transpose());
                   out.row(idx) = c.h2.transpose();
                 }
               });
  return out;
}

}  // namespace csim
