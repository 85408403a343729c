#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "csim/batchopt.hpp"

namespace csim {

// Small feed-forward embedding network:
//   h1 = relu(W1 d + b1), h2 = relu(W2 h1 + b2), logits = W3 h2 + b3.
// h2 is the embedding used for similarity computation; the logits feed a
// softmax over surrogate clique labels.
struct EmbeddingModel {
  int input_dim = 0;   // D
  int hidden_dim = 0;  // H
  int embed_dim = 0;   // E
  int class_count = 0; // K

  Eigen::MatrixXd w1;  // H x D
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // E x H
  Eigen::VectorXd b2;  // E
  Eigen::MatrixXd w3;  // K x E
  Eigen::VectorXd b3;  // K

  void validate() const;
};

// Gradient (or any per-parameter quantity) with the same shapes as the model.
struct ModelGrad {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static ModelGrad zeros_like(const EmbeddingModel& m);
};

enum class OptimizerMode { momentum_sgd, adaptive };

struct TrainerConfig {
  int sgd_batch_size = 128;      // M
  double learning_rate = 0.001;  // alpha
  double momentum = 0.9;         // mu
  double weight_decay = 1e-4;    // lambda_w, applied to weights only
  int iterations = 2000;         // T
  OptimizerMode mode = OptimizerMode::momentum_sgd;
  double adaptive_smoothing = 1e-4;
  uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  ModelGrad velocity;
  ModelGrad accum_sq;  // adaptive mode only
  int64_t iteration = 0;

  static OptimizerState zeros_like(const EmbeddingModel& m);
};

// Gaussian init scaled by 1/sqrt(fan_in), zero biases. Deterministic per
// seed.
EmbeddingModel init_model(int input_dim, int hidden_dim, int embed_dim,
                          int class_count, uint64_t seed);

struct ForwardResult {
  Eigen::VectorXd embedding;  // E
  Eigen::VectorXd logits;     // K
};

ForwardResult forward(const EmbeddingModel& m, const Eigen::VectorXd& input);

// Mean softmax cross-entropy over the listed rows of `data` with surrogate
// labels, plus weight_decay/2 * ||W||^2 over the weight matrices (biases are
// not decayed). `active_classes`, when nonempty, restricts the softmax to
// that subset of logits: a training batch only competes the cliques it
// actually selected, so head rows of absent cliques receive nothing but the
// decay gradient. Labels must be active.
std::pair<double, ModelGrad> loss_and_grad(
    const EmbeddingModel& m, const Eigen::MatrixXd& data,
    std::span<const int> rows, std::span<const int> labels,
    double weight_decay, std::span<const int> active_classes = {});

// One update of
//   V <- momentum * V - alpha * grad,  W <- W + V,
// where in adaptive mode alpha is divided per coordinate by
// sqrt(sum of squared past gradients) + adaptive_smoothing.
void sgd_step(EmbeddingModel& m, OptimizerState& state, const ModelGrad& grad,
              const TrainerConfig& cfg);

struct TrainReport {
  std::vector<double> loss_curve;  // one entry per iteration
  double final_accuracy = 0.0;     // within-batch accuracy after training
};

// T iterations of surrogate-label training: pick a batch row uniformly,
// draw M member slots (clique, sample) uniformly with replacement from the
// row's selected cliques, take one masked-softmax SGD step. The final
// accuracy is measured over every member slot of every batch row with the
// same per-row masking.
TrainReport train(EmbeddingModel& m, const BatchAssignment& batches,
                  const CliqueAssignment& cl, const Eigen::MatrixXd& data,
                  const TrainerConfig& cfg);

// The quantity train() reports as final_accuracy: masked argmax accuracy
// over every member slot of every batch row, ties toward the lower clique
// index.
double batch_accuracy(const EmbeddingModel& m, const BatchAssignment& batches,
                      const CliqueAssignment& cl, const Eigen::MatrixXd& data);

// Embeddings for every row of `data` (N x E). Row-parallel.
Eigen::MatrixXd embed(const EmbeddingModel& m, const Eigen::MatrixXd& data);

}  // namespace csim
