#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pamkit/metrics.hpp"

namespace pamkit {

enum class Optimizer { kSgd, kAdam };

const char* to_string(Optimizer opt);
Optimizer optimizer_from_string(const std::string& name);

struct ProbeHparams {
  int epochs = 128;
  int batch = 32;
  double lr = 0.001;
  /// Plain mini-batch gradient descent by default for exact reproducibility;
  /// the adaptive-moment option uses beta1 0.9, beta2 0.999, eps 1e-8.
  Optimizer optimizer = Optimizer::kSgd;
  /// L2 penalty coefficient; 0 disables regularization.
  double l2 = 0.0;

  void validate() const;
};

/// Linear softmax probe over frozen embeddings. Logit c of input x is
/// sum_d W[d*C + c] * x[d] + b[c] (W row-major, rows indexed by input dim).
struct ProbeModel {
  int dim = 0;
  std::vector<std::string> classes;
  std::vector<float> W;
  std::vector<float> b;
  ProbeHparams hparams;
  std::uint64_t seed = 0;
};

struct LabeledEmbedding {
  std::vector<float> x;
  std::string label;
  std::string clip_id;
};

/// Minimizes mean categorical cross entropy -log p_y with p = softmax(Wx+b).
/// Weights start from a seeded Gaussian (std 0.01), biases from zero;
/// examples are canonically sorted by clip_id, then mini-batches are drawn
/// from a seeded shuffle each epoch, so the result depends only on the
/// example set, hyperparameters, and seed. Optionally reports the mean loss
/// per epoch. Throws NumericError naming the epoch if the loss goes
/// non-finite, ConfigError for inconsistent dims or an explicit class list
/// with an empty class.
ProbeModel train_probe(std::vector<LabeledEmbedding> examples, const ProbeHparams& hparams,
                       std::uint64_t seed, const std::vector<std::string>& classes = {},
                       std::vector<double>* epoch_losses = nullptr);

/// Numerically stable softmax scores (max subtraction). Throws ConfigError
/// on dimension mismatch.
std::vector<double> predict_scores(const ProbeModel& model, const std::vector<float>& x);

ScoredExample score_example(const ProbeModel& model, const LabeledEmbedding& example);

/// Mean cross-entropy loss and analytic gradients of one batch at the
/// model's current parameters, all in f64. Training applies these per
/// mini-batch; tests difference them against finite-difference oracles.
struct ProbeGradients {
  double loss = 0.0;
  std::vector<double> dW;
  std::vector<double> db;
};
ProbeGradients probe_gradients(const ProbeModel& model,
                               const std::vector<const LabeledEmbedding*>& batch,
                               const std::vector<int>& labels, double l2 = 0.0);

/// JSON round trip: {classes, dim, W row-major, b, hparams, seed}.
void save_probe(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_probe(const std::filesystem::path& path);

}  // namespace pamkit
