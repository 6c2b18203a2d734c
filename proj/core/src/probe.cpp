#include "pamkit/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pamkit/error.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {

using nlohmann::json;

const char* to_string(Optimizer opt) {
  return opt == Optimizer::kSgd ? "sgd" : "adam";
}

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void ProbeHparams::validate() const {
  if (epochs < 0) throw ConfigError("probe: epochs must be >= 0");
  if (batch < 1) throw ConfigError("probe: batch must be >= 1");
  if (lr <= 0.0) throw ConfigError("probe: lr must be > 0");
  if (l2 < 0.0) throw ConfigError("probe: l2 must be >= 0");
}

namespace {

/// log-sum-exp with max subtraction; z may contain large magnitudes.
void stable_softmax(const std::vector<double>& z, std::vector<double>& p) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  p.resize(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) {
    p[c] = std::exp(z[c] - zmax);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
}

void logits_of(const ProbeModel& model, const std::vector<float>& x, std::vector<double>& z) {
  const int C = static_cast<int>(model.classes.size());
  if (static_cast<int>(x.size()) != model.dim) {
    throw ConfigError("probe: input dim " + std::to_string(x.size()) + ", model dim " +
                      std::to_string(model.dim));
  }
  z.assign(C, 0.0);
  for (int d = 0; d < model.dim; ++d) {
    const double xd = x[d];
    if (xd == 0.0) continue;
    const float* row = &model.W[static_cast<std::size_t>(d) * C];
    for (int c = 0; c < C; ++c) z[c] += static_cast<double>(row[c]) * xd;
  }
  for (int c = 0; c < C; ++c) z[c] += model.b[c];
}

}  // namespace

ProbeGradients probe_gradients(const ProbeModel& model,
                               const std::vector<const LabeledEmbedding*>& batch,
                               const std::vector<int>& labels, double l2) {
  const int C = static_cast<int>(model.classes.size());
  const int D = model.dim;
  if (batch.empty() || batch.size() != labels.size()) {
    throw ConfigError("probe gradients: batch and label sizes must match and be nonzero");
  }

  ProbeGradients g;
  g.dW.assign(static_cast<std::size_t>(D) * C, 0.0);
  g.db.assign(C, 0.0);

  std::vector<double> z, p;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::vector<float>& x = batch[i]->x;
    logits_of(model, x, z);
    stable_softmax(z, p);
    const int y = labels[i];
    g.loss -= std::log(std::max(p[y], 1e-300)) * inv_b;
    for (int c = 0; c < C; ++c) {
      const double delta = (p[c] - (c == y ? 1.0 : 0.0)) * inv_b;
      g.db[c] += delta;
      for (int d = 0; d < D; ++d) {
        g.dW[static_cast<std::size_t>(d) * C + c] += delta * static_cast<double>(x[d]);
      }
    }
  }

  if (l2 > 0.0) {
    for (std::size_t i = 0; i < g.dW.size(); ++i) {
      const double w = model.W[i];
      g.loss += 0.5 * l2 * w * w;
      g.dW[i] += l2 * w;
    }
  }
  return g;
}

ProbeModel train_probe(std::vector<LabeledEmbedding> examples, const ProbeHparams& hparams,
                       std::uint64_t seed, const std::vector<std::string>& classes,
                       std::vector<double>* epoch_losses) {
  hparams.validate();
  if (examples.empty()) throw ConfigError("probe: no training examples");

  // Canonical order: determinism is pinned to (example set, seed), never to
  // the order the caller assembled the examples in.
  std::sort(examples.begin(), examples.end(),
            [](const LabeledEmbedding& a, const LabeledEmbedding& b) {
              return a.clip_id < b.clip_id;
            });

  const int D = static_cast<int>(examples[0].x.size());
  for (const LabeledEmbedding& e : examples) {
    if (static_cast<int>(e.x.size()) != D) {
      throw ConfigError("probe: example '" + e.clip_id + "' has dim " +
                        std::to_string(e.x.size()) + ", expected " + std::to_string(D));
    }
  }

  std::vector<std::string> class_list = classes;
  if (class_list.empty()) {
    std::set<std::string> seen;
    for (const LabeledEmbedding& e : examples) seen.insert(e.label);
    class_list.assign(seen.begin(), seen.end());
  }
  const int C = static_cast<int>(class_list.size());
  if (C < 2) throw ConfigError("probe: need at least 2 classes");

  std::map<std::string, int> class_index;
  for (int c = 0; c < C; ++c) class_index[class_list[c]] = c;
  std::map<std::string, int> class_counts;
  std::vector<int> labels(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto it = class_index.find(examples[i].label);
    if (it == class_index.end()) {
      throw ConfigError("probe: example '" + examples[i].clip_id + "' has label '" +
                        examples[i].label + "' outside the class list");
    }
    labels[i] = it->second;
    ++class_counts[examples[i].label];
  }
  for (const std::string& name : class_list) {
    if (class_counts[name] == 0) {
      throw ConfigError("probe: class '" + name + "' has no training examples");
    }
  }

  ProbeModel model;
  model.dim = D;
  model.classes = class_list;
  model.hparams = hparams;
  model.seed = seed;
  model.W.resize(static_cast<std::size_t>(D) * C);
  model.b.assign(C, 0.0f);
  Rng init_rng(SeedChain(seed).absorb("init").value());
  for (float& w : model.W) w = static_cast<float>(0.01 * init_rng.next_gaussian());

  Rng shuffle_rng(SeedChain(seed).absorb("shuffle").value());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Adaptive-moment state (f64), used only when selected.
  std::vector<double> mW, vW, mb, vb;
  if (hparams.optimizer == Optimizer::kAdam) {
    mW.assign(model.W.size(), 0.0);
    vW.assign(model.W.size(), 0.0);
    mb.assign(model.b.size(), 0.0);
    vb.assign(model.b.size(), 0.0);
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  long step = 0;

  if (epoch_losses) epoch_losses->clear();
  std::vector<const LabeledEmbedding*> batch;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < hparams.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t examples_seen = 0;
    for (std::size_t start = 0; start < order.size(); start += hparams.batch) {
      const std::size_t end = std::min(order.size(), start + hparams.batch);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&examples[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      const ProbeGradients g = probe_gradients(model, batch, batch_labels, hparams.l2);
      if (!std::isfinite(g.loss)) {
        throw NumericError("probe: loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());
      examples_seen += batch.size();

      ++step;
      if (hparams.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < model.W.size(); ++i) {
          model.W[i] = static_cast<float>(static_cast<double>(model.W[i]) - hparams.lr * g.dW[i]);
        }
        for (std::size_t c = 0; c < model.b.size(); ++c) {
          model.b[c] = static_cast<float>(static_cast<double>(model.b[c]) - hparams.lr * g.db[c]);
        }
      } else {
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (std::size_t i = 0; i < model.W.size(); ++i) {
          mW[i] = kBeta1 * mW[i] + (1.0 - kBeta1) * g.dW[i];
          vW[i] = kBeta2 * vW[i] + (1.0 - kBeta2) * g.dW[i] * g.dW[i];
          model.W[i] = static_cast<float>(
              static_cast<double>(model.W[i]) -
              hparams.lr * (mW[i] / bc1) / (std::sqrt(vW[i] / bc2) + kAdamEps));
        }
        for (std::size_t c = 0; c < model.b.size(); ++c) {
          mb[c] = kBeta1 * mb[c] + (1.0 - kBeta1) * g.db[c];
          vb[c] = kBeta2 * vb[c] + (1.0 - kBeta2) * g.db[c] * g.db[c];
          model.b[c] = static_cast<float>(
              static_cast<double>(model.b[c]) -
              hparams.lr * (mb[c] / bc1) / (std::sqrt(vb[c] / bc2) + kAdamEps));
        }
      }
    }
    if (epoch_losses) {
      epoch_losses->push_back(epoch_loss / static_cast<double>(examples_seen));
    }
  }
  return model;
}

std::vector<double> predict_scores(const ProbeModel& model, const std::vector<float>& x) {
  std::vector<double> z, p;
  logits_of(model, x, z);
  stable_softmax(z, p);
  return p;
}

ScoredExample score_example(const ProbeModel& model, const LabeledEmbedding& example) {
  ScoredExample out;
  out.scores = predict_scores(model, example.x);
  auto it = std::find(model.classes.begin(), model.classes.end(), example.label);
  if (it == model.classes.end()) {
    throw ConfigError("probe: label '" + example.label + "' not in the model's class list");
  }
  out.true_class = static_cast<int>(it - model.classes.begin());
  return out;
}

void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
  json doc;
  doc["classes"] = model.classes;
  doc["dim"] = model.dim;
  doc["W"] = model.W;
  doc["b"] = model.b;
  doc["hparams"] = {{"epochs", model.hparams.epochs},
                    {"batch", model.hparams.batch},
                    {"lr", model.hparams.lr},
                    {"optimizer", to_string(model.hparams.optimizer)},
                    {"l2", model.hparams.l2}};
  doc["seed"] = model.seed;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("probe: cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("probe: write failed for " + path.string());
}

ProbeModel load_probe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("probe: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("probe " + path.string() + ": " + e.what());
  }
  try {
    ProbeModel model;
    model.classes = doc.at("classes").get<std::vector<std::string>>();
    model.dim = doc.at("dim").get<int>();
    model.W = doc.at("W").get<std::vector<float>>();
    model.b = doc.at("b").get<std::vector<float>>();
    const json& hp = doc.at("hparams");
    model.hparams.epochs = hp.at("epochs").get<int>();
    model.hparams.batch = hp.at("batch").get<int>();
    model.hparams.lr = hp.at("lr").get<double>();
    model.hparams.optimizer = optimizer_from_string(hp.at("optimizer").get<std::string>());
    model.hparams.l2 = hp.at("l2").get<double>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    if (model.W.size() != static_cast<std::size_t>(model.dim) * model.classes.size() ||
        model.b.size() != model.classes.size()) {
      throw FormatError("probe " + path.string() + ": shape fields are inconsistent");
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError("probe " + path.string() + ": " + e.what());
  }
}

}  // namespace pamkit
