#include "pamkit/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pamkit/error.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {

using nlohmann::json;

void ToyArch::validate() const {
  if (width < 1) throw ConfigError("toy arch: width must be >= 1");
  if (depth < 1) throw ConfigError("toy arch: depth must be >= 1");
  if (emb_dim < 1) throw ConfigError("toy arch: emb_dim must be >= 1");
}

ToyArch toy_arch_preset(const std::string& name) {
  if (name == "t0") return {128, 2, 64};
  if (name == "t1") return {256, 2, 128};
  if (name == "t2") return {384, 3, 192};
  throw ConfigError("unknown toy architecture preset '" + name + "'");
}

FrontendConfig toy_default_frontend() {
  FrontendConfig cfg;
  cfg.mel.n_mels = 32;
  cfg.mel.fmax_hz = 7200.0;
  // log1p ahead of PCEN bounds the pooled features to a scale the little MLP
  // can train on at lr ~1e-2. Full AGC gain (1.0) would instead normalize
  // every band to the same steady-state value and erase the spectral shape
  // that the heads need.
  cfg.log_before_pcen = true;
  return cfg;
}

void ToyConfig::validate() const {
  arch.validate();
  if (input_rate <= 0) throw ConfigError("toy: input rate must be > 0");
  if (window_len_s <= 0.0) throw ConfigError("toy: window length must be > 0");
  frontend.mel.validate(input_rate);
  frontend.pcen.validate();
}

ToyEmbedderModel::ToyEmbedderModel(ToyConfig config, std::vector<HeadSpec> heads,
                                   std::uint64_t seed)
    : ToyEmbedderModel(std::move(config), std::move(heads), seed, /*initialize=*/true) {}

ToyEmbedderModel::ToyEmbedderModel(ToyConfig config, std::vector<HeadSpec> heads,
                                   std::uint64_t seed, bool initialize)
    : config_(std::move(config)), heads_(std::move(heads)), seed_(seed) {
  config_.validate();
  for (const HeadSpec& head : heads_) head.validate();

  spec_.name = "toy";
  spec_.input_rate = config_.input_rate;
  spec_.window_len_s = config_.window_len_s;
  spec_.embedding_dim = config_.arch.emb_dim;
  spec_.short_clip_policy = WindowPolicy::kRepeatPad;

  int in = feature_dim();
  for (int l = 0; l < config_.arch.depth; ++l) {
    trunk_.push_back({in, config_.arch.width, {}, {}});
    in = config_.arch.width;
  }
  trunk_.push_back({in, config_.arch.emb_dim, {}, {}});
  for (const HeadSpec& head : heads_) {
    head_layers_.push_back({config_.arch.emb_dim, static_cast<int>(head.classes.size()), {}, {}});
  }

  Rng rng(SeedChain(seed_).absorb("toy-init").value());
  auto fill = [&](Layer& layer, double std_scale) {
    layer.W.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.b.assign(layer.out, 0.0f);
    const double std = std::sqrt(std_scale / static_cast<double>(layer.in));
    for (float& w : layer.W) {
      w = initialize ? static_cast<float>(std * rng.next_gaussian()) : 0.0f;
    }
  };
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    // He scaling for the ReLU layers, Xavier-style for the linear ones.
    fill(trunk_[l], l + 1 < trunk_.size() ? 2.0 : 1.0);
  }
  for (Layer& layer : head_layers_) fill(layer, 1.0);
}

std::vector<float> ToyEmbedderModel::pooled_features(const Waveform& window) const {
  if (window.sample_rate != config_.input_rate) {
    throw ConfigError("toy: window rate " + std::to_string(window.sample_rate) +
                      " does not match model rate " + std::to_string(config_.input_rate));
  }
  const MelSpectrogram grid = frontend_grid(window, config_.frontend);
  std::vector<float> features(grid.bands);
  for (std::size_t b = 0; b < grid.bands; ++b) {
    double sum = 0.0;
    for (std::size_t t = 0; t < grid.frames; ++t) sum += grid.at(t, b);
    features[b] = static_cast<float>(sum / static_cast<double>(grid.frames));
  }
  return features;
}

void ToyEmbedderModel::forward_trunk(const std::vector<float>& features,
                                     std::vector<std::vector<double>>& activations) const {
  if (static_cast<int>(features.size()) != feature_dim()) {
    throw ConfigError("toy: feature dim " + std::to_string(features.size()) + ", expected " +
                      std::to_string(feature_dim()));
  }
  activations.clear();
  activations.emplace_back(features.begin(), features.end());
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    const Layer& layer = trunk_[l];
    const std::vector<double>& a = activations.back();
    std::vector<double> z(layer.out, 0.0);
    for (int i = 0; i < layer.in; ++i) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      const float* row = &layer.W[static_cast<std::size_t>(i) * layer.out];
      for (int j = 0; j < layer.out; ++j) z[j] += ai * static_cast<double>(row[j]);
    }
    const bool is_hidden = l + 1 < trunk_.size();
    for (int j = 0; j < layer.out; ++j) {
      z[j] += layer.b[j];
      if (is_hidden && z[j] < 0.0) z[j] = 0.0;
    }
    activations.push_back(std::move(z));
  }
}

std::vector<float> ToyEmbedderModel::embed_features(const std::vector<float>& features) const {
  std::vector<std::vector<double>> activations;
  forward_trunk(features, activations);
  const std::vector<double>& e = activations.back();
  return {e.begin(), e.end()};
}

std::vector<std::vector<double>> ToyEmbedderModel::head_logits(
    const std::vector<float>& features) const {
  std::vector<std::vector<double>> activations;
  forward_trunk(features, activations);
  const std::vector<double>& e = activations.back();
  std::vector<std::vector<double>> logits;
  for (const Layer& layer : head_layers_) {
    std::vector<double> z(layer.out, 0.0);
    for (int i = 0; i < layer.in; ++i) {
      const float* row = &layer.W[static_cast<std::size_t>(i) * layer.out];
      for (int j = 0; j < layer.out; ++j) z[j] += e[i] * static_cast<double>(row[j]);
    }
    for (int j = 0; j < layer.out; ++j) z[j] += layer.b[j];
    logits.push_back(std::move(z));
  }
  return logits;
}

EmbeddingVector ToyEmbedderModel::embed_window(const Waveform& window) const {
  EmbeddingVector out;
  out.spec_name = spec_.name;
  const std::vector<float> e = embed_features(pooled_features(window));
  out.values = e;
  return out;
}

ToyEmbedderModel::LossAndGrad ToyEmbedderModel::loss_and_grad(
    const std::vector<MixupExample>& batch) const {
  if (batch.empty()) throw ConfigError("toy: empty batch");
  const std::size_t B = batch.size();
  const std::size_t H = heads_.size();

  // Forward pass with cached activations.
  std::vector<std::vector<std::vector<double>>> acts(B);
  std::vector<HeadBatch> head_batches(H);
  for (std::size_t h = 0; h < H; ++h) {
    head_batches[h].logits.resize(B);
    head_batches[h].targets.resize(B);
  }
  for (std::size_t i = 0; i < B; ++i) {
    if (batch[i].head_targets.size() != H) {
      throw ConfigError("toy: example has " + std::to_string(batch[i].head_targets.size()) +
                        " head targets, expected " + std::to_string(H));
    }
    forward_trunk(batch[i].features, acts[i]);
    const std::vector<double>& e = acts[i].back();
    for (std::size_t h = 0; h < H; ++h) {
      const Layer& layer = head_layers_[h];
      if (static_cast<int>(batch[i].head_targets[h].size()) != layer.out) {
        throw ConfigError("toy: head '" + heads_[h].name + "' target size mismatch");
      }
      std::vector<double> z(layer.out, 0.0);
      for (int d = 0; d < layer.in; ++d) {
        const float* row = &layer.W[static_cast<std::size_t>(d) * layer.out];
        for (int j = 0; j < layer.out; ++j) z[j] += e[d] * static_cast<double>(row[j]);
      }
      for (int j = 0; j < layer.out; ++j) z[j] += layer.b[j];
      head_batches[h].logits[i] = std::move(z);
      head_batches[h].targets[i].assign(batch[i].head_targets[h].begin(),
                                        batch[i].head_targets[h].end());
    }
  }

  LossAndGrad out;
  const MultiHeadLoss loss = multi_head_loss(head_batches, heads_);
  out.loss = loss.total;
  out.per_head = loss.per_head;
  out.grad.assign(parameter_count(), 0.0);

  // Flat gradient regions in parameter order: trunk layers then heads.
  std::vector<std::size_t> offsets;
  std::size_t cursor = 0;
  for (const Layer& layer : trunk_) {
    offsets.push_back(cursor);
    cursor += layer.W.size() + layer.b.size();
  }
  std::vector<std::size_t> head_offsets;
  for (const Layer& layer : head_layers_) {
    head_offsets.push_back(cursor);
    cursor += layer.W.size() + layer.b.size();
  }

  std::vector<std::vector<std::vector<double>>> head_grads(H);
  for (std::size_t h = 0; h < H; ++h) {
    head_grads[h] = multi_head_loss_grad(head_batches[h], heads_[h]);
  }

  std::vector<double> d_emb, d_prev;
  for (std::size_t i = 0; i < B; ++i) {
    const std::vector<double>& e = acts[i].back();
    d_emb.assign(e.size(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const Layer& layer = head_layers_[h];
      const std::vector<double>& dz = head_grads[h][i];
      double* gW = &out.grad[head_offsets[h]];
      double* gb = gW + layer.W.size();
      for (int d = 0; d < layer.in; ++d) {
        const float* row = &layer.W[static_cast<std::size_t>(d) * layer.out];
        double acc = 0.0;
        for (int j = 0; j < layer.out; ++j) {
          gW[static_cast<std::size_t>(d) * layer.out + j] += e[d] * dz[j];
          acc += static_cast<double>(row[j]) * dz[j];
        }
        d_emb[d] += acc;
      }
      for (int j = 0; j < layer.out; ++j) gb[j] += dz[j];
    }

    // Back through the trunk; the last trunk layer is linear, the rest ReLU.
    std::vector<double> dz = std::move(d_emb);
    for (std::size_t l = trunk_.size(); l-- > 0;) {
      const Layer& layer = trunk_[l];
      const std::vector<double>& a_in = acts[i][l];
      const std::vector<double>& a_out = acts[i][l + 1];
      const bool is_hidden = l + 1 < trunk_.size();
      if (is_hidden) {
        for (int j = 0; j < layer.out; ++j) {
          if (a_out[j] == 0.0) dz[j] = 0.0;
        }
      }
      double* gW = &out.grad[offsets[l]];
      double* gb = gW + layer.W.size();
      d_prev.assign(layer.in, 0.0);
      for (int d = 0; d < layer.in; ++d) {
        const double ad = a_in[d];
        const float* row = &layer.W[static_cast<std::size_t>(d) * layer.out];
        double acc = 0.0;
        for (int j = 0; j < layer.out; ++j) {
          gW[static_cast<std::size_t>(d) * layer.out + j] += ad * dz[j];
          acc += static_cast<double>(row[j]) * dz[j];
        }
        d_prev[d] = acc;
      }
      for (int j = 0; j < layer.out; ++j) gb[j] += dz[j];
      dz = d_prev;
    }
  }
  return out;
}

void ToyEmbedderModel::apply_update(const std::vector<double>& grad, double lr) {
  if (grad.size() != parameter_count()) {
    throw ConfigError("toy: gradient size does not match parameter count");
  }
  std::size_t cursor = 0;
  auto update_layer = [&](Layer& layer) {
    for (float& w : layer.W) {
      w = static_cast<float>(static_cast<double>(w) - lr * grad[cursor++]);
    }
    for (float& b : layer.b) {
      b = static_cast<float>(static_cast<double>(b) - lr * grad[cursor++]);
    }
  };
  for (Layer& layer : trunk_) update_layer(layer);
  for (Layer& layer : head_layers_) update_layer(layer);
}

std::size_t ToyEmbedderModel::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& layer : trunk_) n += layer.W.size() + layer.b.size();
  for (const Layer& layer : head_layers_) n += layer.W.size() + layer.b.size();
  return n;
}

float ToyEmbedderModel::get_parameter(std::size_t index) const {
  for (const auto* layers : {&trunk_, &head_layers_}) {
    for (const Layer& layer : *layers) {
      if (index < layer.W.size()) return layer.W[index];
      index -= layer.W.size();
      if (index < layer.b.size()) return layer.b[index];
      index -= layer.b.size();
    }
  }
  throw ConfigError("toy: parameter index out of range");
}

void ToyEmbedderModel::set_parameter(std::size_t index, float value) {
  for (auto* layers : {&trunk_, &head_layers_}) {
    for (Layer& layer : *layers) {
      if (index < layer.W.size()) {
        layer.W[index] = value;
        return;
      }
      index -= layer.W.size();
      if (index < layer.b.size()) {
        layer.b[index] = value;
        return;
      }
      index -= layer.b.size();
    }
  }
  throw ConfigError("toy: parameter index out of range");
}

bool ToyEmbedderModel::operator==(const ToyEmbedderModel& other) const {
  if (parameter_count() != other.parameter_count()) return false;
  for (std::size_t i = 0; i < parameter_count(); ++i) {
    if (get_parameter(i) != other.get_parameter(i)) return false;
  }
  return true;
}

namespace {

json frontend_to_json(const FrontendConfig& cfg) {
  return {{"mel",
           {{"frame_length_s", cfg.mel.frame_length_s},
            {"hop_length_s", cfg.mel.hop_length_s},
            {"n_mels", cfg.mel.n_mels},
            {"fmin_hz", cfg.mel.fmin_hz},
            {"fmax_hz", cfg.mel.fmax_hz}}},
          {"pcen",
           {{"smoothing", cfg.pcen.smoothing},
            {"gain", cfg.pcen.gain},
            {"bias", cfg.pcen.bias},
            {"root", cfg.pcen.root},
            {"epsilon", cfg.pcen.epsilon},
            {"zero_initial_state", cfg.pcen.zero_initial_state}}},
          {"log_before_pcen", cfg.log_before_pcen}};
}

FrontendConfig frontend_from_json(const json& j) {
  FrontendConfig cfg;
  cfg.mel.frame_length_s = j.at("mel").at("frame_length_s").get<double>();
  cfg.mel.hop_length_s = j.at("mel").at("hop_length_s").get<double>();
  cfg.mel.n_mels = j.at("mel").at("n_mels").get<int>();
  cfg.mel.fmin_hz = j.at("mel").at("fmin_hz").get<double>();
  cfg.mel.fmax_hz = j.at("mel").at("fmax_hz").get<double>();
  cfg.pcen.smoothing = j.at("pcen").at("smoothing").get<double>();
  cfg.pcen.gain = j.at("pcen").at("gain").get<double>();
  cfg.pcen.bias = j.at("pcen").at("bias").get<double>();
  cfg.pcen.root = j.at("pcen").at("root").get<double>();
  cfg.pcen.epsilon = j.at("pcen").at("epsilon").get<double>();
  cfg.pcen.zero_initial_state = j.at("pcen").at("zero_initial_state").get<bool>();
  cfg.log_before_pcen = j.at("log_before_pcen").get<bool>();
  return cfg;
}

constexpr std::uint32_t kToyWeightsMagic = 0x57544B50;  // "PKTW"

}  // namespace

void save_toy(const ToyEmbedderModel& model, const std::filesystem::path& json_path) {
  std::filesystem::path weights_path = json_path;
  weights_path.replace_extension(".weights.bin");

  json doc;
  doc["kind"] = "toy-embedder";
  doc["arch"] = {{"width", model.config_.arch.width},
                 {"depth", model.config_.arch.depth},
                 {"emb_dim", model.config_.arch.emb_dim}};
  doc["frontend"] = frontend_to_json(model.config_.frontend);
  doc["input_rate"] = model.config_.input_rate;
  doc["window_len_s"] = model.config_.window_len_s;
  doc["seed"] = model.seed_;
  doc["heads"] = json::array();
  for (const HeadSpec& head : model.heads_) {
    doc["heads"].push_back(
        {{"name", head.name}, {"classes", head.classes}, {"loss_weight", head.loss_weight}});
  }
  doc["weights_file"] = weights_path.filename().string();

  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("toy: cannot write " + json_path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("toy: write failed for " + json_path.string());

  std::ofstream wout(weights_path, std::ios::binary | std::ios::trunc);
  if (!wout) throw IoError("toy: cannot write " + weights_path.string());
  const std::uint64_t count = model.parameter_count();
  char header[12];
  std::uint32_t magic = kToyWeightsMagic;
  std::memcpy(header, &magic, 4);
  std::memcpy(header + 4, &count, 8);
  wout.write(header, 12);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = model.get_parameter(i);
    wout.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!wout) throw IoError("toy: write failed for " + weights_path.string());
}

ToyEmbedderModel load_toy(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("toy: cannot open " + json_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("toy " + json_path.string() + ": " + e.what());
  }

  try {
    ToyConfig cfg;
    cfg.arch.width = doc.at("arch").at("width").get<int>();
    cfg.arch.depth = doc.at("arch").at("depth").get<int>();
    cfg.arch.emb_dim = doc.at("arch").at("emb_dim").get<int>();
    cfg.frontend = frontend_from_json(doc.at("frontend"));
    cfg.input_rate = doc.at("input_rate").get<int>();
    cfg.window_len_s = doc.at("window_len_s").get<double>();
    std::vector<HeadSpec> heads;
    for (const json& h : doc.at("heads")) {
      heads.push_back({h.at("name").get<std::string>(),
                       h.at("classes").get<std::vector<std::string>>(),
                       h.at("loss_weight").get<double>()});
    }
    ToyEmbedderModel model(cfg, heads, doc.at("seed").get<std::uint64_t>(), false);

    std::filesystem::path weights_path =
        json_path.parent_path() / doc.at("weights_file").get<std::string>();
    std::ifstream win(weights_path, std::ios::binary);
    if (!win) throw IoError("toy: cannot open " + weights_path.string());
    char header[12];
    win.read(header, 12);
    std::uint32_t magic = 0;
    std::uint64_t count = 0;
    std::memcpy(&magic, header, 4);
    std::memcpy(&count, header + 4, 8);
    if (!win || magic != kToyWeightsMagic) {
      throw FormatError("toy: bad weight file " + weights_path.string());
    }
    if (count != model.parameter_count()) {
      throw FormatError("toy: weight count " + std::to_string(count) +
                        " does not match the architecture");
    }
    for (std::size_t i = 0; i < count; ++i) {
      float v = 0.0f;
      win.read(reinterpret_cast<char*>(&v), 4);
      if (!win) throw FormatError("toy: truncated weights in " + weights_path.string());
      model.set_parameter(i, v);
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError("toy " + json_path.string() + ": " + e.what());
  }
}

namespace {

std::vector<float> one_hot(const std::vector<std::string>& classes, const std::string& label) {
  std::vector<float> target(classes.size(), 0.0f);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == label) {
      target[c] = 1.0f;
      break;
    }
  }
  return target;
}

}  // namespace

ToyPretrainResult pretrain_toy(const MixtureConfig& mixture,
                               const std::map<std::string, std::vector<LabeledClip>>& groups,
                               const std::vector<HeadSpec>& heads, const ToyConfig& config,
                               double lr, std::uint64_t seed, const AudioLoader& loader) {
  mixture.validate();
  if (lr <= 0.0) throw ConfigError("toy: lr must be > 0");

  std::map<std::string, std::vector<LabeledClip>> filtered;
  for (const auto& [id, clips] : groups) {
    std::vector<LabeledClip> kept = filter_ambient(clips);
    if (kept.empty()) {
      throw ConfigError("toy: source '" + id + "' is empty after ambient filtering");
    }
    filtered.emplace(id, std::move(kept));
  }

  MixtureSampler sampler(mixture, filtered, SeedChain(seed).absorb("sampler").value());
  Rng augment_rng(SeedChain(seed).absorb("augment").value());
  Rng mixup_rng(SeedChain(seed).absorb("mixup").value());

  ToyPretrainResult result{ToyEmbedderModel(config, heads, SeedChain(seed).absorb("init").value()),
                           {}};
  ToyEmbedderModel& model = result.model;

  std::vector<MixupExample> batch(mixture.batch_size);
  for (int step = 0; step < mixture.steps; ++step) {
    for (int i = 0; i < mixture.batch_size; ++i) {
      const LabeledClip& clip = sampler.next();
      Waveform wave = resample(loader(clip.path), config.input_rate);
      wave = augment_gain(wave, augment_rng, mixture.augment.gain_min, mixture.augment.gain_max);
      const Waveform window =
          window_clip(wave, WindowPolicy::kRepeatPad, config.window_len_s, config.input_rate)
              .front();
      MixupExample& ex = batch[i];
      ex.features = model.pooled_features(window);
      ex.head_targets.clear();
      for (const HeadSpec& head : heads) {
        if (head.name == "primary") {
          ex.head_targets.push_back(one_hot(head.classes, to_string(clip.primary)));
        } else if (clip.secondary) {
          ex.head_targets.push_back(one_hot(head.classes, *clip.secondary));
        } else {
          ex.head_targets.emplace_back(head.classes.size(), 0.0f);
        }
      }
    }

    const std::vector<MixupExample> mixed =
        mixup(batch, mixture.augment.mixup_p, mixup_rng, nullptr);
    const ToyEmbedderModel::LossAndGrad lg = model.loss_and_grad(mixed);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("toy: loss diverged at step " + std::to_string(step));
    }
    model.apply_update(lg.grad, lr);
    result.step_losses.push_back(lg.loss);
  }
  return result;
}

}  // namespace pamkit
