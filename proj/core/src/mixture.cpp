#include "pamkit/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pamkit/error.hpp"

namespace pamkit {

void MixtureConfig::validate() const {
  if (sources.empty()) throw ConfigError("mixture: needs at least one source");
  double sum = 0.0;
  for (const MixtureSource& s : sources) {
    if (!(s.weight > 0.0 && s.weight <= 1.0)) {
      throw ConfigError("mixture: weight of '" + s.group_id + "' must lie in (0, 1]");
    }
    sum += s.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("mixture: weights sum to " + std::to_string(sum) + ", expected 1");
  }
  if (batch_size < 1) throw ConfigError("mixture: batch size must be >= 1");
  if (steps < 0) throw ConfigError("mixture: steps must be >= 0");
  if (augment.gain_min > augment.gain_max) {
    throw ConfigError("mixture: gain_min must be <= gain_max");
  }
  if (!(augment.mixup_p >= 0.0 && augment.mixup_p <= 1.0)) {
    throw ConfigError("mixture: mixup_p must lie in [0, 1]");
  }
}

MixtureSampler::MixtureSampler(const MixtureConfig& config,
                               const std::map<std::string, std::vector<LabeledClip>>& groups,
                               std::uint64_t seed)
    : seed_(seed), pick_rng_(SeedChain(seed).absorb("source-pick").value()) {
  config.validate();
  for (const MixtureSource& src : config.sources) {
    auto it = groups.find(src.group_id);
    if (it == groups.end()) {
      throw ConfigError("mixture: no clip group '" + src.group_id + "'");
    }
    if (it->second.empty()) {
      throw ConfigError("mixture: source '" + src.group_id + "' is empty");
    }
    SourceState state;
    state.group_id = src.group_id;
    state.weight = src.weight;
    state.clips = it->second;
    std::sort(state.clips.begin(), state.clips.end(),
              [](const LabeledClip& a, const LabeledClip& b) {
                return std::tie(a.dataset_id, a.clip_id) < std::tie(b.dataset_id, b.clip_id);
              });
    sources_.push_back(std::move(state));
  }
  for (SourceState& s : sources_) reshuffle(s);
}

void MixtureSampler::reshuffle(SourceState& source) {
  source.pass.resize(source.clips.size());
  std::iota(source.pass.begin(), source.pass.end(), std::size_t{0});
  Rng rng(SeedChain(seed_).absorb("pass").absorb(source.group_id).absorb(source.pass_index)
              .value());
  rng.shuffle(source.pass);
  source.cursor = 0;
  ++source.pass_index;
}

const LabeledClip& MixtureSampler::next() {
  // Pick the source by cumulative weight over one uniform draw.
  const double u = pick_rng_.next_double();
  double acc = 0.0;
  SourceState* chosen = &sources_.back();
  for (SourceState& s : sources_) {
    acc += s.weight;
    if (u < acc) {
      chosen = &s;
      break;
    }
  }
  if (chosen->cursor >= chosen->pass.size()) reshuffle(*chosen);
  return chosen->clips[chosen->pass[chosen->cursor++]];
}

Waveform augment_gain(const Waveform& wave, Rng& rng, double gain_min, double gain_max) {
  float peak = 0.0f;
  for (float s : wave.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0f) return wave;
  const double gain = rng.uniform(gain_min, gain_max);
  const double scale = gain / static_cast<double>(peak);
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.resize(wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    out.samples[i] = static_cast<float>(static_cast<double>(wave.samples[i]) * scale);
  }
  return out;
}

MixupExample mix_pair(const MixupExample& a, const MixupExample& b, double lambda) {
  if (a.features.size() != b.features.size() || a.head_targets.size() != b.head_targets.size()) {
    throw ConfigError("mixup: examples have mismatched shapes");
  }
  MixupExample out;
  out.features.resize(a.features.size());
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    out.features[i] =
        static_cast<float>(lambda * a.features[i] + (1.0 - lambda) * b.features[i]);
  }
  out.head_targets.resize(a.head_targets.size());
  for (std::size_t h = 0; h < a.head_targets.size(); ++h) {
    if (a.head_targets[h].size() != b.head_targets[h].size()) {
      throw ConfigError("mixup: head " + std::to_string(h) + " targets have mismatched sizes");
    }
    out.head_targets[h].resize(a.head_targets[h].size());
    for (std::size_t c = 0; c < a.head_targets[h].size(); ++c) {
      out.head_targets[h][c] =
          static_cast<float>(lambda * a.head_targets[h][c] + (1.0 - lambda) * b.head_targets[h][c]);
    }
  }
  return out;
}

std::vector<MixupExample> mixup(const std::vector<MixupExample>& batch, double p, Rng& rng,
                                MixupStats* stats) {
  std::vector<MixupExample> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (stats) ++stats->total;
    const bool mix = p > 0.0 && rng.next_double() < p;
    if (!mix) {
      out.push_back(batch[i]);
      continue;
    }
    if (batch.size() < 2) {
      if (stats) ++stats->no_partner_warnings;
      out.push_back(batch[i]);
      continue;
    }
    const std::size_t offset = 1 + static_cast<std::size_t>(rng.next_below(batch.size() - 1));
    const std::size_t partner = (i + offset) % batch.size();
    const double lambda = rng.next_double();
    out.push_back(mix_pair(batch[i], batch[partner], lambda));
    if (stats) ++stats->mixed;
  }
  return out;
}

void HeadSpec::validate() const {
  if (name.empty()) throw ConfigError("head: name must be nonempty");
  if (classes.empty()) throw ConfigError("head '" + name + "': class list must be nonempty");
  if (loss_weight <= 0.0) throw ConfigError("head '" + name + "': loss weight must be > 0");
  std::set<std::string> unique(classes.begin(), classes.end());
  if (unique.size() != classes.size()) {
    throw ConfigError("head '" + name + "': duplicate class names");
  }
}

namespace {

/// CE and softmax of one example's logits; targets may have mass in [0,1].
double example_ce(const std::vector<double>& z, const std::vector<double>& y,
                  std::vector<double>& p) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  p.resize(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) {
    p[c] = std::exp(z[c] - zmax);
    sum += p[c];
  }
  const double log_sum = std::log(sum) + zmax;
  double ce = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    p[c] /= sum;
    if (y[c] != 0.0) ce -= y[c] * (z[c] - log_sum);
  }
  return ce;
}

}  // namespace

MultiHeadLoss multi_head_loss(const std::vector<HeadBatch>& batches,
                              const std::vector<HeadSpec>& heads) {
  if (batches.size() != heads.size()) {
    throw ConfigError("multi_head_loss: batch list and head list sizes differ");
  }
  MultiHeadLoss out;
  out.per_head.resize(heads.size(), 0.0);
  std::vector<double> p;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const HeadBatch& hb = batches[h];
    const std::size_t C = heads[h].classes.size();
    if (hb.logits.size() != hb.targets.size() || hb.logits.empty()) {
      throw ConfigError("multi_head_loss: head '" + heads[h].name +
                        "' has mismatched or empty logit/target batches");
    }
    double ce_sum = 0.0;
    for (std::size_t i = 0; i < hb.logits.size(); ++i) {
      if (hb.logits[i].size() != C || hb.targets[i].size() != C) {
        throw ConfigError("multi_head_loss: head '" + heads[h].name + "' expects " +
                          std::to_string(C) + " classes");
      }
      ce_sum += example_ce(hb.logits[i], hb.targets[i], p);
    }
    out.per_head[h] = ce_sum / static_cast<double>(hb.logits.size());
    out.total += heads[h].loss_weight * out.per_head[h];
  }
  return out;
}

std::vector<std::vector<double>> multi_head_loss_grad(const HeadBatch& batch,
                                                      const HeadSpec& head) {
  const std::size_t C = head.classes.size();
  const double inv_b = 1.0 / static_cast<double>(batch.logits.size());
  std::vector<std::vector<double>> grad(batch.logits.size());
  std::vector<double> p;
  for (std::size_t i = 0; i < batch.logits.size(); ++i) {
    if (batch.logits[i].size() != C || batch.targets[i].size() != C) {
      throw ConfigError("multi_head_loss_grad: head '" + head.name + "' expects " +
                        std::to_string(C) + " classes");
    }
    std::vector<double> z = batch.logits[i];
    example_ce(z, batch.targets[i], p);
    double mass = 0.0;
    for (double y : batch.targets[i]) mass += y;
    grad[i].resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      grad[i][c] = head.loss_weight * (mass * p[c] - batch.targets[i][c]) * inv_b;
    }
  }
  return grad;
}

std::vector<LabeledClip> strip_labeled(const std::vector<LabeledClip>& clips,
                                       const std::string& label) {
  std::vector<LabeledClip> out;
  out.reserve(clips.size());
  for (const LabeledClip& clip : clips) {
    if (clip.secondary && *clip.secondary == label) continue;
    out.push_back(clip);
  }
  return out;
}

std::vector<HeadSpec> exclude_holdout_classes(const std::vector<HeadSpec>& heads,
                                              const std::string& holdout_id,
                                              const DatasetRegistry& registry) {
  if (!registry.contains(holdout_id)) {
    throw NotFoundError("exclude_holdout_classes: no dataset '" + holdout_id + "'");
  }
  // Label names visible outside the holdout: primary names and secondary
  // names of every other dataset.
  std::set<std::string> training_labels;
  for (const std::string& id : registry.dataset_ids()) {
    if (id == holdout_id) continue;
    for (const LabeledClip& clip : registry.clips(id)) {
      training_labels.insert(to_string(clip.primary));
      if (clip.secondary) training_labels.insert(*clip.secondary);
    }
  }

  std::vector<HeadSpec> out;
  for (const HeadSpec& head : heads) {
    HeadSpec kept = head;
    kept.classes.clear();
    for (const std::string& name : head.classes) {
      if (training_labels.count(name)) kept.classes.push_back(name);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

std::vector<HeadSpec> build_heads(const DatasetRegistry& registry,
                                  const std::vector<std::string>& dataset_ids,
                                  double secondary_weight) {
  std::set<std::string> primaries;
  std::set<std::string> secondaries;
  for (const std::string& id : dataset_ids) {
    for (const LabeledClip& clip : registry.clips(id)) {
      if (clip.primary == PrimaryLabel::kAmbient) continue;
      primaries.insert(to_string(clip.primary));
      if (clip.secondary) secondaries.insert(*clip.secondary);
    }
  }
  if (primaries.empty()) {
    throw ConfigError("build_heads: no non-ambient clips in the given datasets");
  }
  std::vector<HeadSpec> heads;
  heads.push_back({"primary", {primaries.begin(), primaries.end()}, 1.0});
  if (!secondaries.empty()) {
    heads.push_back({"secondary", {secondaries.begin(), secondaries.end()}, secondary_weight});
  }
  return heads;
}

}  // namespace pamkit
