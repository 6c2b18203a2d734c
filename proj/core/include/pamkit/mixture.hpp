#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pamkit/audio.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {

struct AugmentConfig {
  double gain_min = 0.15;
  double gain_max = 0.25;
  double mixup_p = 0.75;
};

struct MixtureSource {
  std::string group_id;
  double weight = 1.0;
};

struct MixtureConfig {
  std::vector<MixtureSource> sources;
  int batch_size = 16;
  int steps = 2000;
  AugmentConfig augment;

  /// Weights must sum to 1 within 1e-9 and each lie in (0, 1].
  void validate() const;
};

/// Infinite clip stream over weighted source groups. Each draw picks a
/// source with probability equal to its weight, then yields the next clip of
/// that source's current pass: a seeded shuffle of its clips (sorted by id)
/// that is reshuffled with a fresh derived seed whenever exhausted, so no
/// clip repeats within a pass. Callers filter ambient clips before
/// constructing the sampler.
class MixtureSampler {
 public:
  MixtureSampler(const MixtureConfig& config,
                 const std::map<std::string, std::vector<LabeledClip>>& groups,
                 std::uint64_t seed);

  const LabeledClip& next();

 private:
  struct SourceState {
    std::string group_id;
    double weight;
    std::vector<LabeledClip> clips;  // sorted by clip_id
    std::vector<std::size_t> pass;   // current permutation of clip indices
    std::size_t cursor = 0;
    int pass_index = 0;
  };

  void reshuffle(SourceState& source);

  std::uint64_t seed_;
  std::vector<SourceState> sources_;
  Rng pick_rng_;
};

/// Peak-normalizes the wave to 1.0, then applies a gain drawn uniformly from
/// [gain_min, gain_max]; the output peak equals the drawn gain. Silent input
/// passes through unchanged.
Waveform augment_gain(const Waveform& wave, Rng& rng, double gain_min = 0.15,
                      double gain_max = 0.25);

/// One training example at the feature level: pooled frontend features plus
/// per-head soft targets. A head target of all zeros marks the head masked
/// for this example (e.g. no secondary label).
struct MixupExample {
  std::vector<float> features;
  std::vector<std::vector<float>> head_targets;
};

struct MixupStats {
  long mixed = 0;
  long total = 0;
  /// Counts batches of one where mixing was requested but no partner exists.
  long no_partner_warnings = 0;
};

/// Convex combination of two examples: lambda*a + (1-lambda)*b for features
/// and every head target.
MixupExample mix_pair(const MixupExample& a, const MixupExample& b, double lambda);

/// Each example is independently mixed with probability p against a partner
/// drawn uniformly from the rest of the batch, lambda ~ Uniform(0,1).
/// Mixing reads the original batch; draws per example are: mix decision,
/// then (if mixing) partner, then lambda.
std::vector<MixupExample> mixup(const std::vector<MixupExample>& batch, double p, Rng& rng,
                                MixupStats* stats = nullptr);

struct HeadSpec {
  std::string name;
  std::vector<std::string> classes;
  double loss_weight = 1.0;

  void validate() const;
};

/// Logits and soft targets for one head over a batch: [example][class].
struct HeadBatch {
  std::vector<std::vector<double>> logits;
  std::vector<std::vector<double>> targets;
};

struct MultiHeadLoss {
  double total = 0.0;
  std::vector<double> per_head;
};

/// total = sum_h loss_weight(h) * CE_h, CE_h the batch mean of
/// -sum_c y_c log softmax(z)_c. Masked examples (zero-mass targets)
/// contribute zero to their head's sum but still count in the batch mean.
/// Throws ConfigError naming the head on any dimension mismatch.
MultiHeadLoss multi_head_loss(const std::vector<HeadBatch>& batches,
                              const std::vector<HeadSpec>& heads);

/// Gradient of multi_head_loss w.r.t. head h's logits:
/// loss_weight(h) * (mass*softmax(z) - y) / batch, mass = sum_c y_c.
std::vector<std::vector<double>> multi_head_loss_grad(const HeadBatch& batch,
                                                      const HeadSpec& head);

/// Removes clips whose secondary label equals `label`.
std::vector<LabeledClip> strip_labeled(const std::vector<LabeledClip>& clips,
                                       const std::string& label = "bird");

/// Drops from every head's class list the classes that appear only in the
/// holdout dataset; classes shared with any other dataset stay.
std::vector<HeadSpec> exclude_holdout_classes(const std::vector<HeadSpec>& heads,
                                              const std::string& holdout_id,
                                              const DatasetRegistry& registry);

/// Primary head (weight 1.0) over the primary labels present in the named
/// datasets, plus a secondary head (weight `secondary_weight`) when any
/// secondary labels exist.
std::vector<HeadSpec> build_heads(const DatasetRegistry& registry,
                                  const std::vector<std::string>& dataset_ids,
                                  double secondary_weight = 1.0);

}  // namespace pamkit
