#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pamkit/audio.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/embedder.hpp"
#include "pamkit/frontend.hpp"
#include "pamkit/mixture.hpp"

namespace pamkit {

/// Trainable stand-in for a large pretrained network, small enough that its
/// analytic gradients are hand-derived and desk-runnable.
struct ToyArch {
  int width = 256;
  int depth = 2;
  int emb_dim = 128;

  void validate() const;
};

/// Architecture presets forming the sweep's model-size axis.
ToyArch toy_arch_preset(const std::string& name);  // t0, t1, t2

/// Toy-sized frontend: 32 mel bands up to 7.2 kHz; keeps desk-scale
/// pretraining dominated by learning, not spectrogram width.
FrontendConfig toy_default_frontend();

struct ToyConfig {
  ToyArch arch;
  FrontendConfig frontend = toy_default_frontend();
  int input_rate = 16000;
  double window_len_s = 1.0;

  void validate() const;
};

/// PCEN grid -> per-band time mean -> depth x (linear + ReLU) -> linear
/// embedding -> per-head linear classifiers. Parameters are f32; all forward
/// and backward arithmetic accumulates in f64. Acts as an embedding backend
/// (repeat-pad short-clip policy) once trained.
class ToyEmbedderModel : public EmbedderBackend {
 public:
  /// He-initialized (seeded) weights, zero biases.
  ToyEmbedderModel(ToyConfig config, std::vector<HeadSpec> heads, std::uint64_t seed);

  const ToyConfig& config() const { return config_; }
  const std::vector<HeadSpec>& model_heads() const { return heads_; }
  std::uint64_t init_seed() const { return seed_; }

  // EmbedderBackend
  const EmbedderSpec& spec() const override { return spec_; }
  EmbeddingVector embed_window(const Waveform& window) const override;

  /// Frontend features of one window: PCEN grid, mean over time per band.
  std::vector<float> pooled_features(const Waveform& window) const;

  /// Forward pass from pooled features to the embedding layer output.
  std::vector<float> embed_features(const std::vector<float>& features) const;

  /// Forward pass to per-head logits, [head][class].
  std::vector<std::vector<double>> head_logits(const std::vector<float>& features) const;

  /// Weighted multi-head loss of one feature-level batch plus its analytic
  /// gradient for every parameter, flattened in parameter order. Examples
  /// with zero-mass head targets contribute no gradient to that head.
  struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> per_head;
    std::vector<double> grad;
  };
  LossAndGrad loss_and_grad(const std::vector<MixupExample>& batch) const;

  /// Gradient-descent update over the flattened parameters.
  void apply_update(const std::vector<double>& grad, double lr);

  // Flat parameter access; finite-difference tests wiggle single entries.
  std::size_t parameter_count() const;
  float get_parameter(std::size_t index) const;
  void set_parameter(std::size_t index, float value);

  bool operator==(const ToyEmbedderModel& other) const;

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<float> W;  // row-major [in][out]
    std::vector<float> b;
  };

  friend void save_toy(const ToyEmbedderModel&, const std::filesystem::path&);
  friend ToyEmbedderModel load_toy(const std::filesystem::path&);

  ToyEmbedderModel(ToyConfig config, std::vector<HeadSpec> heads, std::uint64_t seed,
                   bool initialize);

  int feature_dim() const { return config_.frontend.mel.n_mels; }
  void forward_trunk(const std::vector<float>& features,
                     std::vector<std::vector<double>>& activations) const;

  ToyConfig config_;
  std::vector<HeadSpec> heads_;
  std::uint64_t seed_ = 0;
  EmbedderSpec spec_;
  std::vector<Layer> trunk_;  // depth hidden layers + embedding layer
  std::vector<Layer> head_layers_;
};

/// JSON next to a little-endian f32 weight file (path stem + .weights.bin).
void save_toy(const ToyEmbedderModel& model, const std::filesystem::path& json_path);
ToyEmbedderModel load_toy(const std::filesystem::path& json_path);

struct ToyPretrainResult {
  ToyEmbedderModel model;
  std::vector<double> step_losses;
};

/// Mixture pretraining loop: sample a batch from the weighted stream, load
/// and gain-augment each clip, repeat-pad into one window, pool PCEN
/// features, apply MixUp, then one gradient-descent step on the multi-head
/// loss. Ambient clips are filtered from every group up front. Deterministic
/// given (groups, config, heads, lr, seed). Throws NumericError naming the
/// step if the loss goes non-finite.
ToyPretrainResult pretrain_toy(const MixtureConfig& mixture,
                               const std::map<std::string, std::vector<LabeledClip>>& groups,
                               const std::vector<HeadSpec>& heads, const ToyConfig& config,
                               double lr, std::uint64_t seed, const AudioLoader& loader);

}  // namespace pamkit
