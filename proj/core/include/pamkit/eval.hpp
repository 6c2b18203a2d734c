#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pamkit/audio.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/embedder.hpp"
#include "pamkit/mixture.hpp"
#include "pamkit/probe.hpp"
#include "pamkit/toy.hpp"

namespace pamkit {

/// One few-shot cell: a (dataset, k, repeat) evaluation of one model.
struct EvalRecord {
  std::string model;
  std::string dataset;
  int k = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double macro_auc = 0.0;
  std::map<std::string, double> per_class_auc;
  bool failed = false;
  std::string fail_reason;
};

struct EvalAggregate {
  std::string model;
  std::string dataset;  // empty when aggregated across datasets
  int k = 0;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // sample standard deviation (n-1)
  int count = 0;
};

struct EvalReport {
  std::vector<EvalRecord> records;

  /// Mean and sample std of macro AUC per (model, dataset, k), failed cells
  /// excluded. Deterministic order.
  std::vector<EvalAggregate> aggregate_by_dataset() const;
  /// Same per (model, k) across datasets.
  std::vector<EvalAggregate> aggregate_by_k() const;
};

/// Cell seed: SeedChain(base).absorb(dataset).absorb(k).absorb(repeat), so
/// any cell is reproducible in isolation and splits are shared across models
/// (paired comparisons) but differ across (k, repeat).
std::uint64_t fewshot_cell_seed(std::uint64_t base_seed, const std::string& dataset_id, int k,
                                int repeat);

struct FewshotParams {
  std::vector<int> ks = {4, 8, 16, 32};
  int repeats = 10;
  /// First repeat index; cells are seeded by absolute repeat index, so a
  /// narrowed re-run of one cell reproduces it bitwise.
  int repeat_start = 0;
  std::uint64_t base_seed = 0;
  int min_test = 10;
  int max_train = 32;
  ProbeHparams probe;
  /// Model name recorded per cell; defaults to the backend's spec name.
  std::string model_name;

  void validate() const;
};

/// Few-shot transfer evaluation of one dataset: embeddings are computed once
/// per clip, then for every (k, repeat) cell the dataset is split with the
/// cell seed, a linear probe is trained on the k train examples per class,
/// and macro AUC is scored on the held-out test examples. Cells that cannot
/// run (e.g. a class below k + min_test) are recorded as failed with the
/// reason, never dropped.
EvalReport fewshot_eval(const std::vector<LabeledClip>& clips, const std::string& dataset_id,
                        const EmbedderBackend& backend, const AudioLoader& loader,
                        const FewshotParams& params);

struct DregParams {
  /// Pretraining configuration; mixture sources are filled per rotation with
  /// the training datasets, equally weighted unless weights are given here
  /// (keyed by dataset id, must cover every training dataset of a rotation).
  MixtureConfig mixture;
  std::map<std::string, double> source_weights;
  ToyConfig toy;
  double pretrain_lr = 0.01;
  double secondary_head_weight = 1.0;
  FewshotParams fewshot;

  void validate() const;
};

struct DregRotation {
  std::string holdout;
  std::vector<HeadSpec> heads;
  EvalReport report;
  bool failed = false;
  std::string fail_reason;
};

/// Leave-one-dataset-out rotation: for every dataset D, build heads from the
/// full registry minus holdout-exclusive classes, pretrain the toy embedder
/// on all other datasets (ambient filtered), and run fewshot_eval on D with
/// the resulting embedder. Rotations are independent; a failed rotation is
/// recorded and the loop continues. Per-rotation seeds derive from
/// fewshot.base_seed and the holdout id.
std::vector<DregRotation> dreg(const DatasetRegistry& registry, const DregParams& params,
                               const AudioLoader& loader);

struct SweepAxis {
  std::string name;
  std::vector<std::string> values;
};

struct SweepStage {
  std::string stage_id;
  std::vector<SweepAxis> axes;
  std::map<std::string, std::string> fixed;
  std::vector<std::string> validation_ids;

  void validate() const;
};

struct SweepRow {
  std::string stage_id;
  std::map<std::string, std::string> config;
  double mean_auc = 0.0;
  bool failed = false;
  std::string fail_reason;
};

/// Scores one sweep configuration: mean AUC over the evaluation grid on the
/// validation datasets. Throwing marks the row failed.
using SweepEvalFn = std::function<double(const std::map<std::string, std::string>& config)>;

/// Runs the stages in order over the cartesian product of their axes (later
/// axes vary fastest). Each later stage inherits the best configuration of
/// the previous stage for every parameter it does not set itself. Rows are
/// sorted by mean AUC descending within their stage; failed rows rank last.
std::vector<SweepRow> sweep(const std::vector<SweepStage>& stages, const SweepEvalFn& eval_fn);

/// Canned stage structures for the three training-mixture search spaces.
std::vector<SweepStage> reefset_sweep_stages(const std::vector<std::string>& validation_ids);
std::vector<SweepStage> bird_mix_sweep_stages(const std::vector<std::string>& validation_ids);
std::vector<SweepStage> freesound_mix_sweep_stages(const std::vector<std::string>& validation_ids);

}  // namespace pamkit
