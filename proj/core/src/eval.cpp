#include "pamkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pamkit/error.hpp"
#include "pamkit/metrics.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {
namespace {

struct GroupStats {
  double mean = 0.0;
  double std_dev = 0.0;
  int count = 0;
};

GroupStats stats_of(const std::vector<double>& values) {
  GroupStats s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<EvalAggregate> aggregate(const std::vector<EvalRecord>& records, bool by_dataset) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
  for (const EvalRecord& r : records) {
    if (r.failed) continue;
    groups[{r.model, by_dataset ? r.dataset : std::string(), r.k}].push_back(r.macro_auc);
  }
  std::vector<EvalAggregate> out;
  for (const auto& [key, values] : groups) {
    const GroupStats s = stats_of(values);
    EvalAggregate agg;
    agg.model = std::get<0>(key);
    agg.dataset = std::get<1>(key);
    agg.k = std::get<2>(key);
    agg.mean_auc = s.mean;
    agg.std_auc = s.std_dev;
    agg.count = s.count;
    out.push_back(std::move(agg));
  }
  return out;
}

}  // namespace

std::vector<EvalAggregate> EvalReport::aggregate_by_dataset() const {
  return aggregate(records, true);
}

std::vector<EvalAggregate> EvalReport::aggregate_by_k() const {
  return aggregate(records, false);
}

std::uint64_t fewshot_cell_seed(std::uint64_t base_seed, const std::string& dataset_id, int k,
                                int repeat) {
  return SeedChain(base_seed).absorb(dataset_id).absorb(k).absorb(repeat).value();
}

void FewshotParams::validate() const {
  if (ks.empty()) throw ConfigError("fewshot: ks must be nonempty");
  for (int k : ks) {
    if (k < 1) throw ConfigError("fewshot: every k must be >= 1");
    if (k > max_train) {
      throw ConfigError("fewshot: k=" + std::to_string(k) + " exceeds max_train=" +
                        std::to_string(max_train));
    }
  }
  if (repeats < 1) throw ConfigError("fewshot: repeats must be >= 1");
  if (repeat_start < 0) throw ConfigError("fewshot: repeat_start must be >= 0");
  if (min_test < 1) throw ConfigError("fewshot: min_test must be >= 1");
  probe.validate();
}

EvalReport fewshot_eval(const std::vector<LabeledClip>& clips, const std::string& dataset_id,
                        const EmbedderBackend& backend, const AudioLoader& loader,
                        const FewshotParams& params) {
  params.validate();
  if (clips.empty()) throw ConfigError("fewshot: dataset '" + dataset_id + "' has no clips");
  const std::string model_name =
      params.model_name.empty() ? backend.spec().name : params.model_name;

  // Embeddings are a pure function of the clip; compute once for all cells.
  std::map<std::string, std::vector<float>> embeddings;
  for (const LabeledClip& clip : clips) {
    embeddings[clip.clip_id] = embed_clip(clip, backend, loader).values;
  }

  std::vector<std::string> classes;
  {
    std::set<std::string> keys;
    for (const LabeledClip& clip : clips) keys.insert(class_key(clip));
    classes.assign(keys.begin(), keys.end());
  }

  EvalReport report;
  for (int k : params.ks) {
    for (int r = params.repeat_start; r < params.repeat_start + params.repeats; ++r) {
      EvalRecord rec;
      rec.model = model_name;
      rec.dataset = dataset_id;
      rec.k = k;
      rec.repeat = r;
      rec.seed = fewshot_cell_seed(params.base_seed, dataset_id, k, r);
      try {
        SplitSpec split_spec;
        split_spec.k = k;
        split_spec.min_test = params.min_test;
        split_spec.max_train = params.max_train;
        split_spec.seed = rec.seed;
        const TrainTestSplit split = split_train_test(clips, split_spec);

        std::vector<LabeledEmbedding> train;
        train.reserve(split.train.size());
        for (const LabeledClip& clip : split.train) {
          train.push_back({embeddings.at(clip.clip_id), class_key(clip), clip.clip_id});
        }
        const std::uint64_t probe_seed = SeedChain(rec.seed).absorb("probe").value();
        const ProbeModel probe = train_probe(train, params.probe, probe_seed, classes);

        std::vector<ScoredExample> scored;
        scored.reserve(split.test.size());
        for (const LabeledClip& clip : split.test) {
          LabeledEmbedding ex{embeddings.at(clip.clip_id), class_key(clip), clip.clip_id};
          scored.push_back(score_example(probe, ex));
        }
        const MacroAuc auc = auc_roc_macro(scored, static_cast<int>(classes.size()));
        rec.macro_auc = auc.macro;
        for (std::size_t c = 0; c < classes.size(); ++c) {
          rec.per_class_auc[classes[c]] = auc.per_class[c];
        }
      } catch (const Error& e) {
        rec.failed = true;
        rec.fail_reason = e.what();
      }
      report.records.push_back(std::move(rec));
    }
  }
  return report;
}

void DregParams::validate() const {
  toy.validate();
  fewshot.validate();
  if (pretrain_lr <= 0.0) throw ConfigError("dreg: pretrain lr must be > 0");
  if (secondary_head_weight <= 0.0) throw ConfigError("dreg: secondary head weight must be > 0");
}

std::vector<DregRotation> dreg(const DatasetRegistry& registry, const DregParams& params,
                               const AudioLoader& loader) {
  params.validate();
  const std::vector<std::string> ids = registry.dataset_ids();
  if (ids.size() < 2) throw ConfigError("dreg: registry needs at least 2 datasets");

  std::vector<DregRotation> rotations;
  for (const std::string& holdout : ids) {
    DregRotation rotation;
    rotation.holdout = holdout;
    try {
      std::vector<std::string> training_ids;
      for (const std::string& id : ids) {
        if (id != holdout) training_ids.push_back(id);
      }

      std::vector<HeadSpec> heads =
          build_heads(registry, ids, params.secondary_head_weight);
      heads = exclude_holdout_classes(heads, holdout, registry);
      heads.erase(std::remove_if(heads.begin(), heads.end(),
                                 [](const HeadSpec& h) { return h.classes.empty(); }),
                  heads.end());
      rotation.heads = heads;

      MixtureConfig mixture = params.mixture;
      mixture.sources.clear();
      if (params.source_weights.empty()) {
        for (const std::string& id : training_ids) {
          mixture.sources.push_back({id, 1.0 / static_cast<double>(training_ids.size())});
        }
      } else {
        // Custom weights are renormalized over this rotation's training sets.
        double total = 0.0;
        for (const std::string& id : training_ids) {
          auto it = params.source_weights.find(id);
          if (it == params.source_weights.end()) {
            throw ConfigError("dreg: no source weight for dataset '" + id + "'");
          }
          total += it->second;
        }
        for (const std::string& id : training_ids) {
          mixture.sources.push_back({id, params.source_weights.at(id) / total});
        }
      }

      std::map<std::string, std::vector<LabeledClip>> groups;
      for (const std::string& id : training_ids) groups[id] = registry.clips(id);

      const std::uint64_t pretrain_seed =
          SeedChain(params.fewshot.base_seed).absorb("pretrain").absorb(holdout).value();
      const ToyPretrainResult pretrained = pretrain_toy(
          mixture, groups, heads, params.toy, params.pretrain_lr, pretrain_seed, loader);

      rotation.report = fewshot_eval(registry.clips(holdout), holdout, pretrained.model,
                                     loader, params.fewshot);
    } catch (const Error& e) {
      rotation.failed = true;
      rotation.fail_reason = e.what();
    }
    rotations.push_back(std::move(rotation));
  }
  return rotations;
}

void SweepStage::validate() const {
  if (stage_id.empty()) throw ConfigError("sweep: stage id must be nonempty");
  if (axes.empty()) throw ConfigError("sweep stage '" + stage_id + "': axes must be nonempty");
  for (const SweepAxis& axis : axes) {
    if (axis.values.empty()) {
      throw ConfigError("sweep stage '" + stage_id + "': axis '" + axis.name + "' is empty");
    }
  }
}

std::vector<SweepRow> sweep(const std::vector<SweepStage>& stages, const SweepEvalFn& eval_fn) {
  for (const SweepStage& stage : stages) stage.validate();

  std::vector<SweepRow> out;
  std::map<std::string, std::string> winners;
  for (const SweepStage& stage : stages) {
    std::vector<std::size_t> radix(stage.axes.size());
    std::size_t total = 1;
    for (std::size_t a = 0; a < stage.axes.size(); ++a) {
      radix[a] = stage.axes[a].values.size();
      total *= radix[a];
    }

    std::vector<SweepRow> rows;
    for (std::size_t index = 0; index < total; ++index) {
      SweepRow row;
      row.stage_id = stage.stage_id;
      row.config = winners;
      for (const auto& [key, value] : stage.fixed) row.config[key] = value;
      // Later axes vary fastest.
      std::size_t rem = index;
      for (std::size_t a = stage.axes.size(); a-- > 0;) {
        row.config[stage.axes[a].name] = stage.axes[a].values[rem % radix[a]];
        rem /= radix[a];
      }
      try {
        row.mean_auc = eval_fn(row.config);
        if (!std::isfinite(row.mean_auc)) {
          throw NumericError("sweep: configuration produced a non-finite AUC");
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.fail_reason = e.what();
        row.mean_auc = std::nan("");
      }
      rows.push_back(std::move(row));
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
      if (a.failed != b.failed) return !a.failed;
      if (a.failed) return false;
      return a.mean_auc > b.mean_auc;
    });
    if (!rows.empty() && !rows.front().failed) {
      winners = rows.front().config;
    }
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<SweepStage> reefset_sweep_stages(const std::vector<std::string>& validation_ids) {
  SweepStage stage;
  stage.stage_id = "NA";
  stage.fixed = {{"training_data", "reefset"}};
  stage.axes = {{"arch", {"t0", "t1", "t2"}},
                {"lr", {"0.01", "0.001", "0.0001"}},
                {"batch", {"64", "128"}}};
  stage.validation_ids = validation_ids;
  return {stage};
}

std::vector<SweepStage> bird_mix_sweep_stages(const std::vector<std::string>& validation_ids) {
  SweepStage one;
  one.stage_id = "1";
  one.fixed = {{"training_data", "reefset+bird"}, {"arch", "t0"}, {"batch", "64"}};
  one.axes = {{"lr", {"0.01", "0.001", "0.0001"}},
              {"bird_weight", {"0.1", "0.25", "0.5", "0.75", "0.9"}}};
  one.validation_ids = validation_ids;

  SweepStage two;
  two.stage_id = "2";
  two.fixed = {{"training_data", "reefset+bird"}};
  two.axes = {{"arch", {"t0", "t1", "t2"}}, {"batch", {"64", "128"}}};
  two.validation_ids = validation_ids;
  return {one, two};
}

std::vector<SweepStage> freesound_mix_sweep_stages(
    const std::vector<std::string>& validation_ids) {
  SweepStage one;
  one.stage_id = "1";
  one.fixed = {{"training_data", "reefset+bird+freesound"},
               {"arch", "t0"},
               {"batch", "64"},
               {"reef_weight", "0.1"}};
  one.axes = {{"lr", {"0.01", "0.001", "0.0001"}},
              {"bird_weight", {"0.5", "0.6", "0.7", "0.8"}}};
  one.validation_ids = validation_ids;

  SweepStage two;
  two.stage_id = "2";
  two.fixed = {{"training_data", "reefset+bird+freesound"}, {"reef_weight", "0.1"}};
  two.axes = {{"arch", {"t0", "t1", "t2"}}, {"batch", {"64", "128"}}};
  two.validation_ids = validation_ids;
  return {one, two};
}

}  // namespace pamkit
