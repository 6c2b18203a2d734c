#include "pamkit/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "pamkit/bench.hpp"
#include "pamkit/corpus.hpp"
#include "pamkit/embedder.hpp"
#include "pamkit/error.hpp"
#include "pamkit/eval.hpp"
#include "pamkit/mixture.hpp"
#include "pamkit/probe.hpp"
#include "pamkit/report.hpp"
#include "pamkit/rng.hpp"
#include "pamkit/toy.hpp"
#include "pamkit/version.hpp"

namespace pamkit {
namespace {

using nlohmann::json;

void emit_error(const std::string& kind, const std::string& message) {
  json obj;
  obj["error"] = kind;
  obj["message"] = message;
  std::cerr << obj.dump() << "\n";
}

const std::string& require_opt(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw ConfigError(std::string("missing required option ") + flag);
  }
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  for (const std::string& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": bad integer '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

std::map<std::string, double> parse_weight_map(const std::string& text, const char* flag) {
  std::map<std::string, double> out;
  for (const std::string& item : split_list(text)) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(std::string(flag) + ": expected id=weight, got '" + item + "'");
    }
    const std::string id = item.substr(0, eq);
    double weight = 0.0;
    try {
      std::size_t used = 0;
      weight = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": bad weight in '" + item + "'");
    }
    if (out.count(id) != 0) {
      throw ConfigError(std::string(flag) + ": duplicate id '" + id + "'");
    }
    out[id] = weight;
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

double parse_flag_double(const std::string& text, const char* flag) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError(std::string(flag) + ": bad number '" + text + "'");
  }
}

/// Run-config path: explicit > next to --out > <command>.runconfig.json.
void write_run_config(const std::vector<std::string>& argv, const std::string& command,
                      const std::string& explicit_path, const std::string& out_path) {
  std::filesystem::path path;
  if (!explicit_path.empty()) {
    path = explicit_path;
  } else if (!out_path.empty()) {
    path = out_path + ".runconfig.json";
  } else {
    path = command + ".runconfig.json";
  }
  json obj;
  obj["version"] = kVersion;
  obj["prng"] = kPrngId;
  obj["command"] = command;
  obj["argv"] = argv;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << obj.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

std::unique_ptr<EmbedderBackend> make_backend(const std::string& name,
                                              const std::string& model_path,
                                              const std::string& cache_path, int mock_dim) {
  if (name == "mock") {
    return std::make_unique<MockEmbedder>(mock_spec(mock_dim));
  }
  if (name == "toy") {
    require_opt(model_path, "--model");
    return std::make_unique<ToyEmbedderModel>(load_toy(model_path));
  }
  EmbedderSpec spec;
  if (name == "vggish") {
    spec = vggish_spec();
  } else if (name == "yamnet") {
    spec = yamnet_spec();
  } else if (name == "birdnet") {
    spec = birdnet_spec();
  } else if (name == "perch") {
    spec = perch_spec();
  } else if (name != "cache") {
    throw ConfigError("--backend: unknown backend '" + name +
                      "' (expected mock, toy, cache, vggish, yamnet, birdnet, or perch)");
  }
  require_opt(cache_path, "--cache");
  EmbeddingStore store = load_cache(cache_path);
  if (name == "cache") {
    spec = mock_spec(store.dim());
    spec.name = "cache";
  } else if (store.dim() != spec.embedding_dim) {
    throw ConfigError("--cache: store dimension " + std::to_string(store.dim()) +
                      " does not match backend '" + name + "' dimension " +
                      std::to_string(spec.embedding_dim));
  }
  return std::make_unique<CachedEmbedder>(spec, std::move(store));
}

ReportFormat resolve_format(const std::string& explicit_format,
                            const std::filesystem::path& out) {
  if (!explicit_format.empty()) return report_format_from_string(explicit_format);
  return out.extension() == ".json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

json aggregate_json(const std::vector<EvalAggregate>& aggregates) {
  json arr = json::array();
  for (const EvalAggregate& a : aggregates) {
    json obj;
    obj["model"] = a.model;
    if (!a.dataset.empty()) obj["dataset"] = a.dataset;
    obj["k"] = a.k;
    obj["mean_auc"] = a.mean_auc;
    obj["std_auc"] = a.std_auc;
    obj["count"] = a.count;
    arr.push_back(std::move(obj));
  }
  return arr;
}

struct ManifestArgs {
  std::string manifest;
  std::string out;
  std::string run_config;
  bool amalgamate = false;
  int min_total = 42;
};

int do_manifest(const ManifestArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "manifest", a.run_config, a.out);
  DatasetRegistry registry = load_manifest(require_opt(a.manifest, "--manifest"));
  if (a.amalgamate) {
    DatasetRegistry merged;
    for (const std::string& id : registry.dataset_ids()) {
      merged.add_dataset(id, amalgamate_labels(registry.clips(id), a.min_total));
    }
    registry = std::move(merged);
  }
  if (!a.out.empty()) {
    const std::filesystem::path out = a.out;
    if (out.extension() == ".csv") {
      export_manifest_csv(registry, out);
    } else {
      save_manifest(registry, out);
    }
  }
  json summary;
  summary["datasets"] = json::array();
  std::size_t total = 0;
  for (const std::string& id : registry.dataset_ids()) {
    json entry;
    entry["id"] = id;
    entry["clips"] = registry.clips(id).size();
    entry["classes"] = registry.class_inventory(id).size();
    summary["datasets"].push_back(std::move(entry));
    total += registry.clips(id).size();
  }
  summary["clips"] = total;
  if (!a.out.empty()) summary["out"] = a.out;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct EmbedArgs {
  std::string manifest;
  std::string backend = "mock";
  std::string model;
  std::string cache;
  std::string dataset;
  std::string import_csv;
  std::string out;
  std::string run_config;
  int dim = 128;
};

int do_embed(const EmbedArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "embed", a.run_config, a.out);
  require_opt(a.out, "--out");
  if (!a.import_csv.empty()) {
    const EmbeddingStore store = import_embeddings_csv(a.import_csv);
    save_cache(store, a.out);
    json summary = {{"clips", store.size()}, {"dim", store.dim()}, {"out", a.out}};
    std::cout << summary.dump() << "\n";
    return 0;
  }
  const std::filesystem::path manifest = require_opt(a.manifest, "--manifest");
  const DatasetRegistry registry = load_manifest(manifest);
  const auto backend = make_backend(a.backend, a.model, a.cache, a.dim);
  const AudioLoader loader = file_loader(manifest.parent_path());

  std::vector<std::string> ids =
      a.dataset.empty() ? registry.dataset_ids() : std::vector<std::string>{a.dataset};
  EmbeddingStore store(backend->spec().embedding_dim);
  for (const std::string& id : ids) {
    for (const LabeledClip& clip : registry.clips(id)) {
      store.put(clip.clip_id, embed_clip(clip, *backend, loader).values);
    }
  }
  save_cache(store, a.out);
  json summary = {{"clips", store.size()}, {"dim", store.dim()}, {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

struct ProbeArgs {
  std::string manifest;
  std::string dataset;
  std::string backend = "mock";
  std::string model;
  std::string cache;
  std::string out;
  std::string run_config;
  std::string optimizer = "sgd";
  int dim = 128;
  int k = 4;
  int min_test = 10;
  int max_train = 32;
  std::uint64_t seed = 0;
  int epochs = 128;
  int batch = 32;
  double lr = 0.001;
  double l2 = 0.0;
};

int do_probe(const ProbeArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "probe", a.run_config, a.out);
  const std::filesystem::path manifest = require_opt(a.manifest, "--manifest");
  const DatasetRegistry registry = load_manifest(manifest);
  std::string dataset = a.dataset;
  if (dataset.empty()) {
    if (registry.dataset_count() != 1) throw ConfigError("missing required option --dataset");
    dataset = registry.dataset_ids().front();
  }
  const auto backend = make_backend(a.backend, a.model, a.cache, a.dim);
  const AudioLoader loader = file_loader(manifest.parent_path());

  SplitSpec split_spec;
  split_spec.k = a.k;
  split_spec.min_test = a.min_test;
  split_spec.max_train = a.max_train;
  split_spec.seed = a.seed;
  const std::vector<LabeledClip>& clips = registry.clips(dataset);
  const TrainTestSplit split = split_train_test(clips, split_spec);

  std::set<std::string> keys;
  for (const LabeledClip& clip : clips) keys.insert(class_key(clip));
  const std::vector<std::string> classes(keys.begin(), keys.end());

  auto embed_all = [&](const std::vector<LabeledClip>& list) {
    std::vector<LabeledEmbedding> out;
    out.reserve(list.size());
    for (const LabeledClip& clip : list) {
      out.push_back({embed_clip(clip, *backend, loader).values, class_key(clip), clip.clip_id});
    }
    return out;
  };

  ProbeHparams hparams;
  hparams.epochs = a.epochs;
  hparams.batch = a.batch;
  hparams.lr = a.lr;
  hparams.optimizer = optimizer_from_string(a.optimizer);
  hparams.l2 = a.l2;
  const std::uint64_t probe_seed = SeedChain(a.seed).absorb("probe").value();
  const ProbeModel probe = train_probe(embed_all(split.train), hparams, probe_seed, classes);

  std::vector<ScoredExample> scored;
  for (const LabeledEmbedding& ex : embed_all(split.test)) {
    scored.push_back(score_example(probe, ex));
  }
  const MacroAuc auc = auc_roc_macro(scored, static_cast<int>(classes.size()));

  if (!a.out.empty()) save_probe(probe, a.out);
  json summary;
  summary["dataset"] = dataset;
  summary["k"] = a.k;
  summary["train"] = split.train.size();
  summary["test"] = split.test.size();
  summary["macro_auc"] = auc.macro;
  json per_class = json::object();
  for (std::size_t c = 0; c < classes.size(); ++c) per_class[classes[c]] = auc.per_class[c];
  summary["per_class_auc"] = std::move(per_class);
  if (!a.out.empty()) summary["out"] = a.out;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct FewshotArgs {
  std::string manifest;
  std::string dataset;
  std::string backend = "mock";
  std::string model;
  std::string cache;
  std::string ks = "4,8,16,32";
  std::string out = "fewshot_records.csv";
  std::string format;
  std::string run_config;
  std::string model_name;
  std::string optimizer = "sgd";
  int dim = 128;
  int repeats = 10;
  int repeat_start = 0;
  std::uint64_t seed = 0;
  int min_test = 10;
  int max_train = 32;
  int epochs = 128;
  int batch = 32;
  double lr = 0.001;
  double l2 = 0.0;
};

FewshotParams fewshot_params(const FewshotArgs& a) {
  FewshotParams params;
  params.ks = parse_int_list(a.ks, "--ks");
  params.repeats = a.repeats;
  params.repeat_start = a.repeat_start;
  params.base_seed = a.seed;
  params.min_test = a.min_test;
  params.max_train = a.max_train;
  params.probe.epochs = a.epochs;
  params.probe.batch = a.batch;
  params.probe.lr = a.lr;
  params.probe.optimizer = optimizer_from_string(a.optimizer);
  params.probe.l2 = a.l2;
  params.model_name = a.model_name;
  return params;
}

int do_fewshot(const FewshotArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "fewshot", a.run_config, a.out);
  const std::filesystem::path manifest = require_opt(a.manifest, "--manifest");
  const DatasetRegistry registry = load_manifest(manifest);
  const auto backend = make_backend(a.backend, a.model, a.cache, a.dim);
  const AudioLoader loader = file_loader(manifest.parent_path());
  const FewshotParams params = fewshot_params(a);

  std::vector<std::string> ids =
      a.dataset.empty() ? registry.dataset_ids() : std::vector<std::string>{a.dataset};
  EvalReport report;
  for (const std::string& id : ids) {
    EvalReport part = fewshot_eval(registry.clips(id), id, *backend, loader, params);
    report.records.insert(report.records.end(), part.records.begin(), part.records.end());
  }
  emit_report(report.records, a.out, resolve_format(a.format, a.out));
  std::cout << aggregate_json(report.aggregate_by_dataset()).dump() << "\n";
  return 0;
}

struct PretrainArgs {
  std::string manifest;
  std::string sources;
  std::string arch = "t0";
  std::string out = "toy.json";
  std::string run_config;
  int steps = 2000;
  int batch = 16;
  double lr = 0.01;
  double window = 1.0;
  int rate = 16000;
  double secondary_weight = 1.0;
  double gain_min = 0.15;
  double gain_max = 0.25;
  double mixup_p = 0.75;
  std::uint64_t seed = 0;
};

MixtureConfig mixture_config(const PretrainArgs& a, const std::vector<std::string>& ids,
                             const std::map<std::string, double>& weights) {
  MixtureConfig mixture;
  if (weights.empty()) {
    for (const std::string& id : ids) {
      mixture.sources.push_back({id, 1.0 / static_cast<double>(ids.size())});
    }
  } else {
    for (const auto& [id, weight] : weights) mixture.sources.push_back({id, weight});
  }
  mixture.batch_size = a.batch;
  mixture.steps = a.steps;
  mixture.augment.gain_min = a.gain_min;
  mixture.augment.gain_max = a.gain_max;
  mixture.augment.mixup_p = a.mixup_p;
  return mixture;
}

int do_pretrain(const PretrainArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "pretrain", a.run_config, a.out);
  const std::filesystem::path manifest = require_opt(a.manifest, "--manifest");
  const DatasetRegistry registry = load_manifest(manifest);

  std::map<std::string, double> weights;
  if (!a.sources.empty()) weights = parse_weight_map(a.sources, "--sources");
  std::vector<std::string> ids;
  if (weights.empty()) {
    ids = registry.dataset_ids();
  } else {
    for (const auto& [id, weight] : weights) ids.push_back(id);
  }
  for (const std::string& id : ids) {
    if (!registry.contains(id)) {
      throw NotFoundError("--sources: dataset '" + id + "' is not in the manifest");
    }
  }

  const MixtureConfig mixture = mixture_config(a, ids, weights);
  const std::vector<HeadSpec> heads = build_heads(registry, ids, a.secondary_weight);
  std::map<std::string, std::vector<LabeledClip>> groups;
  for (const std::string& id : ids) groups[id] = registry.clips(id);

  ToyConfig toy;
  toy.arch = toy_arch_preset(a.arch);
  toy.input_rate = a.rate;
  toy.window_len_s = a.window;

  const AudioLoader loader = memoized_loader(file_loader(manifest.parent_path()));
  const ToyPretrainResult result =
      pretrain_toy(mixture, groups, heads, toy, a.lr, a.seed, loader);
  save_toy(result.model, a.out);

  json summary;
  summary["steps"] = result.step_losses.size();
  summary["first_loss"] = result.step_losses.empty() ? 0.0 : result.step_losses.front();
  summary["final_loss"] = result.step_losses.empty() ? 0.0 : result.step_losses.back();
  summary["heads"] = heads.size();
  summary["out"] = a.out;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct DregArgs {
  FewshotArgs fewshot;
  PretrainArgs pretrain;
  std::string weights;
};

int do_dreg(const DregArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "dreg", a.fewshot.run_config, a.fewshot.out);
  const std::filesystem::path manifest = require_opt(a.fewshot.manifest, "--manifest");
  const DatasetRegistry registry = load_manifest(manifest);

  DregParams params;
  params.mixture.batch_size = a.pretrain.batch;
  params.mixture.steps = a.pretrain.steps;
  params.mixture.augment.gain_min = a.pretrain.gain_min;
  params.mixture.augment.gain_max = a.pretrain.gain_max;
  params.mixture.augment.mixup_p = a.pretrain.mixup_p;
  if (!a.weights.empty()) params.source_weights = parse_weight_map(a.weights, "--weights");
  params.toy.arch = toy_arch_preset(a.pretrain.arch);
  params.toy.input_rate = a.pretrain.rate;
  params.toy.window_len_s = a.pretrain.window;
  params.pretrain_lr = a.pretrain.lr;
  params.secondary_head_weight = a.pretrain.secondary_weight;
  params.fewshot = fewshot_params(a.fewshot);
  if (params.fewshot.model_name.empty()) params.fewshot.model_name = "toy-dreg";

  const AudioLoader loader = memoized_loader(file_loader(manifest.parent_path()));
  const std::vector<DregRotation> rotations = dreg(registry, params, loader);

  std::vector<EvalRecord> records;
  json summary = json::array();
  for (const DregRotation& rotation : rotations) {
    json entry;
    entry["holdout"] = rotation.holdout;
    entry["failed"] = rotation.failed;
    if (rotation.failed) {
      entry["reason"] = rotation.fail_reason;
      EvalRecord record;
      record.model = params.fewshot.model_name;
      record.dataset = rotation.holdout;
      record.failed = true;
      record.fail_reason = rotation.fail_reason;
      records.push_back(std::move(record));
    } else {
      entry["cells"] = rotation.report.records.size();
      entry["by_k"] = aggregate_json(rotation.report.aggregate_by_k());
      records.insert(records.end(), rotation.report.records.begin(),
                     rotation.report.records.end());
    }
    summary.push_back(std::move(entry));
  }
  emit_report(records, a.fewshot.out, resolve_format(a.fewshot.format, a.fewshot.out));
  std::cout << summary.dump() << "\n";
  return 0;
}

struct SweepArgs {
  std::string grid;
  std::string validation;
  std::string manifest;
  std::string reef;
  std::string bird;
  std::string extra;
  std::string out = "sweep_rows.csv";
  std::string run_config;
  std::string val_ks = "4,8,16,32";
  bool mock = false;
  int val_repeats = 2;
  int steps = 200;
  double secondary_weight = 1.0;
  std::uint64_t seed = 0;
};

std::vector<SweepStage> sweep_stages_for(const std::string& grid,
                                         const std::vector<std::string>& validation_ids) {
  if (grid == "reefset") return reefset_sweep_stages(validation_ids);
  if (grid == "bird-mix") return bird_mix_sweep_stages(validation_ids);
  if (grid == "freesound-mix") return freesound_mix_sweep_stages(validation_ids);
  throw ConfigError("--grid: unknown grid '" + grid +
                    "' (expected reefset, bird-mix, or freesound-mix)");
}

/// Weight layout per grid: reefset trains on reef sources alone; bird-mix
/// assigns bird_weight to bird sources and the rest to reef; freesound-mix
/// fixes the reef share (reef_weight), assigns bird_weight to bird sources,
/// and the remainder to the extra sources.
std::map<std::string, double> sweep_role_weights(
    const std::map<std::string, std::string>& config) {
  const std::string td = config.at("training_data");
  std::map<std::string, double> roles;
  if (td == "reefset") {
    roles["reef"] = 1.0;
  } else if (td == "reefset+bird") {
    const double bird = parse_flag_double(config.at("bird_weight"), "bird_weight");
    roles["bird"] = bird;
    roles["reef"] = 1.0 - bird;
  } else if (td == "reefset+bird+freesound") {
    const double reef = parse_flag_double(config.at("reef_weight"), "reef_weight");
    const double bird = parse_flag_double(config.at("bird_weight"), "bird_weight");
    roles["reef"] = reef;
    roles["bird"] = bird;
    roles["extra"] = 1.0 - reef - bird;
  } else {
    throw ConfigError("sweep: unknown training_data '" + td + "'");
  }
  return roles;
}

int do_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "sweep", a.run_config, a.out);
  const std::vector<std::string> validation_ids = split_list(a.validation);
  const std::vector<SweepStage> stages = sweep_stages_for(a.grid, validation_ids);

  SweepEvalFn eval_fn;
  DatasetRegistry registry;
  std::map<std::string, std::vector<std::string>> role_ids;
  AudioLoader loader;
  if (a.mock) {
    const std::uint64_t seed = a.seed;
    eval_fn = [seed](const std::map<std::string, std::string>& config) {
      SeedChain chain(seed);
      chain.absorb("sweep-mock");
      for (const auto& [key, value] : config) {
        chain.absorb(key);
        chain.absorb(value);
      }
      Rng rng(chain.value());
      return rng.next_double();
    };
  } else {
    const std::filesystem::path manifest = require_opt(a.manifest, "--manifest");
    registry = load_manifest(manifest);
    loader = memoized_loader(file_loader(manifest.parent_path()));
    role_ids["reef"] = split_list(a.reef);
    role_ids["bird"] = split_list(a.bird);
    role_ids["extra"] = split_list(a.extra);
    if (validation_ids.empty()) throw ConfigError("missing required option --validation");
    for (const std::string& id : validation_ids) {
      if (!registry.contains(id)) {
        throw NotFoundError("--validation: dataset '" + id + "' is not in the manifest");
      }
      for (const auto& [role, ids] : role_ids) {
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
          throw ConfigError("--validation: dataset '" + id + "' is also a --" + role +
                            " training source");
        }
      }
    }

    const SweepArgs args = a;
    eval_fn = [&registry, &role_ids, &loader, validation_ids,
               args](const std::map<std::string, std::string>& config) {
      const std::map<std::string, double> roles = sweep_role_weights(config);
      MixtureConfig mixture;
      std::vector<std::string> training_ids;
      for (const auto& [role, weight] : roles) {
        if (weight <= 0.0) continue;
        const std::vector<std::string>& ids = role_ids.at(role);
        if (ids.empty()) {
          throw ConfigError("sweep: training_data needs --" +
                            (role == "extra" ? std::string("extra") : role) + " datasets");
        }
        for (const std::string& id : ids) {
          mixture.sources.push_back({id, weight / static_cast<double>(ids.size())});
          training_ids.push_back(id);
        }
      }
      mixture.batch_size = std::stoi(config.at("batch"));
      mixture.steps = args.steps;

      ToyConfig toy;
      toy.arch = toy_arch_preset(config.at("arch"));
      const double lr = parse_flag_double(config.at("lr"), "lr");

      const std::vector<HeadSpec> heads =
          build_heads(registry, training_ids, args.secondary_weight);
      std::map<std::string, std::vector<LabeledClip>> groups;
      for (const std::string& id : training_ids) groups[id] = registry.clips(id);

      SeedChain chain(args.seed);
      chain.absorb("sweep");
      for (const auto& [key, value] : config) {
        chain.absorb(key);
        chain.absorb(value);
      }
      const ToyPretrainResult pretrained =
          pretrain_toy(mixture, groups, heads, toy, lr, chain.value(), loader);

      FewshotParams val;
      val.ks = parse_int_list(args.val_ks, "--val-ks");
      val.repeats = args.val_repeats;
      val.base_seed = args.seed;
      double sum = 0.0;
      int count = 0;
      for (const std::string& id : validation_ids) {
        const EvalReport report =
            fewshot_eval(registry.clips(id), id, pretrained.model, loader, val);
        for (const EvalRecord& record : report.records) {
          if (record.failed) continue;
          sum += record.macro_auc;
          ++count;
        }
      }
      if (count == 0) throw NumericError("sweep: every validation cell failed");
      return sum / static_cast<double>(count);
    };
  }

  const std::vector<SweepRow> rows = sweep(stages, eval_fn);
  write_sweep_csv(rows, a.out);

  json summary;
  summary["rows"] = rows.size();
  json per_stage = json::array();
  for (const SweepStage& stage : stages) {
    std::size_t count = 0;
    const SweepRow* best = nullptr;
    for (const SweepRow& row : rows) {
      if (row.stage_id != stage.stage_id) continue;
      ++count;
      if (best == nullptr && !row.failed) best = &row;
    }
    json entry;
    entry["stage"] = stage.stage_id;
    entry["rows"] = count;
    if (best != nullptr) {
      entry["best_auc"] = best->mean_auc;
      entry["best_config"] = best->config;
    }
    per_stage.push_back(std::move(entry));
  }
  summary["stages"] = std::move(per_stage);
  summary["out"] = a.out;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct BenchArgs {
  std::string backend = "mock";
  std::string model;
  std::string cache;
  std::string batch_grid = "8,16,32,64,128";
  std::string worker_grid = "1,4,8,12,16";
  std::string out = "bench_cells.csv";
  std::string run_config;
  int dim = 128;
  double duration = 3600.0;
  int rate = 32000;
  std::uint64_t seed = 0;
};

int do_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "bench", a.run_config, a.out);
  const auto backend = make_backend(a.backend, a.model, a.cache, a.dim);
  BenchConfig config;
  config.duration_s = a.duration;
  config.rate = a.rate;
  config.batch_grid = parse_int_list(a.batch_grid, "--batch-grid");
  config.worker_grid = parse_int_list(a.worker_grid, "--worker-grid");
  config.seed = a.seed;

  const BenchResult result = bench_inference(*backend, config);
  write_bench_csv(result, a.out);

  json summary;
  summary["backend"] = result.backend;
  summary["audio_s"] = result.audio_s;
  summary["cells"] = result.cells.size();
  if (result.best_index >= 0) {
    const BenchCell& best = result.best();
    summary["best"] = {{"batch", best.batch},
                       {"workers", best.workers},
                       {"wall_s", best.wall_s},
                       {"rtf", best.rtf}};
  }
  summary["out"] = a.out;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct ReportArgs {
  std::string records;
  std::string out;
  std::string emit;
  std::string format;
  std::string by = "dataset";
  std::string run_config;
};

int do_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  write_run_config(argv, "report", a.run_config, a.out);
  EvalReport report;
  for (const std::string& path : split_list(require_opt(a.records, "--records"))) {
    const std::vector<EvalRecord> part = load_records(path);
    report.records.insert(report.records.end(), part.begin(), part.end());
  }
  std::vector<EvalAggregate> aggregates;
  if (a.by == "dataset") {
    aggregates = report.aggregate_by_dataset();
  } else if (a.by == "k") {
    aggregates = report.aggregate_by_k();
  } else {
    throw ConfigError("--by: expected dataset or k, got '" + a.by + "'");
  }
  if (!a.out.empty()) write_aggregates_csv(aggregates, a.out);
  if (!a.emit.empty()) {
    emit_report(report.records, a.emit, resolve_format(a.format, a.emit));
  }
  std::cout << aggregate_json(aggregates).dump() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Bioacoustic transfer-learning evaluation harness"};
  app.set_version_flag("--version", std::string(kVersion) + " prng=" + kPrngId);
  app.require_subcommand(1);

  ManifestArgs manifest_args;
  CLI::App* manifest_cmd = app.add_subcommand("manifest", "Validate or convert a manifest");
  manifest_cmd->add_option("--manifest", manifest_args.manifest, "Manifest JSON path")
      ->take_last();
  manifest_cmd->add_option("--out", manifest_args.out, "Output path (.json or .csv)")
      ->take_last();
  manifest_cmd->add_flag("--amalgamate", manifest_args.amalgamate,
                         "Apply small-class label amalgamation per dataset");
  manifest_cmd->add_option("--min-total", manifest_args.min_total, "Amalgamation threshold")
      ->take_last();
  manifest_cmd->add_option("--run-config", manifest_args.run_config, "Run-config path")
      ->take_last();

  EmbedArgs embed_args;
  CLI::App* embed_cmd = app.add_subcommand("embed", "Compute or import an embedding cache");
  embed_cmd->add_option("--manifest", embed_args.manifest, "Manifest JSON path")->take_last();
  embed_cmd->add_option("--backend", embed_args.backend, "mock|toy|cache|vggish|yamnet|birdnet|perch")
      ->take_last();
  embed_cmd->add_option("--model", embed_args.model, "Toy model JSON (backend toy)")
      ->take_last();
  embed_cmd->add_option("--cache", embed_args.cache, "Embedding cache input (lookup backends)")
      ->take_last();
  embed_cmd->add_option("--dataset", embed_args.dataset, "Restrict to one dataset")
      ->take_last();
  embed_cmd->add_option("--import-csv", embed_args.import_csv, "Import embeddings from CSV")
      ->take_last();
  embed_cmd->add_option("--dim", embed_args.dim, "Mock embedding dimension")->take_last();
  embed_cmd->add_option("--out", embed_args.out, "Cache output path")->take_last();
  embed_cmd->add_option("--run-config", embed_args.run_config, "Run-config path")->take_last();

  ProbeArgs probe_args;
  CLI::App* probe_cmd = app.add_subcommand("probe", "Train and score one few-shot split");
  probe_cmd->add_option("--manifest", probe_args.manifest, "Manifest JSON path")->take_last();
  probe_cmd->add_option("--dataset", probe_args.dataset, "Dataset id")->take_last();
  probe_cmd->add_option("--backend", probe_args.backend, "Embedding backend")->take_last();
  probe_cmd->add_option("--model", probe_args.model, "Toy model JSON")->take_last();
  probe_cmd->add_option("--cache", probe_args.cache, "Embedding cache path")->take_last();
  probe_cmd->add_option("--dim", probe_args.dim, "Mock embedding dimension")->take_last();
  probe_cmd->add_option("--k", probe_args.k, "Shots per class")->take_last();
  probe_cmd->add_option("--seed", probe_args.seed, "Split and init seed")->take_last();
  probe_cmd->add_option("--min-test", probe_args.min_test, "Minimum test clips per class")
      ->take_last();
  probe_cmd->add_option("--max-train", probe_args.max_train, "Maximum shots per class")
      ->take_last();
  probe_cmd->add_option("--epochs", probe_args.epochs, "Training epochs")->take_last();
  probe_cmd->add_option("--batch", probe_args.batch, "Mini-batch size")->take_last();
  probe_cmd->add_option("--lr", probe_args.lr, "Learning rate")->take_last();
  probe_cmd->add_option("--optimizer", probe_args.optimizer, "sgd|adam")->take_last();
  probe_cmd->add_option("--l2", probe_args.l2, "L2 penalty")->take_last();
  probe_cmd->add_option("--out", probe_args.out, "Probe JSON output")->take_last();
  probe_cmd->add_option("--run-config", probe_args.run_config, "Run-config path")->take_last();

  FewshotArgs fewshot_args;
  CLI::App* fewshot_cmd = app.add_subcommand("fewshot", "Few-shot transfer evaluation");
  auto add_fewshot_options = [](CLI::App* cmd, FewshotArgs& fa) {
    cmd->add_option("--manifest", fa.manifest, "Manifest JSON path")->take_last();
    cmd->add_option("--dataset", fa.dataset, "Restrict to one dataset")->take_last();
    cmd->add_option("--ks", fa.ks, "Comma-separated shot counts")->take_last();
    cmd->add_option("--repeats", fa.repeats, "Repeats per k")->take_last();
    cmd->add_option("--repeat-start", fa.repeat_start, "First repeat index")->take_last();
    cmd->add_option("--seed", fa.seed, "Base seed")->take_last();
    cmd->add_option("--min-test", fa.min_test, "Minimum test clips per class")->take_last();
    cmd->add_option("--max-train", fa.max_train, "Maximum shots per class")->take_last();
    cmd->add_option("--epochs", fa.epochs, "Probe epochs")->take_last();
    cmd->add_option("--probe-batch", fa.batch, "Probe mini-batch size")->take_last();
    cmd->add_option("--probe-lr", fa.lr, "Probe learning rate")->take_last();
    cmd->add_option("--optimizer", fa.optimizer, "sgd|adam")->take_last();
    cmd->add_option("--l2", fa.l2, "Probe L2 penalty")->take_last();
    cmd->add_option("--model-name", fa.model_name, "Model name recorded per cell")
        ->take_last();
    cmd->add_option("--out", fa.out, "Records output path (.csv or .json)")->take_last();
    cmd->add_option("--format", fa.format, "csv|json (default from extension)")->take_last();
    cmd->add_option("--run-config", fa.run_config, "Run-config path")->take_last();
  };
  add_fewshot_options(fewshot_cmd, fewshot_args);
  fewshot_cmd->add_option("--backend", fewshot_args.backend, "Embedding backend")
      ->take_last();
  fewshot_cmd->add_option("--model", fewshot_args.model, "Toy model JSON")->take_last();
  fewshot_cmd->add_option("--cache", fewshot_args.cache, "Embedding cache path")->take_last();
  fewshot_cmd->add_option("--dim", fewshot_args.dim, "Mock embedding dimension")->take_last();

  PretrainArgs pretrain_args;
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "Mixture-pretrain the toy embedder");
  auto add_pretrain_options = [](CLI::App* cmd, PretrainArgs& pa, bool with_sources) {
    if (with_sources) {
      cmd->add_option("--sources", pa.sources, "id=weight,... (default all, equal)")
          ->take_last();
    }
    cmd->add_option("--steps", pa.steps, "Training steps")->take_last();
    cmd->add_option("--batch", pa.batch, "Mixture batch size")->take_last();
    cmd->add_option("--lr", pa.lr, "Pretraining learning rate")->take_last();
    cmd->add_option("--arch", pa.arch, "t0|t1|t2")->take_last();
    cmd->add_option("--window", pa.window, "Toy window length seconds")->take_last();
    cmd->add_option("--rate", pa.rate, "Toy input sample rate")->take_last();
    cmd->add_option("--secondary-weight", pa.secondary_weight, "Secondary head loss weight")
        ->take_last();
    cmd->add_option("--gain-min", pa.gain_min, "Gain augmentation lower bound")->take_last();
    cmd->add_option("--gain-max", pa.gain_max, "Gain augmentation upper bound")->take_last();
    cmd->add_option("--mixup-p", pa.mixup_p, "MixUp probability")->take_last();
  };
  pretrain_cmd->add_option("--manifest", pretrain_args.manifest, "Manifest JSON path")
      ->take_last();
  add_pretrain_options(pretrain_cmd, pretrain_args, true);
  pretrain_cmd->add_option("--seed", pretrain_args.seed, "Pretraining seed")->take_last();
  pretrain_cmd->add_option("--out", pretrain_args.out, "Toy model JSON output")->take_last();
  pretrain_cmd->add_option("--run-config", pretrain_args.run_config, "Run-config path")
      ->take_last();

  DregArgs dreg_args;
  dreg_args.fewshot.out = "dreg_records.csv";
  CLI::App* dreg_cmd = app.add_subcommand("dreg", "Leave-one-dataset-out rotation");
  add_fewshot_options(dreg_cmd, dreg_args.fewshot);
  add_pretrain_options(dreg_cmd, dreg_args.pretrain, false);
  dreg_cmd->add_option("--weights", dreg_args.weights,
                       "id=weight,... source weights, renormalized per rotation")
      ->take_last();

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Staged hyperparameter sweep");
  sweep_cmd->add_option("--grid", sweep_args.grid, "reefset|bird-mix|freesound-mix")
      ->take_last();
  sweep_cmd->add_option("--validation", sweep_args.validation, "Validation dataset ids")
      ->take_last();
  sweep_cmd->add_option("--manifest", sweep_args.manifest, "Manifest JSON path")->take_last();
  sweep_cmd->add_option("--reef", sweep_args.reef, "Reef-role dataset ids")->take_last();
  sweep_cmd->add_option("--bird", sweep_args.bird, "Bird-role dataset ids")->take_last();
  sweep_cmd->add_option("--extra", sweep_args.extra, "Extra-role dataset ids")->take_last();
  sweep_cmd->add_flag("--mock", sweep_args.mock, "Seeded mock evaluation (no training)");
  sweep_cmd->add_option("--steps", sweep_args.steps, "Pretraining steps per row")
      ->take_last();
  sweep_cmd->add_option("--val-ks", sweep_args.val_ks, "Validation shot counts")
      ->take_last();
  sweep_cmd->add_option("--val-repeats", sweep_args.val_repeats, "Validation repeats")
      ->take_last();
  sweep_cmd
      ->add_option("--secondary-weight", sweep_args.secondary_weight,
                   "Secondary head loss weight")
      ->take_last();
  sweep_cmd->add_option("--seed", sweep_args.seed, "Sweep seed")->take_last();
  sweep_cmd->add_option("--out", sweep_args.out, "Sweep CSV output")->take_last();
  sweep_cmd->add_option("--run-config", sweep_args.run_config, "Run-config path")
      ->take_last();

  BenchArgs bench_args;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Inference throughput benchmark");
  bench_cmd->add_option("--backend", bench_args.backend, "Embedding backend")->take_last();
  bench_cmd->add_option("--model", bench_args.model, "Toy model JSON")->take_last();
  bench_cmd->add_option("--cache", bench_args.cache, "Embedding cache path")->take_last();
  bench_cmd->add_option("--dim", bench_args.dim, "Mock embedding dimension")->take_last();
  bench_cmd->add_option("--duration", bench_args.duration, "Synthesized audio seconds")
      ->take_last();
  bench_cmd->add_option("--rate", bench_args.rate, "Synthesis sample rate")->take_last();
  bench_cmd->add_option("--batch-grid", bench_args.batch_grid, "Comma-separated batch sizes")
      ->take_last();
  bench_cmd
      ->add_option("--worker-grid", bench_args.worker_grid, "Comma-separated worker counts")
      ->take_last();
  bench_cmd->add_option("--seed", bench_args.seed, "Noise seed")->take_last();
  bench_cmd->add_option("--out", bench_args.out, "Bench CSV output")->take_last();
  bench_cmd->add_option("--run-config", bench_args.run_config, "Run-config path")
      ->take_last();

  ReportArgs report_args;
  CLI::App* report_cmd = app.add_subcommand("report", "Aggregate evaluation records");
  report_cmd->add_option("--records", report_args.records, "Comma-separated record files")
      ->take_last();
  report_cmd->add_option("--out", report_args.out, "Aggregates CSV output")->take_last();
  report_cmd->add_option("--emit", report_args.emit, "Re-emit loaded records to this path")
      ->take_last();
  report_cmd->add_option("--format", report_args.format, "csv|json for --emit")->take_last();
  report_cmd->add_option("--by", report_args.by, "dataset|k")->take_last();
  report_cmd->add_option("--run-config", report_args.run_config, "Run-config path")
      ->take_last();

  std::string replay_path;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Re-run a stored run-config");
  replay_cmd->add_option("--run-config", replay_path, "Run-config JSON to replay")
      ->take_last();
  replay_cmd->allow_extras();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    std::cout << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand(manifest_cmd)) return do_manifest(manifest_args, args);
    if (app.got_subcommand(embed_cmd)) return do_embed(embed_args, args);
    if (app.got_subcommand(probe_cmd)) return do_probe(probe_args, args);
    if (app.got_subcommand(fewshot_cmd)) return do_fewshot(fewshot_args, args);
    if (app.got_subcommand(pretrain_cmd)) return do_pretrain(pretrain_args, args);
    if (app.got_subcommand(dreg_cmd)) return do_dreg(dreg_args, args);
    if (app.got_subcommand(sweep_cmd)) return do_sweep(sweep_args, args);
    if (app.got_subcommand(bench_cmd)) return do_bench(bench_args, args);
    if (app.got_subcommand(report_cmd)) return do_report(report_args, args);
    if (app.got_subcommand(replay_cmd)) {
      require_opt(replay_path, "--run-config");
      std::ifstream in(replay_path, std::ios::binary);
      if (!in) throw IoError("cannot open " + replay_path);
      json obj;
      try {
        obj = json::parse(in);
      } catch (const json::parse_error& e) {
        throw FormatError("run-config " + replay_path + ": " + e.what());
      }
      if (!obj.contains("argv") || !obj.at("argv").is_array()) {
        throw FormatError("run-config " + replay_path + ": missing argv array");
      }
      std::vector<std::string> merged;
      for (const json& item : obj.at("argv")) merged.push_back(item.get<std::string>());
      if (!merged.empty() && merged.front() == "replay") {
        throw ConfigError("replay: refusing to replay a replay run-config");
      }
      for (const std::string& extra : replay_cmd->remaining()) merged.push_back(extra);
      return run_cli(merged);
    }
    emit_error("usage", "no subcommand given");
    return 2;
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return 3;
  } catch (const NotFoundError& e) {
    emit_error("not-found", e.what());
    return 1;
  } catch (const FormatError& e) {
    emit_error("format", e.what());
    return 1;
  } catch (const IoError& e) {
    emit_error("io", e.what());
    return 1;
  } catch (const NumericError& e) {
    emit_error("numeric", e.what());
    return 1;
  } catch (const UnsupportedError& e) {
    emit_error("unsupported", e.what());
    return 1;
  } catch (const InsufficientSamplesError& e) {
    emit_error("insufficient-samples", e.what());
    return 1;
  } catch (const Error& e) {
    emit_error("error", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
}

}  // namespace pamkit
