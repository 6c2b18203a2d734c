#include "pamkit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "pamkit/csv.hpp"
#include "pamkit/error.hpp"
#include "pamkit/rng.hpp"

namespace pamkit {

using nlohmann::json;

const char* to_string(PrimaryLabel label) {
  switch (label) {
    case PrimaryLabel::kBiophony: return "biophony";
    case PrimaryLabel::kAnthrophony: return "anthrophony";
    case PrimaryLabel::kGeophony: return "geophony";
    case PrimaryLabel::kAmbient: return "ambient";
  }
  throw ConfigError("to_string: unknown primary label");
}

PrimaryLabel primary_from_string(const std::string& name) {
  if (name == "biophony") return PrimaryLabel::kBiophony;
  if (name == "anthrophony") return PrimaryLabel::kAnthrophony;
  if (name == "geophony") return PrimaryLabel::kGeophony;
  if (name == "ambient") return PrimaryLabel::kAmbient;
  throw FormatError("unknown primary label '" + name + "'");
}

std::string class_key(const LabeledClip& clip) {
  return clip.secondary ? *clip.secondary : to_string(clip.primary);
}

void DatasetRegistry::add_dataset(const std::string& dataset_id,
                                  std::vector<LabeledClip> clips) {
  if (datasets_.count(dataset_id)) {
    throw ConfigError("registry: dataset '" + dataset_id + "' already present");
  }
  std::unordered_set<std::string> seen;
  for (const LabeledClip& clip : clips) {
    if (clip.dataset_id != dataset_id) {
      throw FormatError("registry: clip '" + clip.clip_id + "' carries dataset_id '" +
                        clip.dataset_id + "' inside dataset '" + dataset_id + "'");
    }
    if (!seen.insert(clip.clip_id).second) {
      throw FormatError("registry: duplicate clip_id '" + clip.clip_id + "' in dataset '" +
                        dataset_id + "'");
    }
  }
  datasets_.emplace(dataset_id, std::move(clips));
}

bool DatasetRegistry::contains(const std::string& dataset_id) const {
  return datasets_.count(dataset_id) != 0;
}

const std::vector<LabeledClip>& DatasetRegistry::clips(const std::string& dataset_id) const {
  auto it = datasets_.find(dataset_id);
  if (it == datasets_.end()) {
    throw NotFoundError("registry: no dataset '" + dataset_id + "'");
  }
  return it->second;
}

std::vector<std::string> DatasetRegistry::dataset_ids() const {
  std::vector<std::string> ids;
  ids.reserve(datasets_.size());
  for (const auto& [id, _] : datasets_) ids.push_back(id);
  return ids;
}

std::vector<std::string> DatasetRegistry::class_inventory(const std::string& dataset_id) const {
  std::set<std::string> keys;
  for (const LabeledClip& clip : clips(dataset_id)) keys.insert(class_key(clip));
  return {keys.begin(), keys.end()};
}

std::vector<LabeledClip> DatasetRegistry::merged_clips(
    const std::vector<std::string>& dataset_ids) const {
  std::vector<std::string> sorted_ids = dataset_ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  std::vector<LabeledClip> out;
  for (const std::string& id : sorted_ids) {
    const auto& ds = clips(id);
    out.insert(out.end(), ds.begin(), ds.end());
  }
  return out;
}

std::vector<LabeledClip> amalgamate_labels(const std::vector<LabeledClip>& clips,
                                           int min_total) {
  std::unordered_map<std::string, int> secondary_counts;
  for (const LabeledClip& clip : clips) {
    if (clip.primary != PrimaryLabel::kAmbient && clip.secondary) {
      ++secondary_counts[*clip.secondary];
    }
  }

  // Pass 1: merge undersized secondary classes into their primary-only group.
  std::vector<LabeledClip> merged;
  merged.reserve(clips.size());
  for (LabeledClip clip : clips) {
    if (clip.primary != PrimaryLabel::kAmbient && clip.secondary &&
        secondary_counts[*clip.secondary] < min_total) {
      clip.secondary.reset();
    }
    merged.push_back(std::move(clip));
  }

  // Pass 2: discard undersized primary-only groups (ambient exempt).
  std::unordered_map<std::string, int> primary_only_counts;
  for (const LabeledClip& clip : merged) {
    if (clip.primary != PrimaryLabel::kAmbient && !clip.secondary) {
      ++primary_only_counts[to_string(clip.primary)];
    }
  }
  std::vector<LabeledClip> out;
  out.reserve(merged.size());
  for (LabeledClip& clip : merged) {
    if (clip.primary != PrimaryLabel::kAmbient && !clip.secondary &&
        primary_only_counts[to_string(clip.primary)] < min_total) {
      continue;
    }
    out.push_back(std::move(clip));
  }
  return out;
}

TrainTestSplit split_train_test(const std::vector<LabeledClip>& clips, const SplitSpec& spec) {
  if (spec.k < 1) throw ConfigError("split: k must be >= 1");
  if (spec.min_test < 1) throw ConfigError("split: min_test must be >= 1");
  if (spec.k > spec.max_train) throw ConfigError("split: k exceeds max_train");

  std::map<std::string, std::vector<LabeledClip>> by_class;
  for (const LabeledClip& clip : clips) by_class[class_key(clip)].push_back(clip);

  TrainTestSplit split;
  for (auto& [key, members] : by_class) {
    const std::size_t need = static_cast<std::size_t>(spec.k + spec.min_test);
    if (members.size() < need) {
      throw InsufficientSamplesError("split: class '" + key + "' has " +
                                     std::to_string(members.size()) + " clips, needs " +
                                     std::to_string(need));
    }
    std::sort(members.begin(), members.end(),
              [](const LabeledClip& a, const LabeledClip& b) { return a.clip_id < b.clip_id; });
    Rng rng(SeedChain(spec.seed).absorb(key).value());
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < static_cast<std::size_t>(spec.k) ? split.train : split.test)
          .push_back(std::move(members[i]));
    }
  }
  return split;
}

std::vector<LabeledClip> filter_ambient(const std::vector<LabeledClip>& clips) {
  std::vector<LabeledClip> out;
  out.reserve(clips.size());
  for (const LabeledClip& clip : clips) {
    if (clip.primary != PrimaryLabel::kAmbient) out.push_back(clip);
  }
  return out;
}

DatasetRegistry load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }

  if (!doc.is_object() || !doc.contains("datasets") || !doc["datasets"].is_array()) {
    throw FormatError("manifest " + path.string() + ": top level must be {\"datasets\": [...]}");
  }
  DatasetRegistry registry;
  for (const json& ds : doc["datasets"]) {
    if (!ds.is_object() || !ds.contains("id") || !ds["id"].is_string() ||
        !ds.contains("clips") || !ds["clips"].is_array()) {
      throw FormatError("manifest " + path.string() +
                        ": each dataset needs a string \"id\" and a \"clips\" array");
    }
    const std::string dataset_id = ds["id"].get<std::string>();
    std::vector<LabeledClip> clips;
    for (const json& c : ds["clips"]) {
      if (!c.is_object() || !c.contains("id") || !c["id"].is_string()) {
        throw FormatError("manifest: dataset '" + dataset_id + "' has a clip without an id");
      }
      LabeledClip clip;
      clip.dataset_id = dataset_id;
      clip.clip_id = c["id"].get<std::string>();
      if (!c.contains("primary") || !c["primary"].is_string()) {
        throw FormatError("manifest: clip '" + clip.clip_id + "' in dataset '" + dataset_id +
                          "' is missing the primary label");
      }
      try {
        clip.primary = primary_from_string(c["primary"].get<std::string>());
      } catch (const FormatError& e) {
        throw FormatError("manifest: clip '" + clip.clip_id + "': " + e.what());
      }
      if (c.contains("secondary") && !c["secondary"].is_null()) {
        if (!c["secondary"].is_string()) {
          throw FormatError("manifest: clip '" + clip.clip_id +
                            "' secondary must be a string or null");
        }
        clip.secondary = c["secondary"].get<std::string>();
      }
      if (c.contains("path") && c["path"].is_string()) {
        clip.path = c["path"].get<std::string>();
      }
      clips.push_back(std::move(clip));
    }
    registry.add_dataset(dataset_id, std::move(clips));
  }
  return registry;
}

void save_manifest(const DatasetRegistry& registry, const std::filesystem::path& path) {
  json doc;
  doc["datasets"] = json::array();
  for (const std::string& id : registry.dataset_ids()) {
    json ds;
    ds["id"] = id;
    ds["clips"] = json::array();
    for (const LabeledClip& clip : registry.clips(id)) {
      json c;
      c["id"] = clip.clip_id;
      c["path"] = clip.path;
      c["primary"] = to_string(clip.primary);
      c["secondary"] = clip.secondary ? json(*clip.secondary) : json(nullptr);
      ds["clips"].push_back(std::move(c));
    }
    doc["datasets"].push_back(std::move(ds));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("manifest: cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("manifest: write failed for " + path.string());
}

void export_manifest_csv(const DatasetRegistry& registry, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("manifest csv: cannot write " + path.string());
  out << "dataset,clip,primary,secondary,path\n";
  for (const std::string& id : registry.dataset_ids()) {
    for (const LabeledClip& clip : registry.clips(id)) {
      out << csv_escape(id) << ',' << csv_escape(clip.clip_id) << ','
          << to_string(clip.primary) << ',' << csv_escape(clip.secondary.value_or("")) << ','
          << csv_escape(clip.path) << '\n';
    }
  }
  if (!out) throw IoError("manifest csv: write failed for " + path.string());
}

}  // namespace pamkit
