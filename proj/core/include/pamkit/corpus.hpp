#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pamkit {

/// Coarse source category. Every clip carries exactly one.
enum class PrimaryLabel { kBiophony, kAnthrophony, kGeophony, kAmbient };

const char* to_string(PrimaryLabel label);
PrimaryLabel primary_from_string(const std::string& name);

struct LabeledClip {
  std::string dataset_id;
  std::string clip_id;
  PrimaryLabel primary = PrimaryLabel::kBiophony;
  /// Fine class name; absent means the clip is "primary-only".
  std::optional<std::string> secondary;
  /// Audio reference: a WAV path, or a key resolved by a synthetic/cached
  /// backend. The corpus layer never opens it.
  std::string path;
};

/// Class identity used for thresholding and splits: the secondary name when
/// present, else the primary label name.
std::string class_key(const LabeledClip& clip);

/// Immutable collection of datasets. Clip ids are unique per dataset and
/// each clip's dataset_id matches its containing dataset; both are enforced
/// on insertion. Safe for concurrent readers once populated.
class DatasetRegistry {
 public:
  void add_dataset(const std::string& dataset_id, std::vector<LabeledClip> clips);

  bool contains(const std::string& dataset_id) const;
  const std::vector<LabeledClip>& clips(const std::string& dataset_id) const;
  std::vector<std::string> dataset_ids() const;
  std::size_t dataset_count() const { return datasets_.size(); }

  /// Sorted unique class keys of one dataset.
  std::vector<std::string> class_inventory(const std::string& dataset_id) const;

  /// All clips of the named datasets, concatenated in dataset-id order.
  std::vector<LabeledClip> merged_clips(const std::vector<std::string>& dataset_ids) const;

  bool operator==(const DatasetRegistry& other) const { return datasets_ == other.datasets_; }

 private:
  std::map<std::string, std::vector<LabeledClip>> datasets_;
};

inline bool operator==(const LabeledClip& a, const LabeledClip& b) {
  return a.dataset_id == b.dataset_id && a.clip_id == b.clip_id && a.primary == b.primary &&
         a.secondary == b.secondary && a.path == b.path;
}

struct SplitSpec {
  int k = 4;
  int min_test = 10;
  int max_train = 32;
  std::uint64_t seed = 0;
};

/// Applies the small-class rules to one dataset's clips:
///  1. secondary classes with fewer than min_total members lose their
///     secondary label (merged into the primary-only group), then
///  2. primary-only groups with fewer than min_total members are discarded.
/// Ambient clips are exempt from both steps and pass through unchanged.
/// Survivor order follows the input. Idempotent.
std::vector<LabeledClip> amalgamate_labels(const std::vector<LabeledClip>& clips,
                                           int min_total = 42);

struct TrainTestSplit {
  std::vector<LabeledClip> train;
  std::vector<LabeledClip> test;
};

/// Per class: exactly spec.k clips to train, the rest to test. Assignment is
/// a seeded shuffle of the class's lexicographically sorted clip ids (seed
/// derived from spec.seed and the class key), so it depends only on the clip
/// set, never on input order. Throws InsufficientSamplesError naming the
/// first class with fewer than k + min_test members.
TrainTestSplit split_train_test(const std::vector<LabeledClip>& clips, const SplitSpec& spec);

/// Drops clips whose primary label is ambient; survivor order preserved.
std::vector<LabeledClip> filter_ambient(const std::vector<LabeledClip>& clips);

/// Manifest JSON:
/// {"datasets":[{"id":str,"clips":[{"id":str,"path":str,"primary":str,
///   "secondary":str|null}]}]}
DatasetRegistry load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetRegistry& registry, const std::filesystem::path& path);

/// CSV mirror of the manifest with columns dataset,clip,primary,secondary,path
/// (secondary empty when absent).
void export_manifest_csv(const DatasetRegistry& registry, const std::filesystem::path& path);

}  // namespace pamkit
