#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pamkit/error.hpp"
#include "pamkit/mixture.hpp"
#include "pamkit/rng.hpp"
#include "support.hpp"

using namespace pamkit;

namespace {

std::vector<LabeledClip> name_only_clips(const std::string& dataset, int count) {
  std::vector<LabeledClip> clips;
  for (int i = 0; i < count; ++i) {
    LabeledClip c;
    c.dataset_id = dataset;
    c.clip_id = dataset + "-" + std::to_string(i);
    c.path = c.clip_id + ".wav";
    clips.push_back(std::move(c));
  }
  return clips;
}

MixupExample example_of(float x, float y0, float y1) {
  MixupExample e;
  e.features = {x};
  e.head_targets = {{y0, y1}};
  return e;
}

}  // namespace

TEST_CASE("mixture config validation") {
  MixtureConfig cfg;
  cfg.sources = {{"a", 0.6}, {"b", 0.4}};
  cfg.validate();

  cfg.sources = {{"a", 0.6}, {"b", 0.3}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // sums to 0.9

  cfg.sources = {{"a", 1.2}, {"b", -0.2}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // weight outside (0, 1]

  cfg.sources = {{"a", 1.0}};
  cfg.augment.gain_min = 0.5;
  cfg.augment.gain_max = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.augment = {};
  cfg.augment.mixup_p = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.augment = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("a single source streams back-to-back permutations") {
  MixtureConfig cfg;
  cfg.sources = {{"only", 1.0}};
  std::map<std::string, std::vector<LabeledClip>> groups;
  groups["only"] = name_only_clips("d", 5);

  MixtureSampler sampler(cfg, groups, 123);
  std::set<std::string> first_pass, second_pass;
  std::vector<std::string> first_order, second_order;
  for (int i = 0; i < 5; ++i) {
    const std::string id = sampler.next().clip_id;
    first_pass.insert(id);
    first_order.push_back(id);
  }
  for (int i = 0; i < 5; ++i) {
    const std::string id = sampler.next().clip_id;
    second_pass.insert(id);
    second_order.push_back(id);
  }
  CHECK(first_pass.size() == 5);
  CHECK(second_pass.size() == 5);
  CHECK(first_order != second_order);  // fresh shuffle per pass
}

TEST_CASE("no clip repeats within any pass of a weighted stream") {
  MixtureConfig cfg;
  cfg.sources = {{"a", 0.7}, {"b", 0.3}};
  std::map<std::string, std::vector<LabeledClip>> groups;
  groups["a"] = name_only_clips("a", 7);
  groups["b"] = name_only_clips("b", 4);

  MixtureSampler sampler(cfg, groups, 5);
  std::map<std::string, std::set<std::string>> seen_in_pass;
  std::map<std::string, std::size_t> count;
  for (int i = 0; i < 500; ++i) {
    const LabeledClip& clip = sampler.next();
    auto& seen = seen_in_pass[clip.dataset_id];
    REQUIRE(seen.count(clip.clip_id) == 0);
    seen.insert(clip.clip_id);
    if (seen.size() == groups[clip.dataset_id].size()) seen.clear();
    ++count[clip.dataset_id];
  }
  CHECK(count["a"] + count["b"] == 500);
}

TEST_CASE("two-source draw frequencies sit in the binomial band") {
  MixtureConfig cfg;
  cfg.sources = {{"a", 0.9}, {"b", 0.1}};
  std::map<std::string, std::vector<LabeledClip>> groups;
  groups["a"] = name_only_clips("a", 11);
  groups["b"] = name_only_clips("b", 13);

  MixtureSampler sampler(cfg, groups, 99);
  const int draws = 100000;
  int a_count = 0;
  for (int i = 0; i < draws; ++i) {
    if (sampler.next().dataset_id == "a") ++a_count;
  }
  const double freq = static_cast<double>(a_count) / draws;
  CHECK(freq >= 0.888);
  CHECK(freq <= 0.912);
}

TEST_CASE("three-source counts stay within four sigma of the multinomial") {
  MixtureConfig cfg;
  cfg.sources = {{"a", 0.5}, {"b", 0.4}, {"c", 0.1}};
  std::map<std::string, std::vector<LabeledClip>> groups;
  groups["a"] = name_only_clips("a", 3);
  groups["b"] = name_only_clips("b", 5);
  groups["c"] = name_only_clips("c", 2);

  MixtureSampler sampler(cfg, groups, 2718);
  const int draws = 100000;
  std::map<std::string, int> count;
  for (int i = 0; i < draws; ++i) ++count[sampler.next().dataset_id];

  for (const auto& src : cfg.sources) {
    const double expect = src.weight * draws;
    const double sigma = std::sqrt(draws * src.weight * (1.0 - src.weight));
    CHECK(std::abs(count[src.group_id] - expect) <= 4.0 * sigma);
  }
}

TEST_CASE("sampler rejects unknown or empty sources") {
  MixtureConfig cfg;
  cfg.sources = {{"ghost", 1.0}};
  std::map<std::string, std::vector<LabeledClip>> groups;
  CHECK_THROWS_AS(MixtureSampler(cfg, groups, 0), ConfigError);
  groups["ghost"] = {};
  CHECK_THROWS_AS(MixtureSampler(cfg, groups, 0), ConfigError);
}

TEST_CASE("gain augmentation lands the peak inside the configured range") {
  Rng rng(17);
  const Waveform quiet = testsup::tone_clip(500.0, 0.03, 0.0, 0.1, 16000, rng);
  for (int i = 0; i < 50; ++i) {
    const Waveform out = augment_gain(quiet, rng);
    float peak = 0.0f;
    for (float s : out.samples) peak = std::max(peak, std::abs(s));
    REQUIRE(peak >= 0.15f - 1e-6f);
    REQUIRE(peak <= 0.25f + 1e-6f);
  }
}

TEST_CASE("degenerate gain range is pure peak normalization") {
  Rng rng(18);
  const Waveform wave = testsup::tone_clip(500.0, 0.2, 0.0, 0.05, 16000, rng);
  const Waveform out = augment_gain(wave, rng, 1.0, 1.0);
  float in_peak = 0.0f, out_peak = 0.0f;
  for (float s : wave.samples) in_peak = std::max(in_peak, std::abs(s));
  for (float s : out.samples) out_peak = std::max(out_peak, std::abs(s));
  CHECK(out_peak == doctest::Approx(1.0).epsilon(1e-6));
  // The waveform shape is preserved up to the scalar.
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    REQUIRE(out.samples[i] ==
            doctest::Approx(wave.samples[i] / in_peak).epsilon(1e-6));
  }
}

TEST_CASE("silent audio passes through gain augmentation") {
  Rng rng(19);
  const Waveform silence = synth_silence(0.1, 16000);
  const Waveform out = augment_gain(silence, rng);
  CHECK(out.samples == silence.samples);
}

TEST_CASE("mixup at p=0 is the identity") {
  Rng rng(20);
  std::vector<MixupExample> batch = {example_of(1.0f, 1.0f, 0.0f),
                                     example_of(2.0f, 0.0f, 1.0f)};
  MixupStats stats;
  const auto out = mixup(batch, 0.0, rng, &stats);
  REQUIRE(out.size() == 2);
  CHECK(out[0].features == batch[0].features);
  CHECK(out[1].features == batch[1].features);
  CHECK(stats.mixed == 0);
  CHECK(stats.total == 2);
}

TEST_CASE("mixed fraction at p=0.75 sits in the binomial band") {
  Rng rng(21);
  std::vector<MixupExample> batch;
  for (int i = 0; i < 100000; ++i) {
    batch.push_back(example_of(static_cast<float>(i), 1.0f, 0.0f));
  }
  MixupStats stats;
  mixup(batch, 0.75, rng, &stats);
  const double fraction = static_cast<double>(stats.mixed) / stats.total;
  CHECK(fraction >= 0.746);
  CHECK(fraction <= 0.754);
}

TEST_CASE("mix endpoints reproduce either parent") {
  const MixupExample a = example_of(1.0f, 1.0f, 0.0f);
  const MixupExample b = example_of(5.0f, 0.0f, 1.0f);
  const MixupExample keep = mix_pair(a, b, 1.0);
  CHECK(keep.features == a.features);
  CHECK(keep.head_targets == a.head_targets);
  const MixupExample swap = mix_pair(a, b, 0.0);
  CHECK(swap.features == b.features);
  CHECK(swap.head_targets == b.head_targets);

  MixupExample ragged = b;
  ragged.features.push_back(0.0f);
  CHECK_THROWS_AS(mix_pair(a, ragged, 0.5), ConfigError);
}

TEST_CASE("mixup partners are never the example itself") {
  // With two examples the only legal partner is the other one; self-mixing
  // at any lambda would leave features unchanged, which we can detect.
  Rng rng(22);
  std::vector<MixupExample> batch = {example_of(0.0f, 1.0f, 0.0f),
                                     example_of(10.0f, 0.0f, 1.0f)};
  for (int trial = 0; trial < 200; ++trial) {
    const auto out = mixup(batch, 1.0, rng);
    for (int i = 0; i < 2; ++i) {
      const float x = out[i].features[0];
      const float lo = std::min(0.0f, 10.0f), hi = std::max(0.0f, 10.0f);
      REQUIRE(x >= lo);
      REQUIRE(x <= hi);
      // lambda*x_i + (1-lambda)*x_partner with partner == the other example
      // keeps target mass split across both classes unless lambda hit an
      // endpoint exactly.
      const float mass = out[i].head_targets[0][0] + out[i].head_targets[0][1];
      REQUIRE(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("mixing reads the original batch, not earlier outputs") {
  // Force every example to mix with lambda ~ U(0,1). If example 1 mixed
  // against the already-mixed example 0, its feature could leave the convex
  // hull of the originals paired with its own targets; instead every output
  // must be an exact convex combination of two originals.
  Rng rng(23);
  std::vector<MixupExample> batch = {example_of(0.0f, 1.0f, 0.0f),
                                     example_of(1.0f, 0.0f, 1.0f),
                                     example_of(4.0f, 1.0f, 0.0f)};
  for (int trial = 0; trial < 300; ++trial) {
    const auto out = mixup(batch, 1.0, rng);
    for (const auto& e : out) {
      const double x = e.features[0];
      bool explained = false;
      for (std::size_t i = 0; i < batch.size() && !explained; ++i) {
        for (std::size_t j = 0; j < batch.size(); ++j) {
          if (i == j) continue;
          const double xi = batch[i].features[0], xj = batch[j].features[0];
          if (x < std::min(xi, xj) || x > std::max(xi, xj)) continue;
          const double lambda = xi == xj ? 0.5 : (x - xj) / (xi - xj);
          const double y0 = lambda * batch[i].head_targets[0][0] +
                            (1.0 - lambda) * batch[j].head_targets[0][0];
          if (std::abs(y0 - e.head_targets[0][0]) < 1e-5) {
            explained = true;
            break;
          }
        }
      }
      REQUIRE(explained);
    }
  }
}

TEST_CASE("a batch of one cannot mix and bumps the warning counter") {
  Rng rng(24);
  std::vector<MixupExample> batch = {example_of(3.0f, 1.0f, 0.0f)};
  MixupStats stats;
  const auto out = mixup(batch, 1.0, rng, &stats);
  REQUIRE(out.size() == 1);
  CHECK(out[0].features == batch[0].features);
  CHECK(stats.no_partner_warnings == 1);
  CHECK(stats.mixed == 0);
}

TEST_CASE("mixup preserves per-head target mass") {
  Rng rng(25);
  std::vector<MixupExample> batch;
  for (int i = 0; i < 64; ++i) {
    MixupExample e;
    e.features = {static_cast<float>(i)};
    e.head_targets = {{i % 2 ? 1.0f : 0.0f, i % 2 ? 0.0f : 1.0f},
                      {0.5f, 0.25f, 0.25f}};
    batch.push_back(std::move(e));
  }
  const auto out = mixup(batch, 0.9, rng);
  for (const auto& e : out) {
    for (const auto& head : e.head_targets) {
      double mass = 0.0;
      for (float y : head) mass += y;
      REQUIRE(mass == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("multi-head loss reduces to plain cross entropy for one head") {
  HeadSpec head{"primary", {"x", "y", "z"}, 1.0};
  HeadBatch batch;
  batch.logits = {{0.0, 0.0, 0.0}};
  batch.targets = {{1.0, 0.0, 0.0}};
  const MultiHeadLoss loss = multi_head_loss({batch}, {head});
  CHECK(loss.total == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  REQUIRE(loss.per_head.size() == 1);
  CHECK(loss.per_head[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("head weights scale their contributions") {
  // Build two heads whose batch-mean CE is exactly 1.0 each, then check the
  // 1.0/0.1 weighting yields 1.1.
  const double target_ce = 1.0;
  // For logits (a, 0) with hard target on class 0: CE = log(1 + e^-a).
  const double a = -std::log(std::exp(target_ce) - 1.0);
  HeadBatch batch;
  batch.logits = {{a, 0.0}};
  batch.targets = {{1.0, 0.0}};

  HeadSpec strong{"primary", {"p", "q"}, 1.0};
  HeadSpec weak{"taxon", {"p", "q"}, 0.1};
  const MultiHeadLoss loss = multi_head_loss({batch, batch}, {strong, weak});
  CHECK(loss.per_head[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(loss.per_head[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(1.1).epsilon(1e-12));
}

TEST_CASE("masked examples contribute zero but count in the mean") {
  HeadSpec head{"secondary", {"p", "q"}, 1.0};
  HeadBatch batch;
  batch.logits = {{0.0, 0.0}, {0.0, 0.0}};
  batch.targets = {{1.0, 0.0}, {0.0, 0.0}};  // second example masked
  const MultiHeadLoss loss = multi_head_loss({batch}, {head});
  CHECK(loss.per_head[0] == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("multi-head loss gradient matches finite differences") {
  Rng rng(26);
  HeadSpec head{"primary", {"a", "b", "c"}, 0.7};
  HeadBatch batch;
  for (int n = 0; n < 4; ++n) {
    std::vector<double> z(3), y(3, 0.0);
    for (double& v : z) v = rng.uniform(-2.0, 2.0);
    if (n == 3) {
      // masked example
    } else if (n == 2) {
      y = {0.3, 0.3, 0.4};  // soft target from mixing
    } else {
      y[rng.next_below(3)] = 1.0;
    }
    batch.logits.push_back(z);
    batch.targets.push_back(y);
  }

  const auto grad = multi_head_loss_grad(batch, head);
  const double h = 1e-6;
  for (std::size_t n = 0; n < batch.logits.size(); ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      HeadBatch plus = batch, minus = batch;
      plus.logits[n][c] += h;
      minus.logits[n][c] -= h;
      const double fd = (multi_head_loss({plus}, {head}).total -
                         multi_head_loss({minus}, {head}).total) /
                        (2.0 * h);
      REQUIRE(std::abs(fd - grad[n][c]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }

  // Analytic form: weight * (mass*softmax(z) - y) / batch.
  for (std::size_t n = 0; n < batch.logits.size(); ++n) {
    const auto& z = batch.logits[n];
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    double mass = 0.0;
    for (double y : batch.targets[n]) mass += y;
    for (std::size_t c = 0; c < 3; ++c) {
      const double soft = std::exp(z[c] - zmax) / denom;
      const double want = 0.7 * (mass * soft - batch.targets[n][c]) / 4.0;
      REQUIRE(grad[n][c] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("multi-head loss names the offending head on dim mismatch") {
  HeadSpec head{"secondary", {"p", "q"}, 1.0};
  HeadBatch bad;
  bad.logits = {{0.0, 0.0, 0.0}};  // 3 logits for a 2-class head
  bad.targets = {{1.0, 0.0}};
  try {
    multi_head_loss({bad}, {head});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("secondary") != std::string::npos);
  }
}

TEST_CASE("strip_labeled removes exactly the named secondary label") {
  std::vector<LabeledClip> clips;
  for (int i = 0; i < 100; ++i) {
    LabeledClip c;
    c.dataset_id = "fs";
    c.clip_id = "fs-" + std::to_string(i);
    if (i < 3) c.secondary = "bird";
    else if (i % 2 == 0) c.secondary = "rain";
    clips.push_back(std::move(c));
  }
  const auto stripped = strip_labeled(clips);
  CHECK(stripped.size() == 97);
  for (const auto& c : stripped) {
    CHECK((!c.secondary || *c.secondary != "bird"));
  }

  CHECK(strip_labeled(stripped, "bird") == stripped);
  const auto none = strip_labeled(strip_labeled(clips, "rain"), "bird");
  CHECK(none.size() == 49);
  std::vector<LabeledClip> only_birds(clips.begin(), clips.begin() + 3);
  CHECK(strip_labeled(only_birds).empty());
}

TEST_CASE("holdout-exclusive classes leave the heads") {
  DatasetRegistry registry;
  const auto mk = [](const std::string& ds, const std::string& cls, int n) {
    std::vector<LabeledClip> clips;
    for (int i = 0; i < n; ++i) {
      LabeledClip c;
      c.dataset_id = ds;
      c.clip_id = ds + "-" + cls + "-" + std::to_string(i);
      c.secondary = cls;
      clips.push_back(std::move(c));
    }
    return clips;
  };
  auto a = mk("siteA", "shared", 2);
  auto a2 = mk("siteA", "exclusive", 2);
  a.insert(a.end(), a2.begin(), a2.end());
  registry.add_dataset("siteA", a);
  registry.add_dataset("siteB", mk("siteB", "shared", 2));

  std::vector<HeadSpec> heads = {
      {"primary", {"biophony"}, 1.0},
      {"secondary", {"exclusive", "shared"}, 1.0},
  };
  const auto filtered = exclude_holdout_classes(heads, "siteA", registry);
  REQUIRE(filtered.size() == 2);
  CHECK(filtered[0].classes == std::vector<std::string>{"biophony"});
  CHECK(filtered[1].classes == std::vector<std::string>{"shared"});

  // Holding out siteB removes nothing: both its classes live elsewhere too.
  const auto keep_all = exclude_holdout_classes(heads, "siteB", registry);
  CHECK(keep_all[1].classes == heads[1].classes);
}

TEST_CASE("build_heads derives classes from the registry") {
  testsup::TempDir tmp("heads");
  const std::vector<testsup::ToneDataset> spec = {
      {"siteA", {{"snap", 2000.0}, {"boat", 150.0, PrimaryLabel::kAnthrophony}}, 2, 1.0, 0.5,
       0.05, 1},
      {"siteB", {{"whale", 300.0}}, 2},
  };
  const DatasetRegistry registry = testsup::build_tone_corpus(tmp.path(), spec);

  const auto heads = build_heads(registry, {"siteA", "siteB"}, 0.1);
  REQUIRE(heads.size() == 2);
  CHECK(heads[0].name == "primary");
  CHECK(heads[0].loss_weight == 1.0);
  CHECK(heads[0].classes == std::vector<std::string>{"anthrophony", "biophony"});
  CHECK(heads[1].name == "secondary");
  CHECK(heads[1].loss_weight == 0.1);
  CHECK(heads[1].classes == std::vector<std::string>{"boat", "snap", "whale"});

  const auto single = build_heads(registry, {"siteB"});
  CHECK(single[0].classes == std::vector<std::string>{"biophony"});
  CHECK(single[1].classes == std::vector<std::string>{"whale"});

  DatasetRegistry empty_registry;
  std::vector<LabeledClip> ambient_only;
  LabeledClip amb;
  amb.dataset_id = "amb";
  amb.clip_id = "amb-0";
  amb.primary = PrimaryLabel::kAmbient;
  ambient_only.push_back(amb);
  empty_registry.add_dataset("amb", ambient_only);
  CHECK_THROWS_AS(build_heads(empty_registry, {"amb"}), ConfigError);
}
