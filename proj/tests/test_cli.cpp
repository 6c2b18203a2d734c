#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "pamkit/report.hpp"
#include "pamkit/version.hpp"
#include "support.hpp"

using namespace pamkit;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Runs the installed binary inside `dir` so default outputs land in the
/// temp tree, capturing exit code and both streams.
CliResult run_cli(const std::filesystem::path& dir, const std::string& args) {
  static const std::string exe = PAMKIT_CLI_PATH;
  static int counter = 0;
  const auto out_path = dir / ("stdout." + std::to_string(counter));
  const auto err_path = dir / ("stderr." + std::to_string(counter));
  ++counter;

  const std::string command = "cd '" + dir.string() + "' && '" + exe + "' " + args + " > '" +
                              out_path.string() + "' 2> '" + err_path.string() + "'";
  const int status = std::system(command.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  std::filesystem::remove(out_path);
  std::filesystem::remove(err_path);
  return result;
}

json parse_error_line(const std::string& text) {
  const json obj = json::parse(text);
  REQUIRE(obj.contains("error"));
  REQUIRE(obj.contains("message"));
  return obj;
}

/// Shared two-class corpus: 16 clips per class, enough for k=4 with the
/// default min_test of 10.
struct CliFixture {
  testsup::TempDir tmp{"cli"};
  std::filesystem::path manifest;

  CliFixture() {
    const std::vector<testsup::ToneDataset> spec = {
        {"cliA", {{"snap", 3000.0}, {"whale", 500.0}}, 16},
    };
    testsup::build_tone_corpus(tmp.path(), spec);
    manifest = tmp.path() / "manifest.json";
  }
};

CliFixture& fixture() {
  static CliFixture fx;
  return fx;
}

bool records_equal(const EvalRecord& a, const EvalRecord& b) {
  return a.model == b.model && a.dataset == b.dataset && a.k == b.k && a.repeat == b.repeat &&
         a.seed == b.seed && a.macro_auc == b.macro_auc && a.per_class_auc == b.per_class_auc &&
         a.failed == b.failed && a.fail_reason == b.fail_reason;
}

}  // namespace

TEST_CASE("--version reports the build and its rng") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(fx.tmp.path(), "--version");
  CHECK(r.code == 0);
  CHECK(r.out.find(kVersion) != std::string::npos);
  CHECK(r.out.find(kPrngId) != std::string::npos);
}

TEST_CASE("usage errors exit 2 with a json line on stderr") {
  CliFixture& fx = fixture();
  const CliResult none = run_cli(fx.tmp.path(), "");
  CHECK(none.code == 2);
  CHECK(parse_error_line(none.err).at("error") == "usage");

  const CliResult unknown = run_cli(fx.tmp.path(), "fewshot --no-such-flag");
  CHECK(unknown.code == 2);
  CHECK(parse_error_line(unknown.err).at("error") == "usage");

  const CliResult help = run_cli(fx.tmp.path(), "--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("fewshot") != std::string::npos);
}

TEST_CASE("missing required options exit 3 naming the flag") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(fx.tmp.path(), "fewshot --ks 4");
  CHECK(r.code == 3);
  const json err = parse_error_line(r.err);
  CHECK(err.at("error") == "config");
  const std::string message = err.at("message").get<std::string>();
  CHECK(message.find("--manifest") != std::string::npos);
}

TEST_CASE("domain errors exit 1 with the error kind") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(fx.tmp.path(), "manifest --manifest does_not_exist.json");
  CHECK(r.code == 1);
  CHECK(parse_error_line(r.err).at("error") == "io");
}

TEST_CASE("manifest summarizes, converts, and amalgamates") {
  CliFixture& fx = fixture();
  const CliResult r =
      run_cli(fx.tmp.path(), "manifest --manifest manifest.json --out listing.csv");
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary.at("clips") == 32);
  REQUIRE(summary.at("datasets").size() == 1);
  CHECK(summary.at("datasets")[0].at("id") == "cliA");
  CHECK(summary.at("datasets")[0].at("classes") == 2);
  const std::string listing = slurp(fx.tmp.path() / "listing.csv");
  CHECK(listing.rfind("dataset,clip,primary,secondary,path", 0) == 0);

  // Both 16-clip classes fall below the default threshold of 42; their
  // secondary labels merge away, and the resulting 32-clip primary pool is
  // itself under threshold, so nothing survives.
  const CliResult merged = run_cli(
      fx.tmp.path(), "manifest --manifest manifest.json --amalgamate --out merged.json");
  REQUIRE(merged.code == 0);
  CHECK(json::parse(merged.out).at("clips") == 0);
  CHECK(json::parse(merged.out).at("datasets")[0].at("classes") == 0);

  const CliResult strict = run_cli(
      fx.tmp.path(),
      "manifest --manifest manifest.json --amalgamate --min-total 12 --out kept.json");
  REQUIRE(strict.code == 0);
  CHECK(json::parse(strict.out).at("datasets")[0].at("classes") == 2);
}

TEST_CASE("fewshot writes identical records on identical invocations") {
  CliFixture& fx = fixture();
  const std::string args =
      "fewshot --manifest manifest.json --backend mock --dim 32 --ks 4 --repeats 3 "
      "--epochs 16";
  const CliResult a = run_cli(fx.tmp.path(), args + " --out run_a.csv");
  const CliResult b = run_cli(fx.tmp.path(), args + " --out run_b.csv");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const std::string bytes_a = slurp(fx.tmp.path() / "run_a.csv");
  CHECK_FALSE(bytes_a.empty());
  CHECK(bytes_a == slurp(fx.tmp.path() / "run_b.csv"));

  // Stdout carries the per-dataset aggregates.
  const json aggregates = json::parse(a.out);
  REQUIRE(aggregates.is_array());
  REQUIRE(aggregates.size() == 1);
  CHECK(aggregates[0].at("dataset") == "cliA");
  CHECK(aggregates[0].at("k") == 4);
  CHECK(aggregates[0].at("count") == 3);
}

TEST_CASE("a run-config replay reproduces one narrowed cell bitwise") {
  CliFixture& fx = fixture();
  const CliResult full = run_cli(
      fx.tmp.path(),
      "fewshot --manifest manifest.json --backend mock --dim 32 --ks 4,8 --repeats 3 "
      "--epochs 16 --seed 11 --out full.csv");
  REQUIRE(full.code == 0);

  const json config = json::parse(slurp(fx.tmp.path() / "full.csv.runconfig.json"));
  CHECK(config.at("version") == kVersion);
  CHECK(config.at("prng") == kPrngId);
  CHECK(config.at("command") == "fewshot");
  REQUIRE(config.at("argv").is_array());
  CHECK(config.at("argv")[0] == "fewshot");

  const CliResult cell = run_cli(
      fx.tmp.path(),
      "replay --run-config full.csv.runconfig.json --ks 8 --repeats 1 --repeat-start 2 "
      "--out cell.csv");
  REQUIRE(cell.code == 0);

  const auto whole = load_records_csv(fx.tmp.path() / "full.csv");
  const auto narrowed = load_records_csv(fx.tmp.path() / "cell.csv");
  REQUIRE(whole.size() == 6);
  REQUIRE(narrowed.size() == 1);
  const EvalRecord* want = nullptr;
  for (const EvalRecord& rec : whole) {
    if (rec.k == 8 && rec.repeat == 2) want = &rec;
  }
  REQUIRE(want != nullptr);
  REQUIRE(records_equal(*want, narrowed[0]));
}

TEST_CASE("replay refuses a replay run-config") {
  CliFixture& fx = fixture();
  json crafted;
  crafted["version"] = kVersion;
  crafted["prng"] = kPrngId;
  crafted["command"] = "replay";
  crafted["argv"] = {"replay", "--run-config", "other.json"};
  std::ofstream(fx.tmp.path() / "loop.json") << crafted.dump(2) << "\n";

  const CliResult r = run_cli(fx.tmp.path(), "replay --run-config loop.json");
  CHECK(r.code == 3);
  const json err = parse_error_line(r.err);
  CHECK(err.at("error") == "config");
  CHECK(err.at("message").get<std::string>().find("refusing") != std::string::npos);

  const CliResult missing = run_cli(fx.tmp.path(), "replay --run-config absent.json");
  CHECK(missing.code == 1);
  CHECK(parse_error_line(missing.err).at("error") == "io");
}

TEST_CASE("probe trains one split and reports per-class auc") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(
      fx.tmp.path(),
      "probe --manifest manifest.json --backend mock --dim 32 --k 4 --epochs 32 --seed 1");
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary.at("dataset") == "cliA");  // sole dataset is inferred
  CHECK(summary.at("train") == 8);
  CHECK(summary.at("test") == 24);
  CHECK(summary.at("macro_auc").get<double>() > 0.5);
  CHECK(summary.at("per_class_auc").size() == 2);
}

TEST_CASE("embed produces a cache the lookup backend can evaluate from") {
  CliFixture& fx = fixture();
  const CliResult embed = run_cli(
      fx.tmp.path(),
      "embed --manifest manifest.json --backend mock --dim 24 --out cache.bin");
  REQUIRE(embed.code == 0);
  const json summary = json::parse(embed.out);
  CHECK(summary.at("clips") == 32);
  CHECK(summary.at("dim") == 24);

  const CliResult cached = run_cli(
      fx.tmp.path(),
      "fewshot --manifest manifest.json --backend cache --cache cache.bin --ks 4 "
      "--repeats 2 --epochs 16 --out cached.csv");
  REQUIRE(cached.code == 0);
  const auto records = load_records_csv(fx.tmp.path() / "cached.csv");
  REQUIRE(records.size() == 2);
  for (const EvalRecord& rec : records) {
    CHECK(rec.model == "cache");
    CHECK_FALSE(rec.failed);
  }

  // The cached run must match a direct mock run of the same dimension cell
  // for cell seeds (paired splits), though model names differ.
  const CliResult direct = run_cli(
      fx.tmp.path(),
      "fewshot --manifest manifest.json --backend mock --dim 24 --ks 4 --repeats 2 "
      "--epochs 16 --out direct.csv");
  REQUIRE(direct.code == 0);
  const auto direct_records = load_records_csv(fx.tmp.path() / "direct.csv");
  REQUIRE(direct_records.size() == 2);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].seed == direct_records[i].seed);
    CHECK(records[i].macro_auc == direct_records[i].macro_auc);
  }
}

TEST_CASE("pretrain saves a toy model fewshot can load") {
  CliFixture& fx = fixture();
  const CliResult pretrain = run_cli(
      fx.tmp.path(),
      "pretrain --manifest manifest.json --steps 6 --batch 2 --arch t0 --seed 3 "
      "--out toy.json");
  REQUIRE(pretrain.code == 0);
  const json summary = json::parse(pretrain.out);
  CHECK(summary.at("steps") == 6);
  CHECK(summary.at("heads") == 2);

  const CliResult fewshot = run_cli(
      fx.tmp.path(),
      "fewshot --manifest manifest.json --backend toy --model toy.json --ks 4 "
      "--repeats 1 --epochs 8 --out toy_records.csv");
  REQUIRE(fewshot.code == 0);
  const auto records = load_records_csv(fx.tmp.path() / "toy_records.csv");
  REQUIRE(records.size() == 1);
  CHECK(records[0].model == "toy");
  CHECK_FALSE(records[0].failed);
}

TEST_CASE("dreg rotates a two-dataset manifest end to end") {
  testsup::TempDir tmp("cli-dreg");
  const std::vector<testsup::ToneDataset> spec = {
      {"north", {{"snap", 3000.0}, {"whale", 500.0}}, 16},
      {"south", {{"snap", 3000.0}, {"whale", 500.0}}, 16, 1.04, 0.5, 0.08},
  };
  testsup::build_tone_corpus(tmp.path(), spec);

  const CliResult r = run_cli(
      tmp.path(),
      "dreg --manifest manifest.json --ks 4 --repeats 1 --epochs 8 --steps 5 --batch 2 "
      "--arch t0 --out dreg.csv");
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  REQUIRE(summary.is_array());
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].at("holdout") == "north");
  CHECK(summary[1].at("holdout") == "south");
  for (const json& entry : summary) CHECK(entry.at("failed") == false);

  const auto records = load_records_csv(tmp.path() / "dreg.csv");
  REQUIRE(records.size() == 2);
  for (const EvalRecord& rec : records) CHECK(rec.model == "toy-dreg");
}

TEST_CASE("mock sweeps enumerate the full grids") {
  CliFixture& fx = fixture();
  const CliResult reef =
      run_cli(fx.tmp.path(), "sweep --grid reefset --mock --out reef_rows.csv");
  REQUIRE(reef.code == 0);
  const json summary = json::parse(reef.out);
  CHECK(summary.at("rows") == 18);
  REQUIRE(summary.at("stages").size() == 1);
  CHECK(summary.at("stages")[0].at("rows") == 18);
  CHECK(summary.at("stages")[0].contains("best_config"));

  std::ifstream rows(fx.tmp.path() / "reef_rows.csv");
  std::string header;
  REQUIRE(std::getline(rows, header));
  CHECK(header == "training_data,stage,batch,arch,lr,bird_weight,auc,failed,fail_reason");
  int lines = 0;
  for (std::string line; std::getline(rows, line);) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 18);

  const CliResult bird =
      run_cli(fx.tmp.path(), "sweep --grid bird-mix --mock --out bird_rows.csv");
  REQUIRE(bird.code == 0);
  CHECK(json::parse(bird.out).at("rows") == 21);

  const CliResult bogus = run_cli(fx.tmp.path(), "sweep --grid nonsense --mock");
  CHECK(bogus.code == 3);
}

TEST_CASE("real sweeps refuse validation sets that overlap training roles") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(
      fx.tmp.path(),
      "sweep --grid reefset --manifest manifest.json --reef cliA --validation cliA "
      "--out overlap_rows.csv");
  CHECK(r.code == 3);
  const json err = parse_error_line(r.err);
  const std::string message = err.at("message").get<std::string>();
  CHECK(message.find("cliA") != std::string::npos);
  CHECK(message.find("training source") != std::string::npos);
}

TEST_CASE("bench sweeps the batch and worker grids") {
  CliFixture& fx = fixture();
  const CliResult r = run_cli(
      fx.tmp.path(),
      "bench --backend mock --dim 16 --duration 2 --rate 16000 --batch-grid 2,4 "
      "--worker-grid 1,2 --out bench.csv");
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary.at("backend") == "mock");
  CHECK(summary.at("audio_s") == 2.0);
  CHECK(summary.at("cells") == 4);
  CHECK(summary.at("best").at("rtf").get<double>() > 0.0);

  std::ifstream in(fx.tmp.path() / "bench.csv");
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "batch,workers,wall_s,rtf,failed,fail_reason");
  int lines = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 4);
}

TEST_CASE("report converts record files and aggregates them") {
  CliFixture& fx = fixture();
  const CliResult fewshot = run_cli(
      fx.tmp.path(),
      "fewshot --manifest manifest.json --backend mock --dim 32 --ks 2,4 --repeats 2 "
      "--epochs 16 --out report_in.csv");
  REQUIRE(fewshot.code == 0);

  const CliResult report = run_cli(
      fx.tmp.path(),
      "report --records report_in.csv --emit report_in.json --format json "
      "--out agg.csv --by k");
  REQUIRE(report.code == 0);
  const json aggregates = json::parse(report.out);
  REQUIRE(aggregates.is_array());
  REQUIRE(aggregates.size() == 2);  // k = 2 and k = 4, datasets merged
  for (const json& entry : aggregates) {
    CHECK_FALSE(entry.contains("dataset"));
    CHECK(entry.at("count") == 2);
  }

  const auto csv_records = load_records(fx.tmp.path() / "report_in.csv");
  const auto json_records = load_records(fx.tmp.path() / "report_in.json");
  REQUIRE(csv_records.size() == json_records.size());
  for (std::size_t i = 0; i < csv_records.size(); ++i) {
    REQUIRE(records_equal(csv_records[i], json_records[i]));
  }

  const std::string agg = slurp(fx.tmp.path() / "agg.csv");
  CHECK(agg.rfind("model,dataset,k,mean_auc,std_auc,count", 0) == 0);

  const CliResult bad_by =
      run_cli(fx.tmp.path(), "report --records report_in.csv --by clip");
  CHECK(bad_by.code == 3);
}
