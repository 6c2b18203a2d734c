#include "pamkit/report.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pamkit/csv.hpp"
#include "pamkit/error.hpp"

namespace pamkit {
namespace {

using nlohmann::json;

constexpr const char* kClassPrefix = "class:";

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> class_columns(const std::vector<EvalRecord>& records) {
  std::set<std::string> names;
  for (const EvalRecord& r : records) {
    for (const auto& [name, auc] : r.per_class_auc) names.insert(name);
  }
  return {names.begin(), names.end()};
}

int parse_int(const std::string& text, const std::string& column) {
  try {
    std::size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw FormatError("records csv: bad integer '" + text + "' in column " + column);
  }
}

std::uint64_t parse_u64(const std::string& text, const std::string& column) {
  try {
    std::size_t used = 0;
    const std::uint64_t value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw FormatError("records csv: bad unsigned '" + text + "' in column " + column);
  }
}

double parse_double(const std::string& text, const std::string& column) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw FormatError("records csv: bad number '" + text + "' in column " + column);
  }
}

}  // namespace

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format '" + name + "' (expected csv or json)");
}

void write_records_csv(const std::vector<EvalRecord>& records,
                       const std::filesystem::path& path) {
  const std::vector<std::string> classes = class_columns(records);
  std::ostringstream out;
  out << "model,dataset,k,repeat,seed,macro_auc,failed,fail_reason";
  for (const std::string& name : classes) out << ',' << csv_escape(kClassPrefix + name);
  out << '\n';
  for (const EvalRecord& r : records) {
    out << csv_escape(r.model) << ',' << csv_escape(r.dataset) << ',' << r.k << ','
        << r.repeat << ',' << r.seed << ',' << csv_double(r.macro_auc) << ','
        << (r.failed ? "true" : "false") << ',' << csv_escape(r.fail_reason);
    for (const std::string& name : classes) {
      out << ',';
      auto it = r.per_class_auc.find(name);
      if (it != r.per_class_auc.end()) out << csv_double(it->second);
    }
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<EvalRecord> load_records_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("records csv: empty file " + path.string());
  const std::vector<std::string> header = csv_split(line);
  const std::vector<std::string> fixed = {"model",     "dataset", "k",      "repeat",
                                          "seed",      "macro_auc", "failed", "fail_reason"};
  if (header.size() < fixed.size()) {
    throw FormatError("records csv: header has " + std::to_string(header.size()) +
                      " columns, expected at least " + std::to_string(fixed.size()));
  }
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (header[i] != fixed[i]) {
      throw FormatError("records csv: column " + std::to_string(i) + " is '" + header[i] +
                        "', expected '" + fixed[i] + "'");
    }
  }
  std::vector<std::string> classes;
  for (std::size_t i = fixed.size(); i < header.size(); ++i) {
    if (header[i].rfind(kClassPrefix, 0) != 0) {
      throw FormatError("records csv: unexpected column '" + header[i] + "'");
    }
    classes.push_back(header[i].substr(std::string(kClassPrefix).size()));
  }

  std::vector<EvalRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = csv_split(line);
    if (cells.size() != header.size()) {
      throw FormatError("records csv: row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    EvalRecord r;
    r.model = cells[0];
    r.dataset = cells[1];
    r.k = parse_int(cells[2], "k");
    r.repeat = parse_int(cells[3], "repeat");
    r.seed = parse_u64(cells[4], "seed");
    r.macro_auc = parse_double(cells[5], "macro_auc");
    if (cells[6] == "true") {
      r.failed = true;
    } else if (cells[6] == "false") {
      r.failed = false;
    } else {
      throw FormatError("records csv: bad boolean '" + cells[6] + "' in column failed");
    }
    r.fail_reason = cells[7];
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const std::string& cell = cells[8 + c];
      if (!cell.empty()) r.per_class_auc[classes[c]] = parse_double(cell, header[8 + c]);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records_json(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path) {
  json arr = json::array();
  for (const EvalRecord& r : records) {
    json obj;
    obj["model"] = r.model;
    obj["dataset"] = r.dataset;
    obj["k"] = r.k;
    obj["repeat"] = r.repeat;
    obj["seed"] = r.seed;
    obj["macro_auc"] = r.macro_auc;
    obj["failed"] = r.failed;
    obj["fail_reason"] = r.fail_reason;
    json per_class = json::object();
    for (const auto& [name, auc] : r.per_class_auc) per_class[name] = auc;
    obj["per_class"] = std::move(per_class);
    arr.push_back(std::move(obj));
  }
  write_text(path, arr.dump(2) + "\n");
}

std::vector<EvalRecord> load_records_json(const std::filesystem::path& path) {
  json arr;
  try {
    arr = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("records json: " + path.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw FormatError("records json: top level must be an array");
  std::vector<EvalRecord> records;
  for (const json& obj : arr) {
    try {
      EvalRecord r;
      r.model = obj.at("model").get<std::string>();
      r.dataset = obj.at("dataset").get<std::string>();
      r.k = obj.at("k").get<int>();
      r.repeat = obj.at("repeat").get<int>();
      r.seed = obj.at("seed").get<std::uint64_t>();
      r.macro_auc = obj.at("macro_auc").get<double>();
      r.failed = obj.at("failed").get<bool>();
      r.fail_reason = obj.at("fail_reason").get<std::string>();
      for (const auto& [name, auc] : obj.at("per_class").items()) {
        r.per_class_auc[name] = auc.get<double>();
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("records json: bad record in " + path.string() + ": " + e.what());
    }
  }
  return records;
}

void emit_report(const std::vector<EvalRecord>& records, const std::filesystem::path& path,
                 ReportFormat format) {
  switch (format) {
    case ReportFormat::kCsv:
      write_records_csv(records, path);
      return;
    case ReportFormat::kJson:
      write_records_json(records, path);
      return;
  }
  throw ConfigError("emit_report: unknown format");
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
    return load_records_json(path);
  }
  return load_records_csv(path);
}

void write_aggregates_csv(const std::vector<EvalAggregate>& aggregates,
                          const std::filesystem::path& path) {
  std::ostringstream out;
  out << "model,dataset,k,mean_auc,std_auc,count\n";
  for (const EvalAggregate& a : aggregates) {
    out << csv_escape(a.model) << ',' << csv_escape(a.dataset) << ',' << a.k << ','
        << csv_double(a.mean_auc) << ',' << csv_double(a.std_auc) << ',' << a.count << '\n';
  }
  write_text(path, out.str());
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "training_data,stage,batch,arch,lr,bird_weight,auc,failed,fail_reason\n";
  for (const SweepRow& row : rows) {
    auto cell = [&row](const std::string& key) -> std::string {
      auto it = row.config.find(key);
      return it == row.config.end() ? std::string() : it->second;
    };
    out << csv_escape(cell("training_data")) << ',' << csv_escape(row.stage_id) << ','
        << csv_escape(cell("batch")) << ',' << csv_escape(cell("arch")) << ','
        << csv_escape(cell("lr")) << ',' << csv_escape(cell("bird_weight")) << ',';
    if (!row.failed && std::isfinite(row.mean_auc)) out << csv_double(row.mean_auc);
    out << ',' << (row.failed ? "true" : "false") << ',' << csv_escape(row.fail_reason)
        << '\n';
  }
  write_text(path, out.str());
}

}  // namespace pamkit
