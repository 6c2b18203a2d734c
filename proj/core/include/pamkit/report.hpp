#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pamkit/eval.hpp"

namespace pamkit {

enum class ReportFormat { kCsv, kJson };

ReportFormat report_format_from_string(const std::string& name);

/// Eval records as CSV. Fixed leading columns model,dataset,k,repeat,seed,
/// macro_auc,failed,fail_reason, then one class:<name> column per class in
/// the sorted union across records (empty cell when a record lacks the
/// class). Doubles printed with %.17g so a reload is exact.
void write_records_csv(const std::vector<EvalRecord>& records,
                       const std::filesystem::path& path);
std::vector<EvalRecord> load_records_csv(const std::filesystem::path& path);

/// Same records as a JSON array; parses back equal to the CSV emission.
void write_records_json(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path);
std::vector<EvalRecord> load_records_json(const std::filesystem::path& path);

void emit_report(const std::vector<EvalRecord>& records, const std::filesystem::path& path,
                 ReportFormat format);

/// Dispatches on content: a leading '[' or '{' is JSON, anything else CSV.
std::vector<EvalRecord> load_records(const std::filesystem::path& path);

/// Aggregates as CSV with columns model,dataset,k,mean_auc,std_auc,count.
void write_aggregates_csv(const std::vector<EvalAggregate>& aggregates,
                          const std::filesystem::path& path);

/// Sweep rows as CSV with columns training_data,stage,batch,arch,lr,
/// bird_weight,auc,failed,fail_reason. Config keys outside the column set
/// are dropped; missing keys leave the cell empty.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace pamkit
