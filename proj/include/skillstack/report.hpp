#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "skillstack/metrics.hpp"

namespace skillstack {

struct ReportOptions {
    std::string dataset_label = "In-Distribution";
    int pass_k_max = 10;        // R*A of the runs being reported
    double usd_per_token = 0.0; // dollar conversion applied to token counts

    bool operator==(const ReportOptions&) const = default;
};

// Cell renderers shared by the summary row and the csv emitters.
std::string format_percent(double fraction);       // 0.74  -> "74.0%"
std::string format_percent_delta(double fraction); // 0.36  -> "+36.0pp"
std::string format_level(double value);            // -2.281 -> "-2.281"
std::string format_level_delta(double value);      // 0.099 -> "+0.099"
std::string format_attempts(double value);         // 2.3   -> "2.30"
std::string format_attempts_delta(double value);   // -1.8  -> "-1.80"

// The five-column summary shape: "SG / SE / CPF / BM / Attempts".
std::string format_metrics_row(const DatasetMetrics& m);

// Writes the full bundle into dir: metrics.json, table1.csv, passk.csv,
// transitions.csv, errors_by_round.csv and plots/*.svg. Purely a function of
// its inputs — no clocks, no hostnames — so equal runs emit equal bytes.
void write_report(const std::filesystem::path& dir, const std::vector<TaskRecord>& baseline,
                  const std::vector<TaskRecord>& post, const ReportOptions& options = {});

} // namespace skillstack
