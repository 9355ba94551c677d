#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "atbseg/eval.hpp"

namespace atbseg {

enum class ReportMetric { Dice, Pca };

ReportMetric parse_report_metric(std::string_view name);
std::string to_string(ReportMetric metric);

/// Grouped bar chart for one mask: x groups are frame counts, one bar per
/// model with a +/- std error bar, and a horizontal line at the matched value.
/// Bars carry data-model, data-k, data-mean and data-std attributes; the plot
/// group records the value range it maps onto its pixel range.
std::string bar_chart_svg(std::span<const AggregateRecord> aggregates, int mask_id, ReportMetric metric,
                          double matched_value);

struct SummaryRow {
  std::string model_name;
  int mask_id = 1;
  double max_relative_pca = 0.0;
  int k_at_max_pca = 0;
  double max_relative_dice = 0.0;
  int k_at_max_dice = 0;
};

/// Highest relative-to-matched value per (model, mask); ties keep the smallest k.
std::vector<SummaryRow> summarize(std::span<const AggregateRecord> aggregates);
std::string summary_to_csv(std::span<const SummaryRow> rows);

struct ReportFiles {
  std::vector<std::filesystem::path> figures;
  std::filesystem::path aggregate_csv;
  std::filesystem::path aggregate_json;
  std::filesystem::path summary_csv;
  std::vector<SummaryRow> summary;
};

/// Rows with k = -1 in `records` are ignored; the matched baseline comes from `matched`.
ReportFiles write_report(std::span<const MetricRecord> records, std::span<const MetricRecord> matched,
                         const std::filesystem::path& out_dir, ReportMetric metric = ReportMetric::Dice);

}  // namespace atbseg
