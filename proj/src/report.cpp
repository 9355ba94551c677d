#include "atbseg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "atbseg/fsutil.hpp"

namespace atbseg {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                          "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;

}  // namespace

ReportMetric parse_report_metric(std::string_view name) {
  if (name == "dice") return ReportMetric::Dice;
  if (name == "pca") return ReportMetric::Pca;
  throw ConfigError("unknown report metric '" + std::string(name) + "' (expected dice or pca)");
}

std::string to_string(ReportMetric metric) { return metric == ReportMetric::Dice ? "dice" : "pca"; }

std::string bar_chart_svg(std::span<const AggregateRecord> aggregates, int mask_id, ReportMetric metric,
                          double matched_value) {
  std::vector<std::string> models;
  std::vector<int> ks;
  std::vector<const AggregateRecord*> rows;
  for (const auto& a : aggregates) {
    if (a.mask_id != mask_id) continue;
    rows.push_back(&a);
    if (std::find(models.begin(), models.end(), a.model_name) == models.end()) models.push_back(a.model_name);
    if (std::find(ks.begin(), ks.end(), a.k) == ks.end()) ks.push_back(a.k);
  }
  std::sort(ks.begin(), ks.end());
  if (rows.empty()) throw DataError("no aggregates for mask " + std::to_string(mask_id));

  auto mean_of = [&](const AggregateRecord& a) { return metric == ReportMetric::Dice ? a.mean_dice : a.mean_pca; };
  auto std_of = [&](const AggregateRecord& a) { return metric == ReportMetric::Dice ? a.std_dice : a.std_pca; };

  double lo = matched_value;
  for (const auto* a : rows) lo = std::min(lo, mean_of(*a) - std_of(*a));
  const double ymin = std::clamp(std::floor(lo * 10.0 - 1e-9) / 10.0, 0.0, 0.9);
  const double ymax = 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double bottom = kTop + plot_h;
  auto y_of = [&](double v) { return bottom - (std::clamp(v, ymin, ymax) - ymin) / (ymax - ymin) * plot_h; };

  const auto metric_name = to_string(metric);
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" data-mask=\"" + std::to_string(mask_id) +
       "\" data-metric=\"" + metric_name + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Mask " +
       std::to_string(mask_id) + " " + metric_name + "</text>\n";
  s += "<g class=\"plot\" data-ymin=\"" + exact(ymin) + "\" data-ymax=\"" + exact(ymax) + "\" data-top=\"" +
       exact(kTop) + "\" data-bottom=\"" + exact(bottom) + "\">\n";

  for (int t = 0; t <= 5; ++t) {
    const double v = ymin + (ymax - ymin) * t / 5.0;
    const double y = y_of(v);
    s += "<line class=\"grid\" x1=\"" + num(kLeft) + "\" x2=\"" + num(kLeft + plot_w) + "\" y1=\"" + num(y) +
         "\" y2=\"" + num(y) + "\" stroke=\"#dddddd\"/>\n";
    char label[32];
    std::snprintf(label, sizeof(label), "%.2f", v);
    s += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
         label + "</text>\n";
  }

  const double group_w = plot_w / static_cast<double>(ks.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(models.size());
  for (std::size_t g = 0; g < ks.size(); ++g) {
    const double gx = kLeft + group_w * static_cast<double>(g);
    s += "<text x=\"" + num(gx + group_w / 2) + "\" y=\"" + num(bottom + 20) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + std::to_string(ks[g]) + "</text>\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const AggregateRecord* a) { return a->k == ks[g] && a->model_name == models[m]; });
      if (it == rows.end()) continue;
      const double mean = mean_of(**it), sd = std_of(**it);
      const double x = gx + group_w * 0.1 + bar_w * static_cast<double>(m);
      const double y = y_of(mean);
      s += "<rect class=\"bar\" data-model=\"" + escape(models[m]) + "\" data-k=\"" + std::to_string(ks[g]) +
           "\" data-mean=\"" + exact(mean) + "\" data-std=\"" + exact(sd) + "\" x=\"" + num(x) + "\" y=\"" + num(y) +
           "\" width=\"" + num(bar_w) + "\" height=\"" + num(bottom - y) + "\" fill=\"" + kPalette[m % 10] +
           "\"/>\n";
      const double cx = x + bar_w / 2;
      s += "<line class=\"errorbar\" data-model=\"" + escape(models[m]) + "\" data-k=\"" + std::to_string(ks[g]) +
           "\" x1=\"" + num(cx) + "\" x2=\"" + num(cx) + "\" y1=\"" + num(y_of(mean - sd)) + "\" y2=\"" +
           num(y_of(mean + sd)) + "\" stroke=\"black\"/>\n";
    }
  }
  const double my = y_of(matched_value);
  s += "<line class=\"matched\" data-value=\"" + exact(matched_value) + "\" x1=\"" + num(kLeft) + "\" x2=\"" +
       num(kLeft + plot_w) + "\" y1=\"" + num(my) + "\" y2=\"" + num(my) +
       "\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n";
  s += "</g>\n";
  s += "<line x1=\"" + num(kLeft) + "\" x2=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" y2=\"" + num(bottom) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" x2=\"" + num(kLeft + plot_w) + "\" y1=\"" + num(bottom) + "\" y2=\"" +
       num(bottom) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 16) +
       "\" text-anchor=\"middle\" font-size=\"12\">frames used for fine-tuning</text>\n";

  const double lx = kLeft + plot_w + 16;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const double ly = kTop + 18.0 * static_cast<double>(m);
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" + kPalette[m % 10] +
         "\"/>\n";
    s += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(ly + 10) + "\" font-size=\"11\">" + escape(models[m]) +
         "</text>\n";
  }
  const double ly = kTop + 18.0 * static_cast<double>(models.size());
  s += "<line x1=\"" + num(lx) + "\" x2=\"" + num(lx + 12) + "\" y1=\"" + num(ly + 6) + "\" y2=\"" + num(ly + 6) +
       "\" stroke=\"black\" stroke-dasharray=\"4 2\"/>\n";
  s += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(ly + 10) + "\" font-size=\"11\">matched</text>\n";
  s += "</svg>\n";
  return s;
}

std::vector<SummaryRow> summarize(std::span<const AggregateRecord> aggregates) {
  std::vector<SummaryRow> out;
  for (const auto& a : aggregates) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& r) {
      return r.model_name == a.model_name && r.mask_id == a.mask_id;
    });
    if (it == out.end()) {
      out.push_back({a.model_name, a.mask_id, a.relative_pca, a.k, a.relative_dice, a.k});
      continue;
    }
    if (a.relative_pca > it->max_relative_pca || (a.relative_pca == it->max_relative_pca && a.k < it->k_at_max_pca)) {
      it->max_relative_pca = a.relative_pca;
      it->k_at_max_pca = a.k;
    }
    if (a.relative_dice > it->max_relative_dice ||
        (a.relative_dice == it->max_relative_dice && a.k < it->k_at_max_dice)) {
      it->max_relative_dice = a.relative_dice;
      it->k_at_max_dice = a.k;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const SummaryRow& a, const SummaryRow& b) { return a.mask_id < b.mask_id; });
  return out;
}

std::string summary_to_csv(std::span<const SummaryRow> rows) {
  std::string out = "model,mask,max_relative_pca,k_at_max_pca,max_relative_dice,k_at_max_dice\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.model_name + "," + std::to_string(r.mask_id) + ",";
    std::snprintf(buf, sizeof(buf), "%.4f", r.max_relative_pca);
    out += std::string(buf) + "," + std::to_string(r.k_at_max_pca) + ",";
    std::snprintf(buf, sizeof(buf), "%.4f", r.max_relative_dice);
    out += std::string(buf) + "," + std::to_string(r.k_at_max_dice) + "\n";
  }
  return out;
}

ReportFiles write_report(std::span<const MetricRecord> records, std::span<const MetricRecord> matched,
                         const fs::path& out_dir, ReportMetric metric) {
  std::vector<MetricRecord> adapted;
  for (const auto& r : records) {
    if (r.k != kMatchedK) adapted.push_back(r);
  }
  if (adapted.empty()) throw DataError("report: no model records");
  std::vector<MetricRecord> baseline;
  for (const auto& r : matched) {
    if (r.k == kMatchedK) baseline.push_back(r);
  }
  if (baseline.empty()) throw DataError("report: missing matched-condition baseline (k = -1 rows)");
  const auto aggregates = aggregate(adapted, baseline);

  fs::create_directories(out_dir);
  ReportFiles files;
  files.aggregate_csv = out_dir / "aggregate.csv";
  files.aggregate_json = out_dir / "aggregate.json";
  files.summary_csv = out_dir / "summary.csv";
  write_file_atomic(files.aggregate_csv, aggregates_to_csv(aggregates));
  write_file_atomic(files.aggregate_json, aggregates_to_json(aggregates).dump(2) + "\n");
  files.summary = summarize(aggregates);
  write_file_atomic(files.summary_csv, summary_to_csv(files.summary));

  std::map<int, std::vector<double>> matched_values;
  for (const auto& r : baseline) matched_values[r.mask_id].push_back(metric == ReportMetric::Dice ? r.dice : r.pca);
  std::vector<int> masks;
  for (const auto& a : aggregates) {
    if (std::find(masks.begin(), masks.end(), a.mask_id) == masks.end()) masks.push_back(a.mask_id);
  }
  std::sort(masks.begin(), masks.end());
  for (int mask : masks) {
    const auto svg = bar_chart_svg(aggregates, mask, metric, mean_and_std(matched_values.at(mask)).first);
    const auto path = out_dir / ("mask" + std::to_string(mask) + "_" + to_string(metric) + ".svg");
    write_file_atomic(path, svg);
    files.figures.push_back(path);
  }
  return files;
}

}  // namespace atbseg
