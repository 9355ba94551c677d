#include <doctest.h>

#include <regex>

#include "atbseg/fsutil.hpp"
#include "atbseg/report.hpp"
#include "support/oracles.hpp"

using namespace atbseg;
namespace fs = std::filesystem;

namespace {

struct Bar {
  std::string model;
  int k;
  double mean, std, y, height;
};

std::string attr(const std::string& tag, const std::string& name) {
  std::smatch m;
  const std::regex re(" " + name + "=\"([^\"]*)\"");
  REQUIRE(std::regex_search(tag, m, re));
  return m[1];
}

std::vector<Bar> parse_bars(const std::string& svg) {
  std::vector<Bar> out;
  const std::regex re("<rect class=\"bar\"[^>]*>");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    const auto tag = it->str();
    out.push_back({attr(tag, "data-model"), std::stoi(attr(tag, "data-k")), std::stod(attr(tag, "data-mean")),
                   std::stod(attr(tag, "data-std")), std::stod(attr(tag, "y")), std::stod(attr(tag, "height"))});
  }
  return out;
}

MetricRecord rec(const std::string& model, int k, int round, int mask, double v) {
  return {model, k, round, mask, v, v, 5};
}

}  // namespace

TEST_CASE("bar geometry encodes the aggregated means and stds") {
  std::vector<MetricRecord> records;
  Rng rng(3);
  for (std::string model : {"F1M1_2", "F12M12_4"}) {
    for (int k : {1, 5, 15}) {
      for (int r = 1; r <= 4; ++r) {
        for (int m = 1; m <= 3; ++m) records.push_back(rec(model, k, r, m, rng.uniform(0.7, 0.99)));
      }
    }
  }
  std::vector<MetricRecord> matched;
  for (int m = 1; m <= 3; ++m) matched.push_back(rec("matched", -1, 0, m, 0.95));
  const auto agg = aggregate(records, matched);
  const auto svg = bar_chart_svg(agg, 2, ReportMetric::Dice, 0.95);

  std::smatch plot;
  REQUIRE(std::regex_search(svg, plot, std::regex("<g class=\"plot\"[^>]*>")));
  const auto tag = plot.str();
  const double ymin = std::stod(attr(tag, "data-ymin")), ymax = std::stod(attr(tag, "data-ymax"));
  const double top = std::stod(attr(tag, "data-top")), bottom = std::stod(attr(tag, "data-bottom"));

  const auto bars = parse_bars(svg);
  REQUIRE(bars.size() == 6);
  for (const auto& bar : bars) {
    std::vector<double> values;
    for (const auto& r : records) {
      if (r.model_name == bar.model && r.k == bar.k && r.mask_id == 2) values.push_back(r.dice);
    }
    REQUIRE(values.size() == 4);
    double mean = 0;
    for (double v : values) mean += v / 4;
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean) / 4;
    CHECK(bar.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(bar.std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    const double expected_y = bottom - (mean - ymin) / (ymax - ymin) * (bottom - top);
    CHECK(bar.y == doctest::Approx(expected_y).epsilon(1e-5));
    CHECK(bar.y + bar.height == doctest::Approx(bottom).epsilon(1e-5));
  }
  std::smatch line;
  REQUIRE(std::regex_search(svg, line, std::regex("<line class=\"matched\"[^>]*>")));
  CHECK(std::stod(attr(line.str(), "data-value")) == 0.95);
  CHECK(std::regex_search(svg, std::regex("class=\"errorbar\"")));
}

TEST_CASE("one model, one k, three masks gives three figures") {
  std::vector<MetricRecord> records, matched;
  for (int m = 1; m <= 3; ++m) {
    records.push_back(rec("A", 15, 1, m, 0.9));
    matched.push_back(rec("matched", -1, 0, m, 0.9));
  }
  const auto dir = oracle::temp_dir("report_three");
  const auto files = write_report(records, matched, dir);
  REQUIRE(files.figures.size() == 3);
  for (const auto& f : files.figures) CHECK(fs::exists(f));
  CHECK(files.figures[0].filename() == "mask1_dice.svg");
  for (const auto& row : files.summary) {
    CHECK(row.max_relative_dice == doctest::Approx(100.0));
    CHECK(row.max_relative_pca == doctest::Approx(100.0));
  }
  CHECK(fs::exists(files.aggregate_csv));
  CHECK(nlohmann::json::parse(read_file(files.aggregate_json)).size() == 3);
}

TEST_CASE("summary picks the best frame count per model and mask") {
  std::vector<MetricRecord> records{rec("A", 1, 1, 1, 0.5), rec("A", 5, 1, 1, 0.8), rec("A", 15, 1, 1, 0.8)};
  std::vector<MetricRecord> matched{rec("matched", -1, 0, 1, 0.8)};
  const auto rows = summarize(aggregate(records, matched));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].max_relative_dice == doctest::Approx(100.0));
  CHECK(rows[0].k_at_max_dice == 5);
  CHECK(summary_to_csv(rows).rfind("model,mask,max_relative_pca", 0) == 0);
}

TEST_CASE("report errors") {
  std::vector<MetricRecord> records{rec("A", 1, 1, 1, 0.5)};
  const auto dir = oracle::temp_dir("report_err");
  CHECK_THROWS_AS(write_report(records, {}, dir), DataError);
  CHECK_THROWS_AS(write_report({}, records, dir), DataError);
  CHECK_THROWS_AS(parse_report_metric("hausdorff"), ConfigError);
}
