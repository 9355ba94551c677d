#include "atbseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "atbseg/fsutil.hpp"
#include "atbseg/rasterize.hpp"

namespace atbseg {

double pca(const BinaryGrid& pred, const BinaryGrid& gt) {
  require_same_shape(pred, gt, "pca");
  if (pred.size() == 0) throw ShapeError("pca: empty grids");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += (pred.values[i] != 0) == (gt.values[i] != 0);
  return static_cast<double>(agree) / static_cast<double>(pred.size());
}

double dice(const BinaryGrid& pred, const BinaryGrid& gt) {
  require_same_shape(pred, gt, "dice");
  std::size_t both = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.values[i] != 0;
    const bool b = gt.values[i] != 0;
    both += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<MetricRecord> evaluate_predictions(std::span<const MaskTriple> predictions, const Dataset& test,
                                               const RecordTag& tag, Averaging averaging) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  if (predictions.size() != test.size()) throw ShapeError("evaluate: one prediction per test frame required");
  std::vector<MetricRecord> out;
  for (int m = 0; m < 3; ++m) {
    MetricRecord r{tag.model_name, tag.k, tag.round, m + 1, 0.0, 0.0, static_cast<int>(test.size())};
    if (averaging == Averaging::PerFrame) {
      double sp = 0.0, sd = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        sp += pca(predictions[i][m], test[i].masks[m]);
        sd += dice(predictions[i][m], test[i].masks[m]);
      }
      r.pca = sp / static_cast<double>(test.size());
      r.dice = sd / static_cast<double>(test.size());
    } else {
      std::size_t agree = 0, total = 0, both = 0, sizes = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& a = predictions[i][m];
        const auto& b = test[i].masks[m];
        require_same_shape(a, b, "evaluate");
        for (std::size_t k = 0; k < a.size(); ++k) {
          const bool x = a.values[k] != 0, y = b.values[k] != 0;
          agree += x == y;
          both += x && y;
          sizes += static_cast<std::size_t>(x) + static_cast<std::size_t>(y);
        }
        total += a.size();
      }
      r.pca = static_cast<double>(agree) / static_cast<double>(total);
      r.dice = sizes == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(sizes);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MaskTriple> predict_native(const SegModel& model, const Dataset& frames) {
  const auto& cfg = model.config();
  std::vector<ImageGrid> inputs;
  inputs.reserve(frames.size());
  for (const auto& f : frames) inputs.push_back(resize_frame(f.image, cfg.input_width, cfg.input_height));
  const auto probs = forward(model, inputs);
  std::vector<MaskTriple> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto m = threshold_predictions(probs[i]);
    for (int h = 0; h < 3; ++h) m[h] = resize_mask(m[h], frames[i].image.width, frames[i].image.height);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MetricRecord> evaluate_model(const SegModel& model, const Dataset& test, const RecordTag& tag,
                                         Averaging averaging) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  return evaluate_predictions(predict_native(model, test), test, tag, averaging);
}

std::pair<double, double> mean_and_std(std::vector<double> values) {
  if (values.empty()) return {0.0, 0.0};
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::vector<AggregateRecord> aggregate(std::span<const MetricRecord> records, std::span<const MetricRecord> matched) {
  std::map<int, std::vector<double>> matched_pca, matched_dice;
  for (const auto& r : matched) {
    matched_pca[r.mask_id].push_back(r.pca);
    matched_dice[r.mask_id].push_back(r.dice);
  }

  std::vector<std::string> model_order;
  struct Bucket {
    std::vector<double> pca, dice;
  };
  std::map<std::tuple<std::string, int, int>, Bucket> buckets;
  for (const auto& r : records) {
    if (std::find(model_order.begin(), model_order.end(), r.model_name) == model_order.end()) {
      model_order.push_back(r.model_name);
    }
    auto& b = buckets[{r.model_name, r.k, r.mask_id}];
    b.pca.push_back(r.pca);
    b.dice.push_back(r.dice);
  }

  std::vector<AggregateRecord> out;
  for (const auto& name : model_order) {
    for (const auto& [key, bucket] : buckets) {
      const auto& [model, k, mask] = key;
      if (model != name) continue;
      if (!matched_pca.count(mask)) {
        throw DataError("aggregate: no matched-condition record for mask " + std::to_string(mask));
      }
      AggregateRecord a;
      a.model_name = model;
      a.k = k;
      a.mask_id = mask;
      a.rounds = static_cast<int>(bucket.pca.size());
      std::tie(a.mean_pca, a.std_pca) = mean_and_std(bucket.pca);
      std::tie(a.mean_dice, a.std_dice) = mean_and_std(bucket.dice);
      const double mp = mean_and_std(matched_pca[mask]).first;
      const double md = mean_and_std(matched_dice[mask]).first;
      a.relative_pca = 100.0 * a.mean_pca / mp;
      a.relative_dice = 100.0 * a.mean_dice / md;
      a.delta_pca = 100.0 * (a.mean_pca - mp) / mp;
      a.delta_dice = 100.0 * (a.mean_dice - md) / md;
      out.push_back(a);
    }
  }
  return out;
}

namespace {

std::string fmt(double v, int digits = 8) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string metrics_to_csv(std::span<const MetricRecord> records) {
  std::string out = std::string(kMetricCsvHeader) + "\n";
  for (const auto& r : records) {
    out += r.model_name + "," + std::to_string(r.k) + "," + std::to_string(r.round) + "," +
           std::to_string(r.mask_id) + "," + fmt(r.pca) + "," + fmt(r.dice) + "," + std::to_string(r.n_frames) + "\n";
  }
  return out;
}

std::vector<MetricRecord> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics csv: empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricCsvHeader) throw DataError("metrics csv: unexpected header '" + line + "'");
  std::vector<MetricRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw DataError("metrics csv line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      MetricRecord r{f[0], std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4]), std::stod(f[5]),
                     std::stoi(f[6])};
      if (r.mask_id < 1 || r.mask_id > 3 || r.pca < 0 || r.pca > 1 || r.dice < 0 || r.dice > 1) {
        throw DataError("value out of range");
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError("metrics csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  return metrics_from_csv(read_file(path));
}

std::string aggregates_to_csv(std::span<const AggregateRecord> records) {
  std::string out =
      "model,k,mask,rounds,mean_pca,std_pca,mean_dice,std_dice,relative_pca,relative_dice,delta_pca,delta_dice\n";
  for (const auto& a : records) {
    out += a.model_name + "," + std::to_string(a.k) + "," + std::to_string(a.mask_id) + "," +
           std::to_string(a.rounds) + "," + fmt(a.mean_pca) + "," + fmt(a.std_pca) + "," + fmt(a.mean_dice) + "," +
           fmt(a.std_dice) + "," + fmt(a.relative_pca, 6) + "," + fmt(a.relative_dice, 6) + "," +
           fmt(a.delta_pca, 6) + "," + fmt(a.delta_dice, 6) + "\n";
  }
  return out;
}

nlohmann::json aggregates_to_json(std::span<const AggregateRecord> records) {
  auto arr = nlohmann::json::array();
  for (const auto& a : records) {
    arr.push_back({{"model", a.model_name},
                   {"k", a.k},
                   {"mask", a.mask_id},
                   {"rounds", a.rounds},
                   {"mean_pca", a.mean_pca},
                   {"std_pca", a.std_pca},
                   {"mean_dice", a.mean_dice},
                   {"std_dice", a.std_dice},
                   {"relative_pca", a.relative_pca},
                   {"relative_dice", a.relative_dice},
                   {"delta_pca", a.delta_pca},
                   {"delta_dice", a.delta_dice}});
  }
  return arr;
}

}  // namespace atbseg
