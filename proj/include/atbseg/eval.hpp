#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atbseg/dataset.hpp"
#include "atbseg/model.hpp"

namespace atbseg {

/// Fraction of pixels where pred and gt agree.
double pca(const BinaryGrid& pred, const BinaryGrid& gt);

/// 2|pred & gt| / (|pred| + |gt|) over tissue pixels; 1.0 when both are empty.
double dice(const BinaryGrid& pred, const BinaryGrid& gt);

inline constexpr int kBaseK = 0;
inline constexpr int kMatchedK = -1;

struct MetricRecord {
  std::string model_name;
  int k = 0;  // adaptation frame count; 0 = base model, -1 = matched condition
  int round = 0;
  int mask_id = 1;
  double pca = 0.0;
  double dice = 0.0;
  int n_frames = 0;
  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

enum class Averaging {
  PerFrame,  // metric per frame, then uniform mean over frames
  Pooled,    // all pixels of all frames counted together
};

struct RecordTag {
  std::string model_name;
  int k = 0;
  int round = 0;
};

/// One record per mask. predictions[i] must match test[i]'s native dims.
std::vector<MetricRecord> evaluate_predictions(std::span<const MaskTriple> predictions, const Dataset& test,
                                               const RecordTag& tag, Averaging averaging = Averaging::PerFrame);

/// Predicts at the model's input dims and resamples predictions (nearest) back
/// to each frame's native resolution before scoring.
std::vector<MetricRecord> evaluate_model(const SegModel& model, const Dataset& test, const RecordTag& tag,
                                         Averaging averaging = Averaging::PerFrame);

std::vector<MaskTriple> predict_native(const SegModel& model, const Dataset& frames);

struct AggregateRecord {
  std::string model_name;
  int k = 0;
  int mask_id = 1;
  int rounds = 0;
  double mean_pca = 0.0, std_pca = 0.0;
  double mean_dice = 0.0, std_dice = 0.0;
  double relative_pca = 0.0, relative_dice = 0.0;  // 100 * metric / matched
  double delta_pca = 0.0, delta_dice = 0.0;        // 100 * (metric - matched) / matched
};

/// Mean and population standard deviation over rounds for each (model, k, mask),
/// compared against the matched-condition record of the same mask.
std::vector<AggregateRecord> aggregate(std::span<const MetricRecord> records, std::span<const MetricRecord> matched);

/// Population mean / std (divide by N); order-independent.
std::pair<double, double> mean_and_std(std::vector<double> values);

inline constexpr const char* kMetricCsvHeader = "model,k,round,mask,pca,dice,n_frames";

std::string metrics_to_csv(std::span<const MetricRecord> records);
std::vector<MetricRecord> metrics_from_csv(const std::string& text);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

std::string aggregates_to_csv(std::span<const AggregateRecord> records);
nlohmann::json aggregates_to_json(std::span<const AggregateRecord> records);

}  // namespace atbseg
