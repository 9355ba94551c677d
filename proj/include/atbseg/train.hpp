#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atbseg/dataset.hpp"
#include "atbseg/model.hpp"

namespace atbseg {

enum class Optimizer { Adam };

struct TrainConfig {
  int max_epochs = 30;
  int patience = 5;
  double min_delta = 1e-4;
  double learning_rate = 1e-3;
  int batch_size = 8;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Pretraining defaults (lr 1e-3).
TrainConfig pretrain_config();
/// Fine-tuning defaults (lr 1e-4).
TrainConfig finetune_config();

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct SplitSpec {
  std::string name;
  int train_videos = 0;
  int val_videos = 0;
};

/// "2:1", "4:1" or "8:2"; anything else is a ConfigError.
SplitSpec parse_split(std::string_view name);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::array<double, 3> val_dice{};
};

struct EpochEvaluation {
  double val_loss = 0.0;
  std::array<double, 3> val_dice{};
};

struct TrainHooks {
  /// Replaces the default validation pass when set.
  std::function<EpochEvaluation(const SegModel&, int epoch)> evaluate;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  SegModel model;  // weights of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;

  const EpochRecord& best() const { return history.at(static_cast<std::size_t>(best_epoch - 1)); }
};

/// Non-finite loss during training. Carries the history up to the last finite epoch.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<EpochRecord> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

/// Inference-mode loss and per-mask Dice at the model's input dims.
EpochEvaluation evaluate_prepared(const SegModel& model, const PreparedSet& set);

/// Mini-batch Adam. After every epoch the validation loss is computed; the
/// best-loss weights are kept, and training stops once the loss has failed to
/// improve by at least min_delta for `patience` consecutive epochs.
TrainResult train_model(const SegModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        const TrainHooks& hooks = {});
TrainResult train_prepared(const SegModel& model, const PreparedSet& train, const PreparedSet& val,
                           const TrainConfig& config, const TrainHooks& hooks = {});

struct GroupSplit {
  Dataset train;
  Dataset val;
};

/// Per subject: videos 1..train_videos train, the next val_videos validate.
GroupSplit make_group_splits(std::span<const std::string> group, const SplitSpec& split, const Corpus& corpus);

/// Subjects sharing a letter prefix collapse to letter + digits: {F1,F2,M1,M2} -> "F12M12".
std::string group_name(std::span<const std::string> group);
/// group_name + "_" + training videos per subject, e.g. "F1M1_2".
std::string registry_key(std::span<const std::string> group, const SplitSpec& split);

struct AdaptationSpec {
  std::vector<int> frame_counts{1, 5, 10, 15};
  int rounds = 10;
  Dataset pool;
  Dataset validation;
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct AdaptedModel {
  int k = 0;
  int round = 0;
  std::vector<int> selected;  // pool indices, sorted
  TrainResult result;
};

std::uint64_t adaptation_seed(std::uint64_t base_seed, int k, int round);

/// k pool indices drawn uniformly without replacement, sorted ascending.
std::vector<int> select_adaptation_frames(std::uint64_t base_seed, int k, int round, int pool_size);

/// One fine-tuning run from the base weights; depends only on (base, adaptation, k, round, config).
AdaptedModel fine_tune_round(const SegModel& base, const AdaptationSpec& spec, int k, int round,
                             const TrainConfig& config);

struct FineTuneOptions {
  int jobs = 1;
  /// Called once per finished (k, round); may run on worker threads when jobs > 1.
  std::function<void(const AdaptedModel&)> on_round;
  /// Drop adapted weights from the returned list after on_round has seen them.
  bool discard_models = false;
};

/// Every (k, round) of the adaptation, ordered by k then round. The fine-tuning batch
/// size is min(config.batch_size, k).
std::vector<AdaptedModel> fine_tune(const SegModel& base, const AdaptationSpec& spec, const TrainConfig& config,
                                    const FineTuneOptions& options = {});

enum class MatchedRule {
  Videos,    // videos 1-8 train, 9-10 validate, per subject
  Fraction,  // first 70% of video 1 trains, the remainder validates
};

MatchedRule parse_matched_rule(std::string_view name);

/// floor(0.7 n) training frames and n - floor(0.7 n) validation frames.
std::pair<int, int> fraction_split_counts(int n_frames);

GroupSplit matched_split(const Corpus& corpus, std::span<const std::string> subjects, MatchedRule rule);

TrainResult matched_condition(const Corpus& corpus, std::span<const std::string> subjects, MatchedRule rule,
                              const ModelConfig& model_config, const TrainConfig& config,
                              const TrainHooks& hooks = {});

}  // namespace atbseg
