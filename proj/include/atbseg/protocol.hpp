#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "atbseg/eval.hpp"
#include "atbseg/registry.hpp"

namespace atbseg {

/// Grid config file: corpus manifest, groups, splits, architectures, model and
/// train settings, seed. Relative paths resolve against `base_dir`.
struct GridConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> registry;
  GridSpec grid;
};

/// Errors name the offending field as a JSON pointer, e.g. "/splits/2".
GridConfig grid_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
GridConfig load_grid_config(const std::filesystem::path& path);

/// Where adaptation frames, validation frames and test frames come from.
///
/// corpusA rule: per subject, video `pool_video` is the pool, `val_video`
/// validates, `test_videos` (default 13-15) are scored.
/// corpusB rule: per subject, the first `pool_frames` frames of
/// `source_video` are the pool, its remaining frames validate, and
/// `test_videos` (default 2) are scored.
/// Frames of all listed subjects are pooled together.
struct ProtocolSpec {
  std::filesystem::path manifest;
  std::vector<std::string> subjects;
  MatchedRule rule = MatchedRule::Videos;
  int pool_video = 11;
  int val_video = 12;
  int source_video = 1;
  int pool_frames = 45;
  std::vector<int> test_videos;
  std::vector<int> frame_counts{1, 5, 10, 15};
  int rounds = 10;
  std::uint64_t seed = 0;
  TrainConfig finetune = finetune_config();
  TrainConfig matched_train = pretrain_config();
  ModelConfig matched_model;

  void validate() const;
};

ProtocolSpec protocol_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ProtocolSpec load_protocol_spec(const std::filesystem::path& path);

struct ProtocolData {
  Dataset pool;
  Dataset validation;
  Dataset test;
};

ProtocolData load_protocol_data(const Corpus& corpus, const ProtocolSpec& spec);

struct NamedModel {
  std::string name;
  SegModel model;
};

struct AdaptOptions {
  int jobs = 1;
  /// Also score each unadapted base model (k = 0, round 0).
  bool include_base = false;
  /// When set, adapted weights are saved under <dir>/<model>/k<k>_r<round>.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> log;
};

/// Fine-tunes every base model over the protocol's frame counts and rounds and
/// scores each adapted model on the test set. Every base model sees the same
/// frame selection for a given (k, round). Rows are ordered by model, k,
/// round, mask.
std::vector<MetricRecord> adapt_models(const std::vector<NamedModel>& bases, const ProtocolData& data,
                                       const ProtocolSpec& spec, const AdaptOptions& options = {});

struct MatchedOutcome {
  TrainResult result;
  std::vector<MetricRecord> records;  // model "matched", k = -1
};

/// Trains the matched-condition model on the protocol's subjects and scores it on the test set.
MatchedOutcome run_matched(const Corpus& corpus, const ProtocolSpec& spec, const ProtocolData& data,
                           const TrainHooks& hooks = {});

inline constexpr const char* kMatchedModelName = "matched";

}  // namespace atbseg
