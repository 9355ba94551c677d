#include "atbseg/protocol.hpp"

#include <map>
#include <mutex>
#include <set>

#include "atbseg/fsutil.hpp"

namespace atbseg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& message) {
  throw ConfigError(pointer + ": " + message);
}

void reject_unknown(const json& j, const std::string& pointer, const std::set<std::string>& known) {
  if (!j.is_object()) fail(pointer.empty() ? "/" : pointer, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(pointer + "/" + key, "unknown field");
  }
}

const json& field(const json& j, const std::string& pointer, const std::string& key) {
  if (!j.contains(key)) fail(pointer + "/" + key, "required field is missing");
  return j.at(key);
}

std::string string_at(const json& j, const std::string& pointer) {
  if (!j.is_string()) fail(pointer, "expected a string");
  return j.get<std::string>();
}

long long int_at(const json& j, const std::string& pointer) {
  if (!j.is_number_integer()) fail(pointer, "expected an integer");
  return j.get<long long>();
}

std::uint64_t seed_at(const json& j, const std::string& pointer) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    fail(pointer, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::vector<std::string> subject_list(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.empty()) fail(pointer, "expected a non-empty array of subject ids");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto ptr = pointer + "/" + std::to_string(i);
    auto id = string_at(j[i], ptr);
    if (!is_valid_subject_id(id)) fail(ptr, "invalid subject id '" + id + "'");
    out.push_back(std::move(id));
  }
  return out;
}

std::vector<int> int_list(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.empty()) fail(pointer, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(static_cast<int>(int_at(j[i], pointer + "/" + std::to_string(i))));
  return out;
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
  return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
}

template <typename F>
auto with_pointer(const std::string& pointer, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    fail(pointer, e.what());
  }
}

json parse_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const IngestionError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

GridConfig grid_config_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, "", {"corpus", "registry", "groups", "splits", "architectures", "model", "train", "seed"});
  GridConfig c;
  c.corpus = resolve(string_at(field(j, "", "corpus"), "/corpus"), base_dir);
  if (j.contains("registry")) c.registry = resolve(string_at(j["registry"], "/registry"), base_dir);

  const auto& groups = field(j, "", "groups");
  if (!groups.is_array() || groups.empty()) fail("/groups", "expected a non-empty array of subject lists");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    c.grid.groups.push_back(subject_list(groups[i], "/groups/" + std::to_string(i)));
  }

  const auto& splits = field(j, "", "splits");
  if (!splits.is_array() || splits.empty()) fail("/splits", "expected a non-empty array");
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto ptr = "/splits/" + std::to_string(i);
    const auto name = string_at(splits[i], ptr);
    c.grid.splits.push_back(with_pointer(ptr, [&] { return parse_split(name); }));
  }

  if (j.contains("architectures")) {
    const auto& archs = j["architectures"];
    if (!archs.is_array() || archs.empty()) fail("/architectures", "expected a non-empty array");
    for (std::size_t i = 0; i < archs.size(); ++i) {
      const auto ptr = "/architectures/" + std::to_string(i);
      const auto name = string_at(archs[i], ptr);
      c.grid.architectures.push_back(with_pointer(ptr, [&] { return parse_architecture(name); }));
    }
  } else {
    c.grid.architectures = {Architecture::SegNetStyle};
  }

  if (j.contains("model")) {
    reject_unknown(j["model"], "/model",
                   {"input_width", "input_height", "stages", "base_channels", "kernel_size", "pool_factor",
                    "auto_pad"});
    c.grid.model = with_pointer("/model", [&] { return model_config_from_json(j["model"]); });
  }
  if (j.contains("train")) {
    reject_unknown(j["train"], "/train",
                   {"max_epochs", "patience", "min_delta", "learning_rate", "batch_size", "optimizer"});
    c.grid.train = with_pointer("/train", [&] { return train_config_from_json(j["train"], pretrain_config()); });
  }
  if (j.contains("seed")) c.grid.seed = seed_at(j["seed"], "/seed");
  with_pointer("", [&] {
    c.grid.validate();
    return 0;
  });
  return c;
}

GridConfig load_grid_config(const fs::path& path) {
  return grid_config_from_json(parse_file(path), path.parent_path());
}

void ProtocolSpec::validate() const {
  if (subjects.empty()) throw ConfigError("protocol names no subjects");
  if (frame_counts.empty()) throw ConfigError("frame_counts must not be empty");
  for (int k : frame_counts) {
    if (k < 1) throw ConfigError("frame counts must be >= 1");
  }
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (pool_frames < 1) throw ConfigError("pool_frames must be >= 1");
  if (test_videos.empty()) throw ConfigError("test_videos must not be empty");
  finetune.validate();
  matched_train.validate();
  matched_model.validate();
}

ProtocolSpec protocol_spec_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, "", {"manifest", "subjects", "rule", "pool_video", "val_video", "source_video", "pool_frames",
                         "test_videos", "frame_counts", "rounds", "seed", "finetune", "matched_train",
                         "matched_model"});
  ProtocolSpec s;
  s.manifest = resolve(string_at(field(j, "", "manifest"), "/manifest"), base_dir);
  s.subjects = subject_list(field(j, "", "subjects"), "/subjects");
  if (j.contains("rule")) {
    const auto rule = string_at(j["rule"], "/rule");
    s.rule = with_pointer("/rule", [&] { return parse_matched_rule(rule); });
  }
  auto get_int = [&](const char* key, int& into) {
    if (j.contains(key)) into = static_cast<int>(int_at(j[key], std::string("/") + key));
  };
  get_int("pool_video", s.pool_video);
  get_int("val_video", s.val_video);
  get_int("source_video", s.source_video);
  get_int("pool_frames", s.pool_frames);
  get_int("rounds", s.rounds);
  if (j.contains("test_videos")) {
    s.test_videos = int_list(j["test_videos"], "/test_videos");
  } else if (s.rule == MatchedRule::Videos) {
    s.test_videos = {13, 14, 15};
  } else {
    s.test_videos = {2};
  }
  if (j.contains("frame_counts")) s.frame_counts = int_list(j["frame_counts"], "/frame_counts");
  if (j.contains("seed")) s.seed = seed_at(j["seed"], "/seed");
  if (j.contains("finetune")) {
    s.finetune = with_pointer("/finetune", [&] { return train_config_from_json(j["finetune"], finetune_config()); });
  }
  if (j.contains("matched_train")) {
    s.matched_train =
        with_pointer("/matched_train", [&] { return train_config_from_json(j["matched_train"], pretrain_config()); });
  }
  if (j.contains("matched_model")) {
    s.matched_model = with_pointer("/matched_model", [&] { return model_config_from_json(j["matched_model"]); });
  }
  with_pointer("", [&] {
    s.validate();
    return 0;
  });
  return s;
}

ProtocolSpec load_protocol_spec(const fs::path& path) {
  return protocol_spec_from_json(parse_file(path), path.parent_path());
}

ProtocolData load_protocol_data(const Corpus& corpus, const ProtocolSpec& spec) {
  spec.validate();
  ProtocolData data;
  auto clip_of = [&](const Subject& s, int v) -> const VideoClip& {
    const auto* clip = s.video(v);
    if (!clip) throw ConfigError("subject " + s.id + " has no video " + std::to_string(v));
    return *clip;
  };
  for (const auto& id : spec.subjects) {
    const auto& subject = corpus.require_subject(id);
    if (spec.rule == MatchedRule::Videos) {
      append(data.pool, labeled_frames(clip_of(subject, spec.pool_video)));
      append(data.validation, labeled_frames(clip_of(subject, spec.val_video)));
    } else {
      const auto& clip = clip_of(subject, spec.source_video);
      if (clip.frames.size() <= static_cast<std::size_t>(spec.pool_frames)) {
        throw ConfigError("subject " + id + " video " + std::to_string(spec.source_video) + " has " +
                          std::to_string(clip.frames.size()) + " frames; a " + std::to_string(spec.pool_frames) +
                          "-frame pool leaves nothing to validate on");
      }
      append(data.pool, labeled_frames(clip, 0, spec.pool_frames));
      append(data.validation, labeled_frames(clip, static_cast<std::size_t>(spec.pool_frames)));
    }
    for (int v : spec.test_videos) append(data.test, labeled_frames(clip_of(subject, v)));
  }
  for (int k : spec.frame_counts) {
    if (static_cast<std::size_t>(k) > data.pool.size()) {
      throw ConfigError("frame count " + std::to_string(k) + " exceeds the adaptation pool of " +
                        std::to_string(data.pool.size()) + " frames");
    }
  }
  return data;
}

std::vector<MetricRecord> adapt_models(const std::vector<NamedModel>& bases, const ProtocolData& data,
                                       const ProtocolSpec& spec, const AdaptOptions& options) {
  spec.validate();
  if (data.test.empty()) throw DataError("test set is empty");
  std::vector<MetricRecord> out;
  for (const auto& base : bases) {
    if (options.include_base) {
      const auto rows = evaluate_model(base.model, data.test, {base.name, kBaseK, 0});
      out.insert(out.end(), rows.begin(), rows.end());
    }
    AdaptationSpec adaptation;
    adaptation.frame_counts = spec.frame_counts;
    adaptation.rounds = spec.rounds;
    adaptation.pool = data.pool;
    adaptation.validation = data.validation;
    adaptation.base_seed = spec.seed;

    std::map<std::pair<int, int>, std::vector<MetricRecord>> by_job;
    std::mutex mutex;
    FineTuneOptions ft;
    ft.jobs = options.jobs;
    ft.discard_models = true;
    ft.on_round = [&](const AdaptedModel& adapted) {
      auto rows = evaluate_model(adapted.result.model, data.test, {base.name, adapted.k, adapted.round});
      if (options.checkpoint_dir) {
        const auto& best = adapted.result.best();
        CheckpointMeta meta{best.epoch, best.val_loss, best.val_dice,
                            json{{"base", base.name}, {"k", adapted.k}, {"round", adapted.round},
                                 {"selected", adapted.selected}}};
        save_checkpoint(adapted.result.model, meta,
                        *options.checkpoint_dir / base.name /
                            ("k" + std::to_string(adapted.k) + "_r" + std::to_string(adapted.round)));
      }
      if (options.log) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s k=%d round=%d epochs=%zu dice=%.4f/%.4f/%.4f", base.name.c_str(),
                      adapted.k, adapted.round, adapted.result.history.size(), rows[0].dice, rows[1].dice,
                      rows[2].dice);
        options.log(buf);
      }
      std::lock_guard lock(mutex);
      by_job[{adapted.k, adapted.round}] = std::move(rows);
    };
    fine_tune(base.model, adaptation, spec.finetune, ft);
    for (int k : spec.frame_counts) {
      for (int r = 1; r <= spec.rounds; ++r) {
        const auto& rows = by_job.at({k, r});
        out.insert(out.end(), rows.begin(), rows.end());
      }
    }
  }
  return out;
}

MatchedOutcome run_matched(const Corpus& corpus, const ProtocolSpec& spec, const ProtocolData& data,
                           const TrainHooks& hooks) {
  spec.validate();
  auto result = matched_condition(corpus, spec.subjects, spec.rule, spec.matched_model, spec.matched_train, hooks);
  auto records = evaluate_model(result.model, data.test, {kMatchedModelName, kMatchedK, 0});
  return {std::move(result), std::move(records)};
}

}  // namespace atbseg
