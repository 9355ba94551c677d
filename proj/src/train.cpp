#include "atbseg/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "atbseg/eval.hpp"
#include "atbseg/random.hpp"

namespace atbseg {

using nlohmann::json;

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

TrainConfig pretrain_config() { return {}; }

TrainConfig finetune_config() {
  TrainConfig c;
  c.learning_rate = 1e-4;
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"max_epochs", c.max_epochs}, {"patience", c.patience},     {"min_delta", c.min_delta},
              {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"optimizer", "adam"},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.value("optimizer", std::string("adam")) != "adam") throw ConfigError("only the adam optimizer is supported");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

SplitSpec parse_split(std::string_view name) {
  if (name == "2:1") return {"2:1", 2, 1};
  if (name == "4:1") return {"4:1", 4, 1};
  if (name == "8:2") return {"8:2", 8, 2};
  throw ConfigError("unknown split '" + std::string(name) + "' (expected 2:1, 4:1 or 8:2)");
}

EpochEvaluation evaluate_prepared(const SegModel& model, const PreparedSet& set) {
  EpochEvaluation ev;
  const int n = static_cast<int>(set.size());
  if (n == 0) throw DataError("validation set is empty");
  double loss = 0.0;
  std::array<double, 3> dice_sum{};
  const double eps = kProbabilityEpsilon;
  constexpr int kChunk = 16;
  std::vector<int> idx;
  for (int start = 0; start < n; start += kChunk) {
    idx.clear();
    for (int i = start; i < std::min(n, start + kChunk); ++i) idx.push_back(i);
    const auto batch = gather(set, idx);
    const auto probs = model.infer(batch.images);
    for (int i = 0; i < probs.n; ++i) {
      for (int h = 0; h < 3; ++h) {
        const float* p = probs.channel(i, h);
        const float* t = batch.targets.channel(i, h);
        std::size_t both = 0, sizes = 0;
        double l = 0.0;
        for (std::size_t k = 0; k < probs.plane(); ++k) {
          const double pc = std::clamp(static_cast<double>(p[k]), eps, 1.0 - eps);
          l -= t[k] * std::log(pc) + (1.0 - t[k]) * std::log(1.0 - pc);
          const bool a = p[k] >= 0.5f, b = t[k] > 0.5f;
          both += a && b;
          sizes += static_cast<std::size_t>(a) + static_cast<std::size_t>(b);
        }
        loss += l / static_cast<double>(probs.plane());
        dice_sum[h] += sizes == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(sizes);
      }
    }
  }
  ev.val_loss = loss / n;
  for (int h = 0; h < 3; ++h) ev.val_dice[h] = dice_sum[h] / n;
  return ev;
}

namespace {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(double learning_rate, const std::vector<std::vector<float>>& params) : lr(learning_rate) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void apply(std::vector<std::vector<float>>& params, const std::vector<std::vector<float>>& grads) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      const auto& g = grads[i];
      auto& mi = m[i];
      auto& vi = v[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        mi[k] = beta1 * mi[k] + (1.0 - beta1) * g[k];
        vi[k] = beta2 * vi[k] + (1.0 - beta2) * static_cast<double>(g[k]) * g[k];
        p[k] -= static_cast<float>(lr * (mi[k] / c1) / (std::sqrt(vi[k] / c2) + eps));
      }
    }
  }
};

}  // namespace

TrainResult train_prepared(const SegModel& initial, const PreparedSet& train, const PreparedSet& val,
                           const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train.size() == 0) throw DataError("training set is empty");
  if (val.size() == 0 && !hooks.evaluate) throw DataError("validation set is empty");

  SegModel model = initial;
  Adam adam(config.learning_rate, model.parameters());
  TrainResult result{initial, {}, 0, false};
  double best_loss = std::numeric_limits<double>::infinity();
  double reference = std::numeric_limits<double>::infinity();
  int wait = 0;

  std::vector<int> order(train.size());
  std::vector<std::vector<float>> grads;
  SegModel::BatchStatistics stats;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(hash_seed({config.seed, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);

    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto batch = gather(train, std::span<const int>(order.data() + start, end - start));
      const double loss = model.loss_and_gradient(batch.images, batch.targets, &grads, &stats);
      if (!std::isfinite(loss)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch), result.history);
      }
      adam.apply(model.parameters(), grads);
      model.update_running_statistics(stats);
      train_loss += loss * static_cast<double>(end - start);
    }
    train_loss /= static_cast<double>(order.size());

    const auto ev = hooks.evaluate ? hooks.evaluate(model, epoch) : evaluate_prepared(model, val);
    if (!std::isfinite(ev.val_loss) || !std::isfinite(train_loss)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch), result.history);
    }
    EpochRecord rec{epoch, train_loss, ev.val_loss, ev.val_dice};
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (ev.val_loss < best_loss) {
      best_loss = ev.val_loss;
      result.model = model;
      result.best_epoch = epoch;
    }
    if (reference - ev.val_loss >= config.min_delta) {
      reference = ev.val_loss;
      wait = 0;
    } else if (++wait >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

TrainResult train_model(const SegModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        const TrainHooks& hooks) {
  const auto& cfg = model.config();
  return train_prepared(model, prepare(train, cfg.input_width, cfg.input_height),
                        prepare(val, cfg.input_width, cfg.input_height), config, hooks);
}

GroupSplit make_group_splits(std::span<const std::string> group, const SplitSpec& split, const Corpus& corpus) {
  if (group.empty()) throw ConfigError("subject group is empty");
  GroupSplit out;
  for (const auto& id : group) {
    const auto& subject = corpus.require_subject(id);
    for (int v = 1; v <= split.train_videos + split.val_videos; ++v) {
      const auto* clip = subject.video(v);
      if (!clip) {
        throw ConfigError("subject " + id + " lacks video " + std::to_string(v) + " required by split " + split.name);
      }
      append(v <= split.train_videos ? out.train : out.val, labeled_frames(*clip));
    }
  }
  return out;
}

std::string group_name(std::span<const std::string> group) {
  std::vector<std::pair<std::string, std::string>> parts;  // letter prefix -> digits, first-seen order
  for (const auto& id : group) {
    const auto split_at = id.find_first_of("0123456789");
    const auto prefix = id.substr(0, split_at);
    const auto digits = split_at == std::string::npos ? std::string() : id.substr(split_at);
    auto it = std::find_if(parts.begin(), parts.end(), [&](const auto& p) { return p.first == prefix; });
    if (it == parts.end()) {
      parts.emplace_back(prefix, digits);
    } else {
      it->second += digits;
    }
  }
  std::string out;
  for (const auto& [prefix, digits] : parts) out += prefix + digits;
  return out;
}

std::string registry_key(std::span<const std::string> group, const SplitSpec& split) {
  return group_name(group) + "_" + std::to_string(split.train_videos);
}

void AdaptationSpec::validate() const {
  if (frame_counts.empty()) throw ConfigError("adaptation frame_counts must not be empty");
  if (rounds < 1) throw ConfigError("adaptation rounds must be >= 1");
  if (validation.empty()) throw ConfigError("adaptation validation set is empty");
  for (int k : frame_counts) {
    if (k < 1) throw ConfigError("adaptation frame count must be >= 1");
    if (static_cast<std::size_t>(k) > pool.size()) {
      throw ConfigError("adaptation frame count " + std::to_string(k) + " exceeds pool size " +
                        std::to_string(pool.size()));
    }
  }
}

std::uint64_t adaptation_seed(std::uint64_t base_seed, int k, int round) {
  return hash_seed({base_seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(round)});
}

std::vector<int> select_adaptation_frames(std::uint64_t base_seed, int k, int round, int pool_size) {
  if (k < 1 || k > pool_size) {
    throw ConfigError("cannot select " + std::to_string(k) + " frames from a pool of " + std::to_string(pool_size));
  }
  Rng rng(adaptation_seed(base_seed, k, round));
  auto picked = sample_without_replacement(rng, pool_size, k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

AdaptedModel fine_tune_round(const SegModel& base, const AdaptationSpec& spec, int k, int round,
                             const TrainConfig& config) {
  const auto selected = select_adaptation_frames(spec.base_seed, k, round, static_cast<int>(spec.pool.size()));
  Dataset chosen;
  for (int i : selected) chosen.push_back(spec.pool[i]);
  TrainConfig cfg = config;
  cfg.batch_size = std::min(config.batch_size, k);
  cfg.seed = hash_seed({adaptation_seed(spec.base_seed, k, round), config.seed});
  auto result = train_model(base, chosen, spec.validation, cfg);
  return AdaptedModel{k, round, selected, std::move(result)};
}

std::vector<AdaptedModel> fine_tune(const SegModel& base, const AdaptationSpec& spec, const TrainConfig& config,
                                    const FineTuneOptions& options) {
  spec.validate();
  config.validate();
  std::vector<std::pair<int, int>> jobs;
  for (int k : spec.frame_counts) {
    for (int r = 1; r <= spec.rounds; ++r) jobs.emplace_back(k, r);
  }
  std::vector<std::optional<AdaptedModel>> slots(jobs.size());
  std::mutex callback_mutex;
  auto run = [&](std::size_t j) {
    auto adapted = fine_tune_round(base, spec, jobs[j].first, jobs[j].second, config);
    if (options.on_round) {
      std::lock_guard lock(callback_mutex);
      options.on_round(adapted);
    }
    if (options.discard_models) adapted.result.model = SegModel(base.config());
    slots[j] = std::move(adapted);
  };

  const int workers = std::max(1, std::min<int>(options.jobs, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j; (j = next++) < jobs.size();) run(j);
        } catch (...) {
          errors[w] = std::current_exception();
          next = jobs.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<AdaptedModel> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

MatchedRule parse_matched_rule(std::string_view name) {
  if (name == "videos" || name == "corpusA") return MatchedRule::Videos;
  if (name == "fraction" || name == "corpusB") return MatchedRule::Fraction;
  throw ConfigError("unknown matched-condition rule '" + std::string(name) + "'");
}

std::pair<int, int> fraction_split_counts(int n_frames) {
  const int train = n_frames * 7 / 10;
  const int val = n_frames - train;
  if (train < 1 || val < 1) {
    throw ConfigError("a " + std::to_string(n_frames) + "-frame video cannot be split 70/30");
  }
  return {train, val};
}

GroupSplit matched_split(const Corpus& corpus, std::span<const std::string> subjects, MatchedRule rule) {
  if (subjects.empty()) throw ConfigError("matched condition needs at least one subject");
  GroupSplit out;
  for (const auto& id : subjects) {
    const auto& subject = corpus.require_subject(id);
    if (rule == MatchedRule::Videos) {
      for (int v = 1; v <= 10; ++v) {
        const auto* clip = subject.video(v);
        if (!clip) throw ConfigError("matched condition: subject " + id + " lacks video " + std::to_string(v));
        append(v <= 8 ? out.train : out.val, labeled_frames(*clip));
      }
    } else {
      const auto* clip = subject.video(1);
      if (!clip) throw ConfigError("matched condition: subject " + id + " lacks video 1");
      const auto [train, val] = fraction_split_counts(static_cast<int>(clip->frames.size()));
      append(out.train, labeled_frames(*clip, 0, train));
      append(out.val, labeled_frames(*clip, static_cast<std::size_t>(train), val));
    }
  }
  return out;
}

TrainResult matched_condition(const Corpus& corpus, std::span<const std::string> subjects, MatchedRule rule,
                              const ModelConfig& model_config, const TrainConfig& config, const TrainHooks& hooks) {
  const auto split = matched_split(corpus, subjects, rule);
  return train_model(build_model(model_config), split.train, split.val, config, hooks);
}

}  // namespace atbseg
