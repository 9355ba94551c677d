#include "atbseg/registry.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "atbseg/fsutil.hpp"
#include "atbseg/random.hpp"

namespace atbseg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kRegistrySchemaVersion = 1;
constexpr const char* kIndexName = "registry.json";

}  // namespace

json registry_entry_to_json(const RegistryEntry& e) {
  return json{{"name", e.name},
              {"architecture", to_string(e.architecture)},
              {"group", e.group},
              {"split", e.split},
              {"seed", e.seed},
              {"job_hash", e.job_hash},
              {"best_epoch", e.best_epoch},
              {"epochs_run", e.epochs_run},
              {"val_metrics", {{"val_loss", e.val_loss}, {"val_dice", e.val_dice}}},
              {"checkpoint", e.checkpoint}};
}

RegistryEntry registry_entry_from_json(const json& j) {
  RegistryEntry e;
  try {
    e.name = j.at("name").get<std::string>();
    e.architecture = parse_architecture(j.at("architecture").get<std::string>());
    e.group = j.at("group").get<std::vector<std::string>>();
    e.split = j.at("split").get<std::string>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.job_hash = j.value("job_hash", std::string());
    e.best_epoch = j.value("best_epoch", 0);
    e.epochs_run = j.value("epochs_run", 0);
    const auto& vm = j.at("val_metrics");
    e.val_loss = vm.at("val_loss").get<double>();
    e.val_dice = vm.at("val_dice").get<std::array<double, 3>>();
    e.checkpoint = j.at("checkpoint").get<std::string>();
  } catch (const json::exception& ex) {
    throw DataError(std::string("registry entry: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw DataError(std::string("registry entry: ") + ex.what());
  }
  return e;
}

Registry::Registry(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  const auto index = dir_ / kIndexName;
  if (!fs::exists(index)) return;
  json j;
  try {
    j = json::parse(read_file(index));
  } catch (const json::exception& e) {
    throw DataError(index.string() + ": " + e.what());
  }
  if (j.value("schema_version", 0) != kRegistrySchemaVersion) {
    throw DataError(index.string() + ": unsupported registry schema version");
  }
  for (const auto& e : j.at("entries")) entries_.push_back(registry_entry_from_json(e));
}

std::vector<RegistryEntry> Registry::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::optional<RegistryEntry> Registry::find(const std::string& name, Architecture arch) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.name == name && e.architecture == arch) return e;
  }
  return std::nullopt;
}

void Registry::put(const RegistryEntry& entry) {
  std::lock_guard lock(mutex_);
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const RegistryEntry& e) {
    return e.name == entry.name && e.architecture == entry.architecture;
  });
  if (it == entries_.end()) {
    entries_.push_back(entry);
  } else {
    *it = entry;
  }
  save_locked();
}

void Registry::reorder(const std::vector<std::pair<std::string, Architecture>>& order) {
  std::lock_guard lock(mutex_);
  auto rank = [&](const RegistryEntry& e) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i].first == e.name && order[i].second == e.architecture) return i;
    }
    return order.size();
  };
  std::stable_sort(entries_.begin(), entries_.end(),
                   [&](const RegistryEntry& a, const RegistryEntry& b) { return rank(a) < rank(b); });
  save_locked();
}

void Registry::save_locked() const {
  json list = json::array();
  for (const auto& e : entries_) list.push_back(registry_entry_to_json(e));
  json j{{"schema_version", kRegistrySchemaVersion}, {"entries", list}};
  write_file_atomic(dir_ / kIndexName, j.dump(2) + "\n");
}

fs::path Registry::checkpoint_stem(const std::string& name, Architecture arch) const {
  return dir_ / to_string(arch) / name;
}

fs::path Registry::sidecar_path(const RegistryEntry& entry) const { return dir_ / entry.checkpoint; }

LoadedCheckpoint Registry::load(const RegistryEntry& entry) const { return load_checkpoint(sidecar_path(entry)); }

void GridSpec::validate() const {
  if (groups.empty()) throw ConfigError("grid has no subject groups");
  if (splits.empty()) throw ConfigError("grid has no splits");
  if (architectures.empty()) throw ConfigError("grid has no architectures");
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("grid contains an empty subject group");
  }
  model.validate();
  train.validate();
}

std::vector<GridJob> plan_grid(const GridSpec& spec, const std::string& corpus_name) {
  spec.validate();
  std::vector<GridJob> jobs;
  for (auto arch : spec.architectures) {
    for (const auto& group : spec.groups) {
      for (const auto& split : spec.splits) {
        GridJob job{registry_key(group, split), arch, group, split, spec.model, spec.train, {}};
        const auto seed = hash_seed({spec.seed, std::stoull(fnv1a_hex(job.name), nullptr, 16),
                                     static_cast<std::uint64_t>(arch)});
        job.model.variant = arch;
        job.model.seed = seed;
        job.train.seed = seed;
        json fingerprint{{"corpus", corpus_name},
                         {"group", group},
                         {"split", split.name},
                         {"model", model_config_to_json(job.model)},
                         {"train", train_config_to_json(job.train)}};
        job.job_hash = fnv1a_hex(fingerprint.dump());
        jobs.push_back(std::move(job));
      }
    }
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (jobs[i].name == jobs[j].name && jobs[i].architecture == jobs[j].architecture) {
        throw ConfigError("grid produces duplicate registry key " + jobs[i].name);
      }
    }
  }
  return jobs;
}

namespace {

bool already_done(const Registry& registry, const GridJob& job) {
  const auto existing = registry.find(job.name, job.architecture);
  if (!existing || existing->job_hash != job.job_hash) return false;
  const auto sidecar = registry.sidecar_path(*existing);
  if (!fs::exists(sidecar)) return false;
  try {
    const auto j = json::parse(read_file(sidecar));
    return j.value("config_hash", std::string()) == config_hash(job.model);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

GridOutcome pretrain_grid(const Corpus& corpus, const GridSpec& spec, Registry& registry,
                          const GridOptions& options) {
  const auto jobs = plan_grid(spec, corpus.name);
  for (const auto& job : jobs) {
    for (const auto& id : job.group) corpus.require_subject(id);
  }

  GridOutcome outcome;
  std::mutex mutex;
  auto run = [&](const GridJob& job) {
    if (already_done(registry, job)) {
      std::lock_guard lock(mutex);
      ++outcome.skipped;
      if (options.on_entry) options.on_entry(job, *registry.find(job.name, job.architecture), true);
      return;
    }
    const auto split = make_group_splits(job.group, job.split, corpus);
    auto result = train_model(build_model(job.model), split.train, split.val, job.train);
    const auto& best = result.best();

    CheckpointMeta meta{best.epoch, best.val_loss, best.val_dice,
                        json{{"name", job.name}, {"group", job.group}, {"split", job.split.name},
                             {"job_hash", job.job_hash}}};
    const auto stem = registry.checkpoint_stem(job.name, job.architecture);
    const auto sidecar = save_checkpoint(result.model, meta, stem);

    RegistryEntry entry{job.name,
                        job.architecture,
                        job.group,
                        job.split.name,
                        job.model.seed,
                        job.job_hash,
                        result.best_epoch,
                        static_cast<int>(result.history.size()),
                        best.val_loss,
                        best.val_dice,
                        fs::relative(sidecar, registry.dir()).generic_string()};
    registry.put(entry);
    std::lock_guard lock(mutex);
    ++outcome.trained;
    if (options.on_entry) options.on_entry(job, entry, false);
  };

  std::vector<std::pair<std::string, Architecture>> order;
  for (const auto& job : jobs) order.emplace_back(job.name, job.architecture);

  const int workers = std::max(1, std::min<int>(options.jobs, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (const auto& job : jobs) run(job);
    registry.reorder(order);
    return outcome;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t j; (j = next++) < jobs.size();) run(jobs[j]);
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
  registry.reorder(order);
  return outcome;
}

}  // namespace atbseg
