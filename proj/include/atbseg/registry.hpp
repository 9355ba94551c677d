#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atbseg/checkpoint.hpp"
#include "atbseg/train.hpp"

namespace atbseg {

struct RegistryEntry {
  std::string name;  // e.g. "F1M1_2"
  Architecture architecture = Architecture::SegNetStyle;
  std::vector<std::string> group;
  std::string split;
  std::uint64_t seed = 0;
  std::string job_hash;
  int best_epoch = 0;
  int epochs_run = 0;
  double val_loss = 0.0;
  std::array<double, 3> val_dice{};
  std::string checkpoint;  // sidecar path relative to the registry directory

  friend bool operator==(const RegistryEntry&, const RegistryEntry&) = default;
};

nlohmann::json registry_entry_to_json(const RegistryEntry& e);
RegistryEntry registry_entry_from_json(const nlohmann::json& j);

/// A directory of checkpoints indexed by `registry.json`. Every change
/// rewrites the index atomically; `put` is safe to call from several threads.
class Registry {
 public:
  /// Opens (creating the directory if needed) and loads an existing index.
  explicit Registry(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::vector<RegistryEntry> entries() const;
  std::optional<RegistryEntry> find(const std::string& name, Architecture arch) const;

  /// Inserts or replaces the entry with the same (name, architecture).
  void put(const RegistryEntry& entry);
  /// Moves the listed (name, architecture) entries to the front in the given order.
  void reorder(const std::vector<std::pair<std::string, Architecture>>& order);

  /// Stem (no extension) under which an entry's checkpoint is stored.
  std::filesystem::path checkpoint_stem(const std::string& name, Architecture arch) const;
  std::filesystem::path sidecar_path(const RegistryEntry& entry) const;
  LoadedCheckpoint load(const RegistryEntry& entry) const;

 private:
  void save_locked() const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::vector<RegistryEntry> entries_;
};

struct GridSpec {
  std::vector<std::vector<std::string>> groups;
  std::vector<SplitSpec> splits;
  std::vector<Architecture> architectures;
  ModelConfig model;  // variant and seed are overridden per job
  TrainConfig train = pretrain_config();
  std::uint64_t seed = 0;

  void validate() const;
};

struct GridJob {
  std::string name;
  Architecture architecture;
  std::vector<std::string> group;
  SplitSpec split;
  ModelConfig model;
  TrainConfig train;
  std::string job_hash;
};

/// Jobs in architecture, group, split order. Each job gets its own seed
/// derived from the grid seed, the registry key and the architecture.
std::vector<GridJob> plan_grid(const GridSpec& spec, const std::string& corpus_name);

struct GridOptions {
  int jobs = 1;
  std::function<void(const GridJob&, const RegistryEntry&, bool skipped)> on_entry;
};

struct GridOutcome {
  int trained = 0;
  int skipped = 0;
};

/// Trains every planned job not already present in the registry with a
/// matching job hash and a loadable checkpoint.
GridOutcome pretrain_grid(const Corpus& corpus, const GridSpec& spec, Registry& registry,
                          const GridOptions& options = {});

}  // namespace atbseg
