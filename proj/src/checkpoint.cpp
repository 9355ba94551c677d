#include "atbseg/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "atbseg/fsutil.hpp"

namespace atbseg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'T', 'B', 'W'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{{"variant", to_string(c.variant)},
              {"input_width", c.input_width},
              {"input_height", c.input_height},
              {"stages", c.stages},
              {"base_channels", c.base_channels},
              {"kernel_size", c.kernel_size},
              {"pool_factor", c.pool_factor},
              {"seed", c.seed},
              {"auto_pad", c.auto_pad}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.variant = parse_architecture(j.value("variant", std::string("segnet-style")));
    c.input_width = j.value("input_width", c.input_width);
    c.input_height = j.value("input_height", c.input_height);
    c.stages = j.value("stages", c.stages);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.pool_factor = j.value("pool_factor", c.pool_factor);
    c.seed = j.value("seed", c.seed);
    c.auto_pad = j.value("auto_pad", c.auto_pad);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ModelConfig& config) { return fnv1a_hex(model_config_to_json(config).dump()); }

fs::path save_checkpoint(const SegModel& model, const CheckpointMeta& meta, const fs::path& stem) {
  static_assert(std::endian::native == std::endian::little, "weights blob assumes a little-endian host");
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::string blob(kMagic, 4);
  put_u32(blob, static_cast<std::uint32_t>(kCheckpointSchemaVersion));
  std::uint64_t count = 0;
  for (const auto& p : model.parameters()) count += p.size();
  for (const auto& b : model.buffers()) count += b.size();
  put_u64(blob, count);
  auto append = [&](const std::vector<float>& v) {
    blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  };
  for (const auto& p : model.parameters()) append(p);
  for (const auto& b : model.buffers()) append(b);

  auto weights = stem;
  weights += ".bin";
  auto sidecar = stem;
  sidecar += ".json";
  write_file_atomic(weights, blob);

  json j{{"schema_version", kCheckpointSchemaVersion},
         {"config", model_config_to_json(model.config())},
         {"config_hash", config_hash(model.config())},
         {"seed", model.config().seed},
         {"epoch", meta.epoch},
         {"val_metrics", {{"val_loss", meta.val_loss}, {"val_dice", meta.val_dice}}},
         {"weights", weights.filename().string()},
         {"weights_count", count},
         {"weights_hash", fnv1a_hex(blob)},
         {"extra", meta.extra}};
  write_file_atomic(sidecar, j.dump(2) + "\n");
  return sidecar;
}

LoadedCheckpoint load_checkpoint(const fs::path& sidecar) {
  json j;
  try {
    j = json::parse(read_file(sidecar));
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + sidecar.string() + ": " + e.what());
  }
  if (j.value("schema_version", 0) != kCheckpointSchemaVersion) {
    throw DataError("checkpoint " + sidecar.string() + ": unsupported schema version");
  }
  const auto config = model_config_from_json(j.at("config"));
  if (j.value("config_hash", std::string()) != config_hash(config)) {
    throw DataError("checkpoint " + sidecar.string() + ": config hash mismatch");
  }
  const auto blob = read_file(sidecar.parent_path() / j.at("weights").get<std::string>());
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint " + sidecar.string() + ": weights blob has a bad header");
  }
  LoadedCheckpoint out{SegModel(config), {}};
  std::uint64_t expected = 0;
  for (const auto& p : out.model.parameters()) expected += p.size();
  for (const auto& b : out.model.buffers()) expected += b.size();
  const auto count = get_le(blob, 8, 8);
  if (count != expected || blob.size() != 16 + expected * sizeof(float)) {
    throw DataError("checkpoint " + sidecar.string() + ": weights blob does not match the config");
  }
  std::size_t offset = 16;
  auto read_into = [&](std::vector<float>& v) {
    std::memcpy(v.data(), blob.data() + offset, v.size() * sizeof(float));
    offset += v.size() * sizeof(float);
  };
  for (auto& p : out.model.parameters()) read_into(p);
  for (auto& b : out.model.buffers()) read_into(b);

  out.meta.epoch = j.value("epoch", 0);
  const auto& vm = j.value("val_metrics", json::object());
  out.meta.val_loss = vm.value("val_loss", 0.0);
  if (vm.contains("val_dice")) out.meta.val_dice = vm["val_dice"].get<std::array<double, 3>>();
  out.meta.extra = j.value("extra", json::object());
  return out;
}

}  // namespace atbseg
