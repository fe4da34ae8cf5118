#include "m3fc/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <json.hpp>

#include "m3fc/errors.hpp"

namespace m3fc {

namespace {
constexpr char kMagic[9] = "M3FCKPT1";
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     std::span<const double> params) {
  nlohmann::json j;
  j["env"] = meta.env_id;
  j["algo"] = meta.algo;
  j["seed"] = meta.seed;
  j["iteration"] = meta.iteration;
  j["env_steps"] = meta.env_steps;
  j["hidden"] = meta.hidden;
  j["n_params"] = params.size();
  std::string header = j.dump();

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw RuntimeFailure("cannot open " + path + " for writing");
  std::fwrite(kMagic, 1, 8, f);
  uint32_t len = uint32_t(header.size());
  std::fwrite(&len, sizeof len, 1, f);
  std::fwrite(header.data(), 1, header.size(), f);
  size_t wrote = std::fwrite(params.data(), sizeof(double), params.size(), f);
  std::fclose(f);
  if (wrote != params.size())
    throw RuntimeFailure("short write while saving " + path);
}

CheckpointMeta load_checkpoint(const std::string& path,
                               std::vector<double>& params) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw RuntimeFailure("cannot open " + path);
  char magic[8];
  uint32_t len = 0;
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    std::fclose(f);
    throw RuntimeFailure(path + " is not a checkpoint file");
  }
  if (std::fread(&len, sizeof len, 1, f) != 1 || len > (1u << 20)) {
    std::fclose(f);
    throw RuntimeFailure(path + " has a corrupt header");
  }
  std::string header(len, '\0');
  if (std::fread(header.data(), 1, len, f) != len) {
    std::fclose(f);
    throw RuntimeFailure(path + " has a truncated header");
  }

  CheckpointMeta meta;
  size_t n = 0;
  try {
    nlohmann::json j = nlohmann::json::parse(header);
    meta.env_id = j.at("env").get<std::string>();
    meta.algo = j.at("algo").get<std::string>();
    meta.seed = j.at("seed").get<uint64_t>();
    meta.iteration = j.at("iteration").get<int>();
    meta.env_steps = j.at("env_steps").get<long>();
    meta.hidden = j.at("hidden").get<std::vector<int>>();
    n = j.at("n_params").get<size_t>();
  } catch (const nlohmann::json::exception& e) {
    std::fclose(f);
    throw RuntimeFailure(path + ": bad checkpoint header: " + e.what());
  }

  params.resize(n);
  size_t got = std::fread(params.data(), sizeof(double), n, f);
  bool extra = std::fgetc(f) != EOF;
  std::fclose(f);
  if (got != n || extra)
    throw RuntimeFailure(path + " parameter payload has the wrong size");
  return meta;
}

Policy load_policy(const EnvSpec& spec, const std::string& path,
                   CheckpointMeta* meta_out) {
  if (!std::filesystem::exists(path))
    throw CheckpointMissing("checkpoint not found: " + path);
  std::vector<double> params;
  CheckpointMeta meta = load_checkpoint(path, params);
  if (meta.env_id != spec.id)
    throw CheckpointEnvMismatch(path + " was trained on '" + meta.env_id +
                                "', not '" + spec.id + "'");
  Policy policy(spec, meta.hidden);
  if (int(params.size()) != policy.n_params())
    throw CheckpointEnvMismatch(path + " parameter count " +
                                std::to_string(params.size()) +
                                " does not fit this environment");
  policy.params = std::move(params);
  if (meta_out) *meta_out = meta;
  return policy;
}

}  // namespace m3fc
