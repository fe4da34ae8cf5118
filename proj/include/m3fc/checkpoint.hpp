#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m3fc/policy.hpp"

namespace m3fc {

// Everything needed to rebuild a policy and resume or replay a run.
struct CheckpointMeta {
  std::string env_id;
  std::string algo;
  uint64_t seed = 0;
  int iteration = 0;
  long env_steps = 0;
  std::vector<int> hidden = {256, 256};
};

// Format: magic "M3FCKPT1", u32 JSON header length, JSON header, then the
// flat parameter array as little-endian f64.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     std::span<const double> params);

// Throws RuntimeFailure on I/O or format problems.
CheckpointMeta load_checkpoint(const std::string& path,
                               std::vector<double>& params);

// Rebuilds a policy for `spec` from a checkpoint. Throws CheckpointMissing
// if the file does not exist, CheckpointEnvMismatch if it was trained on a
// different environment or its parameter count does not fit.
Policy load_policy(const EnvSpec& spec, const std::string& path,
                   CheckpointMeta* meta_out = nullptr);

}  // namespace m3fc
