#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dvr/net/model.hpp"

namespace dvr::nn {

// DVRW weight checkpoint, little-endian:
//   "DVRW" | version u8 (=1) | meta_len u32 | meta (UTF-8 "key=value" lines) |
//   n_tensors u32 | per tensor: name_len u32, name, rank u32, dims u32[rank],
//   values f32[prod(dims)]
//
// The meta block records the network configuration (so the model can be
// rebuilt) plus caller-supplied entries such as label normalization.

inline constexpr std::uint8_t kCheckpointVersion = 1;

using CheckpointMeta = std::map<std::string, std::string>;

void save_checkpoint(Model& model, const CheckpointMeta& extra, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta extra;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Config <-> meta conversion, exposed for tests.
CheckpointMeta config_to_meta(const DvrConfig& cfg);
DvrConfig config_from_meta(const CheckpointMeta& meta);

}  // namespace dvr::nn
