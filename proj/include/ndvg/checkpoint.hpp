#pragma once

#include <optional>
#include <string>

#include "ndvg/config.hpp"
#include "ndvg/model.hpp"
#include "ndvg/rendering.hpp"

namespace ndvg {

// Everything stored alongside the parameters: the resolved training
// configuration and the empty-space filters baked after the coarse stage.
struct CheckpointExtra {
  KvMap config;
  std::optional<OccupancyCache<real>> deform_mask;
  std::optional<OccupancyCache<real>> canon_mask;
};

// File layout: 8-byte little-endian header length, a JSON header describing
// every tensor (name, shape, dtype, byte offset into the payload) plus model
// metadata, then the concatenated flat little-endian float32 tensors.
// Matrices are stored column-major. Writes go to a temp file renamed into
// place so a crash never leaves a torn checkpoint.
void save_checkpoint(const std::string& path, Model<real>& model, const CheckpointExtra& extra);

struct LoadedCheckpoint {
  Model<real> model;
  CheckpointExtra extra;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ndvg
