#pragma once

#include "rdbssl/encoder.hpp"

#include <filesystem>
#include <string>

namespace rdbssl::ckpt {

// On-disk layout (all integers little-endian):
//   8 bytes   magic "RDBSSLCK"
//   u32       format version (1)
//   u64 + n   JSON metadata: encoder config, graph schema, feature stats, tag
//   u64       parameter count
//   per parameter, in name order:
//     u32 + n   name
//     u64, u64  rows, cols
//     rows*cols IEEE-754 doubles, row-major
struct Checkpoint {
  gnn::EncoderModel model;
  ParamStore params;
  std::string tag;  // free-form, e.g. the pretraining strategy
};

std::string serialize(const gnn::EncoderModel& model, const ParamStore& params, const std::string& tag);
Checkpoint deserialize(std::string_view bytes);

// SHA-256 of serialize(model, params, tag).
std::string checkpoint_hash(const gnn::EncoderModel& model, const ParamStore& params, const std::string& tag);

void save(const std::filesystem::path& path, const gnn::EncoderModel& model, const ParamStore& params,
          const std::string& tag);
Checkpoint load(const std::filesystem::path& path);

}  // namespace rdbssl::ckpt
