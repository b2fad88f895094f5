#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "souf/backbone/vit.hpp"

namespace souf::backbone {

// Checkpoint archive layout (little-endian):
//   8 bytes   magic "SOUFCKPT"
//   u32       header length
//   header    JSON: {version, encoder, source_val_acc, classifier_frozen,
//                    tensors: [{name, rows, cols}], meta}
//   payload   float32 tensor data in header order
//   u64       FNV-1a of the payload

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  VisionTransformer model;
  double source_val_acc = 0.0;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const VisionTransformer& model,
                     double source_val_acc, const nlohmann::json& meta = nlohmann::json::object());

/// Throws LoadError on a missing, truncated, or corrupted archive.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           kernels::Exec exec = kernels::Exec::parallel);

/// Restores g() and f() weights from `path` into `model` (same encoder config).
double source_init(VisionTransformer& model, const std::filesystem::path& path);

}  // namespace souf::backbone
