#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "souf/data/dataset.hpp"

namespace souf::data {

/// id -> {split, label-or-null} for every sample in `split`.
nlohmann::json make_manifest(const DatasetSplit& split, const ShiftConfig& config);

/// Writes `{split}/{class}/{id}.png` (unlabeled samples under `unlabeled/`)
/// and `manifest.json` below `dir`.
void export_split(const DatasetSplit& split, const ShiftConfig& config,
                  const std::filesystem::path& dir);

void save_image_png(const Image& image, const std::filesystem::path& path);

}  // namespace souf::data
