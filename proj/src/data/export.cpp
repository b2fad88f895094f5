#include "souf/data/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "souf/png.hpp"

namespace souf::data {

namespace {

struct NamedPool {
  const char* name;
  const std::vector<Sample>* samples;
};

std::vector<NamedPool> pools(const DatasetSplit& split) {
  return {{"source", &split.source},
          {"target_labeled", &split.target_labeled},
          {"target_unlabeled", &split.target_unlabeled},
          {"target_holdout", &split.target_holdout}};
}

}  // namespace

void save_image_png(const Image& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(image.size());
  std::size_t k = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        bytes[k++] = static_cast<std::uint8_t>(
            std::lround(std::clamp(image.at(c, y, x), 0.0F, 1.0F) * 255.0F));
  write_png(path, image.width, image.height, image.channels, bytes);
}

nlohmann::json make_manifest(const DatasetSplit& split, const ShiftConfig& config) {
  nlohmann::json samples = nlohmann::json::object();
  for (const auto& pool : pools(split)) {
    for (const Sample& s : *pool.samples) {
      nlohmann::json entry;
      entry["split"] = pool.name;
      entry["label"] = s.label ? nlohmann::json(*s.label) : nlohmann::json(nullptr);
      samples[std::to_string(s.id)] = std::move(entry);
    }
  }
  nlohmann::json out;
  out["version"] = 1;
  out["num_classes"] = split.num_classes;
  out["image_size"] = config.image_size;
  out["channels"] = config.channels;
  out["shift_kind"] = to_string(config.shift_kind);
  out["seed"] = config.seed;
  out["samples"] = std::move(samples);
  return out;
}

void export_split(const DatasetSplit& split, const ShiftConfig& config,
                  const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const auto& pool : pools(split)) {
    for (const Sample& s : *pool.samples) {
      const fs::path folder =
          dir / pool.name / (s.label ? std::to_string(*s.label) : std::string("unlabeled"));
      fs::create_directories(folder);
      save_image_png(s.image, folder / (std::to_string(s.id) + ".png"));
    }
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest.json in " + dir.string());
  out << make_manifest(split, config).dump(2) << '\n';
}

}  // namespace souf::data
