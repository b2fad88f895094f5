#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "souf/common.hpp"
#include "souf/config_file.hpp"

namespace souf::data {

/// Channel-major [channels x height x width] image with values in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0F)
      : channels(c), height(h), width(w), pixels(std::size_t(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return pixels[(std::size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(std::size_t(c) * height + y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Image&) const = default;
};

enum class Domain { source, target };

enum class ShiftKind { rotation, color_invert, hue_shift, noise_texture };

ShiftKind parse_shift_kind(const std::string& name);
std::string to_string(ShiftKind kind);

struct Sample {
  std::int64_t id = 0;
  Image image;
  /// Training label; empty for unlabeled target samples.
  std::optional<int> label;
  Domain domain = Domain::source;
  /// Generator ground truth. Only evaluation code may read it for unlabeled samples.
  int truth = 0;
};

struct DatasetSplit {
  std::vector<Sample> source;
  std::vector<Sample> target_labeled;
  std::vector<Sample> target_unlabeled;
  /// Optional disjoint target evaluation pool (empty unless requested).
  std::vector<Sample> target_holdout;
  int num_classes = 0;
};

struct ShiftConfig {
  int num_classes = 4;
  int image_size = 32;
  int patch_size = 4;
  int shots = 1;
  int n_unlabeled = 400;
  ShiftKind shift_kind = ShiftKind::color_invert;
  std::uint64_t seed = 0;
  int channels = 3;
  int n_source = 400;
  int n_holdout = 0;

  int n_labeled() const { return shots * num_classes; }
  /// Throws ConfigError on any violated precondition.
  void validate() const;
  /// Reads the `[data]` section.
  static ShiftConfig from_config(const ConfigFile& cfg);
};

DatasetSplit generate_synthetic_shift(const ShiftConfig& config);

/// Applies the target-domain transform of `kind` in place.
void apply_shift(Image& image, ShiftKind kind, std::uint64_t seed);

/// Checks shape and value-range invariants of a sample image.
void check_image(const Image& image, const ShiftConfig& config);

}  // namespace souf::data
