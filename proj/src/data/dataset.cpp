#include "souf/data/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace souf::data {

namespace {

constexpr int kBlobsPerClass = 3;
constexpr double kBrightFraction = 0.8;

struct Blob {
  double u = 0.0;
  double v = 0.0;
  double sigma = 0.0;
};

// Class template: a constellation of Gaussian blobs plus one stroke joining
// the first two blobs. Source and target share templates; only the shift differs.
struct ClassTemplate {
  std::array<Blob, kBlobsPerClass> blobs;
  double stroke_width = 0.0;
};

std::vector<ClassTemplate> make_templates(const ShiftConfig& cfg) {
  std::vector<ClassTemplate> out(static_cast<std::size_t>(cfg.num_classes));
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xC1A55, static_cast<std::uint64_t>(c)));
    std::uniform_real_distribution<double> pos(0.2, 0.8);
    std::uniform_real_distribution<double> sig(0.05, 0.10);
    for (auto& b : out[c].blobs) b = Blob{pos(rng), pos(rng), sig(rng)};
    out[c].stroke_width = std::uniform_real_distribution<double>(0.02, 0.04)(rng);
  }
  return out;
}

double segment_distance(double u, double v, const Blob& a, const Blob& b) {
  const double du = b.u - a.u;
  const double dv = b.v - a.v;
  const double len2 = du * du + dv * dv;
  double t = len2 > 0.0 ? ((u - a.u) * du + (v - a.v) * dv) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double pu = a.u + t * du - u;
  const double pv = a.v + t * dv - v;
  return std::sqrt(pu * pu + pv * pv);
}

Image render(const ClassTemplate& tpl, const ShiftConfig& cfg, std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int size = cfg.image_size;
  const double tx = (unit(rng) - 0.5) * 5.0 / size;
  const double ty = (unit(rng) - 0.5) * 5.0 / size;
  const double scale = 0.85 + 0.3 * unit(rng);
  std::array<double, kBlobsPerClass> amp{};
  for (auto& a : amp) a = 0.7 + 0.3 * unit(rng);
  // Background levels are symmetric about 0.5, so inversion changes only the
  // foreground polarity, which the source domain covers in a minority of images.
  const double background = 0.25 + 0.5 * unit(rng);
  const double polarity = unit(rng) < kBrightFraction ? 1.0 : -1.0;
  const double contrast = 0.45 + 0.3 * unit(rng);
  std::vector<double> color(static_cast<std::size_t>(cfg.channels));
  for (auto& c : color) c = polarity * contrast * (0.6 + 0.4 * unit(rng));
  Image img(cfg.channels, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = ((x + 0.5) / size - 0.5 - tx) / scale + 0.5;
      const double v = ((y + 0.5) / size - 0.5 - ty) / scale + 0.5;
      double intensity = 0.0;
      for (int k = 0; k < kBlobsPerClass; ++k) {
        const auto& b = tpl.blobs[k];
        const double d2 = (u - b.u) * (u - b.u) + (v - b.v) * (v - b.v);
        intensity = std::max(intensity, amp[k] * std::exp(-d2 / (2.0 * b.sigma * b.sigma)));
      }
      const double ds = segment_distance(u, v, tpl.blobs[0], tpl.blobs[1]);
      intensity = std::max(
          intensity, 0.8 * std::exp(-ds * ds / (2.0 * tpl.stroke_width * tpl.stroke_width)));
      for (int c = 0; c < cfg.channels; ++c) {
        const double noise = 0.08 * (unit(rng) - 0.5);
        img.at(c, y, x) =
            static_cast<float>(std::clamp(background + noise + color[c] * intensity, 0.0, 1.0));
      }
    }
  }
  return img;
}

std::vector<Sample> render_pool(const std::vector<ClassTemplate>& templates, const ShiftConfig& cfg,
                                std::int64_t first_id, std::vector<int> labels, Domain domain,
                                bool keep_label) {
  std::vector<Sample> out(labels.size());
  const auto n = static_cast<std::int64_t>(labels.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    Sample& s = out[static_cast<std::size_t>(i)];
    s.id = first_id + i;
    s.truth = labels[static_cast<std::size_t>(i)];
    s.domain = domain;
    if (keep_label) s.label = s.truth;
    const std::uint64_t seed = mix_seed(cfg.seed, 0x5A11, static_cast<std::uint64_t>(s.id));
    s.image = render(templates[static_cast<std::size_t>(s.truth)], cfg, seed);
    if (domain == Domain::target) apply_shift(s.image, cfg.shift_kind, mix_seed(seed, 0x5417));
  }
  return out;
}

std::vector<int> balanced_labels(int count, int num_classes, std::mt19937_64& rng) {
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[i] = i % num_classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace

ShiftKind parse_shift_kind(const std::string& name) {
  if (name == "rotation") return ShiftKind::rotation;
  if (name == "color-invert") return ShiftKind::color_invert;
  if (name == "hue-shift") return ShiftKind::hue_shift;
  if (name == "noise-texture") return ShiftKind::noise_texture;
  throw ConfigError("unknown shift_kind '" + name + "'", "shift_kind");
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::color_invert: return "color-invert";
    case ShiftKind::hue_shift: return "hue-shift";
    case ShiftKind::noise_texture: return "noise-texture";
  }
  return "unknown";
}

void ShiftConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2", "num_classes");
  if (shots < 1) throw ConfigError("shots must be >= 1", "shots");
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1", "patch_size");
  if (image_size < 1 || image_size % patch_size != 0)
    throw ConfigError("image_size must be a positive multiple of patch_size", "image_size");
  if ((image_size / patch_size) * (image_size / patch_size) < 2)
    throw ConfigError("image must contain at least two patches", "patch_size");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3", "channels");
  if (shift_kind == ShiftKind::hue_shift && channels != 3)
    throw ConfigError("hue-shift needs 3 channels", "channels");
  if (n_unlabeled < 10 * n_labeled())
    throw ConfigError("n_unlabeled must be at least 10 x (shots x num_classes)", "n_unlabeled");
  if (n_source < num_classes) throw ConfigError("n_source must be >= num_classes", "n_source");
  if (n_holdout < 0) throw ConfigError("n_holdout must be >= 0", "n_holdout");
}

ShiftConfig ShiftConfig::from_config(const ConfigFile& cfg) {
  ShiftConfig out;
  out.num_classes = static_cast<int>(cfg.require_int("data", "num_classes"));
  out.image_size = static_cast<int>(cfg.require_int("data", "image_size"));
  out.patch_size = static_cast<int>(cfg.require_int("data", "patch_size"));
  out.shots = static_cast<int>(cfg.require_int("data", "shots"));
  out.n_unlabeled = static_cast<int>(cfg.require_int("data", "n_unlabeled"));
  out.shift_kind = parse_shift_kind(cfg.require_string("data", "shift_kind"));
  out.seed = static_cast<std::uint64_t>(cfg.require_int("data", "seed"));
  out.channels = static_cast<int>(cfg.get_int("data", "channels", 3));
  out.n_source = static_cast<int>(cfg.get_int("data", "n_source", 100LL * out.num_classes));
  out.n_holdout = static_cast<int>(cfg.get_int("data", "n_holdout", 0));
  out.validate();
  return out;
}

void apply_shift(Image& image, ShiftKind kind, std::uint64_t seed) {
  switch (kind) {
    case ShiftKind::color_invert:
      for (float& p : image.pixels) p = 1.0F - p;
      break;
    case ShiftKind::rotation: {
      // 90 degrees counter-clockwise; non-square images fall back to a 180 degree turn.
      const Image src = image;
      for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
          for (int x = 0; x < image.width; ++x)
            image.at(c, y, x) = image.height == image.width
                                    ? src.at(c, x, image.width - 1 - y)
                                    : src.at(c, image.height - 1 - y, image.width - 1 - x);
      break;
    }
    case ShiftKind::hue_shift: {
      if (image.channels != 3) break;
      const Image src = image;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height; ++y)
          for (int x = 0; x < image.width; ++x) image.at(c, y, x) = src.at((c + 2) % 3, y, x);
      break;
    }
    case ShiftKind::noise_texture: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<float> noise(-0.12F, 0.12F);
      constexpr double two_pi = 2.0 * std::numbers::pi;
      for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
          for (int x = 0; x < image.width; ++x) {
            const double grating = 0.25 * std::sin(two_pi * (0.23 * x + 0.13 * y + 0.3 * c));
            image.at(c, y, x) =
                std::clamp(image.at(c, y, x) + float(grating) + noise(rng), 0.0F, 1.0F);
          }
      break;
    }
  }
}

void check_image(const Image& image, const ShiftConfig& config) {
  if (image.channels != config.channels || image.height != config.image_size ||
      image.width != config.image_size)
    throw InputError("image shape does not match the configured (channels, H, W)");
  if (image.height % config.patch_size != 0 || image.width % config.patch_size != 0)
    throw InputError("image size is not divisible by the patch size");
  for (float p : image.pixels)
    if (!(p >= 0.0F && p <= 1.0F)) throw InputError("image value outside [0, 1]");
}

DatasetSplit generate_synthetic_shift(const ShiftConfig& config) {
  config.validate();
  const auto templates = make_templates(config);
  std::mt19937_64 rng(mix_seed(config.seed, 0xD5));

  DatasetSplit split;
  split.num_classes = config.num_classes;
  std::int64_t next_id = 0;

  split.source = render_pool(templates, config, next_id,
                             balanced_labels(config.n_source, config.num_classes, rng),
                             Domain::source, true);
  next_id += config.n_source;

  std::vector<int> shot_labels;
  for (int c = 0; c < config.num_classes; ++c)
    for (int s = 0; s < config.shots; ++s) shot_labels.push_back(c);
  split.target_labeled =
      render_pool(templates, config, next_id, shot_labels, Domain::target, true);
  next_id += config.n_labeled();

  split.target_unlabeled = render_pool(templates, config, next_id,
                                       balanced_labels(config.n_unlabeled, config.num_classes, rng),
                                       Domain::target, false);
  next_id += config.n_unlabeled;

  split.target_holdout = render_pool(templates, config, next_id,
                                     balanced_labels(config.n_holdout, config.num_classes, rng),
                                     Domain::target, false);
  return split;
}

}  // namespace souf::data
