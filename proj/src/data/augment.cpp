#include "souf/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace souf::data {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Inverse-mapped affine warp with bilinear sampling and zero fill.
// (u, v) = m * (x - cx, y - cy) + (cx, cy) + t, in pixel units.
Image warp(const Image& src, double m00, double m01, double m10, double m11, double tx,
           double ty) {
  Image out(src.channels, src.height, src.width);
  const double cx = (src.width - 1) / 2.0;
  const double cy = (src.height - 1) / 2.0;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const double u = m00 * (x - cx) + m01 * (y - cy) + cx + tx;
      const double v = m10 * (x - cx) + m11 * (y - cy) + cy + ty;
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const double fx = u - x0;
      const double fy = v - y0;
      for (int c = 0; c < src.channels; ++c) {
        auto fetch = [&](int yy, int xx) -> double {
          if (xx < 0 || yy < 0 || xx >= src.width || yy >= src.height) return 0.0;
          return src.at(c, yy, xx);
        };
        const double val = (1 - fx) * (1 - fy) * fetch(y0, x0) + fx * (1 - fy) * fetch(y0, x0 + 1) +
                           (1 - fx) * fy * fetch(y0 + 1, x0) + fx * fy * fetch(y0 + 1, x0 + 1);
        out.at(c, y, x) = clamp01(val);
      }
    }
  }
  return out;
}

Image grayscale(const Image& src) {
  if (src.channels != 3) return src;
  Image out = src;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      const float g = 0.299F * src.at(0, y, x) + 0.587F * src.at(1, y, x) + 0.114F * src.at(2, y, x);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = g;
    }
  return out;
}

// out = degenerate + factor * (src - degenerate), the PIL ImageEnhance blend.
Image blend(const Image& degenerate, const Image& src, double factor) {
  Image out = src;
  for (std::size_t i = 0; i < src.size(); ++i)
    out.pixels[i] = clamp01(degenerate.pixels[i] + factor * (src.pixels[i] - degenerate.pixels[i]));
  return out;
}

Image smooth(const Image& src) {
  // 3x3 kernel [1 1 1; 1 5 1; 1 1 1] / 13 on the interior, border pixels kept.
  Image out = src;
  for (int c = 0; c < src.channels; ++c)
    for (int y = 1; y + 1 < src.height; ++y)
      for (int x = 1; x + 1 < src.width; ++x) {
        double acc = 4.0 * src.at(c, y, x);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += src.at(c, y + dy, x + dx);
        out.at(c, y, x) = clamp01(acc / 13.0);
      }
  return out;
}

}  // namespace

std::string_view to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::rotate: return "rotate";
    case AugmentOp::shear_x: return "shear_x";
    case AugmentOp::shear_y: return "shear_y";
    case AugmentOp::translate_x: return "translate_x";
    case AugmentOp::translate_y: return "translate_y";
    case AugmentOp::brightness: return "brightness";
    case AugmentOp::contrast: return "contrast";
    case AugmentOp::color: return "color";
    case AugmentOp::solarize: return "solarize";
    case AugmentOp::posterize: return "posterize";
    case AugmentOp::sharpness: return "sharpness";
    case AugmentOp::autocontrast: return "autocontrast";
  }
  return "unknown";
}

Image apply_augment_op(const Image& image, AugmentOp op, double level) {
  const double mag = std::abs(level);
  switch (op) {
    case AugmentOp::rotate: {
      const double a = level * 30.0 * std::numbers::pi / 180.0;
      return warp(image, std::cos(a), -std::sin(a), std::sin(a), std::cos(a), 0.0, 0.0);
    }
    case AugmentOp::shear_x: return warp(image, 1.0, level * 0.3, 0.0, 1.0, 0.0, 0.0);
    case AugmentOp::shear_y: return warp(image, 1.0, 0.0, level * 0.3, 1.0, 0.0, 0.0);
    case AugmentOp::translate_x:
      return warp(image, 1.0, 0.0, 0.0, 1.0, level * 0.3 * image.width, 0.0);
    case AugmentOp::translate_y:
      return warp(image, 1.0, 0.0, 0.0, 1.0, 0.0, level * 0.3 * image.height);
    case AugmentOp::brightness:
      return blend(Image(image.channels, image.height, image.width, 0.0F), image, 1.0 + 0.9 * level);
    case AugmentOp::contrast: {
      const Image gray = grayscale(image);
      double mean = 0.0;
      for (float p : gray.pixels) mean += p;
      mean /= double(gray.size());
      return blend(Image(image.channels, image.height, image.width, float(mean)), image,
                   1.0 + 0.9 * level);
    }
    case AugmentOp::color: return blend(grayscale(image), image, 1.0 + 0.9 * level);
    case AugmentOp::solarize: {
      const double threshold = 1.0 - mag;
      Image out = image;
      for (float& p : out.pixels)
        if (p >= threshold) p = 1.0F - p;
      return out;
    }
    case AugmentOp::posterize: {
      const int bits = 8 - static_cast<int>(std::lround(4.0 * mag));
      const double levels = double(1 << bits);
      Image out = image;
      for (float& p : out.pixels) p = clamp01(std::floor(p * (levels - 1.0) + 0.5) / (levels - 1.0));
      return out;
    }
    case AugmentOp::sharpness: return blend(smooth(image), image, 1.0 + 0.9 * level);
    case AugmentOp::autocontrast: {
      Image out = image;
      const std::size_t plane = std::size_t(image.height) * image.width;
      for (int c = 0; c < image.channels; ++c) {
        auto first = out.pixels.begin() + std::ptrdiff_t(c * plane);
        auto last = first + std::ptrdiff_t(plane);
        const auto [lo, hi] = std::minmax_element(first, last);
        const float l = *lo;
        const float h = *hi;
        if (h - l < 1e-6F) continue;
        for (auto it = first; it != last; ++it) *it = (*it - l) / (h - l);
      }
      return out;
    }
  }
  return image;
}

Image strong_augment(const Image& image, std::mt19937_64& rng, const RandAugmentPolicy& policy) {
  Image out = image;
  std::uniform_int_distribution<int> pick(0, kNumAugmentOps - 1);
  std::bernoulli_distribution flip(0.5);
  const double level = std::clamp(policy.magnitude, 0, 10) / 10.0;
  for (int i = 0; i < policy.num_ops; ++i) {
    const auto op = static_cast<AugmentOp>(pick(rng));
    const double signed_level = flip(rng) ? -level : level;
    out = apply_augment_op(out, op, signed_level);
  }
  for (float& p : out.pixels) p = std::clamp(p, 0.0F, 1.0F);
  return out;
}

}  // namespace souf::data
