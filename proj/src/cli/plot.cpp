#include "souf/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "souf/common.hpp"
#include "souf/png.hpp"

namespace souf::cli {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kLine{31, 119, 180};
constexpr Rgb kBar{140, 170, 210};

// 3x5 glyphs, one row per 3-bit mask.
constexpr std::uint8_t kDigits[10][5] = {
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
};
constexpr std::uint8_t kDot[5] = {0, 0, 0, 0, 2};
constexpr std::uint8_t kMinus[5] = {0, 0, 7, 0, 0};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(std::size_t(w) * h * 3) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) set(x, y, kWhite);
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(std::size_t(y) * w_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  // Bresenham, thickened to a square pen.
  void line(int x0, int y0, int x1, int y1, Rgb c, int pen = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      rect(x0 - pen / 2, y0 - pen / 2, x0 + (pen - 1) / 2, y0 + (pen - 1) / 2, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  // Right-aligned at x when `align_right`, else centred.
  void text(const std::string& s, int x, int y, bool align_right, int scale = 2) {
    const int adv = 4 * scale;
    int cx = align_right ? x - int(s.size()) * adv : x - int(s.size()) * adv / 2;
    for (char ch : s) {
      const std::uint8_t* g = ch == '.' ? kDot : ch == '-' ? kMinus
                              : (ch >= '0' && ch <= '9') ? kDigits[ch - '0'] : nullptr;
      if (g)
        for (int r = 0; r < 5; ++r)
          for (int col = 0; col < 3; ++col)
            if (g[r] & (4 >> col))
              rect(cx + col * scale, y + r * scale, cx + col * scale + scale - 1,
                   y + r * scale + scale - 1, kAxis);
      cx += adv;
    }
  }

  void save(const std::filesystem::path& path) const { write_png(path, w_, h_, 3, px_); }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

std::string tick_label(double v, double step) {
  const int digits = std::clamp(int(std::ceil(-std::log10(step) + 1e-9)), 0, 6);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Round-number ticks covering [lo, hi].
std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(t);
  return out;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const Series& s, int width, int height) {
  if (s.x.empty() || s.x.size() != s.y.size()) throw InputError("plot: empty or ragged series");
  const bool bars = s.err.size() == s.y.size();

  double x_lo = *std::min_element(s.x.begin(), s.x.end());
  double x_hi = *std::max_element(s.x.begin(), s.x.end());
  double y_lo = 1e300, y_hi = -1e300;
  for (std::size_t k = 0; k < s.y.size(); ++k) {
    const double e = bars ? s.err[k] : 0.0;
    y_lo = std::min(y_lo, s.y[k] - e);
    y_hi = std::max(y_hi, s.y[k] + e);
  }
  if (x_hi - x_lo < 1e-12) x_lo -= 0.5, x_hi += 0.5;
  if (y_hi - y_lo < 1e-6) y_lo -= 0.05, y_hi += 0.05;
  const double xpad = 0.05 * (x_hi - x_lo), ypad = 0.1 * (y_hi - y_lo);
  x_lo -= xpad, x_hi += xpad, y_lo -= ypad, y_hi += ypad;

  const int left = 80, right = width - 20, top = 20, bottom = height - 50;
  auto px = [&](double x) { return left + int(std::lround((x - x_lo) / (x_hi - x_lo) * (right - left))); };
  auto py = [&](double y) { return bottom - int(std::lround((y - y_lo) / (y_hi - y_lo) * (bottom - top))); };

  Canvas c(width, height);
  const auto yt = ticks(y_lo, y_hi);
  const auto xt = ticks(x_lo, x_hi);
  for (double t : yt) {
    c.line(left, py(t), right, py(t), kGrid);
    c.line(left - 5, py(t), left, py(t), kAxis);
    c.text(tick_label(t, yt.size() > 1 ? yt[1] - yt[0] : 1.0), left - 10, py(t) - 5, true);
  }
  for (double t : xt) {
    c.line(px(t), top, px(t), bottom, kGrid);
    c.line(px(t), bottom, px(t), bottom + 5, kAxis);
    c.text(tick_label(t, xt.size() > 1 ? xt[1] - xt[0] : 1.0), px(t), bottom + 12, false);
  }
  c.line(left, top, left, bottom, kAxis);
  c.line(left, bottom, right, bottom, kAxis);

  if (bars)
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      const int x = px(s.x[k]);
      c.line(x, py(s.y[k] - s.err[k]), x, py(s.y[k] + s.err[k]), kBar, 2);
      c.line(x - 5, py(s.y[k] - s.err[k]), x + 5, py(s.y[k] - s.err[k]), kBar, 2);
      c.line(x - 5, py(s.y[k] + s.err[k]), x + 5, py(s.y[k] + s.err[k]), kBar, 2);
    }
  for (std::size_t k = 1; k < s.x.size(); ++k)
    c.line(px(s.x[k - 1]), py(s.y[k - 1]), px(s.x[k]), py(s.y[k]), kLine, 3);
  for (std::size_t k = 0; k < s.x.size(); ++k)
    c.rect(px(s.x[k]) - 4, py(s.y[k]) - 4, px(s.x[k]) + 4, py(s.y[k]) + 4, kLine);
  c.save(path);
}

}  // namespace souf::cli
