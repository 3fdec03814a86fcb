#include "fedora/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fedora/errors.hpp"

namespace fedora::plot {

Canvas::Canvas(int width, int height, Rgb background)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
  if (width <= 0 || height <= 0) throw ValueError("canvas dimensions must be positive");
  for (std::size_t k = 0; k < pixels_.size(); k += 3) std::copy(background.begin(), background.end(), &pixels_[k]);
}

void Canvas::set(int x, int y, Rgb color) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto k = (static_cast<std::size_t>(y) * width_ + x) * 3;
  std::copy(color.begin(), color.end(), &pixels_[k]);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb color) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

void Canvas::marker(int x, int y, int radius, Rgb color) {
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      if (i * i + j * j <= radius * radius) set(x + i, y + j, color);
    }
  }
}

Rgb palette(std::size_t k) {
  static constexpr Rgb colors[] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},  {255, 127, 14},
                                   {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return colors[k % std::size(colors)];
}

namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

}  // namespace

Canvas render(const Figure& fig) {
  Canvas canvas(fig.width, fig.height);
  const int left = 50, right = fig.width - 20, top = 20, bottom = fig.height - 40;
  auto tx = [&](double x) { return fig.log_x ? std::log10(x) : x; };

  Range rx, ry;
  for (const auto& s : fig.series) {
    for (double v : s.x) {
      if (!fig.log_x || v > 0) rx.add(tx(v));
    }
    for (double v : s.y) ry.add(v);
  }
  rx.settle();
  ry.settle();

  const Rgb axis{0, 0, 0};
  const Rgb grid{225, 225, 225};
  for (int k = 0; k <= 4; ++k) {
    const int gx = left + (right - left) * k / 4;
    const int gy = top + (bottom - top) * k / 4;
    canvas.line(gx, top, gx, bottom, grid);
    canvas.line(left, gy, right, gy, grid);
    canvas.line(gx, bottom, gx, bottom + 5, axis);
    canvas.line(left - 5, gy, left, gy, axis);
  }
  canvas.line(left, top, left, bottom, axis);
  canvas.line(left, bottom, right, bottom, axis);

  auto px = [&](double x) { return left + static_cast<int>(std::lround((tx(x) - rx.lo) / (rx.hi - rx.lo) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - ry.lo) / (ry.hi - ry.lo) * (bottom - top))); };
  for (const auto& s : fig.series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    bool have_prev = false;
    int prev_x = 0, prev_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.y[i]) || (fig.log_x && !(s.x[i] > 0))) {
        have_prev = false;
        continue;
      }
      const int x = px(s.x[i]), y = py(s.y[i]);
      if (s.connect) {
        if (have_prev) canvas.line(prev_x, prev_y, x, y, s.color);
      } else {
        canvas.marker(x, y, 3, s.color);
      }
      prev_x = x;
      prev_y = y;
      have_prev = true;
    }
  }
  return canvas;
}

void write_png(const Canvas& canvas, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width()), static_cast<png_uint_32>(canvas.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(canvas.width()) * 3;
  for (int y = 0; y < canvas.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(canvas.pixels().data() + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("cannot finish " + path.string());
}

}  // namespace fedora::plot
