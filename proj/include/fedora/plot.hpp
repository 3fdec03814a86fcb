#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedora::plot {

using Rgb = std::array<std::uint8_t, 3>;

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  Rgb color{0, 0, 0};
  bool connect = true;  // polyline when true, markers otherwise
};

struct Figure {
  int width = 640;
  int height = 400;
  bool log_x = false;
  std::vector<Series> series;
};

/// 8-bit RGB raster.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});
  void set(int x, int y, Rgb color);
  void line(int x0, int y0, int x1, int y1, Rgb color);
  void marker(int x, int y, int radius, Rgb color);
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

/// Axes box with tick marks and every series scaled into it.
Canvas render(const Figure& figure);
/// Throws IoError naming the path.
void write_png(const Canvas& canvas, const std::filesystem::path& path);
inline void save(const Figure& figure, const std::filesystem::path& path) { write_png(render(figure), path); }

/// Distinct colors for series index k.
Rgb palette(std::size_t k);

}  // namespace fedora::plot
