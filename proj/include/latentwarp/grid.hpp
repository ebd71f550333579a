#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace latentwarp {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return pixels() * channels; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

/// Dense channels x height x width array of doubles, channel-major.
///
/// Used for diffusion latents, feature maps, attention K/V laid out
/// spatially, and RGB images (3 channels with values in [0, 1]).
class Grid {
 public:
  Grid() = default;
  Grid(int channels, int height, int width, double fill = 0.0);
  explicit Grid(Shape shape, double fill = 0.0)
      : Grid(shape.channels, shape.height, shape.width, fill) {}

  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  double operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

  Grid& operator+=(const Grid& other);
  Grid& operator-=(const Grid& other);
  Grid& operator*=(double s);

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_;
  std::vector<double> data_;
};

Grid operator+(Grid a, const Grid& b);
Grid operator-(Grid a, const Grid& b);
Grid operator*(Grid a, double s);
Grid operator*(double s, Grid a);

/// RGB image: a 3-channel Grid with values in [0, 1].
using Image = Grid;

/// Per-pixel boolean plane (height x width).
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false)
      : height_(height), width_(width),
        bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const;
  bool operator==(const Mask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

double max_abs_diff(const Grid& a, const Grid& b);
double l2_norm(const Grid& g);
double dot(const Grid& a, const Grid& b);
bool all_finite(const Grid& g);

void require_same_shape(const Grid& a, const Grid& b, const char* what);

}  // namespace latentwarp
