#include "latentwarp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latentwarp {

std::string Shape::to_string() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Grid::Grid(int channels, int height, int width, double fill) : shape_{channels, height, width} {
  if (channels < 0 || height < 0 || width < 0) {
    throw std::invalid_argument("Grid: negative dimension " + shape_.to_string());
  }
  data_.assign(shape_.size(), fill);
}

std::span<double> Grid::channel(int c) {
  return {data_.data() + static_cast<std::size_t>(c) * shape_.pixels(), shape_.pixels()};
}

std::span<const double> Grid::channel(int c) const {
  return {data_.data() + static_cast<std::size_t>(c) * shape_.pixels(), shape_.pixels()};
}

Grid& Grid::operator+=(const Grid& other) {
  require_same_shape(*this, other, "Grid::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Grid& Grid::operator-=(const Grid& other) {
  require_same_shape(*this, other, "Grid::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Grid& Grid::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Grid operator+(Grid a, const Grid& b) { return a += b; }
Grid operator-(Grid a, const Grid& b) { return a -= b; }
Grid operator*(Grid a, double s) { return a *= s; }
Grid operator*(double s, Grid a) { return a *= s; }

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double max_abs_diff(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double l2_norm(const Grid& g) { return std::sqrt(dot(g, g)); }

double dot(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

bool all_finite(const Grid& g) {
  return std::all_of(g.data().begin(), g.data().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().to_string() +
                                " vs " + b.shape().to_string());
  }
}

}  // namespace latentwarp
