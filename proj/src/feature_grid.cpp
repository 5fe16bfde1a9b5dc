#include "posegrid/feature_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

std::string shape_string(std::size_t h, std::size_t w, std::size_t c) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t channels)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, 0.0) {
  if (height == 0 || width == 0 || channels == 0) {
    throw Error(Errc::dimension, "feature grid dimensions must be positive, got " +
                                     shape_string(height, width, channels));
  }
}

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height == 0 || width == 0 || channels == 0) {
    throw Error(Errc::dimension, "feature grid dimensions must be positive, got " +
                                     shape_string(height, width, channels));
  }
  if (data_.size() != height * width * channels) {
    throw Error(Errc::dimension, "feature grid " + shape_string(height, width, channels) + " needs " +
                                     std::to_string(height * width * channels) + " values, got " +
                                     std::to_string(data_.size()));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); })) {
    throw Error(Errc::validation, "feature grid contains non-finite values");
  }
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), cells_(height * width, fill ? 1 : 0),
      popcount_(fill ? height * width : 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
  if (cells_.size() != height * width) {
    throw Error(Errc::dimension, "mask " + std::to_string(height) + "x" + std::to_string(width) +
                                     " needs " + std::to_string(height * width) + " cells, got " +
                                     std::to_string(cells_.size()));
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] > 1) {
      throw Error(Errc::bad_mask, "mask cell " + std::to_string(i) + " has value " +
                                      std::to_string(cells_[i]));
    }
    popcount_ += cells_[i];
  }
}

void BinaryMask::set(std::size_t index, bool value) {
  const std::uint8_t v = value ? 1 : 0;
  popcount_ = popcount_ - cells_[index] + v;
  cells_[index] = v;
}

double cell_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kZeroCellNorm || nb < kZeroCellNorm) return 0.0;
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

FeatureGrid normalize_cells(const FeatureGrid& grid) {
  FeatureGrid out = grid;
  for (std::size_t l = 0; l < out.cells(); ++l) {
    auto c = out.cell(l);
    const double n2 = squared_norm(c);
    if (!std::isfinite(n2)) throw Error(Errc::validation, "non-finite value in cell " + std::to_string(l));
    const double n = std::sqrt(n2);
    if (n < kZeroCellNorm) {
      std::fill(c.begin(), c.end(), 0.0);
    } else {
      for (double& x : c) x /= n;
    }
  }
  return out;
}

SimMap local_cosine(const FeatureGrid& query, const FeatureGrid& tmpl) {
  if (!query.same_shape(tmpl)) {
    throw Error(Errc::dimension,
                "grid shapes differ: " + shape_string(query.height(), query.width(), query.channels()) +
                    " vs " + shape_string(tmpl.height(), tmpl.width(), tmpl.channels()));
  }
  SimMap map{query.height(), query.width(), std::vector<double>(query.cells())};
  for (std::size_t l = 0; l < query.cells(); ++l) map.values[l] = cell_cosine(query.cell(l), tmpl.cell(l));
  return map;
}

}  // namespace posegrid
