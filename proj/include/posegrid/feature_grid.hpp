#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace posegrid {

/// Dense H x W grid of C-dimensional local descriptors, stored row-major by
/// (row, col, channel) so that each cell's channels are contiguous.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  /// Zero-filled grid.
  FeatureGrid(std::size_t height, std::size_t width, std::size_t channels);
  /// Takes ownership of `data`; throws on a length mismatch or non-finite values.
  FeatureGrid(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t cells() const noexcept { return height_ * width_; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  std::span<const double> cell(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<double> cell(std::size_t index) { return {data_.data() + index * channels_, channels_}; }
  std::span<const double> cell(std::size_t row, std::size_t col) const { return cell(row * width_ + col); }
  std::span<double> cell(std::size_t row, std::size_t col) { return cell(row * width_ + col); }

  bool same_shape(const FeatureGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

/// H x W grid of 0/1 cells with a cached popcount. Used for template
/// visibility masks and run-time occlusion maps alike.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, bool fill = false);
  /// Throws Errc::bad_mask if any byte is not 0 or 1.
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells);

  static BinaryMask full(std::size_t height, std::size_t width) { return {height, width, true}; }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return cells_.size(); }
  std::size_t popcount() const noexcept { return popcount_; }

  bool operator[](std::size_t index) const { return cells_[index] != 0; }
  bool at(std::size_t row, std::size_t col) const { return cells_[row * width_ + col] != 0; }
  void set(std::size_t index, bool value);
  void set(std::size_t row, std::size_t col, bool value) { set(row * width_ + col, value); }

  std::span<const std::uint8_t> bytes() const noexcept { return cells_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> cells_;
  std::size_t popcount_ = 0;
};

/// Per-cell similarity values.
struct SimMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

/// Cell norms below this are treated as zero vectors.
inline constexpr double kZeroCellNorm = 1e-12;

/// Cosine of two descriptors; 0 when either has (near) zero norm.
double cell_cosine(std::span<const double> a, std::span<const double> b);

/// Divides each cell by its L2 norm; near-zero cells become exactly zero.
/// Throws Errc::validation on non-finite input.
FeatureGrid normalize_cells(const FeatureGrid& grid);

/// Per-cell cosine similarity. Throws Errc::dimension on a shape mismatch.
SimMap local_cosine(const FeatureGrid& query, const FeatureGrid& tmpl);

}  // namespace posegrid
