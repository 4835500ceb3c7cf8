#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tpobdl/error.hpp"

namespace tpobdl {

/// Row-major 2-D raster. Rows = M (height), columns = N (width).
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height)) {
      throw DimensionError("raster data length does not match width*height");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& values() const { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw DimensionError("negative raster dimension");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RealRaster = Raster<double>;
using LabelMap = Raster<std::int32_t>;

/// SAR amplitude image: finite, non-negative values.
class SarImage {
 public:
  SarImage() = default;
  SarImage(int width, int height, std::vector<double> data);
  explicit SarImage(RealRaster raster);

  int width() const { return raster_.width(); }
  int height() const { return raster_.height(); }
  std::size_t size() const { return raster_.size(); }
  double operator()(int row, int col) const { return raster_(row, col); }
  double operator[](std::size_t i) const { return raster_[i]; }
  std::span<const double> data() const { return raster_.data(); }
  const RealRaster& raster() const { return raster_; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const { return raster_.same_shape(other); }
  bool same_shape(const SarImage& other) const { return raster_.same_shape(other.raster_); }

  friend bool operator==(const SarImage&, const SarImage&) = default;

 private:
  RealRaster raster_;
};

/// Labels shared by the change maps.
namespace labels {
inline constexpr std::int32_t kUnchanged = 0;
inline constexpr std::int32_t kChanged = 1;      // CC in phase 1, RCC in phase 2
inline constexpr std::int32_t kFalseChange = 2;  // FCC, phase 2 only
}  // namespace labels

enum class PgmDepth { k8Bit, k16Bit };
enum class PgmEncoding { kBinary, kAscii };

/// Reads P2 or P5 PGM (8- or 16-bit). Raw integer values become amplitudes.
SarImage load_image(const std::filesystem::path& path);

/// Writes amplitudes rounded to the nearest integer and clamped to the
/// depth's range.
void save_image(const SarImage& image, const std::filesystem::path& path,
                PgmDepth depth = PgmDepth::k16Bit,
                PgmEncoding encoding = PgmEncoding::kBinary);

LabelMap load_label_map(const std::filesystem::path& path);
void save_label_map(const LabelMap& map, const std::filesystem::path& path,
                    PgmDepth depth = PgmDepth::k16Bit);

/// Change map as an 8-bit PGM: 0 = unchanged, 255 = anything non-zero.
void save_change_map_pgm(const LabelMap& map, const std::filesystem::path& path);
/// Same mapping as PNG (display only).
void save_change_map_png(const LabelMap& map, const std::filesystem::path& path);
/// Grayscale PNG of an amplitude image, linearly stretched to [0, 255].
void save_image_png(const SarImage& image, const std::filesystem::path& path);

/// Zeroes every pixel labeled kUnchanged in `phase1_map`.
SarImage mask_unchanged(const SarImage& image, const LabelMap& phase1_map);

/// Pixelwise ln(x + epsilon). The result may be negative for epsilon < 1,
/// so it is returned as a plain raster.
RealRaster log_transform(const SarImage& image, double epsilon = 1.0);

}  // namespace tpobdl
