#pragma once

#include <cstdint>
#include <vector>

#include "tpobdl/imaging.hpp"

namespace tpobdl {

struct SlicParams {
  int superpixels = 100;       // requested seed count (nu)
  double compactness = 10.0;   // divisor of the intensity distance
  int iterations = 10;
  /// > 0 merges every 4-connected fragment smaller than this fraction of the
  /// expected size M*N/nu into the fragment it shares the longest border
  /// with. 0 keeps the plain assignment.
  double min_segment_fraction = 0.0;
  /// Kept for run-record completeness; seeding is a deterministic grid, so
  /// the value does not change the segmentation.
  std::uint64_t rng_seed = 0;
};

/// Per-pixel segment labels plus the pixel list of each segment.
/// Pixel lists hold row-major linear indices in ascending order.
struct SuperpixelMap {
  LabelMap labels;
  std::vector<std::vector<int>> segments;
  int seed_count = 0;

  int segment_count() const { return static_cast<int>(segments.size()); }
};

/// SLIC on a single-channel image. D = sqrt((dc/compactness)^2 + (ds/step)^2),
/// with dc the absolute intensity difference and ds the Euclidean pixel
/// distance; search window 2*step around each seed.
SuperpixelMap slic_segment(const RealRaster& image, const SlicParams& params);
SuperpixelMap slic_segment(const SarImage& image, const SlicParams& params);

/// Re-uses the segmentation of one image for its co-registered partner.
SuperpixelMap copy_pattern(const SuperpixelMap& source, const SarImage& target_image);

/// Which pixels of a segment feed one fixed-length vector.
struct PatchLayout {
  int segment_id = 0;
  int sub_index = 1;              // h, 1-based
  std::vector<int> origin;        // k*k linear pixel indices, repeats for padding
};

struct PatchVector {
  int source_image = 1;           // 1 or 2
  int segment_id = 0;
  int sub_index = 1;
  std::vector<double> values;     // k*k
  std::vector<int> origin;        // k*k
};

/// Splits a segment (pixel list in row-major order) into k*k-sized chunks.
/// Short chunks are padded with pixels drawn uniformly with replacement from
/// the whole segment using a generator seeded from (rng_seed, segment_id), so
/// both images of a pair get identical layouts.
std::vector<PatchLayout> plan_reshape(const std::vector<int>& segment, int segment_id, int k,
                                      std::uint64_t rng_seed);

PatchVector gather(const RealRaster& image, const PatchLayout& layout, int source_image);

/// plan_reshape followed by gather.
std::vector<PatchVector> reshape_superpixel(const SarImage& image,
                                            const std::vector<int>& segment, int segment_id,
                                            int k, std::uint64_t rng_seed,
                                            int source_image = 1);

/// Layouts for every segment of a map, in segment order.
std::vector<PatchLayout> plan_all(const SuperpixelMap& map, int k, std::uint64_t rng_seed);

}  // namespace tpobdl
