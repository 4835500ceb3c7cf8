#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tpobdl/imaging.hpp"
#include "tpobdl/keyvalue.hpp"

namespace tpobdl {

struct Shape {
  enum class Kind { kRect, kPolygon };
  Kind kind = Kind::kRect;
  // Rectangle in pixel units: columns [x, x + width), rows [y, y + height).
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  // Polygon vertices as (x, y) = (column, row); a pixel is inside when its
  // center is.
  std::vector<std::pair<double, double>> vertices;

  bool contains(int row, int col) const;
};

struct ReflectivityRegion {
  std::string name;
  Shape shape;
  double amplitude = 0.0;  // mean amplitude; reflectivity R = amplitude^2
};

struct ChangeRegion {
  std::string name;
  Shape shape;
  double amplitude_delta = 0.0;  // added to the mean amplitude at time 2
};

struct SceneSpec {
  int rows = 0;
  int cols = 0;
  double background_amplitude = 100.0;
  std::vector<ReflectivityRegion> regions;
  std::vector<ChangeRegion> changes;
  double looks = 4.0;
  double spike_fraction = 0.0;
  std::uint64_t rng_seed = 0;
};

struct SyntheticScene {
  SarImage image1;
  SarImage image2;
  LabelMap truth;          // 1 inside change regions, 0 elsewhere
  RealRaster reflectivity1;
  RealRaster reflectivity2;
};

/// Throws ConfigError naming the first offending region.
void validate(const SceneSpec& spec);

/// Intensity = R * s with s ~ Gamma(L, 1/L); amplitude = sqrt(intensity).
/// Spike pixels (independent per timestamp) have their amplitude multiplied
/// by a factor drawn from U[4, 8]. Spikes never enter the truth mask.
SyntheticScene generate(const SceneSpec& spec);

SceneSpec parse_scene_spec(const std::vector<KvSection>& sections);
SceneSpec load_scene_spec(const std::filesystem::path& path);

/// The 256 x 256 benchmark scene: two textured base regions plus one 40 x 40
/// change square, 4 looks.
SceneSpec benchmark_scene(double spike_fraction, std::uint64_t seed);

}  // namespace tpobdl
