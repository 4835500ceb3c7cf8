#include "tpobdl/synthgen.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "tpobdl/random.hpp"

namespace tpobdl {

bool Shape::contains(int row, int col) const {
  if (kind == Kind::kRect) {
    return col >= x && col < x + width && row >= y && row < y + height;
  }
  // Even-odd rule at the pixel center.
  const double px = col + 0.5;
  const double py = row + 0.5;
  bool inside = false;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto [xi, yi] = vertices[i];
    const auto [xj, yj] = vertices[j];
    if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

namespace {

void check_shape(const Shape& s, const SceneSpec& spec, const std::string& label) {
  if (s.kind == Shape::Kind::kRect) {
    if (s.width <= 0 || s.height <= 0 || s.x < 0 || s.y < 0 || s.x + s.width > spec.cols ||
        s.y + s.height > spec.rows) {
      throw ConfigError(label + " lies outside the " + std::to_string(spec.rows) + "x" +
                        std::to_string(spec.cols) + " scene or is empty");
    }
    return;
  }
  if (s.vertices.size() < 3) throw ConfigError(label + " polygon needs at least 3 vertices");
  for (const auto& [vx, vy] : s.vertices) {
    if (vx < 0 || vy < 0 || vx > spec.cols || vy > spec.rows) {
      throw ConfigError(label + " has a vertex outside the scene");
    }
  }
}

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw ConfigError("scene dimensions must be positive");
  if (!(spec.looks >= 1.0)) throw ConfigError("looks must be >= 1");
  if (!(spec.spike_fraction >= 0.0 && spec.spike_fraction <= 0.2)) {
    throw ConfigError("spike_fraction must be in [0, 0.2]");
  }
  if (!(spec.background_amplitude >= 0.0)) throw ConfigError("background must be >= 0");
  for (const auto& r : spec.regions) {
    check_shape(r.shape, spec, "region '" + r.name + "'");
    if (!(r.amplitude >= 0.0)) throw ConfigError("region '" + r.name + "' has negative amplitude");
  }
  for (const auto& c : spec.changes) {
    check_shape(c.shape, spec, "change region '" + c.name + "'");
    if (!std::isfinite(c.amplitude_delta)) {
      throw ConfigError("change region '" + c.name + "' has a non-finite delta");
    }
  }
}

SyntheticScene generate(const SceneSpec& spec) {
  validate(spec);
  const int h = spec.rows;
  const int w = spec.cols;
  RealRaster amp1(w, h, spec.background_amplitude);
  for (const auto& reg : spec.regions) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (reg.shape.contains(r, c)) amp1(r, c) = reg.amplitude;
      }
    }
  }
  RealRaster amp2 = amp1;
  LabelMap truth(w, h, labels::kUnchanged);
  for (const auto& ch : spec.changes) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!ch.shape.contains(r, c)) continue;
        amp2(r, c) = std::max(0.0, amp1(r, c) + ch.amplitude_delta);
        truth(r, c) = labels::kChanged;
      }
    }
  }

  SyntheticScene out;
  out.reflectivity1 = RealRaster(w, h);
  out.reflectivity2 = RealRaster(w, h);
  for (std::size_t i = 0; i < amp1.size(); ++i) {
    out.reflectivity1[i] = amp1[i] * amp1[i];
    out.reflectivity2[i] = amp2[i] * amp2[i];
  }

  const auto speckle = [&](const RealRaster& refl, std::uint64_t stream) {
    std::mt19937_64 noise(derive_seed(spec.rng_seed, stream));
    std::mt19937_64 spikes(derive_seed(spec.rng_seed, stream + 100));
    std::gamma_distribution<double> gamma(spec.looks, 1.0 / spec.looks);
    std::bernoulli_distribution is_spike(spec.spike_fraction);
    std::uniform_real_distribution<double> factor(4.0, 8.0);
    std::vector<double> data(refl.size());
    for (std::size_t i = 0; i < refl.size(); ++i) {
      double a = std::sqrt(refl[i] * gamma(noise));
      if (spec.spike_fraction > 0.0 && is_spike(spikes)) a *= factor(spikes);
      data[i] = a;
    }
    return SarImage(w, h, std::move(data));
  };
  out.image1 = speckle(out.reflectivity1, 1);
  out.image2 = speckle(out.reflectivity2, 2);
  out.truth = std::move(truth);
  return out;
}

namespace {

Shape parse_shape(const KvSection& s, const std::string& label) {
  Shape shape;
  const std::string kind = s.has("shape") ? s.get("shape") : "rect";
  if (kind == "rect") {
    shape.kind = Shape::Kind::kRect;
    shape.x = static_cast<int>(parse_int(s.get("x"), label + ".x"));
    shape.y = static_cast<int>(parse_int(s.get("y"), label + ".y"));
    shape.width = static_cast<int>(parse_int(s.get("width"), label + ".width"));
    shape.height = static_cast<int>(parse_int(s.get("height"), label + ".height"));
  } else if (kind == "polygon") {
    shape.kind = Shape::Kind::kPolygon;
    std::istringstream pts(s.get("points"));
    std::string tok;
    while (pts >> tok) {
      const auto comma = tok.find(',');
      if (comma == std::string::npos) {
        throw ConfigError(label + ".points: expected 'x,y' pairs, got '" + tok + "'");
      }
      shape.vertices.emplace_back(parse_double(tok.substr(0, comma), label + ".points"),
                                  parse_double(tok.substr(comma + 1), label + ".points"));
    }
  } else {
    throw ConfigError(label + ": unknown shape '" + kind + "'");
  }
  return shape;
}

void reject_unknown(const KvSection& s, std::initializer_list<const char*> allowed,
                    const std::string& label) {
  for (const auto& [k, v] : s.entries) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(label + ": unknown key '" + k + "'");
  }
}

}  // namespace

SceneSpec parse_scene_spec(const std::vector<KvSection>& sections) {
  SceneSpec spec;
  bool have_scene = false;
  for (const auto& s : sections) {
    if (s.type == "scene") {
      reject_unknown(s, {"rows", "cols", "background", "looks", "spike_fraction", "seed"}, "[scene]");
      have_scene = true;
      spec.rows = static_cast<int>(parse_int(s.get("rows"), "scene.rows"));
      spec.cols = static_cast<int>(parse_int(s.get("cols"), "scene.cols"));
      if (s.has("background")) spec.background_amplitude = parse_double(s.get("background"), "scene.background");
      if (s.has("looks")) spec.looks = parse_double(s.get("looks"), "scene.looks");
      if (s.has("spike_fraction")) {
        spec.spike_fraction = parse_double(s.get("spike_fraction"), "scene.spike_fraction");
      }
      if (s.has("seed")) spec.rng_seed = parse_uint64(s.get("seed"), "scene.seed");
    } else if (s.type == "region") {
      const std::string label = "region '" + s.name + "'";
      reject_unknown(s, {"shape", "x", "y", "width", "height", "points", "amplitude"}, label);
      spec.regions.push_back({s.name, parse_shape(s, label), parse_double(s.get("amplitude"), label)});
    } else if (s.type == "change") {
      const std::string label = "change region '" + s.name + "'";
      reject_unknown(s, {"shape", "x", "y", "width", "height", "points", "delta"}, label);
      spec.changes.push_back({s.name, parse_shape(s, label), parse_double(s.get("delta"), label)});
    } else {
      throw ConfigError("unknown section [" + s.type + "] in scene spec");
    }
  }
  if (!have_scene) throw ConfigError("scene spec needs a [scene] section");
  validate(spec);
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  return parse_scene_spec(load_key_values(path));
}

SceneSpec benchmark_scene(double spike_fraction, std::uint64_t seed) {
  SceneSpec spec;
  spec.rows = 256;
  spec.cols = 256;
  spec.background_amplitude = 100.0;
  spec.looks = 4.0;
  spec.spike_fraction = spike_fraction;
  spec.rng_seed = seed;
  Shape river;
  river.kind = Shape::Kind::kPolygon;
  river.vertices = {{0, 40}, {256, 70}, {256, 95}, {0, 65}};
  spec.regions.push_back({"river", river, 40.0});
  Shape field;
  field.x = 150;
  field.y = 150;
  field.width = 90;
  field.height = 80;
  spec.regions.push_back({"field", field, 160.0});
  Shape square;
  square.x = 50;
  square.y = 150;
  square.width = 40;
  square.height = 40;
  spec.changes.push_back({"square", square, 100.0});
  return spec;
}

}  // namespace tpobdl
