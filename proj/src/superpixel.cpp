#include "tpobdl/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tpobdl/random.hpp"

namespace tpobdl {

namespace {

struct Seed {
  double row = 0.0;
  double col = 0.0;
  double value = 0.0;
};

double gradient_at(const RealRaster& img, int r, int c) {
  const int h = img.height();
  const int w = img.width();
  const auto at = [&](int rr, int cc) {
    rr = std::clamp(rr, 0, h - 1);
    cc = std::clamp(cc, 0, w - 1);
    return img(rr, cc);
  };
  const double dx = at(r, c + 1) - at(r, c - 1);
  const double dy = at(r + 1, c) - at(r - 1, c);
  return dx * dx + dy * dy;
}

std::vector<Seed> init_seeds(const RealRaster& img, int nu) {
  const int w = img.width();
  const int h = img.height();
  // Grid with nx*ny ~= nu and cells close to square. Rounding up the column
  // count keeps nu = 2 on a square image as a left/right pair.
  const double gx = std::sqrt(static_cast<double>(nu) * w / h);
  int nx = std::clamp(static_cast<int>(std::ceil(gx - 1e-9)), 1, w);
  int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(nu) / nx)), 1, h);
  while (nx * ny > nu && nx > 1 && ny > 1) --ny;

  std::vector<Seed> seeds;
  seeds.reserve(static_cast<std::size_t>(nx) * ny);
  const double sx = static_cast<double>(w) / nx;
  const double sy = static_cast<double>(h) / ny;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      int r = std::min(h - 1, static_cast<int>((iy + 0.5) * sy));
      int c = std::min(w - 1, static_cast<int>((ix + 0.5) * sx));
      // Move to the lowest-gradient position of the 3x3 neighbourhood.
      double best = std::numeric_limits<double>::infinity();
      int br = r;
      int bc = c;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const double g = gradient_at(img, rr, cc);
          if (g < best) {
            best = g;
            br = rr;
            bc = cc;
          }
        }
      }
      seeds.push_back({static_cast<double>(br), static_cast<double>(bc), img(br, bc)});
    }
  }
  return seeds;
}

// Merges every 4-connected fragment below `min_size` pixels into the
// fragment it shares the longest border with. Larger fragments keep their
// seed label even when disconnected.
void enforce_connectivity(std::vector<int>& assign, int w, int h, long long min_size) {
  const std::size_t n = assign.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> members;
  std::vector<int> label_of;
  std::vector<int> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(members.size());
    members.emplace_back();
    label_of.push_back(assign[start]);
    comp[start] = id;
    stack.assign(1, static_cast<int>(start));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      members[id].push_back(p);
      const int r = p / w;
      const int c = p % w;
      const int nb[4] = {r > 0 ? p - w : -1, r + 1 < h ? p + w : -1, c > 0 ? p - 1 : -1,
                         c + 1 < w ? p + 1 : -1};
      for (int q : nb) {
        if (q >= 0 && comp[q] < 0 && assign[q] == assign[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  std::vector<int> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return members[a].size() < members[b].size(); });
  for (int id : order) {
    if (members[id].empty() || static_cast<long long>(members[id].size()) >= min_size) continue;
    std::vector<std::pair<int, int>> border;  // (component, shared edges)
    for (int p : members[id]) {
      const int r = p / w;
      const int c = p % w;
      const int nb[4] = {r > 0 ? p - w : -1, r + 1 < h ? p + w : -1, c > 0 ? p - 1 : -1,
                         c + 1 < w ? p + 1 : -1};
      for (int q : nb) {
        if (q < 0 || comp[q] == id) continue;
        auto it = std::find_if(border.begin(), border.end(),
                               [&](const auto& e) { return e.first == comp[q]; });
        if (it == border.end()) {
          border.emplace_back(comp[q], 1);
        } else {
          ++it->second;
        }
      }
    }
    if (border.empty()) continue;
    int target = border.front().first;
    int shared = border.front().second;
    for (const auto& [other, count] : border) {
      if (count > shared || (count == shared && other < target)) {
        target = other;
        shared = count;
      }
    }
    for (int p : members[id]) comp[p] = target;
    members[target].insert(members[target].end(), members[id].begin(), members[id].end());
    members[id].clear();
  }

  for (std::size_t i = 0; i < n; ++i) assign[i] = label_of[comp[i]];
}

}  // namespace

SuperpixelMap slic_segment(const RealRaster& image, const SlicParams& params) {
  const int w = image.width();
  const int h = image.height();
  const long long total = static_cast<long long>(w) * h;
  if (total == 0) throw DimensionError("slic_segment: empty image");
  if (params.superpixels < 1 || params.superpixels > total) {
    throw ConfigError("slic_segment: superpixel count must be in [1, M*N]");
  }
  if (params.iterations < 1) throw ConfigError("slic_segment: iterations must be >= 1");
  if (!(params.compactness > 0.0)) throw ConfigError("slic_segment: compactness must be > 0");

  const double step = std::sqrt(static_cast<double>(total) / params.superpixels);
  const double inv_step2 = 1.0 / (step * step);
  const double inv_comp2 = 1.0 / (params.compactness * params.compactness);

  std::vector<Seed> seeds = init_seeds(image, params.superpixels);
  const int ns = static_cast<int>(seeds.size());

  std::vector<int> assign(static_cast<std::size_t>(total), -1);
  std::vector<double> best(static_cast<std::size_t>(total));

  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(assign.begin(), assign.end(), -1);
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (int s = 0; s < ns; ++s) {
      const Seed& sd = seeds[s];
      const int r0 = std::max(0, static_cast<int>(std::ceil(sd.row - step)));
      const int r1 = std::min(h - 1, static_cast<int>(std::floor(sd.row + step)));
      const int c0 = std::max(0, static_cast<int>(std::ceil(sd.col - step)));
      const int c1 = std::min(w - 1, static_cast<int>(std::floor(sd.col + step)));
      for (int r = r0; r <= r1; ++r) {
        const double dr = r - sd.row;
        for (int c = c0; c <= c1; ++c) {
          const std::size_t i = image.index(r, c);
          const double dcol = c - sd.col;
          const double dv = image[i] - sd.value;
          const double d2 = dv * dv * inv_comp2 + (dr * dr + dcol * dcol) * inv_step2;
          if (d2 < best[i]) {
            best[i] = d2;
            assign[i] = s;
          }
        }
      }
    }
    // Orphans: nearest seed in space.
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = image.index(r, c);
        if (assign[i] >= 0) continue;
        double bd = std::numeric_limits<double>::infinity();
        for (int s = 0; s < ns; ++s) {
          const double dr = r - seeds[s].row;
          const double dc = c - seeds[s].col;
          const double d = dr * dr + dc * dc;
          if (d < bd) {
            bd = d;
            assign[i] = s;
          }
        }
      }
    }
    // Update seeds to cluster means.
    std::vector<double> sr(ns, 0.0), sc(ns, 0.0), sv(ns, 0.0);
    std::vector<long long> cnt(ns, 0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = image.index(r, c);
        const int s = assign[i];
        sr[s] += r;
        sc[s] += c;
        sv[s] += image[i];
        ++cnt[s];
      }
    }
    for (int s = 0; s < ns; ++s) {
      if (cnt[s] == 0) continue;
      seeds[s] = {sr[s] / cnt[s], sc[s] / cnt[s], sv[s] / cnt[s]};
    }
  }

  const int label_count = ns;
  if (params.min_segment_fraction > 0.0) {
    const double expected = static_cast<double>(total) / params.superpixels;
    enforce_connectivity(assign, w, h,
                         static_cast<long long>(std::ceil(params.min_segment_fraction * expected)));
  }

  // Compact labels in seed order, skipping seeds that own no pixels.
  std::vector<int> remap(label_count, -1);
  std::vector<long long> cnt(label_count, 0);
  for (int s : assign) ++cnt[s];
  int next = 0;
  for (int s = 0; s < label_count; ++s) {
    if (cnt[s] > 0) remap[s] = next++;
  }

  SuperpixelMap out;
  out.seed_count = params.superpixels;
  out.labels = LabelMap(w, h);
  out.segments.assign(next, {});
  for (int s = 0; s < label_count; ++s) {
    if (remap[s] >= 0) out.segments[remap[s]].reserve(static_cast<std::size_t>(cnt[s]));
  }
  for (std::size_t i = 0; i < assign.size(); ++i) {
    const int label = remap[assign[i]];
    out.labels[i] = label;
    out.segments[label].push_back(static_cast<int>(i));
  }
  return out;
}

SuperpixelMap slic_segment(const SarImage& image, const SlicParams& params) {
  return slic_segment(image.raster(), params);
}

SuperpixelMap copy_pattern(const SuperpixelMap& source, const SarImage& target_image) {
  if (!target_image.same_shape(source.labels)) {
    throw DimensionError("copy_pattern: target image dimensions differ from the source map");
  }
  return source;
}

std::vector<PatchLayout> plan_reshape(const std::vector<int>& segment, int segment_id, int k,
                                      std::uint64_t rng_seed) {
  if (segment.empty()) throw Error("reshape: empty segment");
  if (k < 1) throw ConfigError("reshape: patch side k must be >= 1");
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  const std::size_t p = segment.size();

  std::mt19937_64 rng(derive_seed(rng_seed, static_cast<std::uint64_t>(segment_id)));
  std::uniform_int_distribution<std::size_t> pick(0, p - 1);

  std::vector<PatchLayout> out;
  const std::size_t full = p / kk;
  const std::size_t rem = p % kk;
  for (std::size_t q = 0; q < full; ++q) {
    PatchLayout l;
    l.segment_id = segment_id;
    l.sub_index = static_cast<int>(q) + 1;
    l.origin.assign(segment.begin() + static_cast<std::ptrdiff_t>(q * kk),
                    segment.begin() + static_cast<std::ptrdiff_t>((q + 1) * kk));
    out.push_back(std::move(l));
  }
  if (rem > 0) {
    PatchLayout l;
    l.segment_id = segment_id;
    l.sub_index = static_cast<int>(full) + 1;
    l.origin.assign(segment.begin() + static_cast<std::ptrdiff_t>(full * kk), segment.end());
    while (l.origin.size() < kk) l.origin.push_back(segment[pick(rng)]);
    out.push_back(std::move(l));
  }
  return out;
}

PatchVector gather(const RealRaster& image, const PatchLayout& layout, int source_image) {
  PatchVector v;
  v.source_image = source_image;
  v.segment_id = layout.segment_id;
  v.sub_index = layout.sub_index;
  v.origin = layout.origin;
  v.values.reserve(layout.origin.size());
  for (int idx : layout.origin) v.values.push_back(image[static_cast<std::size_t>(idx)]);
  return v;
}

std::vector<PatchVector> reshape_superpixel(const SarImage& image,
                                            const std::vector<int>& segment, int segment_id,
                                            int k, std::uint64_t rng_seed, int source_image) {
  std::vector<PatchVector> out;
  for (const auto& layout : plan_reshape(segment, segment_id, k, rng_seed)) {
    out.push_back(gather(image.raster(), layout, source_image));
  }
  return out;
}

std::vector<PatchLayout> plan_all(const SuperpixelMap& map, int k, std::uint64_t rng_seed) {
  std::vector<PatchLayout> out;
  for (int s = 0; s < map.segment_count(); ++s) {
    auto part = plan_reshape(map.segments[s], s, k, rng_seed);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace tpobdl
