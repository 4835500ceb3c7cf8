#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <set>

#include <doctest.h>

#include "tpobdl/superpixel.hpp"

using namespace tpobdl;

namespace {

RealRaster two_halves(int w, int h, double left, double right) {
  RealRaster img(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img(r, c) = c < w / 2 ? left : right;
  }
  return img;
}

void check_partition(const SuperpixelMap& m) {
  const std::size_t n = m.labels.size();
  std::vector<int> seen(n, 0);
  for (int s = 0; s < m.segment_count(); ++s) {
    REQUIRE_FALSE(m.segments[s].empty());
    CHECK(std::is_sorted(m.segments[s].begin(), m.segments[s].end()));
    for (int idx : m.segments[s]) {
      ++seen[static_cast<std::size_t>(idx)];
      CHECK(m.labels[static_cast<std::size_t>(idx)] == s);
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

/// Sizes of the 4-connected fragments of one segment.
std::vector<std::size_t> fragment_sizes(const std::vector<int>& seg, int w) {
  std::set<int> left(seg.begin(), seg.end());
  std::vector<std::size_t> sizes;
  while (!left.empty()) {
    std::queue<int> q;
    q.push(*left.begin());
    left.erase(left.begin());
    std::size_t n = 0;
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      ++n;
      const int c = p % w;
      for (int nb : {c > 0 ? p - 1 : -1, c + 1 < w ? p + 1 : -1, p - w, p + w}) {
        auto it = left.find(nb);
        if (it != left.end()) {
          left.erase(it);
          q.push(nb);
        }
      }
    }
    sizes.push_back(n);
  }
  return sizes;
}

}  // namespace

TEST_SUITE("superpixel") {

TEST_CASE("constant image splits into near-equal rectangles") {
  const RealRaster img(32, 32, 5.0);
  const SuperpixelMap m = slic_segment(img, SlicParams{4, 10.0, 10});
  check_partition(m);
  REQUIRE(m.segment_count() == 4);
  for (const auto& seg : m.segments) {
    CHECK(seg.size() == 256);
    int r0 = 99, r1 = -1, c0 = 99, c1 = -1;
    for (int idx : seg) {
      r0 = std::min(r0, idx / 32);
      r1 = std::max(r1, idx / 32);
      c0 = std::min(c0, idx % 32);
      c1 = std::max(c1, idx % 32);
    }
    CHECK((r1 - r0 + 1) * (c1 - c0 + 1) == static_cast<int>(seg.size()));
  }
}

TEST_CASE("two homogeneous halves: boundary follows the intensity edge") {
  const RealRaster img = two_halves(32, 32, 10.0, 200.0);
  const SuperpixelMap m = slic_segment(img, SlicParams{2, 10.0, 10});
  check_partition(m);
  REQUIRE(m.segment_count() == 2);
  // Oracle: with two centers at the half means, every pixel's nearest center
  // in intensity is its own half, so the exact assignment is the halves.
  for (const auto& seg : m.segments) {
    std::set<double> values;
    for (int idx : seg) values.insert(img[static_cast<std::size_t>(idx)]);
    CHECK(values.size() == 1);
    CHECK(seg.size() == 512);
  }
}

TEST_CASE("ten iterations already give the converged segmentation") {
  const RealRaster img = two_halves(32, 32, 30.0, 90.0);
  for (int nu : {2, 4, 9, 16}) {
    const auto a = slic_segment(img, SlicParams{nu, 10.0, 10});
    const auto b = slic_segment(img, SlicParams{nu, 10.0, 50});
    CHECK(a.labels == b.labels);
  }
}

TEST_CASE("copy_pattern reuses the segmentation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  std::vector<double> v1(40 * 30), v2(40 * 30);
  for (auto& x : v1) x = u(rng);
  for (auto& x : v2) x = u(rng);
  const SarImage i1(40, 30, v1);
  const SarImage i2(40, 30, v2);
  const auto m1 = slic_segment(i1, SlicParams{20, 10.0, 10});
  const auto m2 = copy_pattern(m1, i2);
  CHECK(m1.labels == m2.labels);
  REQUIRE(m1.segment_count() == m2.segment_count());
  for (int s = 0; s < m1.segment_count(); ++s) {
    CHECK(m1.segments[s] == m2.segments[s]);
    CHECK(m1.segments[s].size() == m2.segments[s].size());
  }
  CHECK_THROWS_AS(copy_pattern(m1, SarImage(30, 40, v1)), DimensionError);
}

TEST_CASE("random images: labels form a partition and respect the seed count") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> g(1.0, 100.0);
    std::vector<double> v(48 * 40);
    for (auto& x : v) x = g(rng);
    const SarImage img(48, 40, v);
    for (double frac : {0.0, 0.25}) {
      const auto m = slic_segment(img, SlicParams{30, 10.0, 10, frac});
      check_partition(m);
      CHECK(m.segment_count() <= m.seed_count);
      if (frac > 0.0) {
        const double expected = 48.0 * 40.0 / m.seed_count;
        for (const auto& seg : m.segments) {
          for (std::size_t n : fragment_sizes(seg, 48)) {
            CHECK(static_cast<double>(n) >= std::ceil(frac * expected) - 1e-9);
          }
        }
      }
    }
  }
}

TEST_CASE("reshape: exact fit, padding and leftovers") {
  SUBCASE("p = 5, k = 3 pads with repeats of the segment") {
    const std::vector<int> seg{3, 4, 10, 11, 12};
    const auto l = plan_reshape(seg, 0, 3, 42);
    REQUIRE(l.size() == 1);
    REQUIRE(l[0].origin.size() == 9);
    CHECK(std::equal(seg.begin(), seg.end(), l[0].origin.begin()));
    for (std::size_t i = 5; i < 9; ++i) {
      CHECK(std::find(seg.begin(), seg.end(), l[0].origin[i]) != seg.end());
    }
  }
  SUBCASE("p = 9, k = 3 is a plain copy") {
    std::vector<int> seg(9);
    std::iota(seg.begin(), seg.end(), 100);
    const auto l = plan_reshape(seg, 0, 3, 42);
    REQUIRE(l.size() == 1);
    CHECK(l[0].origin == seg);
    CHECK(l[0].sub_index == 1);
  }
  SUBCASE("p = 20, k = 3 gives q = 2 full vectors and one padded") {
    std::vector<int> seg(20);
    std::iota(seg.begin(), seg.end(), 0);
    const auto l = plan_reshape(seg, 5, 3, 42);
    REQUIRE(l.size() == 3);
    CHECK(l[0].origin == std::vector<int>(seg.begin(), seg.begin() + 9));
    CHECK(l[1].origin == std::vector<int>(seg.begin() + 9, seg.begin() + 18));
    CHECK(l[2].origin[0] == 18);
    CHECK(l[2].origin[1] == 19);
    CHECK(l[2].origin.size() == 9);
    for (int h = 0; h < 3; ++h) {
      CHECK(l[h].sub_index == h + 1);
      CHECK(l[h].segment_id == 5);
    }
  }
  CHECK_THROWS_AS(plan_reshape({}, 0, 3, 1), Error);
  CHECK_THROWS_AS(plan_reshape({1}, 0, 0, 1), ConfigError);
}

TEST_CASE("reshape padding is seeded and shared by both images") {
  std::vector<int> seg(13);
  std::iota(seg.begin(), seg.end(), 0);
  const auto a = plan_reshape(seg, 2, 3, 99);
  const auto b = plan_reshape(seg, 2, 3, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].origin == b[i].origin);

  std::vector<double> v1(16), v2(16);
  std::iota(v1.begin(), v1.end(), 0.0);
  std::iota(v2.begin(), v2.end(), 100.0);
  const auto p1 = reshape_superpixel(SarImage(4, 4, v1), seg, 2, 3, 99, 1);
  const auto p2 = reshape_superpixel(SarImage(4, 4, v2), seg, 2, 3, 99, 2);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].origin == p2[i].origin);
    CHECK(p1[i].source_image == 1);
    CHECK(p2[i].source_image == 2);
    for (std::size_t j = 0; j < p1[i].values.size(); ++j) {
      CHECK(p1[i].values[j] == static_cast<double>(p1[i].origin[j]));
    }
  }
}

TEST_CASE("plan_all covers every segment in order") {
  const RealRaster img(20, 20, 1.0);
  const auto m = slic_segment(img, SlicParams{4, 10.0, 10});
  const auto layouts = plan_all(m, 7, 5);
  std::size_t expected = 0;
  for (const auto& s : m.segments) expected += (s.size() + 48) / 49;
  CHECK(layouts.size() == expected);
  CHECK(std::is_sorted(layouts.begin(), layouts.end(), [](const auto& a, const auto& b) {
    return a.segment_id < b.segment_id;
  }));
}

}  // TEST_SUITE
