#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <doctest.h>

#include "tpobdl/clustering.hpp"

using namespace tpobdl;

namespace {

PatchVector pv(int image, std::vector<double> v, int seg = 0, int sub = 1) {
  PatchVector p;
  p.source_image = image;
  p.segment_id = seg;
  p.sub_index = sub;
  p.values = std::move(v);
  p.origin.assign(p.values.size(), 0);
  return p;
}

/// Optimal hard 3-partition of 1-D data. Optimal clusters are intervals of
/// the sorted values, so every (i, j) split is enumerated.
std::vector<int> exhaustive_partition(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  auto sse = [&](int lo, int hi) {
    double m = 0.0;
    for (int i = lo; i < hi; ++i) m += x[order[i]];
    m /= (hi - lo);
    double s = 0.0;
    for (int i = lo; i < hi; ++i) s += (x[order[i]] - m) * (x[order[i]] - m);
    return s;
  };
  double best = std::numeric_limits<double>::infinity();
  int bi = 0, bj = 0;
  for (int i = 1; i < n - 1; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double s = sse(0, i) + sse(i, j) + sse(j, n);
      if (s < best) {
        best = s;
        bi = i;
        bj = j;
      }
    }
  }
  std::vector<int> label(n);
  for (int k = 0; k < n; ++k) label[order[k]] = k < bi ? 0 : (k < bj ? 1 : 2);
  return label;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("difference vectors") {
  CHECK(diff_vector(pv(1, {2, 5}), pv(2, {2, 5})).values == std::vector<double>{0, 0});
  CHECK(diff_vector(pv(1, {3, 1}), pv(2, {1, 4})).values == std::vector<double>{2, 3});

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 50.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(9), b(9);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    CHECK(diff_vector(pv(1, a), pv(2, b)).values == diff_vector(pv(1, b), pv(2, a)).values);
  }
  CHECK_THROWS(diff_vector(pv(1, {1, 2}), pv(2, {1})));
  CHECK_THROWS(diff_vector(pv(1, {1}, 0, 1), pv(2, {1}, 0, 2)));
}

TEST_CASE("build_spdi keeps the pair tags") {
  std::vector<std::pair<PatchVector, PatchVector>> pairs{{pv(1, {1}, 3, 2), pv(2, {4}, 3, 2)}};
  const auto d = build_spdi(pairs);
  REQUIRE(d.size() == 1);
  CHECK(d[0].segment_id == 3);
  CHECK(d[0].sub_index == 2);
  CHECK(d[0].values == std::vector<double>{3});
}

TEST_CASE("three planted 1-D groups match the exhaustive-partition oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::vector<double> x;
    for (double c : {0.0, 0.5, 1.0}) {
      for (int i = 0; i < 20; ++i) x.push_back(c + noise(rng));
    }
    std::shuffle(x.begin(), x.end(), rng);
    Eigen::MatrixXd data(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) data(static_cast<Eigen::Index>(i), 0) = x[i];

    const auto res = fcm(data, FcmParams{3, 2.0, 1e-9, 500, seed});
    const auto oracle = exhaustive_partition(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(static_cast<int>(res.hard_labels[i]) == oracle[i]);
    }
    CHECK(res.converged);
    for (std::size_t i = 1; i < res.objective.size(); ++i) {
      CHECK(res.objective[i] <= res.objective[i - 1] * (1.0 + 1e-12));
    }
    CHECK(res.centers(0, 0) < res.centers(1, 0));
    CHECK(res.centers(1, 0) < res.centers(2, 0));
  }
}

TEST_CASE("memberships: rows sum to one, exact hit gives membership one") {
  Eigen::MatrixXd data(3, 1);
  data << 0.0, 0.5, 1.0;
  const auto res = fcm(data, FcmParams{3, 2.0, 1e-9, 50, 0});
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(res.memberships(i, i) == 1.0);
    CHECK(res.memberships.row(i).sum() == doctest::Approx(1.0));
    CHECK(static_cast<int>(res.hard_labels[static_cast<std::size_t>(i)]) == i);
  }

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd rnd(80, 4);
  for (Eigen::Index i = 0; i < rnd.size(); ++i) rnd.data()[i] = u(rng);
  const auto r2 = fcm(rnd, FcmParams{3, 1.5, 1e-6, 300, 1});
  for (Eigen::Index i = 0; i < rnd.rows(); ++i) {
    CHECK(r2.memberships.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r2.memberships.row(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("duplicating every vector leaves the centers unchanged") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd data(45, 2);
  for (Eigen::Index i = 0; i < 45; ++i) {
    const double off = 4.0 * static_cast<double>(i % 3);
    data(i, 0) = off + n(rng);
    data(i, 1) = off + n(rng);
  }
  Eigen::MatrixXd twice(90, 2);
  twice << data, data;
  const auto a = fcm(data, FcmParams{3, 1.6, 1e-12, 2000, 3});
  const auto b = fcm(twice, FcmParams{3, 1.6, 1e-12, 2000, 11});
  CHECK((a.centers - b.centers).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("identical vectors are flagged degenerate") {
  const Eigen::MatrixXd data = Eigen::MatrixXd::Constant(10, 3, 2.0);
  const auto res = fcm(data, FcmParams{3, 2.0, 1e-6, 100, 0});
  CHECK(res.degenerate);
  for (Tier t : res.hard_labels) CHECK(t == Tier::kMid);
  CHECK_THROWS(fcm(Eigen::MatrixXd(2, 1), FcmParams{}));
  CHECK_THROWS_AS(fcm(data, FcmParams{3, 1.0, 1e-6, 10, 0}), ConfigError);
}

TEST_CASE("collapse bound of the fuzzifier") {
  SUBCASE("one-dimensional data never collapses") {
    Eigen::MatrixXd d(5, 1);
    d << 0, 1, 2, 3, 10;
    CHECK(std::isinf(fuzzifier_collapse_bound(d)));
    CHECK(auto_fuzzifier(d) == 2.0);
  }
  SUBCASE("isotropic data: bound = 1 / (1 - 2/d)") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd d(20000, 9);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = n(rng);
    const double bound = fuzzifier_collapse_bound(d);
    CHECK(bound == doctest::Approx(1.0 / (1.0 - 2.0 / 9.0)).epsilon(0.02));
    CHECK(auto_fuzzifier(d) == doctest::Approx(1.0 + 0.25 * (bound - 1.0)));

    // Above the bound FCM falls onto the grand mean; below it the centers
    // stay apart.
    const Eigen::MatrixXd sub = d.topRows(2000);
    const auto hi = fcm(sub, FcmParams{3, 2.0, 1e-9, 3000, 1});
    CHECK((hi.centers.row(0) - hi.centers.row(2)).norm() < 1e-3);
    const auto lo = fcm(sub, FcmParams{3, auto_fuzzifier(sub), 1e-9, 3000, 1});
    CHECK((lo.centers.row(0) - lo.centers.row(2)).norm() > 0.5);
  }
  SUBCASE("auto fuzzifier stays in [1.05, 2]") {
    std::mt19937_64 rng(9);
    std::exponential_distribution<double> e(1.0);
    for (int d : {2, 9, 49}) {
      Eigen::MatrixXd m(300, d);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = e(rng);
      const double f = auto_fuzzifier(m);
      CHECK(f >= 1.05);
      CHECK(f <= 2.0);
    }
  }
}

TEST_CASE("vote thresholds") {
  using T = Tier;
  const std::vector<T> four_one{T::kHigh, T::kHigh, T::kHigh, T::kHigh, T::kLow};
  const std::vector<T> two_mid{T::kMid, T::kMid};
  const std::vector<T> two_three{T::kHigh, T::kHigh, T::kLow, T::kLow, T::kLow};
  const std::vector<T> high_mid{T::kHigh, T::kMid};
  CHECK(vote_label(four_one) == T::kHigh);   // 0.8, boundary counts as changed
  CHECK(vote_label(two_mid) == T::kMid);     // 0.5, boundary counts as intermediate
  CHECK(vote_label(two_three) == T::kLow);   // 0.4
  CHECK(vote_label(high_mid) == T::kMid);    // 0.75
  CHECK(vote_label(std::vector<T>{T::kLow}) == T::kLow);
  CHECK(vote_label(std::vector<T>{T::kHigh}) == T::kHigh);
  CHECK_THROWS(vote_label(std::vector<T>{}));

  // The vote is a function of the label multiset only.
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int t = 0; t < 200; ++t) {
    std::vector<T> v(1 + t % 9);
    for (auto& x : v) x = static_cast<T>(pick(rng));
    const T a = vote_label(v);
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(vote_label(v) == a);
  }
}

}  // TEST_SUITE
