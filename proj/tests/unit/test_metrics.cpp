#include <cmath>
#include <random>

#include <doctest.h>

#include "tpobdl/metrics.hpp"

using namespace tpobdl;

namespace {

Confusion make(std::int64_t nu, std::int64_t nc, std::int64_t fn, std::int64_t mn) {
  Confusion c;
  c.unchanged = nu;
  c.changed = nc;
  c.false_alarms = fn;
  c.misses = mn;
  return c;
}

/// Kappa from the 2x2 agreement table (observed vs chance agreement).
double kappa_oracle(double nu, double nc, double fn, double mn) {
  const double n = nu + nc;
  const double tp = nc - mn, tn = nu - fn;
  const double po = (tp + tn) / n;
  const double pred_c = tp + fn, pred_u = tn + mn;
  const double pe = (pred_c * nc + pred_u * nu) / (n * n);
  return 100.0 * (po - pe) / (1.0 - pe);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion counts") {
  LabelMap truth(4, 1, std::vector<std::int32_t>{0, 1, 1, 0});
  CHECK(confusion(truth, truth).false_alarms == 0);
  CHECK(confusion(truth, truth).misses == 0);
  LabelMap inv(4, 1, std::vector<std::int32_t>{255, 0, 0, 1});
  const Confusion c = confusion(inv, truth);
  CHECK(c.false_alarms == c.unchanged);
  CHECK(c.misses == c.changed);

  std::mt19937_64 rng(1);
  std::bernoulli_distribution b(0.3);
  for (int t = 0; t < 20; ++t) {
    LabelMap p(10, 10), q(10, 10);
    for (std::size_t i = 0; i < 100; ++i) {
      p[i] = b(rng);
      q[i] = b(rng);
    }
    std::int64_t nu = 0, nc = 0, fn = 0, mn = 0;
    for (int r = 0; r < 10; ++r) {
      for (int col = 0; col < 10; ++col) {
        if (q(r, col) == 0) {
          ++nu;
          if (p(r, col) == 1) ++fn;
        } else {
          ++nc;
          if (p(r, col) == 0) ++mn;
        }
      }
    }
    const Confusion got = confusion(p, q);
    CHECK(got.unchanged == nu);
    CHECK(got.changed == nc);
    CHECK(got.false_alarms == fn);
    CHECK(got.misses == mn);
    CHECK(got.total() == 100);
  }
}

TEST_CASE("validation") {
  LabelMap a(2, 2, 0), b(2, 3, 0);
  CHECK_THROWS_AS(confusion(a, b), DimensionError);
  LabelMap bad(2, 2, 0);
  bad(1, 0) = 7;
  try {
    confusion(bad, a);
    FAIL("expected LabelError");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("row 1, col 0") != std::string::npos);
  }
}

TEST_CASE("perfect map") {
  const MetricReport r = evaluate(make(900, 100, 0, 0));
  CHECK(*r.pcc == 100.0);
  CHECK(*r.pf == 0.0);
  CHECK(*r.pm == 0.0);
  CHECK(*r.kc == doctest::Approx(100.0));
}

TEST_CASE("worked confusion example") {
  const MetricReport r = evaluate(make(9000, 1000, 90, 100));
  CHECK(std::abs(*r.pf - 1.00) < 0.01);
  CHECK(std::abs(*r.pm - 10.00) < 0.01);
  CHECK(std::abs(*r.pcc - 98.10) < 0.01);
  // Independent arithmetic: predicted changed 990, predicted unchanged 9010,
  // chance agreement (990*1000 + 9010*9000) / 10000^2 = 0.8208.
  CHECK(*expected_agreement(make(9000, 1000, 90, 100)) == doctest::Approx(0.8208));
  CHECK(std::abs(*r.kc - (0.9810 - 0.8208) / (1.0 - 0.8208) * 100.0) < 0.01);
  CHECK(std::abs(*r.kc - 89.40) < 0.01);
  CHECK(std::abs(*r.gd_oe - (9000.0 - 100.0) / 190.0 * 100.0) < 0.01);
}

TEST_CASE("undefined fields") {
  const MetricReport r = evaluate(make(10, 0, 1, 0));
  CHECK_FALSE(r.pm.has_value());
  CHECK(r.pf.has_value());
  const MetricReport z = evaluate(make(0, 0, 0, 0));
  CHECK_FALSE(z.pcc.has_value());
  CHECK_FALSE(z.pf.has_value());
  const MetricReport perfect = evaluate(make(10, 5, 0, 0));
  CHECK_FALSE(perfect.gd_oe.has_value());
  CHECK(format_key_values(make(10, 0, 1, 0), r).find("pm = undefined") != std::string::npos);
}

TEST_CASE("invariants on random confusions") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 5000);
  for (int t = 0; t < 500; ++t) {
    const std::int64_t nu = size(rng), nc = size(rng);
    const std::int64_t fn = std::uniform_int_distribution<std::int64_t>(0, nu)(rng);
    const std::int64_t mn = std::uniform_int_distribution<std::int64_t>(0, nc)(rng);
    const Confusion c = make(nu, nc, fn, mn);
    const MetricReport r = evaluate(c);
    CHECK(*r.pcc / 100.0 + static_cast<double>(fn + mn) / static_cast<double>(nu + nc) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*r.kc <= *r.pcc + 1e-9);
    CHECK(*r.kc == doctest::Approx(kappa_oracle(nu, nc, fn, mn)).epsilon(1e-9));

    // Swapping the roles of the classes keeps PCC and swaps Pf and Pm.
    const MetricReport s = evaluate(make(nc, nu, mn, fn));
    CHECK(*s.pcc == doctest::Approx(*r.pcc));
    CHECK(*s.pf == doctest::Approx(*r.pm));
    CHECK(*s.pm == doctest::Approx(*r.pf));
  }
}

TEST_CASE("published C1 row against the formulas") {
  // PCC 99.71, Pf 0.18, Pm 15.10, KC 97.84 on a 400 x 400 scene. PCC, Pf and
  // Pm fix the change prior; the kappa it implies is far from the printed one.
  const double n = 160000.0;
  const double pcc = 0.9971, pf = 0.0018, pm = 0.1510;
  const double prior = ((1.0 - pcc) - pf) / (pm - pf);
  const double nc = std::round(prior * n);
  const double nu = n - nc;
  CHECK(nc == 1180.0);
  const Confusion c = make(static_cast<std::int64_t>(nu), static_cast<std::int64_t>(nc),
                           std::llround(pf * nu), std::llround(pm * nc));
  const MetricReport r = evaluate(c);
  CHECK(std::abs(*r.pcc - 99.71) < 0.01);
  CHECK(std::abs(*r.pf - 0.18) < 0.01);
  // One missed pixel moves Pm by 100 / 1180 points.
  CHECK(std::abs(*r.pm - 15.10) < 0.5 * 100.0 / 1180.0);
  CHECK(*r.kc == doctest::Approx(81.05).epsilon(1e-3));
  CHECK(std::abs(*r.kc - 97.84) > 10.0);
}

TEST_CASE("report formatting") {
  const Confusion c = make(9000, 1000, 90, 100);
  const std::string kv = format_key_values(c, evaluate(c));
  CHECK(kv.find("pf = 1.00") != std::string::npos);
  CHECK(kv.find("pcc = 98.10") != std::string::npos);
  CHECK(kv.find("as-defined-in-source") != std::string::npos);
  CHECK(format_table(c, evaluate(c)).find("98.10") != std::string::npos);
}

}  // TEST_SUITE
