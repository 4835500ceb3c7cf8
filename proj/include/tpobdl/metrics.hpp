#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tpobdl/imaging.hpp"

namespace tpobdl {

/// Pixel tallies of a binary change map against ground truth.
struct Confusion {
  std::int64_t unchanged = 0;     // Nu, truth unchanged
  std::int64_t changed = 0;       // Nc, truth changed
  std::int64_t false_alarms = 0;  // Fn, unchanged detected as changed
  std::int64_t misses = 0;        // Mn, changed detected as unchanged

  std::int64_t total() const { return unchanged + changed; }
};

/// Labels must be 0 (unchanged) or 1 (changed); PGM maps written as 0/255 are
/// accepted with 255 read as changed. Throws on any other value, naming the
/// first offending pixel.
Confusion confusion(const LabelMap& prediction, const LabelMap& truth);

/// All rates in percent. Fields are empty when their denominator is zero.
struct MetricReport {
  std::optional<double> pf;
  std::optional<double> pm;
  std::optional<double> pcc;
  std::optional<double> kc;
  std::optional<double> gd_oe;
};

MetricReport evaluate(const Confusion& c);

/// Expected agreement of a kappa statistic:
/// ((Nc - Mn + Fn) Nc + (Nu - Fn + Mn) Nu) / (Nc + Nu)^2.
std::optional<double> expected_agreement(const Confusion& c);

/// Aligned human-readable table.
std::string format_table(const Confusion& c, const MetricReport& r);
/// `key = value` lines, percentages with two decimals, "undefined" for empty
/// fields.
std::string format_key_values(const Confusion& c, const MetricReport& r);

}  // namespace tpobdl
