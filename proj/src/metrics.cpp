#include "tpobdl/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace tpobdl {

namespace {

int binary_value(std::int32_t v, const LabelMap& map, std::size_t i, const char* which) {
  if (v == 0) return 0;
  if (v == 1 || v == 255) return 1;
  const int row = static_cast<int>(i / static_cast<std::size_t>(map.width()));
  const int col = static_cast<int>(i % static_cast<std::size_t>(map.width()));
  throw LabelError(std::string("non-binary label ") + std::to_string(v) + " in " + which +
              " map at (row " + std::to_string(row) + ", col " + std::to_string(col) + ")");
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *v;
  return os.str();
}

}  // namespace

Confusion confusion(const LabelMap& prediction, const LabelMap& truth) {
  if (!prediction.same_shape(truth)) {
    throw DimensionError("confusion: prediction and truth dimensions differ");
  }
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = binary_value(truth[i], truth, i, "truth");
    const int p = binary_value(prediction[i], prediction, i, "prediction");
    if (t == 0) {
      ++c.unchanged;
      if (p == 1) ++c.false_alarms;
    } else {
      ++c.changed;
      if (p == 0) ++c.misses;
    }
  }
  return c;
}

std::optional<double> expected_agreement(const Confusion& c) {
  const double n = static_cast<double>(c.total());
  if (n <= 0.0) return std::nullopt;
  const double nu = static_cast<double>(c.unchanged);
  const double nc = static_cast<double>(c.changed);
  const double fn = static_cast<double>(c.false_alarms);
  const double mn = static_cast<double>(c.misses);
  // Printed in the source as (Nc + Fn - Mn) Nc + (Nu + M - F) Nu, i.e. the
  // predicted-changed and predicted-unchanged counts times the true ones.
  return ((nc - mn + fn) * nc + (nu - fn + mn) * nu) / (n * n);
}

MetricReport evaluate(const Confusion& c) {
  MetricReport r;
  const double nu = static_cast<double>(c.unchanged);
  const double nc = static_cast<double>(c.changed);
  const double fn = static_cast<double>(c.false_alarms);
  const double mn = static_cast<double>(c.misses);
  const double n = nu + nc;
  if (nu > 0.0) r.pf = 100.0 * fn / nu;
  if (nc > 0.0) r.pm = 100.0 * mn / nc;
  if (n > 0.0) {
    const double pcc = (n - fn - mn) / n;
    r.pcc = 100.0 * pcc;
    const auto pre = expected_agreement(c);
    if (pre && *pre < 1.0) r.kc = 100.0 * (pcc - *pre) / (1.0 - *pre);
  }
  // Implemented as printed in the source: (Nu - Mn) / (Fn + Mn).
  if (fn + mn > 0.0) r.gd_oe = 100.0 * (nu - mn) / (fn + mn);
  return r;
}

std::string format_table(const Confusion& c, const MetricReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Nu" << std::setw(10) << "Nc" << std::setw(10) << "Fn"
     << std::setw(10) << "Mn" << '\n'
     << std::setw(10) << c.unchanged << std::setw(10) << c.changed << std::setw(10)
     << c.false_alarms << std::setw(10) << c.misses << "\n\n"
     << std::setw(10) << "PCC(%)" << std::setw(10) << "Pf(%)" << std::setw(10) << "Pm(%)"
     << std::setw(10) << "KC(%)" << std::setw(12) << "GD/OE(%)" << '\n'
     << std::setw(10) << pct(r.pcc) << std::setw(10) << pct(r.pf) << std::setw(10) << pct(r.pm)
     << std::setw(10) << pct(r.kc) << std::setw(12) << pct(r.gd_oe) << '\n';
  return os.str();
}

std::string format_key_values(const Confusion& c, const MetricReport& r) {
  std::ostringstream os;
  os << "nu = " << c.unchanged << '\n'
     << "nc = " << c.changed << '\n'
     << "fn = " << c.false_alarms << '\n'
     << "mn = " << c.misses << '\n'
     << "pf = " << pct(r.pf) << '\n'
     << "pm = " << pct(r.pm) << '\n'
     << "pcc = " << pct(r.pcc) << '\n'
     << "kc = " << pct(r.kc) << '\n'
     << "gd_oe = " << pct(r.gd_oe) << '\n'
     << "gd_oe_definition = as-defined-in-source\n";
  return os.str();
}

}  // namespace tpobdl
