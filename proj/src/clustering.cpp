#include "tpobdl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <numeric>
#include <random>

#include "tpobdl/random.hpp"

namespace tpobdl {

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::kLow:
      return "low";
    case Tier::kMid:
      return "mid";
    case Tier::kHigh:
      return "high";
  }
  return "?";
}

DiffVector diff_vector(const PatchVector& a, const PatchVector& b) {
  if (a.segment_id != b.segment_id || a.sub_index != b.sub_index) {
    throw Error("build_spdi: paired vectors come from different (segment, sub-index)");
  }
  if (a.values.size() != b.values.size()) {
    throw Error("build_spdi: paired vectors differ in length");
  }
  DiffVector d;
  d.segment_id = a.segment_id;
  d.sub_index = a.sub_index;
  d.values.resize(a.values.size());
  for (std::size_t j = 0; j < a.values.size(); ++j) {
    d.values[j] = std::abs(a.values[j] - b.values[j]);
  }
  return d;
}

std::vector<DiffVector> build_spdi(std::span<const std::pair<PatchVector, PatchVector>> pairs) {
  std::vector<DiffVector> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(diff_vector(a, b));
  return out;
}

double fcm_objective(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centers,
                     const Eigen::MatrixXd& memberships, double fuzzifier) {
  double j = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      j += std::pow(memberships(i, c), fuzzifier) * (data.row(i) - centers.row(c)).squaredNorm();
    }
  }
  return j;
}

double fuzzifier_collapse_bound(const Eigen::MatrixXd& data) {
  if (data.rows() == 0) return std::numeric_limits<double>::infinity();
  const Eigen::RowVectorXd mean = data.colwise().mean();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(data.cols(), data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Eigen::RowVectorXd z = data.row(i) - mean;
    const double n2 = z.squaredNorm();
    if (n2 > 0.0) c.noalias() += z.transpose() * z / n2;
  }
  c /= static_cast<double>(data.rows());
  const double lambda = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .maxCoeff();
  if (lambda >= 0.5) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - 2.0 * lambda);
}

double auto_fuzzifier(const Eigen::MatrixXd& data, double fraction, double cap) {
  const double bound = fuzzifier_collapse_bound(data);
  if (!std::isfinite(bound)) return cap;
  return std::clamp(1.0 + fraction * (bound - 1.0), 1.05, cap);
}

namespace {

void update_memberships(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centers,
                        double fuzzifier, Eigen::MatrixXd& u) {
  const Eigen::Index n = data.rows();
  const Eigen::Index c = centers.rows();
  const double expo = 1.0 / (fuzzifier - 1.0);
  std::vector<double> d2(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index zero_at = -1;
    for (Eigen::Index j = 0; j < c; ++j) {
      d2[j] = (data.row(i) - centers.row(j)).squaredNorm();
      if (d2[j] == 0.0 && zero_at < 0) zero_at = j;
    }
    if (zero_at >= 0) {
      // Point sits on a center: crisp membership.
      u.row(i).setZero();
      u(i, zero_at) = 1.0;
      continue;
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < c; ++l) s += std::pow(d2[j] / d2[l], expo);
      u(i, j) = 1.0 / s;
    }
  }
}

void update_centers(const Eigen::MatrixXd& data, const Eigen::MatrixXd& u, double fuzzifier,
                    Eigen::MatrixXd& centers) {
  const Eigen::MatrixXd w = u.array().pow(fuzzifier).matrix();  // n x c
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    const double total = w.col(j).sum();
    if (total > 0.0) centers.row(j) = (w.col(j).transpose() * data) / total;
  }
}

}  // namespace

FcmResult fcm(const Eigen::MatrixXd& data, const FcmParams& params) {
  const Eigen::Index n = data.rows();
  const Eigen::Index c = params.clusters;
  if (c < 1) throw ConfigError("fcm: cluster count must be >= 1");
  if (n < c) throw Error("fcm: fewer vectors than clusters");
  if (!(params.fuzzifier > 1.0)) throw ConfigError("fcm: fuzzifier must be > 1");
  if (params.max_iterations < 1) throw ConfigError("fcm: max_iterations must be >= 1");

  FcmResult res;
  res.fuzzifier = params.fuzzifier;
  res.memberships = Eigen::MatrixXd::Zero(n, c);

  // Pick c distinct rows with a seeded shuffle.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(params.rng_seed, 0xfc3));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> chosen;
  for (Eigen::Index idx : order) {
    const bool dup = std::any_of(chosen.begin(), chosen.end(), [&](Eigen::Index o) {
      return data.row(o) == data.row(idx);
    });
    if (!dup) chosen.push_back(idx);
    if (static_cast<Eigen::Index>(chosen.size()) == c) break;
  }

  if (chosen.size() == 1) {
    res.degenerate = true;
    res.centers = data.row(0).replicate(c, 1);
    res.memberships.setConstant(1.0 / static_cast<double>(c));
    res.hard_labels.assign(static_cast<std::size_t>(n), Tier::kMid);
    res.converged = true;
    res.objective.push_back(0.0);
    return res;
  }
  for (std::size_t j = 0; static_cast<Eigen::Index>(chosen.size()) < c; ++j) {
    chosen.push_back(chosen[j % chosen.size()]);
  }

  Eigen::MatrixXd centers(c, data.cols());
  for (Eigen::Index j = 0; j < c; ++j) centers.row(j) = data.row(chosen[j]);

  for (int it = 0; it < params.max_iterations; ++it) {
    update_memberships(data, centers, params.fuzzifier, res.memberships);
    const Eigen::MatrixXd previous = centers;
    update_centers(data, res.memberships, params.fuzzifier, centers);
    res.objective.push_back(fcm_objective(data, centers, res.memberships, params.fuzzifier));
    res.iterations = it + 1;
    const double shift = (centers - previous).rowwise().norm().maxCoeff();
    if (shift < params.tolerance) {
      res.converged = true;
      break;
    }
  }
  update_memberships(data, centers, params.fuzzifier, res.memberships);

  // Order clusters by ascending center mean.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(c));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    return centers.row(a).mean() < centers.row(b).mean();
  });
  res.centers.resize(c, data.cols());
  Eigen::MatrixXd sorted_u(n, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    res.centers.row(j) = centers.row(perm[j]);
    sorted_u.col(j) = res.memberships.col(perm[j]);
  }
  res.memberships = std::move(sorted_u);

  res.hard_labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    res.memberships.row(i).maxCoeff(&arg);
    // Tier mapping assumes c = 3; extra clusters collapse onto kHigh.
    res.hard_labels[i] = static_cast<Tier>(std::min<Eigen::Index>(arg, 2));
  }
  return res;
}

Eigen::MatrixXd spdi_matrix(std::span<const DiffVector> vectors) {
  if (vectors.empty()) return {};
  const std::size_t dim = vectors.front().values.size();
  Eigen::MatrixXd data(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != dim) throw Error("fcm: vectors differ in length");
    for (std::size_t j = 0; j < dim; ++j) {
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i].values[j];
    }
  }
  return data;
}

FcmResult fcm(std::span<const DiffVector> vectors, const FcmParams& params) {
  if (vectors.empty()) throw Error("fcm: fewer vectors than clusters");
  return fcm(spdi_matrix(vectors), params);
}

Tier vote_label(std::span<const Tier> labels, const VoteThresholds& t) {
  if (labels.empty()) throw Error("vote_label: no labels");
  // Sum in half-units so the total is exact.
  long long halves = 0;
  for (Tier l : labels) {
    if (l == Tier::kHigh) halves += 2;
    if (l == Tier::kMid) halves += 1;
  }
  const double ratio = (static_cast<double>(halves) / 2.0) / static_cast<double>(labels.size());
  if (ratio >= t.changed) return Tier::kHigh;
  if (ratio >= t.intermediate) return Tier::kMid;
  return Tier::kLow;
}

}  // namespace tpobdl
