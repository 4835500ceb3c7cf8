#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tpobdl/superpixel.hpp"

namespace tpobdl {

/// Three-way class produced by clustering and voting. Phase 1 reads these as
/// unchanged / intermediate / changed, phase 2 as false change / intermediate /
/// real change.
enum class Tier : int { kLow = 0, kMid = 1, kHigh = 2 };

const char* tier_name(Tier t);

struct DiffVector {
  int segment_id = 0;
  int sub_index = 1;
  std::vector<double> values;
};

/// Elementwise |v1 - v2| of paired vectors. Pairs must share
/// (segment_id, sub_index) and length.
std::vector<DiffVector> build_spdi(
    std::span<const std::pair<PatchVector, PatchVector>> pairs);

DiffVector diff_vector(const PatchVector& a, const PatchVector& b);

struct FcmParams {
  int clusters = 3;
  double fuzzifier = 2.0;
  double tolerance = 1e-6;
  int max_iterations = 300;
  std::uint64_t rng_seed = 0;
};

struct FcmResult {
  /// Cluster centers, one per row, sorted by ascending mean.
  Eigen::MatrixXd centers;
  /// n x c membership matrix, columns in the same (sorted) order.
  Eigen::MatrixXd memberships;
  std::vector<Tier> hard_labels;
  /// Objective value after each iteration.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
  /// Set when every input vector is identical; all labels are then kMid.
  bool degenerate = false;
  double fuzzifier = 2.0;
};

/// Fuzzy c-means over the rows of `data` (Euclidean distance). Only c = 3
/// maps onto Tier labels; other c values still fill centers and memberships.
FcmResult fcm(const Eigen::MatrixXd& data, const FcmParams& params);
FcmResult fcm(std::span<const DiffVector> vectors, const FcmParams& params);

/// One row per difference vector.
Eigen::MatrixXd spdi_matrix(std::span<const DiffVector> vectors);

/// Fuzzifier above which the grand mean of `data` becomes a stable FCM fixed
/// point: 1 / (1 - 2 lambda), lambda the largest eigenvalue of
/// mean((x - xbar)(x - xbar)^T / |x - xbar|^2). Infinity when lambda >= 0.5.
/// Above the bound every run collapses to c identical centers.
double fuzzifier_collapse_bound(const Eigen::MatrixXd& data);

/// 1 + fraction * (bound - 1), capped at `cap` and floored at 1.05.
double auto_fuzzifier(const Eigen::MatrixXd& data, double fraction = 0.25, double cap = 2.0);

/// FCM objective sum_ij u_ij^m |x_i - c_j|^2.
double fcm_objective(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centers,
                     const Eigen::MatrixXd& memberships, double fuzzifier);

struct VoteThresholds {
  double changed = 0.8;
  double intermediate = 0.5;
};

/// Weighted vote over the sub-vector labels of one superpixel:
/// high = 1, mid = 0.5, low = 0.
Tier vote_label(std::span<const Tier> labels, const VoteThresholds& t = {});

}  // namespace tpobdl
