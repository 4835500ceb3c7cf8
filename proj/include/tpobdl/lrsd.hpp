#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tpobdl/superpixel.hpp"

namespace tpobdl {

struct ColumnTag {
  int segment_id = 0;
  int sub_index = 1;
  int image = 1;

  friend bool operator==(const ColumnTag&, const ColumnTag&) = default;
};

/// Columns interleave the two images: [v1(s,h), v2(s,h), v1(s,h+1), ...].
struct PairedMatrix {
  Eigen::MatrixXd data;
  std::vector<ColumnTag> columns;

  Eigen::Index pair_count() const { return data.cols() / 2; }
};

PairedMatrix assemble_phi(std::span<const std::pair<PatchVector, PatchVector>> pairs);
/// Inverse of assemble_phi on the values and tags (origins are not stored).
std::vector<std::pair<PatchVector, PatchVector>> disassemble(const PairedMatrix& phi);

/// Singular value thresholding, prox of tau * nuclear norm.
Eigen::MatrixXd svt(const Eigen::MatrixXd& m, double tau);
/// Column-wise shrinkage, prox of tau * (sum of column l2 norms).
Eigen::MatrixXd col_shrink(const Eigen::MatrixXd& m, double tau);

double nuclear_norm(const Eigen::MatrixXd& m);
double norm21(const Eigen::MatrixXd& m);

struct LrsdParams {
  /// <= 0 selects the default epsilon_scale / sqrt(max(rows, cols)).
  double epsilon = 0.0;
  double epsilon_scale = 3.0;
  double lambda = 0.9;
  /// <= 0 selects 1.25 / sigma_1(phi).
  double mu0 = 0.0;
  double rho = 1.1;
  double mu_max = 1e10;
  double tolerance = 1e-7;
  int max_iterations = 500;
};

struct LrsdIterate {
  double residual = 0.0;        // |phi - U - E|_F / |phi|_F
  double split_residual = 0.0;  // |U - J|_F / |phi|_F
  int rank = 0;
  double e_norm21 = 0.0;
  double objective = 0.0;
};

struct LrsdSolution {
  Eigen::MatrixXd low_rank;  // U
  Eigen::MatrixXd sparse;    // E
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  double epsilon = 0.0;
  double lambda = 0.0;
  std::vector<LrsdIterate> history;
};

/// Objective |U|_* + eps(1-lambda)|U|_21 + eps*lambda|E|_21.
double lrsd_objective(const Eigen::MatrixXd& u, const Eigen::MatrixXd& e, double epsilon,
                      double lambda);

double default_epsilon(Eigen::Index rows, Eigen::Index cols, double scale = 3.0);

/// Inexact ALM with the split J = U carrying the |U|_21 term.
LrsdSolution solve_lrsd(const Eigen::MatrixXd& phi, const LrsdParams& params = {});
LrsdSolution solve_lrsd(const PairedMatrix& phi, const LrsdParams& params = {});

/// Columns of U mapped back to (image-1, image-2) vector pairs; E is dropped.
std::vector<std::pair<PatchVector, PatchVector>> restore_vectors(const LrsdSolution& solution,
                                                                 const PairedMatrix& index);

}  // namespace tpobdl
