#include "tpobdl/lrsd.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/SVD>

namespace tpobdl {

PairedMatrix assemble_phi(std::span<const std::pair<PatchVector, PatchVector>> pairs) {
  PairedMatrix phi;
  if (pairs.empty()) return phi;
  const std::size_t rows = pairs.front().first.values.size();
  phi.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(2 * pairs.size()));
  phi.columns.reserve(2 * pairs.size());
  Eigen::Index col = 0;
  for (const auto& [a, b] : pairs) {
    if (a.segment_id != b.segment_id || a.sub_index != b.sub_index || a.source_image != 1 ||
        b.source_image != 2) {
      throw Error("assemble_phi: unpaired vector (pairs must be image 1 / image 2 of one sub-vector)");
    }
    if (a.values.size() != rows || b.values.size() != rows) {
      throw Error("assemble_phi: vectors differ in length");
    }
    for (const PatchVector* v : {&a, &b}) {
      for (std::size_t r = 0; r < rows; ++r) phi.data(static_cast<Eigen::Index>(r), col) = v->values[r];
      phi.columns.push_back({v->segment_id, v->sub_index, v->source_image});
      ++col;
    }
  }
  return phi;
}

namespace {

PatchVector column_vector(const Eigen::MatrixXd& m, Eigen::Index col, const ColumnTag& tag) {
  PatchVector v;
  v.source_image = tag.image;
  v.segment_id = tag.segment_id;
  v.sub_index = tag.sub_index;
  v.values.assign(m.col(col).data(), m.col(col).data() + m.rows());
  return v;
}

std::vector<std::pair<PatchVector, PatchVector>> split_columns(const Eigen::MatrixXd& m,
                                                               const std::vector<ColumnTag>& tags) {
  if (m.cols() != static_cast<Eigen::Index>(tags.size()) || m.cols() % 2 != 0) {
    throw Error("paired matrix: column index does not match the data");
  }
  std::vector<std::pair<PatchVector, PatchVector>> out;
  out.reserve(tags.size() / 2);
  for (Eigen::Index c = 0; c < m.cols(); c += 2) {
    out.emplace_back(column_vector(m, c, tags[c]), column_vector(m, c + 1, tags[c + 1]));
  }
  return out;
}

struct SvtResult {
  Eigen::MatrixXd value;
  int rank = 0;
  double nuclear = 0.0;
};

SvtResult svt_impl(const Eigen::MatrixXd& m, double tau) {
  SvtResult r;
  if (m.size() == 0) {
    r.value = m;
    return r;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s(i) = std::max(s(i) - tau, 0.0);
    if (s(i) > 0.0) {
      ++r.rank;
      r.nuclear += s(i);
    }
  }
  r.value = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  return r;
}

}  // namespace

std::vector<std::pair<PatchVector, PatchVector>> disassemble(const PairedMatrix& phi) {
  return split_columns(phi.data, phi.columns);
}

Eigen::MatrixXd svt(const Eigen::MatrixXd& m, double tau) {
  if (tau < 0.0) throw ConfigError("svt: tau must be >= 0");
  return svt_impl(m, tau).value;
}

Eigen::MatrixXd col_shrink(const Eigen::MatrixXd& m, double tau) {
  if (tau < 0.0) throw ConfigError("col_shrink: tau must be >= 0");
  Eigen::MatrixXd out = m;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double n = m.col(c).norm();
    out.col(c) *= n > tau ? 1.0 - tau / n : 0.0;
  }
  return out;
}

double nuclear_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues().sum();
}

double norm21(const Eigen::MatrixXd& m) { return m.colwise().norm().sum(); }

double lrsd_objective(const Eigen::MatrixXd& u, const Eigen::MatrixXd& e, double epsilon,
                      double lambda) {
  return nuclear_norm(u) + epsilon * (1.0 - lambda) * norm21(u) + epsilon * lambda * norm21(e);
}

double default_epsilon(Eigen::Index rows, Eigen::Index cols, double scale) {
  const double n = static_cast<double>(std::max<Eigen::Index>(1, std::max(rows, cols)));
  return scale / std::sqrt(n);
}

LrsdSolution solve_lrsd(const Eigen::MatrixXd& phi, const LrsdParams& params) {
  if (!phi.allFinite()) throw Error("solve_lrsd: non-finite input");
  if (!(params.lambda > 0.0 && params.lambda <= 1.0)) {
    throw ConfigError("solve_lrsd: lambda must be in (0, 1]");
  }
  if (!(params.rho >= 1.0) || params.max_iterations < 1 || !(params.tolerance > 0.0)) {
    throw ConfigError("solve_lrsd: rho must be >= 1, tolerance > 0, max_iterations >= 1");
  }

  LrsdSolution sol;
  sol.lambda = params.lambda;
  sol.epsilon = params.epsilon > 0.0 ? params.epsilon
                                     : default_epsilon(phi.rows(), phi.cols(), params.epsilon_scale);
  sol.low_rank = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
  sol.sparse = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());

  const double phi_norm = phi.norm();
  if (phi_norm == 0.0) {
    sol.iterations = 1;
    sol.converged = true;
    sol.history.push_back({});
    return sol;
  }

  const double w_u = sol.epsilon * (1.0 - params.lambda);  // |U|_21 weight
  const double w_e = sol.epsilon * params.lambda;          // |E|_21 weight

  double mu = params.mu0;
  if (!(mu > 0.0)) {
    const double sigma1 = Eigen::BDCSVD<Eigen::MatrixXd>(phi).singularValues()(0);
    mu = 1.25 / sigma1;
  }

  Eigen::MatrixXd& u = sol.low_rank;
  Eigen::MatrixXd& e = sol.sparse;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());  // multiplier of phi = U + E
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());  // multiplier of U = J

  for (int it = 0; it < params.max_iterations; ++it) {
    const double inv_mu = 1.0 / mu;
    e = col_shrink(phi - u + inv_mu * x, w_e * inv_mu);
    j = col_shrink(u + inv_mu * y, w_u * inv_mu);
    // U minimizes |U|_* + mu/2 |phi - E + X/mu - U|^2 + mu/2 |U - J + Y/mu|^2.
    const Eigen::MatrixXd target = 0.5 * ((phi - e + inv_mu * x) + (j - inv_mu * y));
    const SvtResult step = svt_impl(target, 0.5 * inv_mu);
    u = step.value;

    const Eigen::MatrixXd r1 = phi - u - e;
    const Eigen::MatrixXd r2 = u - j;
    x += mu * r1;
    y += mu * r2;
    mu = std::min(mu * params.rho, params.mu_max);

    LrsdIterate rec;
    rec.residual = r1.norm() / phi_norm;
    rec.split_residual = r2.norm() / phi_norm;
    rec.rank = step.rank;
    rec.e_norm21 = norm21(e);
    rec.objective = step.nuclear + w_u * norm21(u) + w_e * rec.e_norm21;
    sol.history.push_back(rec);
    sol.iterations = it + 1;
    sol.final_residual = rec.residual;
    if (rec.residual < params.tolerance && rec.split_residual < params.tolerance) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

LrsdSolution solve_lrsd(const PairedMatrix& phi, const LrsdParams& params) {
  return solve_lrsd(phi.data, params);
}

std::vector<std::pair<PatchVector, PatchVector>> restore_vectors(const LrsdSolution& solution,
                                                                 const PairedMatrix& index) {
  return split_columns(solution.low_rank, index.columns);
}

}  // namespace tpobdl
