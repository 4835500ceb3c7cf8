#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "tpobdl/superpixel.hpp"

namespace tpobdl {

using FeatureVector = Eigen::SparseVector<double>;

/// PCA filter bank: unit-norm, mutually orthogonal filters ordered by
/// descending eigenvalue.
struct FilterBank {
  int side = 0;
  std::vector<Eigen::MatrixXd> filters;
  std::vector<double> eigenvalues;
  /// Fewer filters than requested because the block covariance was rank
  /// deficient.
  bool truncated = false;

  int count() const { return static_cast<int>(filters.size()); }
};

/// Stacks the k x k reshapes of two paired vectors into a 2k x k patch, the
/// first image on top. Values fill each k x k half row by row.
Eigen::MatrixXd make_patch(std::span<const double> top, std::span<const double> bottom, int k);

/// Same-size 2-D filtering with zero padding (filter applied as a
/// correlation kernel centered on each pixel).
Eigen::MatrixXd filter_same(const Eigen::MatrixXd& image, const Eigen::MatrixXd& filter);

/// Collects every fully-contained side x side block of every image, removes
/// each block's mean and returns the leading `count` eigenvectors of the
/// block scatter matrix reshaped to side x side.
FilterBank learn_filters(std::span<const Eigen::MatrixXd> images, int side, int count);

FilterBank learn_stage1_filters(std::span<const Eigen::MatrixXd> patches, int side, int l1);
/// `stage1_outputs` holds every first-stage map of every patch.
FilterBank learn_stage2_filters(std::span<const Eigen::MatrixXd> stage1_outputs, int side,
                                int l2);

struct HistogramBlocks {
  int rows = 0;         // 0 = use patch side k
  int cols = 0;         // 0 = use patch side k
  double overlap = 0.0; // fraction in [0, 1)
};

struct SvmParams {
  double c = 1.0;
  double tolerance = 1e-4;
  int max_epochs = 1000;
  std::uint64_t rng_seed = 0;
  /// Per-class C scaled by n / (2 n_class) so both classes weigh equally.
  bool balanced = false;
};

/// Linear soft-margin SVM (hinge loss). The bias is a constant augmented
/// feature, so it shares the L2 penalty. Decision >= 0 is the positive class.
struct LinearSvm {
  Eigen::VectorXd weights;
  double bias = 0.0;
  int epochs = 0;
  bool converged = false;

  double decision(const FeatureVector& x) const;
  double decision(const Eigen::VectorXd& x) const;
  bool predict(const FeatureVector& x) const { return decision(x) >= 0.0; }
  bool predict(const Eigen::VectorXd& x) const { return decision(x) >= 0.0; }
};

/// Dual coordinate descent. Labels: true = positive class (+1).
LinearSvm train_svm(std::span<const FeatureVector> features, std::span<const bool> labels,
                    const SvmParams& params);
LinearSvm train_svm(const Eigen::MatrixXd& features, std::span<const bool> labels,
                    const SvmParams& params);

struct PcaNetParams {
  int filter_side = 5;
  int l1 = 8;
  int l2 = 8;
  HistogramBlocks blocks;
  SvmParams svm;
};

class PcaNetModel {
 public:
  PcaNetModel() = default;
  PcaNetModel(int patch_side, PcaNetParams params, FilterBank stage1, FilterBank stage2,
              LinearSvm svm);

  bool trained() const { return trained_; }
  int patch_side() const { return patch_side_; }
  const PcaNetParams& params() const { return params_; }
  const FilterBank& stage1() const { return stage1_; }
  const FilterBank& stage2() const { return stage2_; }
  const LinearSvm& svm() const { return svm_; }

  /// Number of histogram blocks per 2k x k map.
  int block_count() const;
  int feature_length() const;

  /// Binary hashed maps T^l, one per stage-1 filter; values in [0, 2^L2 - 1].
  std::vector<Eigen::MatrixXi> hashed_maps(const Eigen::MatrixXd& patch) const;
  FeatureVector extract_features(const Eigen::MatrixXd& patch) const;
  /// true = positive class (CC in phase 1, RCC in phase 2).
  bool classify(const Eigen::MatrixXd& patch) const;

  void save(const std::filesystem::path& path) const;
  static PcaNetModel load(const std::filesystem::path& path);

  friend bool operator==(const PcaNetModel& a, const PcaNetModel& b);

 private:
  void require_trained() const;
  std::pair<int, int> block_geometry() const;

  bool trained_ = false;
  int patch_side_ = 0;
  PcaNetParams params_;
  FilterBank stage1_;
  FilterBank stage2_;
  LinearSvm svm_;
};

/// Feature extraction with only the filter banks (SVM not yet trained).
FeatureVector extract_features(const FilterBank& stage1, const FilterBank& stage2, int patch_side,
                               const HistogramBlocks& blocks, const Eigen::MatrixXd& patch);

/// Learns both filter banks, extracts features and trains the SVM.
PcaNetModel train_pcanet(std::span<const Eigen::MatrixXd> patches, std::span<const bool> labels,
                         int patch_side, const PcaNetParams& params);

}  // namespace tpobdl
