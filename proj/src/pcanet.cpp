#include "tpobdl/pcanet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "tpobdl/parallel.hpp"
#include "tpobdl/random.hpp"

namespace tpobdl {

Eigen::MatrixXd make_patch(std::span<const double> top, std::span<const double> bottom, int k) {
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  if (k < 1 || top.size() != kk || bottom.size() != kk) {
    throw Error("make_patch: vectors must both have k*k entries");
  }
  Eigen::MatrixXd patch(2 * k, k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      patch(r, c) = top[static_cast<std::size_t>(r) * k + c];
      patch(r + k, c) = bottom[static_cast<std::size_t>(r) * k + c];
    }
  }
  return patch;
}

Eigen::MatrixXd filter_same(const Eigen::MatrixXd& image, const Eigen::MatrixXd& filter) {
  const Eigen::Index h = image.rows();
  const Eigen::Index w = image.cols();
  const Eigen::Index fr = filter.rows();
  const Eigen::Index fc = filter.cols();
  const Eigen::Index ar = (fr - 1) / 2;
  const Eigen::Index ac = (fc - 1) / 2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      double s = 0.0;
      for (Eigen::Index a = 0; a < fr; ++a) {
        const Eigen::Index rr = r + a - ar;
        if (rr < 0 || rr >= h) continue;
        for (Eigen::Index b = 0; b < fc; ++b) {
          const Eigen::Index cc = c + b - ac;
          if (cc < 0 || cc >= w) continue;
          s += image(rr, cc) * filter(a, b);
        }
      }
      out(r, c) = s;
    }
  }
  return out;
}

FilterBank learn_filters(std::span<const Eigen::MatrixXd> images, int side, int count) {
  if (side < 1) throw ConfigError("learn_filters: filter side must be >= 1");
  if (count < 1 || count > side * side) {
    throw ConfigError("learn_filters: filter count must be in [1, side^2]");
  }
  const int dim = side * side;
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd block(dim);
  long long blocks = 0;
  for (const auto& img : images) {
    if (img.rows() < side || img.cols() < side) {
      throw ConfigError("learn_filters: filter side exceeds patch size");
    }
    for (Eigen::Index r = 0; r + side <= img.rows(); ++r) {
      for (Eigen::Index c = 0; c + side <= img.cols(); ++c) {
        for (int a = 0; a < side; ++a) {
          for (int b = 0; b < side; ++b) block(a * side + b) = img(r + a, c + b);
        }
        block.array() -= block.mean();
        scatter.selfadjointView<Eigen::Lower>().rankUpdate(block);
        ++blocks;
      }
    }
  }
  if (blocks == 0) throw Error("learn_filters: no training blocks");
  scatter = scatter.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
  if (eig.info() != Eigen::Success) throw Error("learn_filters: eigendecomposition failed");
  const Eigen::VectorXd& vals = eig.eigenvalues();  // ascending
  const double top = std::max(vals(dim - 1), 0.0);
  int rank = 0;
  for (int i = 0; i < dim; ++i) {
    if (vals(i) > 1e-12 * top && vals(i) > 0.0) ++rank;
  }

  FilterBank bank;
  bank.side = side;
  const int keep = std::max(1, std::min(count, rank));
  bank.truncated = keep < count;
  for (int l = 0; l < keep; ++l) {
    Eigen::VectorXd v = eig.eigenvectors().col(dim - 1 - l);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    Eigen::MatrixXd f(side, side);
    for (int a = 0; a < side; ++a) {
      for (int b = 0; b < side; ++b) f(a, b) = v(a * side + b);
    }
    bank.filters.push_back(std::move(f));
    bank.eigenvalues.push_back(vals(dim - 1 - l));
  }
  return bank;
}

FilterBank learn_stage1_filters(std::span<const Eigen::MatrixXd> patches, int side, int l1) {
  return learn_filters(patches, side, l1);
}

FilterBank learn_stage2_filters(std::span<const Eigen::MatrixXd> stage1_outputs, int side,
                                int l2) {
  return learn_filters(stage1_outputs, side, l2);
}

// ---------------------------------------------------------------------------

double LinearSvm::decision(const FeatureVector& x) const {
  double s = bias;
  for (FeatureVector::InnerIterator it(x); it; ++it) s += weights(it.index()) * it.value();
  return s;
}

double LinearSvm::decision(const Eigen::VectorXd& x) const { return weights.dot(x) + bias; }

LinearSvm train_svm(std::span<const FeatureVector> features, std::span<const bool> labels,
                    const SvmParams& params) {
  const std::size_t n = features.size();
  if (n != labels.size()) throw Error("train_svm: feature/label count mismatch");
  if (n == 0) throw Error("train_svm: empty training set");
  const bool has_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
  if (!has_pos || !has_neg) throw Error("train_svm: both classes must be present");
  if (!(params.c > 0.0)) throw ConfigError("train_svm: C must be > 0");

  const Eigen::Index dim = features.front().size();
  LinearSvm svm;
  svm.weights = Eigen::VectorXd::Zero(dim);
  double wb = 0.0;  // weight of the constant bias feature

  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(n) - n_pos;
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qii(n);
  std::vector<double> y(n);
  std::vector<double> upper(n, params.c);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != dim) throw Error("train_svm: features differ in length");
    qii[i] = features[i].squaredNorm() + 1.0;
    y[i] = labels[i] ? 1.0 : -1.0;
    if (params.balanced) {
      upper[i] = params.c * static_cast<double>(n) / (2.0 * (labels[i] ? n_pos : n_neg));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(params.rng_seed, 0x5f3));

  for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      double wx = wb;
      for (FeatureVector::InnerIterator it(features[i]); it; ++it) {
        wx += svm.weights(it.index()) * it.value();
      }
      const double g = y[i] * wx - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] == upper[i]) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qii[i], 0.0, upper[i]);
        const double delta = (alpha[i] - old) * y[i];
        for (FeatureVector::InnerIterator it(features[i]); it; ++it) {
          svm.weights(it.index()) += delta * it.value();
        }
        wb += delta;
      }
    }
    svm.epochs = epoch + 1;
    if (pg_max - pg_min < params.tolerance) {
      svm.converged = true;
      break;
    }
  }
  svm.bias = wb;
  return svm;
}

LinearSvm train_svm(const Eigen::MatrixXd& features, std::span<const bool> labels,
                    const SvmParams& params) {
  std::vector<FeatureVector> rows;
  rows.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    rows.emplace_back(features.row(i).transpose().sparseView());
  }
  return train_svm(rows, labels, params);
}

// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> resolve_blocks(const HistogramBlocks& blocks, int patch_side) {
  const int br = blocks.rows > 0 ? blocks.rows : patch_side;
  const int bc = blocks.cols > 0 ? blocks.cols : patch_side;
  return {br, bc};
}

int stride_for(int block, double overlap) {
  return std::max(1, static_cast<int>(std::lround(block * (1.0 - overlap))));
}

int blocks_along(int extent, int block, int stride) {
  if (block > extent) return 0;
  return (extent - block) / stride + 1;
}

std::vector<Eigen::MatrixXi> hash_patch(const FilterBank& stage1, const FilterBank& stage2,
                                        const Eigen::MatrixXd& patch) {
  std::vector<Eigen::MatrixXi> maps;
  maps.reserve(stage1.filters.size());
  for (const auto& w1 : stage1.filters) {
    const Eigen::MatrixXd first = filter_same(patch, w1);
    Eigen::MatrixXi t = Eigen::MatrixXi::Zero(patch.rows(), patch.cols());
    for (std::size_t p = 0; p < stage2.filters.size(); ++p) {
      const Eigen::MatrixXd second = filter_same(first, stage2.filters[p]);
      const int bit = 1 << p;
      for (Eigen::Index i = 0; i < second.size(); ++i) {
        if (second.data()[i] > 0.0) t.data()[i] += bit;
      }
    }
    maps.push_back(std::move(t));
  }
  return maps;
}

}  // namespace

FeatureVector extract_features(const FilterBank& stage1, const FilterBank& stage2, int patch_side,
                               const HistogramBlocks& blocks, const Eigen::MatrixXd& patch) {
  if (patch.rows() != 2 * patch_side || patch.cols() != patch_side) {
    throw Error("extract_features: patch must be 2k x k");
  }
  const auto [br, bc] = resolve_blocks(blocks, patch_side);
  const int sr = stride_for(br, blocks.overlap);
  const int sc = stride_for(bc, blocks.overlap);
  const int nbr = blocks_along(2 * patch_side, br, sr);
  const int nbc = blocks_along(patch_side, bc, sc);
  const int bins = 1 << stage2.count();
  const Eigen::Index length =
      static_cast<Eigen::Index>(stage1.count()) * nbr * nbc * bins;

  FeatureVector feat(length);
  const auto maps = hash_patch(stage1, stage2, patch);
  std::vector<double> hist(static_cast<std::size_t>(bins));
  Eigen::Index offset = 0;
  for (const auto& t : maps) {
    for (int bi = 0; bi < nbr; ++bi) {
      for (int bj = 0; bj < nbc; ++bj) {
        std::fill(hist.begin(), hist.end(), 0.0);
        for (int r = bi * sr; r < bi * sr + br; ++r) {
          for (int c = bj * sc; c < bj * sc + bc; ++c) hist[static_cast<std::size_t>(t(r, c))] += 1.0;
        }
        for (int v = 0; v < bins; ++v) {
          if (hist[v] != 0.0) feat.insertBack(offset + v) = hist[v];
        }
        offset += bins;
      }
    }
  }
  return feat;
}

PcaNetModel::PcaNetModel(int patch_side, PcaNetParams params, FilterBank stage1,
                         FilterBank stage2, LinearSvm svm)
    : trained_(true),
      patch_side_(patch_side),
      params_(std::move(params)),
      stage1_(std::move(stage1)),
      stage2_(std::move(stage2)),
      svm_(std::move(svm)) {}

void PcaNetModel::require_trained() const {
  if (!trained_) throw Error("PCANet model is not trained");
}

std::pair<int, int> PcaNetModel::block_geometry() const {
  const auto [br, bc] = resolve_blocks(params_.blocks, patch_side_);
  const int nbr = blocks_along(2 * patch_side_, br, stride_for(br, params_.blocks.overlap));
  const int nbc = blocks_along(patch_side_, bc, stride_for(bc, params_.blocks.overlap));
  return {nbr, nbc};
}

int PcaNetModel::block_count() const {
  const auto [nbr, nbc] = block_geometry();
  return nbr * nbc;
}

int PcaNetModel::feature_length() const {
  return stage1_.count() * block_count() * (1 << stage2_.count());
}

std::vector<Eigen::MatrixXi> PcaNetModel::hashed_maps(const Eigen::MatrixXd& patch) const {
  require_trained();
  return hash_patch(stage1_, stage2_, patch);
}

FeatureVector PcaNetModel::extract_features(const Eigen::MatrixXd& patch) const {
  require_trained();
  return tpobdl::extract_features(stage1_, stage2_, patch_side_, params_.blocks, patch);
}

bool PcaNetModel::classify(const Eigen::MatrixXd& patch) const {
  return svm_.predict(extract_features(patch));
}

PcaNetModel train_pcanet(std::span<const Eigen::MatrixXd> patches, std::span<const bool> labels,
                         int patch_side, const PcaNetParams& params) {
  if (patches.size() != labels.size()) throw Error("train_pcanet: patch/label count mismatch");
  if (params.filter_side > patch_side) {
    throw ConfigError("train_pcanet: filter side must not exceed patch side");
  }
  FilterBank stage1 = learn_stage1_filters(patches, params.filter_side, params.l1);

  std::vector<Eigen::MatrixXd> first(patches.size() * stage1.filters.size());
  parallel_for(patches.size(), [&](std::size_t i) {
    for (std::size_t l = 0; l < stage1.filters.size(); ++l) {
      first[i * stage1.filters.size() + l] = filter_same(patches[i], stage1.filters[l]);
    }
  });
  FilterBank stage2 = learn_stage2_filters(first, params.filter_side, params.l2);
  first.clear();

  std::vector<FeatureVector> feats(patches.size());
  parallel_for(patches.size(), [&](std::size_t i) {
    feats[i] = extract_features(stage1, stage2, patch_side, params.blocks, patches[i]);
  });
  LinearSvm svm = train_svm(feats, labels, params.svm);
  return PcaNetModel(patch_side, params, std::move(stage1), std::move(stage2), std::move(svm));
}

// ---------------------------------------------------------------------------
// Binary container, all fields little-endian:
//   char[8]  magic "TPOBDLPN"
//   u32      version (1)
//   i32      patch_side, filter_side, l1_requested, l2_requested,
//            block_rows, block_cols
//   f64      block_overlap
//   i32      stage1 count, stage2 count
//   f64[]    stage1 eigenvalues, then filters (side*side each, row-major)
//   f64[]    stage2 eigenvalues, then filters
//   i32      svm dimension
//   f64[]    svm weights, then bias

namespace {

constexpr char kMagic[8] = {'T', 'P', 'O', 'B', 'D', 'L', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw IoError("truncated PCANet model file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_bank(std::ostream& out, const FilterBank& bank) {
  for (double e : bank.eigenvalues) put(out, e);
  for (const auto& f : bank.filters) {
    for (int a = 0; a < bank.side; ++a) {
      for (int b = 0; b < bank.side; ++b) put(out, f(a, b));
    }
  }
}

FilterBank take_bank(std::istream& in, int side, int count) {
  FilterBank bank;
  bank.side = side;
  for (int i = 0; i < count; ++i) bank.eigenvalues.push_back(take<double>(in));
  for (int i = 0; i < count; ++i) {
    Eigen::MatrixXd f(side, side);
    for (int a = 0; a < side; ++a) {
      for (int b = 0; b < side; ++b) f(a, b) = take<double>(in);
    }
    bank.filters.push_back(std::move(f));
  }
  return bank;
}

}  // namespace

void PcaNetModel::save(const std::filesystem::path& path) const {
  require_trained();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::int32_t>(out, patch_side_);
  put<std::int32_t>(out, params_.filter_side);
  put<std::int32_t>(out, params_.l1);
  put<std::int32_t>(out, params_.l2);
  put<std::int32_t>(out, params_.blocks.rows);
  put<std::int32_t>(out, params_.blocks.cols);
  put<double>(out, params_.blocks.overlap);
  put<std::int32_t>(out, stage1_.count());
  put<std::int32_t>(out, stage2_.count());
  put_bank(out, stage1_);
  put_bank(out, stage2_);
  put<std::int32_t>(out, static_cast<std::int32_t>(svm_.weights.size()));
  for (Eigen::Index i = 0; i < svm_.weights.size(); ++i) put(out, svm_.weights(i));
  put(out, svm_.bias);
  if (!out) throw IoError("write failed for " + path.string());
}

PcaNetModel PcaNetModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, kMagic)) {
    throw IoError("not a PCANet model file: " + path.string());
  }
  const auto version = take<std::uint32_t>(in);
  if (version != kVersion) throw IoError("unsupported PCANet model version");
  PcaNetParams params;
  const int patch_side = take<std::int32_t>(in);
  params.filter_side = take<std::int32_t>(in);
  params.l1 = take<std::int32_t>(in);
  params.l2 = take<std::int32_t>(in);
  params.blocks.rows = take<std::int32_t>(in);
  params.blocks.cols = take<std::int32_t>(in);
  params.blocks.overlap = take<double>(in);
  const int n1 = take<std::int32_t>(in);
  const int n2 = take<std::int32_t>(in);
  if (patch_side < 1 || params.filter_side < 1 || n1 < 0 || n2 < 0 || n2 > 30) {
    throw IoError("corrupt PCANet model header");
  }
  FilterBank s1 = take_bank(in, params.filter_side, n1);
  FilterBank s2 = take_bank(in, params.filter_side, n2);
  s1.truncated = n1 < params.l1;
  s2.truncated = n2 < params.l2;
  LinearSvm svm;
  const int dim = take<std::int32_t>(in);
  if (dim < 0) throw IoError("corrupt PCANet model header");
  svm.weights.resize(dim);
  for (int i = 0; i < dim; ++i) svm.weights(i) = take<double>(in);
  svm.bias = take<double>(in);
  svm.converged = true;
  return PcaNetModel(patch_side, params, std::move(s1), std::move(s2), std::move(svm));
}

bool operator==(const PcaNetModel& a, const PcaNetModel& b) {
  const auto same_bank = [](const FilterBank& x, const FilterBank& y) {
    if (x.side != y.side || x.filters.size() != y.filters.size()) return false;
    for (std::size_t i = 0; i < x.filters.size(); ++i) {
      if (x.filters[i] != y.filters[i] || x.eigenvalues[i] != y.eigenvalues[i]) return false;
    }
    return true;
  };
  return a.trained_ == b.trained_ && a.patch_side_ == b.patch_side_ &&
         a.params_.filter_side == b.params_.filter_side && a.params_.l1 == b.params_.l1 &&
         a.params_.l2 == b.params_.l2 && a.params_.blocks.rows == b.params_.blocks.rows &&
         a.params_.blocks.cols == b.params_.blocks.cols &&
         a.params_.blocks.overlap == b.params_.blocks.overlap && same_bank(a.stage1_, b.stage1_) &&
         same_bank(a.stage2_, b.stage2_) && a.svm_.weights == b.svm_.weights &&
         a.svm_.bias == b.svm_.bias;
}

}  // namespace tpobdl
