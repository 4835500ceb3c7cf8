#include "tpobdl/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <iterator>
#include <memory>
#include <tuple>
#include <type_traits>
#include <numeric>
#include <random>
#include <sstream>

#include "tpobdl/error.hpp"
#include "tpobdl/parallel.hpp"
#include "tpobdl/random.hpp"

namespace tpobdl {

namespace {

// Seed streams derived from PipelineConfig::seed.
constexpr std::uint64_t kStreamReshape1 = 11;
constexpr std::uint64_t kStreamFcm1 = 12;
constexpr std::uint64_t kStreamSvm1 = 13;
constexpr std::uint64_t kStreamBalance1 = 14;
constexpr std::uint64_t kStreamReshape2 = 21;
constexpr std::uint64_t kStreamFcm2 = 22;
constexpr std::uint64_t kStreamSvm2 = 23;
constexpr std::uint64_t kStreamBalance2 = 24;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct ConfigKey {
  const char* section;
  const char* key;
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
ConfigKey int_key(const char* section, const char* key, T PipelineConfig::*field) {
  return {section, key,
          [field](PipelineConfig& c, const std::string& v, const std::string& what) {
            c.*field = static_cast<T>(parse_int(v, what));
          },
          [field](const PipelineConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey real_key(const char* section, const char* key, double PipelineConfig::*field) {
  return {section, key,
          [field](PipelineConfig& c, const std::string& v, const std::string& what) {
            c.*field = parse_double(v, what);
          },
          [field](const PipelineConfig& c) { return fmt(c.*field); }};
}

template <typename Member, typename T>
ConfigKey nested_key(const char* section, const char* key, Member PipelineConfig::*outer,
                     T Member::*inner) {
  return {section, key,
          [outer, inner](PipelineConfig& c, const std::string& v, const std::string& what) {
            if constexpr (std::is_floating_point_v<T>) {
              c.*outer.*inner = parse_double(v, what);
            } else {
              c.*outer.*inner = static_cast<T>(parse_int(v, what));
            }
          },
          [outer, inner](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(c.*outer.*inner);
            } else {
              return std::to_string(c.*outer.*inner);
            }
          }};
}

// Keys of the [pcanetN] and [svm] sections reach two levels down.
ConfigKey pcanet_key(const char* section, const char* key, PcaNetParams PipelineConfig::*net,
                     std::function<double&(PcaNetParams&)> ref_d,
                     std::function<int&(PcaNetParams&)> ref_i) {
  return {section, key,
          [=](PipelineConfig& c, const std::string& v, const std::string& what) {
            if (ref_d) {
              ref_d(c.*net) = parse_double(v, what);
            } else {
              ref_i(c.*net) = static_cast<int>(parse_int(v, what));
            }
          },
          [=](const PipelineConfig& c) {
            auto copy = c.*net;
            return ref_d ? fmt(ref_d(copy)) : std::to_string(ref_i(copy));
          }};
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    using P = PcaNetParams;
    std::vector<ConfigKey> k;
    k.push_back(int_key("phase1", "superpixels", &PipelineConfig::sp1));
    k.push_back(int_key("phase1", "patch_size", &PipelineConfig::k1));
    k.push_back(int_key("phase2", "superpixels", &PipelineConfig::sp2));
    k.push_back(int_key("phase2", "patch_size", &PipelineConfig::k2));
    k.push_back(real_key("slic", "compactness", &PipelineConfig::compactness));
    k.push_back(int_key("slic", "iterations", &PipelineConfig::slic_iterations));
    k.push_back(real_key("slic", "min_segment_fraction", &PipelineConfig::min_segment_fraction));
    k.push_back(nested_key("fcm", "fuzzifier", &PipelineConfig::fcm, &FcmParams::fuzzifier));
    k.push_back(nested_key("fcm", "tolerance", &PipelineConfig::fcm, &FcmParams::tolerance));
    k.push_back(nested_key("fcm", "max_iterations", &PipelineConfig::fcm, &FcmParams::max_iterations));
    k.push_back(nested_key("voting", "changed", &PipelineConfig::vote, &VoteThresholds::changed));
    k.push_back(nested_key("voting", "intermediate", &PipelineConfig::vote, &VoteThresholds::intermediate));
    for (auto [sec, net] : {std::pair{"pcanet1", &PipelineConfig::pcanet1},
                            std::pair{"pcanet2", &PipelineConfig::pcanet2}}) {
      k.push_back(pcanet_key(sec, "filter_size", net, {}, [](P& p) -> int& { return p.filter_side; }));
      k.push_back(pcanet_key(sec, "l1", net, {}, [](P& p) -> int& { return p.l1; }));
      k.push_back(pcanet_key(sec, "l2", net, {}, [](P& p) -> int& { return p.l2; }));
      k.push_back(pcanet_key(sec, "block_rows", net, {}, [](P& p) -> int& { return p.blocks.rows; }));
      k.push_back(pcanet_key(sec, "block_cols", net, {}, [](P& p) -> int& { return p.blocks.cols; }));
      k.push_back(pcanet_key(sec, "block_overlap", net, [](P& p) -> double& { return p.blocks.overlap; }, {}));
      k.push_back(pcanet_key(sec, "svm_c", net, [](P& p) -> double& { return p.svm.c; }, {}));
      k.push_back(pcanet_key(sec, "svm_tolerance", net, [](P& p) -> double& { return p.svm.tolerance; }, {}));
      k.push_back(pcanet_key(sec, "svm_max_epochs", net, {}, [](P& p) -> int& { return p.svm.max_epochs; }));
      k.push_back({sec, "svm_balanced",
                   [net](PipelineConfig& c, const std::string& v, const std::string& what) {
                     (c.*net).svm.balanced = parse_bool(v, what);
                   },
                   [net](const PipelineConfig& c) {
                     return std::string((c.*net).svm.balanced ? "true" : "false");
                   }});
    }
    k.push_back(nested_key("lrsd", "epsilon", &PipelineConfig::lrsd, &LrsdParams::epsilon));
    k.push_back(nested_key("lrsd", "epsilon_scale", &PipelineConfig::lrsd, &LrsdParams::epsilon_scale));
    k.push_back(nested_key("lrsd", "lambda", &PipelineConfig::lrsd, &LrsdParams::lambda));
    k.push_back(nested_key("lrsd", "mu0", &PipelineConfig::lrsd, &LrsdParams::mu0));
    k.push_back(nested_key("lrsd", "rho", &PipelineConfig::lrsd, &LrsdParams::rho));
    k.push_back(nested_key("lrsd", "mu_max", &PipelineConfig::lrsd, &LrsdParams::mu_max));
    k.push_back(nested_key("lrsd", "tolerance", &PipelineConfig::lrsd, &LrsdParams::tolerance));
    k.push_back(nested_key("lrsd", "max_iterations", &PipelineConfig::lrsd, &LrsdParams::max_iterations));
    k.push_back(real_key("run", "log_epsilon", &PipelineConfig::log_epsilon));
    k.push_back(real_key("run", "max_imbalance", &PipelineConfig::max_imbalance));
    k.push_back({"run", "seed",
                 [](PipelineConfig& c, const std::string& v, const std::string& what) {
                   c.seed = parse_uint64(v, what);
                 },
                 [](const PipelineConfig& c) { return std::to_string(c.seed); }});
    return k;
  }();
  return keys;
}

// Indices of `idx` kept after down-sampling to at most `limit`, original
// order preserved.
std::vector<int> downsample(std::vector<int> idx, std::size_t limit, std::uint64_t seed) {
  if (idx.size() <= limit) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Positive/negative training indices with the imbalance cap applied.
std::pair<std::vector<int>, std::vector<int>> balance(std::vector<int> pos, std::vector<int> neg,
                                                      double max_ratio, std::uint64_t seed,
                                                      std::vector<std::string>& warnings) {
  if (pos.empty() || neg.empty() || max_ratio <= 0.0) return {pos, neg};
  const auto cap = [&](std::size_t minority) {
    return static_cast<std::size_t>(std::floor(max_ratio * static_cast<double>(minority)));
  };
  if (pos.size() > cap(neg.size())) {
    warnings.push_back("training set imbalance: positive class down-sampled from " +
                       std::to_string(pos.size()) + " to " + std::to_string(cap(neg.size())));
    pos = downsample(std::move(pos), cap(neg.size()), seed);
  } else if (neg.size() > cap(pos.size())) {
    warnings.push_back("training set imbalance: negative class down-sampled from " +
                       std::to_string(neg.size()) + " to " + std::to_string(cap(pos.size())));
    neg = downsample(std::move(neg), cap(pos.size()), seed);
  }
  return {pos, neg};
}

// Shared tail of both phases: FCM labels in, per-segment decisions out.
/// Every row equal to the mean row up to round-off.
bool near_uniform(const Eigen::MatrixXd& spdi) {
  const Eigen::RowVectorXd mean = spdi.colwise().mean();
  const double scale = std::max(1.0, mean.cwiseAbs().maxCoeff());
  return (spdi.rowwise() - mean).cwiseAbs().maxCoeff() <= 1e-9 * scale;
}

struct Grouped {
  std::vector<int> segment_of_vector;          // segment id per vector
  std::vector<std::vector<int>> vectors_of;    // vector indices per segment
};

Grouped group(const std::vector<PatchLayout>& layouts, int segment_count) {
  Grouped g;
  g.vectors_of.resize(segment_count);
  g.segment_of_vector.reserve(layouts.size());
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    g.segment_of_vector.push_back(layouts[i].segment_id);
    g.vectors_of[layouts[i].segment_id].push_back(static_cast<int>(i));
  }
  return g;
}

void count_tiers(const std::vector<Tier>& tiers, int& low, int& mid, int& high) {
  for (Tier t : tiers) {
    if (t == Tier::kLow) ++low;
    if (t == Tier::kMid) ++mid;
    if (t == Tier::kHigh) ++high;
  }
}

void check_pair(const SarImage& i1, const SarImage& i2) {
  if (!i1.same_shape(i2)) {
    throw DimensionError("image sizes differ: " + std::to_string(i1.height()) + "x" +
                         std::to_string(i1.width()) + " vs " + std::to_string(i2.height()) + "x" +
                         std::to_string(i2.width()));
  }
  if (i1.size() == 0) throw DimensionError("empty input images");
}

// Classifies the vectors of every intermediate segment and applies a
// per-segment majority (ties go to the positive class).
void classify_intermediate(PhaseResult& out, const Grouped& g, const PcaNetModel& model,
                           const std::vector<Eigen::MatrixXd>& patches) {
  std::vector<int> todo;
  for (std::size_t s = 0; s < out.segments.size(); ++s) {
    if (out.segments[s].processed && out.segments[s].vote == Tier::kMid) {
      for (int v : g.vectors_of[s]) todo.push_back(v);
    }
  }
  std::vector<char> verdict(patches.size(), 0);
  parallel_for(todo.size(), [&](std::size_t i) {
    verdict[todo[i]] = model.classify(patches[todo[i]]) ? 1 : 0;
  });
  for (std::size_t s = 0; s < out.segments.size(); ++s) {
    auto& d = out.segments[s];
    if (!d.processed || d.vote != Tier::kMid) continue;
    int yes = 0;
    for (int v : g.vectors_of[s]) yes += verdict[v];
    const int no = static_cast<int>(g.vectors_of[s].size()) - yes;
    d.positive = yes >= no;
    d.by_classifier = true;
    (d.positive ? out.stats.classified_positive : out.stats.classified_negative)++;
  }
}

// Training + classification step shared by both phases. Returns false when a
// confident class is empty.
bool learn_and_resolve(PhaseResult& out, const Grouped& g, const std::vector<Tier>& tiers,
                       const std::vector<Eigen::MatrixXd>& patches, int k,
                       const PcaNetParams& params, const PipelineConfig& cfg,
                       std::uint64_t svm_stream, std::uint64_t balance_stream) {
  const bool any_mid = std::any_of(out.segments.begin(), out.segments.end(), [](const auto& d) {
    return d.processed && d.vote == Tier::kMid;
  });
  if (!any_mid) return true;
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    if (tiers[i] == Tier::kHigh) pos.push_back(static_cast<int>(i));
    if (tiers[i] == Tier::kLow) neg.push_back(static_cast<int>(i));
  }
  if (pos.empty() || neg.empty()) return false;
  auto [p, n] = balance(std::move(pos), std::move(neg), cfg.max_imbalance,
                        derive_seed(cfg.seed, balance_stream), out.warnings);
  std::vector<Eigen::MatrixXd> train;
  std::vector<char> lab;
  std::vector<int> all;
  all.reserve(p.size() + n.size());
  all.insert(all.end(), p.begin(), p.end());
  all.insert(all.end(), n.begin(), n.end());
  std::sort(all.begin(), all.end());
  for (int i : all) {
    train.push_back(patches[i]);
    lab.push_back(tiers[i] == Tier::kHigh ? 1 : 0);
  }
  std::unique_ptr<bool[]> flags(new bool[lab.size()]);
  for (std::size_t i = 0; i < lab.size(); ++i) flags[i] = lab[i] != 0;
  out.stats.train_positive = static_cast<int>(p.size());
  out.stats.train_negative = static_cast<int>(n.size());
  PcaNetParams net = params;
  net.svm.rng_seed = derive_seed(cfg.seed, svm_stream);
  out.model = train_pcanet(train, std::span<const bool>(flags.get(), lab.size()), k, net);
  classify_intermediate(out, g, *out.model, patches);
  return true;
}

void apply_votes(PhaseResult& out, const Grouped& g, const std::vector<Tier>& tiers,
                 const VoteThresholds& vote) {
  for (std::size_t s = 0; s < out.segments.size(); ++s) {
    auto& d = out.segments[s];
    if (!d.processed) continue;
    std::vector<Tier> local;
    local.reserve(g.vectors_of[s].size());
    for (int v : g.vectors_of[s]) local.push_back(tiers[v]);
    d.vector_count = static_cast<int>(local.size());
    d.vote = vote_label(local, vote);
    d.positive = d.vote == Tier::kHigh;
    if (d.vote == Tier::kLow) ++out.stats.votes_low;
    if (d.vote == Tier::kMid) ++out.stats.votes_mid;
    if (d.vote == Tier::kHigh) ++out.stats.votes_high;
  }
}

RealRaster difference_raster(const std::vector<DiffVector>& diffs,
                             const std::vector<PatchLayout>& layouts, int w, int h) {
  RealRaster r(w, h, 0.0);
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    for (std::size_t j = 0; j < layouts[i].origin.size(); ++j) {
      r[layouts[i].origin[j]] = diffs[i].values[j];
    }
  }
  return r;
}

}  // namespace

ResolvedCounts resolve_counts(const PipelineConfig& cfg, int width, int height) {
  const long long mn = static_cast<long long>(width) * height;
  const auto scaled = [&](int k, int reference_sp) {
    // Reference pixels per superpixel, expressed as a multiple of the
    // reference k^2 (k1 = 7, k2 = 3), carried over to the requested k.
    const int ref_k = reference_sp == kReferenceSp1 ? 7 : 3;
    const double ratio = (kReferencePixels / reference_sp) / (ref_k * ref_k);
    const double n = static_cast<double>(mn) / (static_cast<double>(k) * k * ratio);
    return static_cast<int>(std::clamp<long long>(std::llround(n), 1, mn));
  };
  ResolvedCounts rc;
  rc.sp1 = cfg.sp1 > 0 ? static_cast<int>(std::min<long long>(cfg.sp1, mn))
                       : scaled(cfg.k1, kReferenceSp1);
  rc.sp2 = cfg.sp2 > 0 ? static_cast<int>(std::min<long long>(cfg.sp2, mn))
                       : scaled(cfg.k2, kReferenceSp2);
  return rc;
}

std::vector<std::string> check_config(const PipelineConfig& cfg, int width, int height) {
  const auto bad = [](const std::string& m) { throw ConfigError(m); };
  if (cfg.sp1 < 0 || cfg.sp2 < 0) bad("superpixel counts must be >= 0 (0 = auto)");
  if (cfg.k1 < 1 || cfg.k2 < 1) bad("patch_size must be >= 1");
  if (!(cfg.compactness > 0.0)) bad("slic.compactness must be > 0");
  if (cfg.slic_iterations < 1) bad("slic.iterations must be >= 1");
  if (!(cfg.min_segment_fraction >= 0.0 && cfg.min_segment_fraction < 1.0)) {
    bad("slic.min_segment_fraction must lie in [0, 1)");
  }
  if (!(cfg.fcm.fuzzifier > 1.0 || cfg.fcm.fuzzifier == 0.0)) {
    bad("fcm.fuzzifier must be > 1, or 0 for automatic selection");
  }
  if (!(cfg.fcm.tolerance > 0.0)) bad("fcm.tolerance must be > 0");
  if (cfg.fcm.max_iterations < 1) bad("fcm.max_iterations must be >= 1");
  if (!(cfg.vote.intermediate > 0.0 && cfg.vote.intermediate < cfg.vote.changed &&
        cfg.vote.changed <= 1.0)) {
    bad("voting thresholds must satisfy 0 < intermediate < changed <= 1");
  }
  for (auto [name, net, k] : {std::tuple{"pcanet1", &cfg.pcanet1, cfg.k1},
                              std::tuple{"pcanet2", &cfg.pcanet2, cfg.k2}}) {
    const std::string n = name;
    if (net->filter_side < 1 || net->filter_side > k) {
      bad(n + ".filter_size must lie in [1, patch_size]");
    }
    if (net->l1 < 1 || net->l2 < 1) bad(n + ": l1 and l2 must be >= 1");
    if (net->l2 > 16) bad(n + ".l2 must be <= 16 (2^l2 histogram bins)");
    if (net->blocks.rows < 0 || net->blocks.cols < 0 || net->blocks.rows > 2 * k ||
        net->blocks.cols > k) {
      bad(n + ": histogram block must fit the 2k x k patch");
    }
    if (!(net->blocks.overlap >= 0.0 && net->blocks.overlap < 1.0)) {
      bad(n + ".block_overlap must lie in [0, 1)");
    }
    if (!(net->svm.c > 0.0) || !(net->svm.tolerance > 0.0) || net->svm.max_epochs < 1) {
      bad(n + ": svm_c, svm_tolerance and svm_max_epochs must be positive");
    }
  }
  if (cfg.lrsd.epsilon < 0.0 || !(cfg.lrsd.epsilon_scale > 0.0)) {
    bad("lrsd.epsilon must be >= 0 and lrsd.epsilon_scale > 0");
  }
  if (!(cfg.lrsd.lambda > 0.0 && cfg.lrsd.lambda < 1.0)) bad("lrsd.lambda must lie in (0, 1)");
  if (!(cfg.lrsd.rho > 1.0) || !(cfg.lrsd.tolerance > 0.0) || cfg.lrsd.max_iterations < 1 ||
      cfg.lrsd.mu0 < 0.0 || !(cfg.lrsd.mu_max > 0.0)) {
    bad("lrsd: rho > 1, tolerance > 0, max_iterations >= 1, mu0 >= 0 and mu_max > 0 required");
  }
  if (!(cfg.log_epsilon > 0.0)) bad("run.log_epsilon must be > 0");
  if (cfg.max_imbalance < 0.0) bad("run.max_imbalance must be >= 0 (0 disables the cap)");

  if (cfg.k2 > cfg.k1) bad("phase2.patch_size must not exceed phase1.patch_size");
  const ResolvedCounts counts = resolve_counts(cfg, width, height);
  if (counts.sp2 < counts.sp1) bad("phase2.superpixels must not be below phase1.superpixels");

  std::vector<std::string> warnings;
  const long long mn = static_cast<long long>(width) * height;
  for (auto [name, sp, k] : {std::tuple{"phase1", counts.sp1, cfg.k1},
                             std::tuple{"phase2", counts.sp2, cfg.k2}}) {
    const double ideal = static_cast<double>(mn) / (k * k);
    if (sp > 2.0 * ideal || 2.0 * sp < ideal) {
      warnings.push_back(std::string(name) +
                         ": superpixel size is far from patch_size^2 pixels");
    }
  }
  if (cfg.sp1 > mn) warnings.push_back("phase1.superpixels exceeds the pixel count; clamped");
  if (cfg.sp2 > mn) warnings.push_back("phase2.superpixels exceeds the pixel count; clamped");
  if (cfg.lrsd.lambda <= 0.5) {
    warnings.push_back("lrsd.lambda <= 0.5 lets the sparse term absorb all of phi (U = 0)");
  }
  if (cfg.pcanet1.filter_side % 2 == 0 || cfg.pcanet2.filter_side % 2 == 0) {
    warnings.push_back("even filter_size: the filter centre is shifted by half a pixel");
  }
  return warnings;
}

PipelineConfig parse_pipeline_config(const std::vector<KvSection>& sections,
                                     std::vector<std::string>* defaulted) {
  PipelineConfig cfg;
  std::vector<std::string> seen;
  for (const auto& s : sections) {
    if (!s.name.empty()) {
      throw ConfigError("config section [" + s.type + " " + s.name + "]: names are not allowed");
    }
    bool section_known = false;
    for (const auto& key : config_keys()) section_known = section_known || s.type == key.section;
    if (!section_known) {
      throw ConfigError("unknown config section [" + s.type + "] at line " + std::to_string(s.line));
    }
    for (const auto& [k, v] : s.entries) {
      const ConfigKey* match = nullptr;
      for (const auto& key : config_keys()) {
        if (s.type == key.section && k == key.key) match = &key;
      }
      const std::string what = s.type + "." + k;
      if (match == nullptr) {
        throw ConfigError("unknown config key '" + what + "' at line " +
                          std::to_string(s.entry_lines.at(k)));
      }
      if (std::find(seen.begin(), seen.end(), what) != seen.end()) {
        throw ConfigError("config key '" + what + "' given twice");
      }
      match->set(cfg, v, what);
      seen.push_back(what);
    }
  }
  if (defaulted != nullptr) {
    defaulted->clear();
    for (const auto& key : config_keys()) {
      const std::string what = std::string(key.section) + "." + key.key;
      if (std::find(seen.begin(), seen.end(), what) == seen.end()) defaulted->push_back(what);
    }
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::vector<std::string>* defaulted) {
  return parse_pipeline_config(load_key_values(path), defaulted);
}

std::string format_config(const PipelineConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& key : config_keys()) {
    if (section != key.section) {
      if (!section.empty()) os << '\n';
      section = key.section;
      os << '[' << section << "]\n";
    }
    os << key.key << " = " << key.get(cfg) << '\n';
  }
  return os.str();
}

PhaseResult run_phase1(const SarImage& i1, const SarImage& i2, const PipelineConfig& cfg) {
  check_pair(i1, i2);
  const auto t0 = Clock::now();
  const int w = i1.width();
  const int h = i1.height();
  PhaseResult out;
  out.phase = 1;
  out.warnings = check_config(cfg, w, h);
  const ResolvedCounts counts = resolve_counts(cfg, w, h);

  SlicParams slic{counts.sp1, cfg.compactness, cfg.slic_iterations, cfg.min_segment_fraction, cfg.seed};
  out.superpixels = slic_segment(i1, slic);
  const SuperpixelMap& map = out.superpixels;
  const int segs = map.segment_count();
  out.stats.superpixels = segs;
  out.stats.processed_superpixels = segs;
  out.segments.assign(segs, SegmentDecision{});
  for (auto& d : out.segments) d.processed = true;

  const auto layouts = plan_all(map, cfg.k1, derive_seed(cfg.seed, kStreamReshape1));
  std::vector<std::pair<PatchVector, PatchVector>> pairs;
  pairs.reserve(layouts.size());
  for (const auto& l : layouts) pairs.emplace_back(gather(i1.raster(), l, 1), gather(i2.raster(), l, 2));
  const auto diffs = build_spdi(pairs);
  out.stats.vectors = static_cast<int>(diffs.size());
  out.debug["difference"] = difference_raster(diffs, layouts, w, h);

  const Grouped g = group(layouts, segs);
  out.pixel_map = LabelMap(w, h, labels::kUnchanged);

  const bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](const DiffVector& d) {
    return std::all_of(d.values.begin(), d.values.end(), [](double v) { return v == 0.0; });
  });
  if (all_zero) {
    out.stats.fcm_degenerate = true;
    out.warnings.push_back("images are identical: every superpixel is unchanged");
    out.stats.votes_low = segs;
    for (int s = 0; s < segs; ++s) out.segments[s].vector_count = static_cast<int>(g.vectors_of[s].size());
    out.stats.seconds = seconds_since(t0);
    return out;
  }

  FcmParams fp = cfg.fcm;
  fp.clusters = 3;
  fp.rng_seed = derive_seed(cfg.seed, kStreamFcm1);
  const Eigen::MatrixXd spdi = spdi_matrix(diffs);
  if (near_uniform(spdi)) {
    out.stats.fcm_degenerate = true;
    throw DegenerateClusteringError(
        "phase 1: every difference vector is identical, the three clusters cannot be separated");
  }
  if (!(fp.fuzzifier > 0.0)) fp.fuzzifier = auto_fuzzifier(spdi);
  const FcmResult fr = fcm(spdi, fp);
  out.stats.fcm_iterations = fr.iterations;
  out.stats.fcm_fuzzifier = fp.fuzzifier;
  if (fr.degenerate) {
    out.stats.fcm_degenerate = true;
    throw DegenerateClusteringError(
        "phase 1: every difference vector is identical, the three clusters cannot be separated");
  }
  if (!fr.converged) {
    out.warnings.push_back("phase 1: FCM stopped at max_iterations before converging");
  }
  count_tiers(fr.hard_labels, out.stats.vectors_low, out.stats.vectors_mid, out.stats.vectors_high);
  apply_votes(out, g, fr.hard_labels, cfg.vote);

  std::vector<Eigen::MatrixXd> patches;
  patches.reserve(pairs.size());
  for (const auto& [a, b] : pairs) patches.push_back(make_patch(a.values, b.values, cfg.k1));
  if (!learn_and_resolve(out, g, fr.hard_labels, patches, cfg.k1, cfg.pcanet1, cfg, kStreamSvm1,
                         kStreamBalance1)) {
    throw DegenerateClusteringError(
        "phase 1: intermediate superpixels exist but one confident class is empty");
  }

  for (int s = 0; s < segs; ++s) {
    if (!out.segments[s].positive) continue;
    for (int p : map.segments[s]) out.pixel_map[p] = labels::kChanged;
    out.stats.positive_pixels += static_cast<long long>(map.segments[s].size());
  }
  out.stats.seconds = seconds_since(t0);
  return out;
}

PhaseResult run_phase2(const SarImage& i1, const SarImage& i2, const PhaseResult& phase1,
                       const PipelineConfig& cfg) {
  check_pair(i1, i2);
  if (!i1.same_shape(phase1.pixel_map)) {
    throw DimensionError("phase-1 map does not match the image size");
  }
  const auto t0 = Clock::now();
  const int w = i1.width();
  const int h = i1.height();
  PhaseResult out;
  out.phase = 2;
  out.pixel_map = LabelMap(w, h, labels::kUnchanged);
  const ResolvedCounts counts = resolve_counts(cfg, w, h);

  const auto cc_pixels = std::count(phase1.pixel_map.values().begin(),
                                    phase1.pixel_map.values().end(), labels::kChanged);
  if (cc_pixels == 0) {
    out.warnings.push_back("phase 2: no changed pixels from phase 1, nothing to refine");
    out.stats.seconds = seconds_since(t0);
    return out;
  }

  const SarImage m1 = mask_unchanged(i1, phase1.pixel_map);
  const SarImage m2 = mask_unchanged(i2, phase1.pixel_map);
  SlicParams slic{counts.sp2, cfg.compactness, cfg.slic_iterations, cfg.min_segment_fraction, cfg.seed};
  out.superpixels = slic_segment(m1, slic);
  const SuperpixelMap& map = out.superpixels;
  const int segs = map.segment_count();
  out.stats.superpixels = segs;
  out.segments.assign(segs, SegmentDecision{});

  std::vector<PatchLayout> layouts;
  const std::uint64_t reshape_seed = derive_seed(cfg.seed, kStreamReshape2);
  for (int s = 0; s < segs; ++s) {
    const auto& px = map.segments[s];
    const bool has_cc = std::any_of(px.begin(), px.end(), [&](int p) {
      return phase1.pixel_map[p] == labels::kChanged;
    });
    if (!has_cc) continue;
    out.segments[s].processed = true;
    ++out.stats.processed_superpixels;
    // Masked pixels are already final (UC); only CC pixels feed the vectors.
    std::vector<int> cc;
    for (int p : px) {
      if (phase1.pixel_map[p] == labels::kChanged) cc.push_back(p);
    }
    auto part = plan_reshape(cc, s, cfg.k2, reshape_seed);
    std::move(part.begin(), part.end(), std::back_inserter(layouts));
  }

  const RealRaster l1 = log_transform(m1, cfg.log_epsilon);
  const RealRaster l2 = log_transform(m2, cfg.log_epsilon);
  std::vector<std::pair<PatchVector, PatchVector>> pairs;
  pairs.reserve(layouts.size());
  for (const auto& l : layouts) pairs.emplace_back(gather(l1, l, 1), gather(l2, l, 2));
  out.stats.vectors = static_cast<int>(pairs.size());
  const Grouped g = group(layouts, segs);

  const auto finish = [&]() {
    for (int s = 0; s < segs; ++s) {
      const auto& d = out.segments[s];
      if (!d.processed) continue;
      for (int p : map.segments[s]) {
        if (phase1.pixel_map[p] != labels::kChanged) continue;
        out.pixel_map[p] = d.positive ? labels::kChanged : labels::kFalseChange;
        if (d.positive) ++out.stats.positive_pixels;
      }
    }
    out.stats.seconds = seconds_since(t0);
  };

  const auto all_positive = [&](const std::string& why) {
    out.warnings.push_back(why);
    for (auto& d : out.segments) {
      if (d.processed) d.positive = true;
    }
    finish();
    return out;
  };

  if (pairs.size() < 3) {
    return all_positive("phase 2: fewer than 3 vectors, changed pixels kept as real changes");
  }

  const PairedMatrix phi = assemble_phi(pairs);
  const LrsdSolution sol = solve_lrsd(phi, cfg.lrsd);
  out.stats.lrsd_iterations = sol.iterations;
  out.stats.lrsd_residual = sol.final_residual;
  out.stats.lrsd_converged = sol.converged;
  if (!sol.converged) out.warnings.push_back("phase 2: LRSD stopped at max_iterations");
  const auto restored = restore_vectors(sol, phi);
  const auto diffs = build_spdi(restored);
  out.debug["difference"] = difference_raster(diffs, layouts, w, h);

  const bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](const DiffVector& d) {
    return std::all_of(d.values.begin(), d.values.end(), [](double v) { return v == 0.0; });
  });
  if (all_zero) {
    out.stats.fcm_degenerate = true;
    out.warnings.push_back("phase 2: restored pairs are identical, all changes are false changes");
    for (auto& d : out.segments) d.positive = false;
    finish();
    return out;
  }

  FcmParams fp = cfg.fcm;
  fp.clusters = 3;
  fp.rng_seed = derive_seed(cfg.seed, kStreamFcm2);
  const Eigen::MatrixXd spdi = spdi_matrix(diffs);
  if (near_uniform(spdi)) {
    out.stats.fcm_degenerate = true;
    return all_positive(
        "phase 2: every restored difference vector is identical, changed pixels kept as real "
        "changes");
  }
  if (!(fp.fuzzifier > 0.0)) fp.fuzzifier = auto_fuzzifier(spdi);
  const FcmResult fr = fcm(spdi, fp);
  out.stats.fcm_iterations = fr.iterations;
  out.stats.fcm_fuzzifier = fp.fuzzifier;
  if (!fr.converged) out.warnings.push_back("phase 2: FCM stopped at max_iterations");
  count_tiers(fr.hard_labels, out.stats.vectors_low, out.stats.vectors_mid, out.stats.vectors_high);
  apply_votes(out, g, fr.hard_labels, cfg.vote);

  std::vector<Eigen::MatrixXd> patches;
  patches.reserve(restored.size());
  for (const auto& [a, b] : restored) patches.push_back(make_patch(a.values, b.values, cfg.k2));
  if (!learn_and_resolve(out, g, fr.hard_labels, patches, cfg.k2, cfg.pcanet2, cfg, kStreamSvm2,
                         kStreamBalance2)) {
    out.warnings.push_back(
        "phase 2: one confident class is empty, intermediate superpixels kept as real changes");
    for (auto& d : out.segments) {
      if (d.processed && d.vote == Tier::kMid) d.positive = true;
    }
  }
  finish();
  return out;
}

RunResult run_full(const SarImage& i1, const SarImage& i2, const PipelineConfig& cfg,
                   bool phase1_only) {
  RunResult run;
  run.counts = resolve_counts(cfg, i1.width(), i1.height());
  run.phase1 = run_phase1(i1, i2, cfg);
  run.warnings = run.phase1.warnings;
  if (phase1_only) {
    run.change_map = run.phase1.pixel_map;
    return run;
  }
  run.phase2 = run_phase2(i1, i2, run.phase1, cfg);
  run.warnings.insert(run.warnings.end(), run.phase2->warnings.begin(), run.phase2->warnings.end());
  run.change_map = LabelMap(i1.width(), i1.height(), labels::kUnchanged);
  for (std::size_t p = 0; p < run.change_map.size(); ++p) {
    if (run.phase2->pixel_map[p] == labels::kChanged) run.change_map[p] = labels::kChanged;
  }
  return run;
}

namespace {

void write_phase(std::ostringstream& os, const PhaseResult& r) {
  const auto& s = r.stats;
  os << "\n[phase" << r.phase << "]\n";
  os << "superpixels = " << s.superpixels << '\n';
  os << "processed_superpixels = " << s.processed_superpixels << '\n';
  os << "vectors = " << s.vectors << '\n';
  os << "vectors_low = " << s.vectors_low << '\n';
  os << "vectors_mid = " << s.vectors_mid << '\n';
  os << "vectors_high = " << s.vectors_high << '\n';
  os << "votes_low = " << s.votes_low << '\n';
  os << "votes_mid = " << s.votes_mid << '\n';
  os << "votes_high = " << s.votes_high << '\n';
  os << "fcm_iterations = " << s.fcm_iterations << '\n';
  os << "fcm_fuzzifier = " << fmt(s.fcm_fuzzifier) << '\n';
  os << "fcm_degenerate = " << (s.fcm_degenerate ? "true" : "false") << '\n';
  os << "train_positive = " << s.train_positive << '\n';
  os << "train_negative = " << s.train_negative << '\n';
  os << "classified_positive = " << s.classified_positive << '\n';
  os << "classified_negative = " << s.classified_negative << '\n';
  os << "pcanet_trained = " << (r.model ? "true" : "false") << '\n';
  if (r.model) {
    os << "pcanet_stage1_filters = " << r.model->stage1().count() << '\n';
    os << "pcanet_stage2_filters = " << r.model->stage2().count() << '\n';
    os << "svm_epochs = " << r.model->svm().epochs << '\n';
  }
  if (r.phase == 2) {
    os << "lrsd_iterations = " << s.lrsd_iterations << '\n';
    os << "lrsd_residual = " << fmt(s.lrsd_residual) << '\n';
    os << "lrsd_converged = " << (s.lrsd_converged ? "true" : "false") << '\n';
  }
  os << (r.phase == 1 ? "changed_pixels = " : "real_change_pixels = ") << s.positive_pixels << '\n';
  os << "seconds = " << fmt(s.seconds) << '\n';
}

}  // namespace

std::string format_report(const RunResult& run, const PipelineConfig& cfg,
                          const std::vector<std::string>& defaulted) {
  std::ostringstream os;
  os << "[input]\n";
  os << "rows = " << run.change_map.height() << '\n';
  os << "cols = " << run.change_map.width() << '\n';
  os << "sp1_resolved = " << run.counts.sp1 << '\n';
  os << "sp2_resolved = " << run.counts.sp2 << '\n';
  os << "threads = " << thread_count() << '\n';
  os << "\n[defaults]\n";
  os << "count = " << defaulted.size() << '\n';
  for (const auto& d : defaulted) os << d << " = default\n";
  write_phase(os, run.phase1);
  if (run.phase2) write_phase(os, *run.phase2);
  long long changed = 0;
  for (auto v : run.change_map.values()) changed += v == labels::kChanged;
  os << "\n[result]\n";
  os << "phase2_run = " << (run.phase2 ? "true" : "false") << '\n';
  os << "changed_pixels = " << changed << '\n';
  os << "warnings = " << run.warnings.size() << '\n';
  for (std::size_t i = 0; i < run.warnings.size(); ++i) {
    os << "warning_" << i + 1 << " = " << run.warnings[i] << '\n';
  }
  os << "\n# configuration\n" << format_config(cfg);
  return os.str();
}

}  // namespace tpobdl
