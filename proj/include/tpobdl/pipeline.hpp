#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpobdl/clustering.hpp"
#include "tpobdl/imaging.hpp"
#include "tpobdl/keyvalue.hpp"
#include "tpobdl/lrsd.hpp"
#include "tpobdl/pcanet.hpp"
#include "tpobdl/superpixel.hpp"

namespace tpobdl {

/// Reference scene for the superpixel-count scaling rule.
inline constexpr double kReferencePixels = 400.0 * 400.0;
inline constexpr int kReferenceSp1 = 3200;
inline constexpr int kReferenceSp2 = 17800;

struct PipelineConfig {
  /// 0 = scale from the reference counts to the input size.
  int sp1 = 0;
  int k1 = 7;
  int sp2 = 0;
  int k2 = 3;
  double compactness = 10.0;
  int slic_iterations = 10;
  /// Connectivity enforcement for both SLIC runs (0 disables).
  double min_segment_fraction = 0.25;

  /// fcm.fuzzifier <= 0 selects auto_fuzzifier() on each phase's SPDI.
  FcmParams fcm{3, 0.0, 1e-6, 300, 0};
  VoteThresholds vote;
  PcaNetParams pcanet1{5, 8, 8, {}, {1.0, 1e-4, 1000, 0, false}};
  PcaNetParams pcanet2{3, 8, 8, {}, {1.0, 1e-4, 1000, 0, false}};
  LrsdParams lrsd;
  double log_epsilon = 1.0;
  /// Majority class is down-sampled above this majority:minority ratio.
  double max_imbalance = 20.0;
  std::uint64_t seed = 0;
};

/// Superpixel counts actually used for an M x N input.
struct ResolvedCounts {
  int sp1 = 0;
  int sp2 = 0;
};

/// SP_i = round(M*N / k_i^2 * r_i) with r_i the pixels-per-superpixel ratio
/// of the reference parameters; explicit values are clamped to M*N.
ResolvedCounts resolve_counts(const PipelineConfig& cfg, int width, int height);

/// Validates invariants; soft rule violations become warnings.
std::vector<std::string> check_config(const PipelineConfig& cfg, int width, int height);

/// Config file: sections [phase1] [phase2] [slic] [fcm] [voting] [pcanet1]
/// [pcanet2] [svm] [lrsd] [run]; unknown sections or keys are errors.
/// `defaulted` receives "section.key" for every key left at its default.
PipelineConfig parse_pipeline_config(const std::vector<KvSection>& sections,
                                     std::vector<std::string>* defaulted = nullptr);
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::vector<std::string>* defaulted = nullptr);
/// Every config key with its value, in file order (config snapshot).
std::string format_config(const PipelineConfig& cfg);

struct SegmentDecision {
  bool processed = false;       // phase 2 skips segments with no phase-1 CC pixel
  int vector_count = 0;
  Tier vote = Tier::kLow;
  bool positive = false;        // CC (phase 1) or RCC (phase 2)
  bool by_classifier = false;   // decided by PCANet (intermediate vote)
};

struct PhaseStats {
  int superpixels = 0;
  int processed_superpixels = 0;
  int vectors = 0;
  int vectors_low = 0;
  int vectors_mid = 0;
  int vectors_high = 0;
  int votes_low = 0;
  int votes_mid = 0;
  int votes_high = 0;
  int train_positive = 0;
  int train_negative = 0;
  int classified_positive = 0;
  int classified_negative = 0;
  int fcm_iterations = 0;
  double fcm_fuzzifier = 0.0;
  bool fcm_degenerate = false;
  int lrsd_iterations = 0;
  double lrsd_residual = 0.0;
  bool lrsd_converged = false;
  long long positive_pixels = 0;
  double seconds = 0.0;
};

struct PhaseResult {
  int phase = 1;
  SuperpixelMap superpixels;
  std::vector<SegmentDecision> segments;
  std::optional<PcaNetModel> model;
  /// Phase 1: kUnchanged / kChanged. Phase 2: kUnchanged (phase-1 UC),
  /// kChanged (RCC), kFalseChange (FCC).
  LabelMap pixel_map;
  PhaseStats stats;
  std::vector<std::string> warnings;
  /// Debug rasters (difference magnitudes etc.) keyed by name.
  std::map<std::string, RealRaster> debug;
};

PhaseResult run_phase1(const SarImage& i1, const SarImage& i2, const PipelineConfig& cfg);
PhaseResult run_phase2(const SarImage& i1, const SarImage& i2, const PhaseResult& phase1,
                       const PipelineConfig& cfg);

struct RunResult {
  PhaseResult phase1;
  std::optional<PhaseResult> phase2;
  /// Binary map: kChanged only for RCC pixels (or CC pixels when phase 2
  /// was skipped).
  LabelMap change_map;
  ResolvedCounts counts;
  std::vector<std::string> warnings;
};

RunResult run_full(const SarImage& i1, const SarImage& i2, const PipelineConfig& cfg,
                   bool phase1_only = false);

/// Structured `key = value` report with one section per phase.
std::string format_report(const RunResult& run, const PipelineConfig& cfg,
                          const std::vector<std::string>& defaulted = {});

}  // namespace tpobdl
