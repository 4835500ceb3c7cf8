#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tpobdl::cli {

/// Process exit codes of the tpobdl tool.
enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kInvalidInput = 2,    // dimension mismatch, non-binary label map
  kDegenerate = 3,      // clustering left no usable training set
  kUsageError = 4,      // bad flags or config file
};

/// Environment variable that replaces the default config path.
inline constexpr const char* kConfigEnv = "TPOBDL_CONFIG";
inline constexpr const char* kVersion = "0.1.0";

struct SynthOptions {
  std::filesystem::path out;
  /// Scene description file; the benchmark scene when empty.
  std::optional<std::filesystem::path> scene;
  /// Override the scene file values when set (benchmark default: 0 and 0).
  std::optional<double> spike_fraction;
  std::optional<std::uint64_t> seed;
};

struct RunOptions {
  std::filesystem::path image1;
  std::filesystem::path image2;
  std::optional<std::filesystem::path> config;
  /// Run directory; a timestamped one under the working directory when empty.
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> debug_dir;
  std::optional<std::uint64_t> seed;
  bool phase1_only = false;
  int threads = 0;
};

struct EvalOptions {
  std::filesystem::path prediction;
  std::filesystem::path truth;
  /// Key-value metrics file; stdout only when empty.
  std::optional<std::filesystem::path> out;
};

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err);
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

/// Config path actually used: the flag, else $TPOBDL_CONFIG, else none.
std::optional<std::filesystem::path> resolve_config_path(
    const std::optional<std::filesystem::path>& flag);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Parses argv and dispatches to a subcommand.
int run_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tpobdl::cli
