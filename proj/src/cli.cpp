#include "tpobdl/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <openssl/evp.h>

#include "tpobdl/error.hpp"
#include "tpobdl/imaging.hpp"
#include "tpobdl/metrics.hpp"
#include "tpobdl/parallel.hpp"
#include "tpobdl/pipeline.hpp"
#include "tpobdl/synthgen.hpp"

namespace tpobdl::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

int report_error(std::ostream& err, const char* command, const std::exception& e) {
  int code = kIoError;
  const char* kind = "error";
  if (dynamic_cast<const IoError*>(&e)) {
    code = kIoError;
    kind = "i/o error";
  } else if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const LabelError*>(&e)) {
    code = kInvalidInput;
    kind = "invalid input";
  } else if (dynamic_cast<const DegenerateClusteringError*>(&e)) {
    code = kDegenerate;
    kind = "degenerate clustering";
  } else if (dynamic_cast<const ConfigError*>(&e)) {
    code = kUsageError;
    kind = "configuration error";
  } else if (dynamic_cast<const Error*>(&e)) {
    code = kInvalidInput;
    kind = "invalid input";
  }
  err << "tpobdl " << command << ": " << kind << ": " << e.what() << '\n';
  return code;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string utc_stamp(const char* format) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, format);
  return os.str();
}

fs::path timestamped_run_dir() {
  const fs::path base = "run-" + utc_stamp("%Y%m%d-%H%M%S");
  fs::path dir = base;
  for (int n = 2; fs::exists(dir); ++n) dir = base.string() + "-" + std::to_string(n);
  return dir;
}

json versions() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  json v;
  v["tpobdl"] = kVersion;
  v["eigen"] = eigen.str();
#if defined(__clang__)
  v["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  v["compiler"] = std::string("gcc ") + __VERSION__;
#else
  v["compiler"] = "unknown";
#endif
  v["cxx_standard"] = static_cast<long>(__cplusplus);
  return v;
}

json file_entry(const fs::path& path) {
  json j;
  j["path"] = path.string();
  j["sha256"] = sha256_file(path);
  return j;
}

void write_debug(const fs::path& dir, const PhaseResult& phase) {
  ensure_dir(dir);
  const std::string prefix = "phase" + std::to_string(phase.phase) + "_";
  save_label_map(phase.superpixels.labels, dir / (prefix + "superpixels.pgm"));
  save_label_map(phase.pixel_map, dir / (prefix + "labels.pgm"), PgmDepth::k8Bit);
  for (const auto& [name, raster] : phase.debug) {
    std::vector<double> v(raster.values());
    for (double& x : v) x = std::max(x, 0.0);
    save_image_png(SarImage(raster.width(), raster.height(), std::move(v)),
                   dir / (prefix + name + ".png"));
  }
  if (phase.model && phase.model->trained()) phase.model->save(dir / (prefix + "model.bin"));
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("EVP_MD_CTX_new failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

std::optional<fs::path> resolve_config_path(const std::optional<fs::path>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv(kConfigEnv); env && *env) return fs::path(env);
  return std::nullopt;
}

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    SceneSpec spec = opts.scene ? load_scene_spec(*opts.scene) : benchmark_scene(0.0, 0);
    if (opts.spike_fraction) spec.spike_fraction = *opts.spike_fraction;
    if (opts.seed) spec.rng_seed = *opts.seed;
    const SyntheticScene scene = generate(spec);
    ensure_dir(opts.out);
    save_image(scene.image1, opts.out / "I1.pgm");
    save_image(scene.image2, opts.out / "I2.pgm");
    save_change_map_pgm(scene.truth, opts.out / "truth.pgm");

    json m;
    m["command"] = "synth";
    m["created_utc"] = utc_stamp("%Y-%m-%dT%H:%M:%SZ");
    m["scene"] = opts.scene ? json(file_entry(*opts.scene)) : json("benchmark");
    m["rows"] = spec.rows;
    m["cols"] = spec.cols;
    m["looks"] = spec.looks;
    m["spike_fraction"] = spec.spike_fraction;
    m["seed"] = spec.rng_seed;
    m["outputs"]["I1.pgm"] = sha256_file(opts.out / "I1.pgm");
    m["outputs"]["I2.pgm"] = sha256_file(opts.out / "I2.pgm");
    m["outputs"]["truth.pgm"] = sha256_file(opts.out / "truth.pgm");
    m["versions"] = versions();
    write_text(opts.out / "manifest.json", m.dump(2) + "\n");
    out << "wrote " << (opts.out / "I1.pgm").string() << ", I2.pgm, truth.pgm\n";
    return kOk;
  } catch (const std::exception& e) {
    return report_error(err, "synth", e);
  }
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const auto started = std::chrono::steady_clock::now();
    if (opts.threads < 0) throw ConfigError("--threads must be >= 0");
    set_thread_count(opts.threads);

    const auto config_path = resolve_config_path(opts.config);
    std::vector<std::string> defaulted;
    PipelineConfig cfg;
    if (config_path) {
      cfg = load_pipeline_config(*config_path, &defaulted);
    } else {
      cfg = parse_pipeline_config({}, &defaulted);
    }
    if (opts.seed) cfg.seed = *opts.seed;

    const SarImage i1 = load_image(opts.image1);
    const SarImage i2 = load_image(opts.image2);
    if (!i1.same_shape(i2)) {
      throw DimensionError("input sizes differ: " + std::to_string(i1.height()) + "x" +
                           std::to_string(i1.width()) + " vs " + std::to_string(i2.height()) +
                           "x" + std::to_string(i2.width()));
    }

    const RunResult run = run_full(i1, i2, cfg, opts.phase1_only);
    const fs::path dir = opts.out ? *opts.out : timestamped_run_dir();
    ensure_dir(dir);
    save_change_map_pgm(run.change_map, dir / "change.pgm");
    save_change_map_png(run.change_map, dir / "change.png");
    write_text(dir / "report.txt", format_report(run, cfg, defaulted));
    write_text(dir / "config.ini", format_config(cfg));
    if (opts.debug_dir) {
      write_debug(*opts.debug_dir, run.phase1);
      if (run.phase2) write_debug(*opts.debug_dir, *run.phase2);
    }
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    json m;
    m["command"] = "run";
    m["created_utc"] = utc_stamp("%Y-%m-%dT%H:%M:%SZ");
    m["inputs"]["image1"] = file_entry(opts.image1);
    m["inputs"]["image2"] = file_entry(opts.image2);
    m["inputs"]["rows"] = i1.height();
    m["inputs"]["cols"] = i1.width();
    m["config"]["path"] = config_path ? json(config_path->string()) : json(nullptr);
    m["config"]["defaulted"] = defaulted;
    m["config"]["snapshot"] = format_config(cfg);
    m["seed"] = cfg.seed;
    m["phase1_only"] = opts.phase1_only;
    m["threads"] = thread_count();
    m["counts"]["sp1"] = run.counts.sp1;
    m["counts"]["sp2"] = run.counts.sp2;
    m["timings"]["phase1_seconds"] = run.phase1.stats.seconds;
    m["timings"]["phase2_seconds"] = run.phase2 ? run.phase2->stats.seconds : 0.0;
    m["timings"]["total_seconds"] = total;
    m["outputs"]["change.pgm"] = sha256_file(dir / "change.pgm");
    m["outputs"]["change.png"] = sha256_file(dir / "change.png");
    m["warnings"] = run.warnings;
    m["versions"] = versions();
    write_text(dir / "manifest.json", m.dump(2) + "\n");

    for (const auto& w : run.warnings) err << "tpobdl run: warning: " << w << '\n';
    long long changed = 0;
    for (auto v : run.change_map.values()) changed += v == labels::kChanged;
    out << "changed_pixels = " << changed << "\nrun_dir = " << dir.string() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    return report_error(err, "run", e);
  }
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const LabelMap pred = load_label_map(opts.prediction);
    const LabelMap truth = load_label_map(opts.truth);
    if (!pred.same_shape(truth)) {
      throw DimensionError("prediction is " + std::to_string(pred.height()) + "x" +
                           std::to_string(pred.width()) + " but truth is " +
                           std::to_string(truth.height()) + "x" + std::to_string(truth.width()));
    }
    const Confusion c = confusion(pred, truth);
    const MetricReport r = evaluate(c);
    out << format_table(c, r);
    if (opts.out) write_text(*opts.out, format_key_values(c, r));
    return kOk;
  } catch (const std::exception& e) {
    return report_error(err, "eval", e);
  }
}

int run_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-phase object-based SAR change detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic image pair with ground truth");
  s->add_option("-o,--out", synth.out, "Output directory")->required();
  s->add_option("--scene", synth.scene, "Scene description file (default: benchmark scene)");
  s->add_option("--spikes", synth.spike_fraction, "Fraction of speckle spike pixels")
      ->check(CLI::Range(0.0, 1.0));
  s->add_option("--seed", synth.seed, "Random seed");

  RunOptions run;
  auto* r = app.add_subcommand("run", "Detect changes between two co-registered images");
  r->add_option("image1", run.image1, "Image at time 1 (PGM)")->required();
  r->add_option("image2", run.image2, "Image at time 2 (PGM)")->required();
  r->add_option("-c,--config", run.config,
                std::string("Config file (default: $") + kConfigEnv + ")");
  r->add_option("-o,--out", run.out, "Run directory (default: run-<UTC timestamp>)");
  r->add_flag("--phase1-only", run.phase1_only, "Stop after phase 1 and emit the CC/UC map");
  r->add_option("--debug-dir", run.debug_dir, "Write intermediate rasters here");
  r->add_option("--seed", run.seed, "Override the config seed");
  r->add_option("--threads", run.threads, "Worker cap (0 = all cores)");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score a change map against ground truth");
  e->add_option("prediction", ev.prediction, "Predicted change map (PGM)")->required();
  e->add_option("truth", ev.truth, "Ground-truth map (PGM)")->required();
  e->add_option("-o,--out", ev.out, "Write key = value metrics here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "tpobdl: " << pe.what() << '\n';
    return kUsageError;
  }

  if (s->parsed()) return cmd_synth(synth, out, err);
  if (r->parsed()) return cmd_run(run, out, err);
  return cmd_eval(ev, out, err);
}

}  // namespace tpobdl::cli
