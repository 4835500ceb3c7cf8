#include <cstdlib>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "support.hpp"
#include "tpobdl/cli.hpp"
#include "tpobdl/imaging.hpp"

using namespace tpobdl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "tpobdl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// 100 x 100 maps with Nu = 9000, Nc = 1000, Fn = 90, Mn = 100.
void write_example_maps(const fs::path& pred, const fs::path& truth) {
  LabelMap t(100, 100, 0), p(100, 100, 0);
  for (int i = 0; i < 1000; ++i) t[static_cast<std::size_t>(i)] = 1;
  for (int i = 100; i < 1000; ++i) p[static_cast<std::size_t>(i)] = 1;  // 100 misses
  for (int i = 1000; i < 1090; ++i) p[static_cast<std::size_t>(i)] = 1;  // 90 false alarms
  save_change_map_pgm(p, pred);
  save_label_map(t, truth, PgmDepth::k8Bit);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes three maps of matching size and is reproducible") {
  testing::TempDir dir("cli");
  write(dir / "scene.ini",
        "[scene]\nrows = 40\ncols = 56\nlooks = 4\n[change box]\nx = 5\ny = 5\nwidth = 10\n"
        "height = 10\ndelta = 80\n");
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"synth", "--scene", (dir / "scene.ini").string(), "--seed", "3", "-o",
                           (dir / out).string()});
    REQUIRE(r.code == cli::kOk);
  }
  for (const char* f : {"I1.pgm", "I2.pgm", "truth.pgm"}) {
    CHECK(cli::sha256_file(dir / "a" / f) == cli::sha256_file(dir / "b" / f));
  }
  const SarImage i1 = load_image(dir / "a" / "I1.pgm");
  const LabelMap t = load_label_map(dir / "a" / "truth.pgm");
  CHECK(i1.width() == 56);
  CHECK(i1.height() == 40);
  CHECK(t.same_shape(load_image(dir / "a" / "I2.pgm").raster()));
  CHECK(t.width() == 56);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["seed"] == 3);
}

TEST_CASE("synth rejects an out-of-bounds region by name") {
  testing::TempDir dir("cli");
  write(dir / "bad.ini", "[scene]\nrows = 20\ncols = 20\n[region pond]\nx = 15\ny = 0\nwidth = 10\n"
                         "height = 5\namplitude = 10\n");
  const auto r = invoke({"synth", "--scene", (dir / "bad.ini").string(), "-o", (dir / "o").string()});
  CHECK(r.code != cli::kOk);
  CHECK(r.err.find("pond") != std::string::npos);
}

TEST_CASE("run: identical inputs, defaults recorded, manifest contents") {
  testing::TempDir dir("cli");
  REQUIRE(invoke({"synth", "--seed", "1", "-o", (dir / "s").string()}).code == cli::kOk);
  const std::string i1 = (dir / "s" / "I1.pgm").string();
  const auto r = invoke({"run", i1, i1, "-o", (dir / "same").string()});
  REQUIRE(r.code == cli::kOk);
  const LabelMap change = load_label_map(dir / "same" / "change.pgm");
  for (auto v : change.values()) CHECK(v == 0);
  const std::string report = slurp(dir / "same" / "report.txt");
  CHECK(report.find("phase1.superpixels = default") != std::string::npos);
  CHECK(report.find("lrsd.lambda = default") != std::string::npos);

  write(dir / "partial.ini", "[phase1]\npatch_size = 7\n");
  const auto p = invoke({"run", i1, (dir / "s" / "I2.pgm").string(), "-c",
                         (dir / "partial.ini").string(), "-o", (dir / "p").string(), "--seed", "5"});
  REQUIRE(p.code == cli::kOk);
  const std::string rep = slurp(dir / "p" / "report.txt");
  CHECK(rep.find("phase1.patch_size = default") == std::string::npos);
  CHECK(rep.find("phase1.superpixels = default") != std::string::npos);
  const auto m = nlohmann::json::parse(slurp(dir / "p" / "manifest.json"));
  CHECK(m["seed"] == 5);
  CHECK(m["inputs"]["image1"]["sha256"] == cli::sha256_file(i1));
  CHECK(m["outputs"]["change.pgm"] == cli::sha256_file(dir / "p" / "change.pgm"));
  CHECK(m["config"]["snapshot"] == slurp(dir / "p" / "config.ini"));

  const auto q = invoke({"run", i1, (dir / "s" / "I2.pgm").string(), "-c",
                         (dir / "partial.ini").string(), "-o", (dir / "q").string(), "--seed", "6"});
  REQUIRE(q.code == cli::kOk);
  const auto mq = nlohmann::json::parse(slurp(dir / "q" / "manifest.json"));
  CHECK(mq["seed"] == 6);
  const LabelMap a = load_label_map(dir / "p" / "change.pgm");
  const LabelMap b = load_label_map(dir / "q" / "change.pgm");
  CHECK(a.same_shape(b));

  // The snapshot alone reproduces the output.
  const auto again = invoke({"run", i1, (dir / "s" / "I2.pgm").string(), "-c",
                             (dir / "p" / "config.ini").string(), "-o", (dir / "p2").string()});
  REQUIRE(again.code == cli::kOk);
  CHECK(cli::sha256_file(dir / "p" / "change.pgm") == cli::sha256_file(dir / "p2" / "change.pgm"));
}

TEST_CASE("run: phase1-only and debug output") {
  testing::TempDir dir("cli");
  REQUIRE(invoke({"synth", "--seed", "2", "-o", (dir / "s").string()}).code == cli::kOk);
  const auto r = invoke({"run", (dir / "s" / "I1.pgm").string(), (dir / "s" / "I2.pgm").string(),
                         "--phase1-only", "-o", (dir / "r").string(), "--debug-dir",
                         (dir / "dbg").string(), "--threads", "1"});
  REQUIRE(r.code == cli::kOk);
  CHECK(fs::exists(dir / "r" / "change.png"));
  CHECK(fs::exists(dir / "dbg" / "phase1_superpixels.pgm"));
  CHECK(fs::exists(dir / "dbg" / "phase1_model.bin"));
  CHECK_FALSE(fs::exists(dir / "dbg" / "phase2_labels.pgm"));
  const auto m = nlohmann::json::parse(slurp(dir / "r" / "manifest.json"));
  CHECK(m["phase1_only"] == true);
}

TEST_CASE("run: error exit codes") {
  testing::TempDir dir("cli");
  save_image(SarImage(4, 4, std::vector<double>(16, 1.0)), dir / "a.pgm");
  save_image(SarImage(5, 4, std::vector<double>(20, 1.0)), dir / "b.pgm");
  const std::string a = (dir / "a.pgm").string();
  CHECK(invoke({"run", a, (dir / "b.pgm").string(), "-o", (dir / "o").string()}).code ==
        cli::kInvalidInput);
  CHECK(invoke({"run", a, (dir / "missing.pgm").string()}).code == cli::kIoError);
  write(dir / "typo.ini", "[phase1]\nsuperpixel = 4\n");
  CHECK(invoke({"run", a, a, "-c", (dir / "typo.ini").string()}).code == cli::kUsageError);
  CHECK(invoke({"run", a}).code == cli::kUsageError);
  CHECK(invoke({"bogus"}).code == cli::kUsageError);

  // A uniform brightness shift leaves the clusters nothing to separate.
  save_image(SarImage(40, 40, std::vector<double>(1600, 10.0)), dir / "c.pgm");
  save_image(SarImage(40, 40, std::vector<double>(1600, 30.0)), dir / "d.pgm");
  const auto d = invoke({"run", (dir / "c.pgm").string(), (dir / "d.pgm").string(), "-o",
                         (dir / "deg").string()});
  CHECK(d.code == cli::kDegenerate);
  CHECK(d.err.find("degenerate") != std::string::npos);
}

TEST_CASE("config path from the environment") {
  testing::TempDir dir("cli");
  write(dir / "env.ini", "[run]\nseed = 42\n");
  ::setenv(cli::kConfigEnv, (dir / "env.ini").string().c_str(), 1);
  CHECK(cli::resolve_config_path(std::nullopt) == dir / "env.ini");
  CHECK(cli::resolve_config_path(fs::path("x.ini")) == fs::path("x.ini"));
  REQUIRE(invoke({"synth", "--seed", "1", "-o", (dir / "s").string()}).code == cli::kOk);
  const auto r = invoke({"run", (dir / "s" / "I1.pgm").string(), (dir / "s" / "I2.pgm").string(),
                         "--phase1-only", "-o", (dir / "r").string()});
  ::unsetenv(cli::kConfigEnv);
  REQUIRE(r.code == cli::kOk);
  const auto m = nlohmann::json::parse(slurp(dir / "r" / "manifest.json"));
  CHECK(m["seed"] == 42);
  CHECK(cli::resolve_config_path(std::nullopt) == std::nullopt);
}

TEST_CASE("eval") {
  testing::TempDir dir("cli");
  write_example_maps(dir / "pred.pgm", dir / "truth.pgm");
  const auto same = invoke({"eval", (dir / "truth.pgm").string(), (dir / "truth.pgm").string()});
  REQUIRE(same.code == cli::kOk);
  CHECK(same.out.find("100.00") != std::string::npos);

  const auto r = invoke({"eval", (dir / "pred.pgm").string(), (dir / "truth.pgm").string(), "-o",
                         (dir / "m.txt").string()});
  REQUIRE(r.code == cli::kOk);
  const std::string kv = slurp(dir / "m.txt");
  CHECK(kv.find("pf = 1.00\n") != std::string::npos);
  CHECK(kv.find("pm = 10.00\n") != std::string::npos);
  CHECK(kv.find("pcc = 98.10\n") != std::string::npos);
  CHECK(kv.find("kc = 89.40\n") != std::string::npos);

  LabelMap bad(100, 100, 0);
  bad(3, 7) = 9;
  save_label_map(bad, dir / "bad.pgm", PgmDepth::k8Bit);
  const auto nb = invoke({"eval", (dir / "bad.pgm").string(), (dir / "truth.pgm").string()});
  CHECK(nb.code == cli::kInvalidInput);
  CHECK(nb.err.find("row 3, col 7") != std::string::npos);

  save_label_map(LabelMap(10, 10, 0), dir / "small.pgm", PgmDepth::k8Bit);
  CHECK(invoke({"eval", (dir / "small.pgm").string(), (dir / "truth.pgm").string()}).code ==
        cli::kInvalidInput);
}

}  // TEST_SUITE
