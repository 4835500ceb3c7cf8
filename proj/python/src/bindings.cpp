#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tpobdl/cli.hpp"
#include "tpobdl/clustering.hpp"
#include "tpobdl/keyvalue.hpp"
#include "tpobdl/lrsd.hpp"
#include "tpobdl/metrics.hpp"
#include "tpobdl/parallel.hpp"
#include "tpobdl/pipeline.hpp"
#include "tpobdl/superpixel.hpp"
#include "tpobdl/synthgen.hpp"

namespace py = pybind11;
using namespace tpobdl;

namespace {

using ImageArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

void require_2d(const py::buffer_info& info, const char* what) {
  if (info.ndim != 2) throw DimensionError(std::string(what) + " must be a 2-D array");
}

SarImage to_image(const ImageArray& a, const char* what) {
  const auto info = a.request();
  require_2d(info, what);
  const auto* p = static_cast<const double*>(info.ptr);
  return SarImage(static_cast<int>(info.shape[1]), static_cast<int>(info.shape[0]),
                  std::vector<double>(p, p + info.size));
}

LabelMap to_labels(const LabelArray& a, const char* what) {
  const auto info = a.request();
  require_2d(info, what);
  const auto* p = static_cast<const std::int32_t*>(info.ptr);
  return LabelMap(static_cast<int>(info.shape[1]), static_cast<int>(info.shape[0]),
                  std::vector<std::int32_t>(p, p + info.size));
}

template <typename T>
py::array_t<T> to_array(const Raster<T>& r) {
  py::array_t<T> out({r.height(), r.width()});
  std::copy(r.values().begin(), r.values().end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const SarImage& img) { return to_array(img.raster()); }

PipelineConfig config_from(const std::optional<std::string>& text) {
  if (!text) return PipelineConfig{};
  return parse_pipeline_config(parse_key_values(*text, "config"));
}

py::object optional_value(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

py::dict metric_dict(const Confusion& c, const MetricReport& r) {
  py::dict d;
  d["unchanged"] = c.unchanged;
  d["changed"] = c.changed;
  d["false_alarms"] = c.false_alarms;
  d["misses"] = c.misses;
  d["pf"] = optional_value(r.pf);
  d["pm"] = optional_value(r.pm);
  d["pcc"] = optional_value(r.pcc);
  d["kc"] = optional_value(r.kc);
  d["gd_oe"] = optional_value(r.gd_oe);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-phase object-based SAR change detection";
  m.attr("__version__") = cli::kVersion;

  // Translators registered later are tried first, so the base class goes first.
  const auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<LabelError>(m, "LabelError", base);
  py::register_exception<DegenerateClusteringError>(m, "DegenerateClusteringError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);

  m.def(
      "generate_scene",
      [](double spike_fraction, std::uint64_t seed, std::optional<std::string> scene) {
        SceneSpec spec = scene ? parse_scene_spec(parse_key_values(*scene, "scene"))
                               : benchmark_scene(spike_fraction, seed);
        if (scene) {
          spec.spike_fraction = spike_fraction;
          spec.rng_seed = seed;
        }
        const SyntheticScene s = generate(spec);
        py::dict d;
        d["image1"] = to_array(s.image1);
        d["image2"] = to_array(s.image2);
        d["truth"] = to_array(s.truth);
        return d;
      },
      py::arg("spike_fraction") = 0.0, py::arg("seed") = 0, py::arg("scene") = py::none(),
      "Synthetic speckled image pair with its truth mask. `scene` is the text of a "
      "scene file; without it the 256 x 256 benchmark scene is used.");

  m.def(
      "detect",
      [](const ImageArray& image1, const ImageArray& image2, std::optional<std::string> config,
         std::optional<std::uint64_t> seed, bool phase1_only, int threads) {
        PipelineConfig cfg = config_from(config);
        if (seed) cfg.seed = *seed;
        const SarImage i1 = to_image(image1, "image1");
        const SarImage i2 = to_image(image2, "image2");
        RunResult run;
        {
          py::gil_scoped_release release;
          set_thread_count(threads);
          run = run_full(i1, i2, cfg, phase1_only);
        }
        py::dict d;
        d["change_map"] = to_array(run.change_map);
        d["phase1_map"] = to_array(run.phase1.pixel_map);
        d["warnings"] = run.warnings;
        d["report"] = format_report(run, cfg);
        return d;
      },
      py::arg("image1"), py::arg("image2"), py::arg("config") = py::none(),
      py::arg("seed") = py::none(), py::arg("phase1_only") = false, py::arg("threads") = 0,
      "Runs both phases and returns the binary change map (1 = changed). `config` is "
      "the text of a configuration file.");

  m.def(
      "evaluate",
      [](const LabelArray& prediction, const LabelArray& truth) {
        const Confusion c = confusion(to_labels(prediction, "prediction"), to_labels(truth, "truth"));
        return metric_dict(c, tpobdl::evaluate(c));
      },
      py::arg("prediction"), py::arg("truth"),
      "Confusion counts and Pf, Pm, PCC, KC, GD/OE in percent (None when undefined).");

  m.def("default_config", []() { return format_config(PipelineConfig{}); },
        "Configuration file text holding every default value.");

  m.def(
      "slic",
      [](const ImageArray& image, int superpixels, double compactness, int iterations,
         double min_segment_fraction) {
        const SarImage img = to_image(image, "image");
        return to_array(
            slic_segment(img, SlicParams{superpixels, compactness, iterations, min_segment_fraction})
                .labels);
      },
      py::arg("image"), py::arg("superpixels"), py::arg("compactness") = 10.0,
      py::arg("iterations") = 10, py::arg("min_segment_fraction") = 0.0);

  m.def(
      "fcm",
      [](const Eigen::MatrixXd& data, int clusters, double fuzzifier, double tolerance,
         int max_iterations, std::uint64_t seed) {
        const FcmResult r = tpobdl::fcm(data, FcmParams{clusters, fuzzifier, tolerance,
                                                        max_iterations, seed});
        std::vector<int> labels;
        for (Tier t : r.hard_labels) labels.push_back(static_cast<int>(t));
        py::dict d;
        d["centers"] = r.centers;
        d["memberships"] = r.memberships;
        d["labels"] = labels;
        d["objective"] = r.objective;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        d["degenerate"] = r.degenerate;
        return d;
      },
      py::arg("data"), py::arg("clusters") = 3, py::arg("fuzzifier") = 2.0,
      py::arg("tolerance") = 1e-6, py::arg("max_iterations") = 300, py::arg("seed") = 0,
      "Fuzzy c-means over the rows of `data`; centers sorted by ascending mean.");

  m.def(
      "vote",
      [](const std::vector<int>& labels, double changed, double intermediate) {
        std::vector<Tier> tiers;
        for (int l : labels) {
          if (l < 0 || l > 2) throw ConfigError("vote: labels must be 0, 1 or 2");
          tiers.push_back(static_cast<Tier>(l));
        }
        return static_cast<int>(vote_label(tiers, VoteThresholds{changed, intermediate}));
      },
      py::arg("labels"), py::arg("changed") = 0.8, py::arg("intermediate") = 0.5,
      "Superpixel vote over sub-vector labels 0 (low), 1 (mid), 2 (high).");

  m.def("svt", &svt, py::arg("matrix"), py::arg("tau"), "Singular value thresholding.");
  m.def("col_shrink", &col_shrink, py::arg("matrix"), py::arg("tau"),
        "Column-wise 2,1-norm shrinkage.");

  m.def(
      "solve_lrsd",
      [](const Eigen::MatrixXd& phi, double lambda, double epsilon, double tolerance,
         int max_iterations) {
        LrsdParams p;
        p.lambda = lambda;
        p.epsilon = epsilon;
        p.tolerance = tolerance;
        p.max_iterations = max_iterations;
        LrsdSolution s;
        {
          py::gil_scoped_release release;
          s = tpobdl::solve_lrsd(phi, p);
        }
        py::dict d;
        d["low_rank"] = s.low_rank;
        d["sparse"] = s.sparse;
        d["iterations"] = s.iterations;
        d["converged"] = s.converged;
        d["final_residual"] = s.final_residual;
        d["epsilon"] = s.epsilon;
        return d;
      },
      py::arg("phi"), py::arg("lam") = 0.9, py::arg("epsilon") = 0.0,
      py::arg("tolerance") = 1e-7, py::arg("max_iterations") = 500,
      "Low-rank plus column-sparse decomposition phi = U + E. epsilon <= 0 picks "
      "3 / sqrt(max(rows, cols)).");
}
