#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mldepth/decomposition.hpp"
#include "mldepth/fit.hpp"
#include "mldepth/formats.hpp"
#include "mldepth/inference.hpp"
#include "mldepth/laplace.hpp"
#include "mldepth/losses.hpp"
#include "mldepth/metrics.hpp"
#include "mldepth/multilayer.hpp"
#include "mldepth/scene.hpp"
#include "mldepth/tuples.hpp"

namespace py = pybind11;
using namespace mldepth;

namespace {

std::vector<std::vector<std::vector<double>>> map_to_lists(const MultiLayerDepthMap& map) {
  std::vector<std::vector<std::vector<double>>> out(map.height());
  for (int y = 0; y < map.height(); ++y) {
    out[y].resize(map.width());
    for (int x = 0; x < map.width(); ++x) out[y][x] = map.layers(x, y);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_mldepth, m) {
  m.doc() = "point-process multi-layer depth estimation core";

  py::enum_<MixtureRule>(m, "MixtureRule")
      .value("MAX_MIXTURE", MixtureRule::MaxMixture)
      .value("WEIGHTED_UNIFORM", MixtureRule::WeightedUniform)
      .value("ORDERED", MixtureRule::Ordered);

  py::class_<LaplaceComponent>(m, "LaplaceComponent")
      .def(py::init<double, double>(), py::arg("center"), py::arg("scale"))
      .def_readwrite("center", &LaplaceComponent::center)
      .def_readwrite("scale", &LaplaceComponent::scale)
      .def("__repr__", [](const LaplaceComponent& c) {
        return "LaplaceComponent(center=" + std::to_string(c.center) +
               ", scale=" + std::to_string(c.scale) + ")";
      });

  py::class_<IntensityMixture>(m, "IntensityMixture")
      .def(py::init([](std::vector<LaplaceComponent> components, MixtureRule rule) {
             return IntensityMixture{std::move(components), rule};
           }),
           py::arg("components"), py::arg("rule") = MixtureRule::MaxMixture)
      .def_readwrite("components", &IntensityMixture::components)
      .def_readwrite("rule", &IntensityMixture::rule);

  py::class_<Peak>(m, "Peak")
      .def_readonly("depth", &Peak::depth)
      .def_readonly("intensity", &Peak::intensity);

  m.def("eval_component", &eval_component, py::arg("component"), py::arg("x"));
  m.def("log_component", &log_component, py::arg("component"), py::arg("x"));
  m.def("eval_intensity", &eval_intensity, py::arg("mixture"), py::arg("x"));
  m.def("log_intensity", &log_intensity, py::arg("mixture"), py::arg("x"));
  m.def("argmax_component", &argmax_component, py::arg("mixture"), py::arg("x"));
  m.def("peak_set", &peak_set, py::arg("mixture"));

  py::enum_<DepthUnits>(m, "DepthUnits")
      .value("RAW", DepthUnits::Raw)
      .value("NORMALIZED", DepthUnits::Normalized);

  py::class_<MultiLayerDepthMap>(m, "MultiLayerDepthMap")
      .def(py::init<int, int, DepthUnits>(), py::arg("height"), py::arg("width"),
           py::arg("units") = DepthUnits::Raw)
      .def_property_readonly("height", &MultiLayerDepthMap::height)
      .def_property_readonly("width", &MultiLayerDepthMap::width)
      .def_property_readonly("units", &MultiLayerDepthMap::units)
      .def("set_layers", &MultiLayerDepthMap::set_layers, py::arg("x"), py::arg("y"),
           py::arg("depths"))
      .def("layers",
           [](const MultiLayerDepthMap& map, int x, int y) { return map.layers(x, y); },
           py::arg("x"), py::arg("y"))
      .def("layer_count", &MultiLayerDepthMap::layer_count, py::arg("x"), py::arg("y"))
      .def("max_layer_count", &MultiLayerDepthMap::max_layer_count)
      .def("total_depth_count", &MultiLayerDepthMap::total_depth_count)
      .def("to_lists", &map_to_lists);

  py::class_<NormParams>(m, "NormParams")
      .def(py::init<double, double>(), py::arg("shift") = 0.0, py::arg("scale") = 1.0)
      .def_readwrite("shift", &NormParams::shift)
      .def_readwrite("scale", &NormParams::scale);

  m.def(
      "normalize_scale_invariant",
      [](const MultiLayerDepthMap& map) {
        NormalizedMap n = normalize_scale_invariant(map);
        return py::make_tuple(n.map, n.params);
      },
      py::arg("map"));
  m.def("denormalize_map", &denormalize_map, py::arg("map"), py::arg("params"));

  m.def("loss_intensity",
        [](const IntensityMixture& mix, const std::vector<double>& gts) {
          return loss_intensity(mix, gts);
        },
        py::arg("mixture"), py::arg("gt_depths"));
  m.def("loss_coverage",
        [](const IntensityMixture& mix, const std::vector<double>& gts) {
          return loss_coverage(mix, gts);
        },
        py::arg("mixture"), py::arg("gt_depths"));
  m.def("grad_losses",
        [](const IntensityMixture& mix, const std::vector<double>& gts, double lambda_int,
           double lambda_cov) {
          const ParamGrad g = grad_losses(mix, gts, lambda_int, lambda_cov);
          return py::make_tuple(g.center, g.scale);
        },
        py::arg("mixture"), py::arg("gt_depths"), py::arg("lambda_int") = 1.0,
        py::arg("lambda_cov") = 0.1);
  m.def("loss_l1",
        [](const std::vector<double>& pred, const std::vector<double>& gt) {
          const MatchedLoss l = loss_l1(pred, gt);
          return py::make_tuple(l.value, l.matched, l.ignored);
        },
        py::arg("pred_sorted"), py::arg("gt_sorted"));
  m.def("loss_silog",
        [](const std::vector<double>& pred, const std::vector<double>& gt, double w) {
          return loss_silog(pred, gt, w).value;
        },
        py::arg("pred_sorted"), py::arg("gt_sorted"), py::arg("variance_weight") = 1.0);
  m.def("loss_ordered",
        [](const IntensityMixture& mix, const std::vector<double>& gt) {
          const MatchedLoss l = loss_ordered(mix, gt);
          return py::make_tuple(l.value, l.matched, l.ignored);
        },
        py::arg("mixture"), py::arg("gt_sorted"));

  m.def("extract_layers", &extract_layers, py::arg("mixture"),
        py::arg("suppression_radius") = 0.02, py::arg("min_peak_intensity") = 0.05);
  m.def("denormalize",
        [](const std::vector<double>& depths, const NormParams& params) {
          return denormalize(depths, params);
        },
        py::arg("depths"), py::arg("params"));

  py::class_<MixtureField>(m, "MixtureField")
      .def_readonly("height", &MixtureField::height)
      .def_readonly("width", &MixtureField::width)
      .def_readonly("num_components", &MixtureField::num_components)
      .def_readonly("rule", &MixtureField::rule)
      .def("mixture_at",
           [](const MixtureField& f, int x, int y) { return mixture_at(f, x, y); },
           py::arg("x"), py::arg("y"));

  m.def(
      "predict_image",
      [](const MixtureField& field, std::optional<NormParams> norm, double suppression_radius,
         double min_peak_intensity, bool suppress_after_denormalize, int threads) {
        PredictOptions opts;
        opts.norm = norm;
        opts.suppression_radius = suppression_radius;
        opts.min_peak_intensity = min_peak_intensity;
        opts.suppress_after_denormalize = suppress_after_denormalize;
        opts.threads = threads;
        return predict_image(field, opts);
      },
      py::arg("field"), py::arg("norm") = std::nullopt, py::arg("suppression_radius") = 0.02,
      py::arg("min_peak_intensity") = 0.05, py::arg("suppress_after_denormalize") = false,
      py::arg("threads") = 1);

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("focal", &Camera::focal)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy);

  py::class_<OverlappingPlanesParams>(m, "OverlappingPlanesParams")
      .def(py::init<>())
      .def_readwrite("camera", &OverlappingPlanesParams::camera)
      .def_readwrite("z_front", &OverlappingPlanesParams::z_front)
      .def_readwrite("z_rear", &OverlappingPlanesParams::z_rear)
      .def_readwrite("z_background", &OverlappingPlanesParams::z_background)
      .def_readwrite("with_aux_planes", &OverlappingPlanesParams::with_aux_planes)
      .def_readwrite("feature_dim", &OverlappingPlanesParams::feature_dim)
      .def_readwrite("feature_scale", &OverlappingPlanesParams::feature_scale)
      .def_readwrite("feature_seed", &OverlappingPlanesParams::feature_seed)
      .def_readwrite("orthogonal_features", &OverlappingPlanesParams::orthogonal_features);

  py::class_<Scene>(m, "Scene").def_property_readonly("num_surfaces", [](const Scene& s) {
    return s.surfaces.size();
  });

  py::class_<FeatureImage>(m, "FeatureImage")
      .def_readonly("height", &FeatureImage::height)
      .def_readonly("width", &FeatureImage::width)
      .def_property_readonly("feature_dim", &FeatureImage::feature_dim)
      .def_property(
          "values", [](const FeatureImage& f) { return f.values; },
          [](FeatureImage& f, const Eigen::MatrixXd& v) { f.values = v; });

  m.def("scene_overlapping_planes", &scene_overlapping_planes, py::arg("params"));
  m.def("raycast_multilayer", &raycast_multilayer, py::arg("scene"));
  m.def("render_features", &render_features, py::arg("scene"), py::arg("noise_sigma") = 0.0,
        py::arg("seed") = 0);

  py::enum_<TupleSubset>(m, "TupleSubset")
      .value("MIXED", TupleSubset::Mixed)
      .value("LAYER1", TupleSubset::Layer1)
      .value("LAYER3", TupleSubset::Layer3)
      .value("LAYER5", TupleSubset::Layer5)
      .value("OTHER", TupleSubset::Other);

  py::class_<DepthTupleSet>(m, "DepthTupleSet")
      .def_property_readonly("size",
                             [](const DepthTupleSet& s) { return s.tuples.size(); })
      .def_readonly("shortfall", &DepthTupleSet::shortfall);

  m.def(
      "sample_tuples",
      [](const MultiLayerDepthMap& gt,
         const std::vector<std::tuple<int, TupleSubset, int>>& requests, double min_separation,
         std::uint64_t seed) {
        std::vector<TupleRequest> reqs;
        for (const auto& [arity, subset, count] : requests) reqs.push_back({arity, subset, count});
        return sample_tuples(gt, reqs, min_separation, seed);
      },
      py::arg("gt"), py::arg("requests"), py::arg("min_separation") = -1.0,
      py::arg("seed") = 9);

  m.def(
      "tuple_accuracy",
      [](const MultiLayerDepthMap& pred, const DepthTupleSet& tuples) {
        const TupleAccuracyReport rep = tuple_accuracy(pred, tuples);
        py::dict out;
        const char* names[6] = {"all", "mixed", "layer1", "layer3", "layer5", "other"};
        for (int arity = 2; arity <= 4; ++arity) {
          for (int col = 0; col < 6; ++col) {
            const AccuracyCell& c = rep.cell(arity, col);
            if (!c.present()) continue;
            out[py::make_tuple(arity, names[col])] =
                py::make_tuple(c.accuracy(), c.total);
          }
        }
        return out;
      },
      py::arg("pred"), py::arg("tuples"));

  m.def(
      "align_scale_shift",
      [](const std::vector<double>& pred, const std::vector<double>& gt) {
        const AffineAlignment a = align_scale_shift(pred, gt);
        return py::make_tuple(a.scale, a.shift);
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "point_metrics_per_layer",
      [](const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
         bool per_layer_alignment) {
        py::list out;
        for (const PointMetrics& pm : point_metrics_per_layer(pred, gt, per_layer_alignment)) {
          py::dict d;
          d["absrel"] = pm.absrel;
          d["rms"] = pm.rms;
          d["delta1"] = pm.delta1;
          d["delta2"] = pm.delta2;
          d["count"] = pm.count;
          d["excluded"] = pm.excluded;
          out.append(d);
        }
        return out;
      },
      py::arg("pred"), py::arg("gt"), py::arg("per_layer_alignment") = false);

  py::class_<PixelFitOptions>(m, "PixelFitOptions")
      .def(py::init<>())
      .def_readwrite("num_components", &PixelFitOptions::num_components)
      .def_readwrite("steps", &PixelFitOptions::steps)
      .def_readwrite("lr", &PixelFitOptions::lr)
      .def_readwrite("lambda_int", &PixelFitOptions::lambda_int)
      .def_readwrite("lambda_cov", &PixelFitOptions::lambda_cov)
      .def_readwrite("seed", &PixelFitOptions::seed);

  m.def(
      "fit_pixel",
      [](const std::vector<double>& gts, const PixelFitOptions& opts) {
        const PixelFitResult r = fit_pixel(gts, opts);
        return py::make_tuple(r.mixture, r.trace, r.diverged);
      },
      py::arg("gt_depths"), py::arg("options") = PixelFitOptions());

  py::class_<DecompParams>(m, "DecompParams")
      .def_readonly("feature_dim", &DecompParams::feature_dim)
      .def_readonly("component_dim", &DecompParams::component_dim)
      .def_readonly("iterations", &DecompParams::iterations)
      .def("shared_predictor", &DecompParams::shared_predictor);

  py::class_<NetFitOptions>(m, "NetFitOptions")
      .def(py::init<>())
      .def_readwrite("component_dim", &NetFitOptions::component_dim)
      .def_readwrite("iterations", &NetFitOptions::iterations)
      .def_readwrite("steps", &NetFitOptions::steps)
      .def_readwrite("lr", &NetFitOptions::lr)
      .def_readwrite("init_scale", &NetFitOptions::init_scale)
      .def_readwrite("shared_predictor", &NetFitOptions::shared_predictor)
      .def_readwrite("spread_center_init", &NetFitOptions::spread_center_init)
      .def_readwrite("restarts", &NetFitOptions::restarts)
      .def_readwrite("seed", &NetFitOptions::seed);

  m.def(
      "fit_decomposition",
      [](const FeatureImage& features, const MultiLayerDepthMap& gt, const NetFitOptions& opts) {
        const NetFitResult r = fit_decomposition(features, gt, opts);
        py::dict info;
        info["final_loss"] = r.final_loss.total;
        info["intensity"] = r.final_loss.intensity;
        info["coverage"] = r.final_loss.coverage;
        info["gradient_matching"] = r.final_loss.gradient_matching;
        info["max_eta_identity_error"] = r.max_eta_identity_error;
        info["diverged"] = r.diverged;
        return py::make_tuple(r.params, info);
      },
      py::arg("features"), py::arg("gt_normalized"), py::arg("options") = NetFitOptions());

  m.def(
      "run_recurrence",
      [](const FeatureImage& features, const DecompParams& params, MixtureRule rule) {
        RecurrenceOptions opts;
        opts.rule = rule;
        opts.degenerate_eta_fallback = true;
        return run_recurrence(features, params, opts, false).field;
      },
      py::arg("features"), py::arg("params"), py::arg("rule") = MixtureRule::MaxMixture);

  m.def("write_mld", &write_mld, py::arg("path"), py::arg("map"));
  m.def("read_mld", &read_mld, py::arg("path"));
  m.def("write_feature_image", &write_feature_image, py::arg("path"), py::arg("image"));
  m.def("read_feature_image", &read_feature_image, py::arg("path"));
  m.def("write_checkpoint", &write_checkpoint, py::arg("path"), py::arg("params"));
  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));

#ifdef MLDEPTH_VERSION
  m.attr("__version__") = MLDEPTH_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
