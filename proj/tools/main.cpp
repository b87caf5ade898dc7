// mldepth command-line tool: synthetic scene generation, mixture fitting,
// inference, and evaluation, all deterministic under (seed, config).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mldepth/common.hpp"
#include "mldepth/config.hpp"
#include "mldepth/decomposition.hpp"
#include "mldepth/fit.hpp"
#include "mldepth/formats.hpp"
#include "mldepth/inference.hpp"
#include "mldepth/losses.hpp"
#include "mldepth/metrics.hpp"
#include "mldepth/multilayer.hpp"
#include "mldepth/scene.hpp"
#include "mldepth/tuples.hpp"

namespace fs = std::filesystem;
using namespace mldepth;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 1;
};

Config load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::from_file(args.config_path);
  cfg.apply_environment();
  for (const auto& o : args.overrides) cfg.set_override(o);
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--set", args.overrides, "override, e.g. --set netfit.lr=0.05")
      ->take_all();
  cmd->add_option("--threads", args.threads, "worker threads (1 = serial)")
      ->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------
// config <-> option structs
// ---------------------------------------------------------------------------

OverlappingPlanesParams scene_params(const Config& cfg) {
  OverlappingPlanesParams p;
  p.camera.width = cfg.get_int("scene.width", p.camera.width);
  p.camera.height = cfg.get_int("scene.height", p.camera.height);
  p.camera.focal = cfg.get_double("scene.focal", p.camera.width);
  p.camera.cx = cfg.get_double("scene.cx", p.camera.width / 2.0);
  p.camera.cy = cfg.get_double("scene.cy", p.camera.height / 2.0);
  p.z_front = cfg.get_double("scene.z_front", p.z_front);
  p.z_rear = cfg.get_double("scene.z_rear", p.z_rear);
  p.z_background = cfg.get_double("scene.z_background", p.z_background);
  p.front_x0 = cfg.get_double("scene.front_x0", p.front_x0);
  p.front_x1 = cfg.get_double("scene.front_x1", p.front_x1);
  p.front_y0 = cfg.get_double("scene.front_y0", p.front_y0);
  p.front_y1 = cfg.get_double("scene.front_y1", p.front_y1);
  p.rear_x0 = cfg.get_double("scene.rear_x0", p.rear_x0);
  p.rear_x1 = cfg.get_double("scene.rear_x1", p.rear_x1);
  p.rear_y0 = cfg.get_double("scene.rear_y0", p.rear_y0);
  p.rear_y1 = cfg.get_double("scene.rear_y1", p.rear_y1);
  p.with_aux_planes = cfg.get_bool("scene.with_aux_planes", p.with_aux_planes);
  p.z_aux1 = cfg.get_double("scene.z_aux1", p.z_aux1);
  p.aux1_x0 = cfg.get_double("scene.aux1_x0", p.aux1_x0);
  p.aux1_x1 = cfg.get_double("scene.aux1_x1", p.aux1_x1);
  p.aux1_y0 = cfg.get_double("scene.aux1_y0", p.aux1_y0);
  p.aux1_y1 = cfg.get_double("scene.aux1_y1", p.aux1_y1);
  p.z_aux2 = cfg.get_double("scene.z_aux2", p.z_aux2);
  p.aux2_x0 = cfg.get_double("scene.aux2_x0", p.aux2_x0);
  p.aux2_x1 = cfg.get_double("scene.aux2_x1", p.aux2_x1);
  p.aux2_y0 = cfg.get_double("scene.aux2_y0", p.aux2_y0);
  p.aux2_y1 = cfg.get_double("scene.aux2_y1", p.aux2_y1);
  p.feature_dim = cfg.get_int("scene.feature_dim", p.feature_dim);
  p.feature_scale = cfg.get_double("scene.feature_scale", p.feature_scale);
  p.feature_seed = cfg.get_seed("scene.feature_seed", p.feature_seed);
  p.orthogonal_features = cfg.get_bool("scene.orthogonal_features", p.orthogonal_features);
  return p;
}

void echo_scene(Config& out, const OverlappingPlanesParams& p, double sigma,
                std::uint64_t seed) {
  out.set("scene.width", std::to_string(p.camera.width));
  out.set("scene.height", std::to_string(p.camera.height));
  out.set("scene.focal", std::to_string(p.camera.focal));
  out.set("scene.cx", std::to_string(p.camera.cx));
  out.set("scene.cy", std::to_string(p.camera.cy));
  out.set("scene.z_front", std::to_string(p.z_front));
  out.set("scene.z_rear", std::to_string(p.z_rear));
  out.set("scene.z_background", std::to_string(p.z_background));
  out.set("scene.front_x0", std::to_string(p.front_x0));
  out.set("scene.front_x1", std::to_string(p.front_x1));
  out.set("scene.front_y0", std::to_string(p.front_y0));
  out.set("scene.front_y1", std::to_string(p.front_y1));
  out.set("scene.rear_x0", std::to_string(p.rear_x0));
  out.set("scene.rear_x1", std::to_string(p.rear_x1));
  out.set("scene.rear_y0", std::to_string(p.rear_y0));
  out.set("scene.rear_y1", std::to_string(p.rear_y1));
  out.set("scene.with_aux_planes", p.with_aux_planes ? "true" : "false");
  out.set("scene.z_aux1", std::to_string(p.z_aux1));
  out.set("scene.z_aux2", std::to_string(p.z_aux2));
  out.set("scene.feature_dim", std::to_string(p.feature_dim));
  out.set("scene.feature_scale", std::to_string(p.feature_scale));
  out.set("scene.feature_seed", std::to_string(p.feature_seed));
  out.set("scene.orthogonal_features", p.orthogonal_features ? "true" : "false");
  out.set("scene.noise_sigma", std::to_string(sigma));
  out.set("scene.noise_seed", std::to_string(seed));
}

LossConfig loss_config(const Config& cfg) {
  LossConfig l;
  l.lambda_int = cfg.get_double("losses.lambda_int", l.lambda_int);
  l.lambda_cov = cfg.get_double("losses.lambda_cov", l.lambda_cov);
  l.lambda_gm = cfg.get_double("losses.lambda_gm", l.lambda_gm);
  l.gm_num_scales = cfg.get_int("losses.gm_num_scales", l.gm_num_scales);
  l.gm_weights = cfg.get_double_list("losses.gm_weights", l.gm_weights);
  const std::string mode = cfg.get_string("losses.gm_weight_mode", "per_layer");
  if (mode == "per_layer") {
    l.gm_weight_mode = GmWeightMode::PerLayer;
  } else if (mode == "per_scale") {
    l.gm_weight_mode = GmWeightMode::PerScale;
  } else {
    throw std::invalid_argument("losses.gm_weight_mode must be per_layer or per_scale");
  }
  l.scale_clip_lo = cfg.get_double("losses.scale_clip_lo", l.scale_clip_lo);
  l.scale_clip_hi = cfg.get_double("losses.scale_clip_hi", l.scale_clip_hi);
  return l;
}

void echo_losses(Config& out, const LossConfig& l) {
  out.set("losses.lambda_int", std::to_string(l.lambda_int));
  out.set("losses.lambda_cov", std::to_string(l.lambda_cov));
  out.set("losses.lambda_gm", std::to_string(l.lambda_gm));
  out.set("losses.gm_num_scales", std::to_string(l.gm_num_scales));
  std::string w;
  for (double v : l.gm_weights) w += (w.empty() ? "" : ", ") + std::to_string(v);
  out.set("losses.gm_weights", w);
  out.set("losses.gm_weight_mode",
          l.gm_weight_mode == GmWeightMode::PerLayer ? "per_layer" : "per_scale");
  out.set("losses.scale_clip_lo", std::to_string(l.scale_clip_lo));
  out.set("losses.scale_clip_hi", std::to_string(l.scale_clip_hi));
}

PixelFitOptions pixelfit_options(const Config& cfg) {
  PixelFitOptions o;
  o.num_components = cfg.get_int("pixelfit.components", o.num_components);
  o.steps = cfg.get_int("pixelfit.steps", o.steps);
  o.lr = cfg.get_double("pixelfit.lr", o.lr);
  o.lr_decay_power = cfg.get_double("pixelfit.lr_decay_power", o.lr_decay_power);
  o.beta1 = cfg.get_double("pixelfit.beta1", o.beta1);
  o.beta2 = cfg.get_double("pixelfit.beta2", o.beta2);
  o.weight_decay = cfg.get_double("pixelfit.weight_decay", o.weight_decay);
  o.grad_clip_norm = cfg.get_double("pixelfit.grad_clip_norm", o.grad_clip_norm);
  o.lambda_int = cfg.get_double("losses.lambda_int", o.lambda_int);
  o.lambda_cov = cfg.get_double("losses.lambda_cov", o.lambda_cov);
  o.scale_clip_lo = cfg.get_double("losses.scale_clip_lo", o.scale_clip_lo);
  o.scale_clip_hi = cfg.get_double("losses.scale_clip_hi", o.scale_clip_hi);
  o.init_margin = cfg.get_double("pixelfit.init_margin", o.init_margin);
  o.seed = cfg.get_seed("pixelfit.seed", o.seed);
  return o;
}

void echo_pixelfit(Config& out, const PixelFitOptions& o) {
  out.set("pixelfit.components", std::to_string(o.num_components));
  out.set("pixelfit.steps", std::to_string(o.steps));
  out.set("pixelfit.lr", std::to_string(o.lr));
  out.set("pixelfit.lr_decay_power", std::to_string(o.lr_decay_power));
  out.set("pixelfit.weight_decay", std::to_string(o.weight_decay));
  out.set("pixelfit.grad_clip_norm", std::to_string(o.grad_clip_norm));
  out.set("pixelfit.init_margin", std::to_string(o.init_margin));
  out.set("pixelfit.seed", std::to_string(o.seed));
}

NetFitOptions netfit_options(const Config& cfg) {
  NetFitOptions o;
  o.loss = loss_config(cfg);
  o.component_dim = cfg.get_int("netfit.component_dim", o.component_dim);
  o.iterations = cfg.get_int("netfit.iterations", o.iterations);
  o.steps = cfg.get_int("netfit.steps", o.steps);
  o.lr = cfg.get_double("netfit.lr", o.lr);
  o.lr_decay_power = cfg.get_double("netfit.lr_decay_power", o.lr_decay_power);
  o.beta1 = cfg.get_double("netfit.beta1", o.beta1);
  o.beta2 = cfg.get_double("netfit.beta2", o.beta2);
  o.weight_decay = cfg.get_double("netfit.weight_decay", o.weight_decay);
  o.grad_clip_norm = cfg.get_double("netfit.grad_clip_norm", o.grad_clip_norm);
  o.init_scale = cfg.get_double("netfit.init_scale", o.init_scale);
  o.shared_predictor = cfg.get_bool("netfit.shared_predictor", o.shared_predictor);
  o.spread_center_init = cfg.get_bool("netfit.spread_center_init", o.spread_center_init);
  o.restarts = cfg.get_int("netfit.restarts", o.restarts);
  o.seed = cfg.get_seed("netfit.seed", o.seed);
  o.recurrence.scale_clip_lo = o.loss.scale_clip_lo;
  o.recurrence.scale_clip_hi = o.loss.scale_clip_hi;
  o.recurrence.eta_detached = cfg.get_bool("netfit.eta_detached", false);
  const std::string link = cfg.get_string("netfit.center_link", "identity");
  if (link == "identity") {
    o.recurrence.center_link = CenterLink::Identity;
  } else if (link == "softplus") {
    o.recurrence.center_link = CenterLink::Softplus;
  } else {
    throw std::invalid_argument("netfit.center_link must be identity or softplus");
  }
  const std::string rule = cfg.get_string("netfit.rule", "max");
  if (rule == "max") {
    o.recurrence.rule = MixtureRule::MaxMixture;
  } else if (rule == "ordered") {
    o.recurrence.rule = MixtureRule::Ordered;
  } else {
    throw std::invalid_argument("netfit.rule must be max or ordered");
  }
  return o;
}

void echo_netfit(Config& out, const NetFitOptions& o) {
  out.set("netfit.component_dim", std::to_string(o.component_dim));
  out.set("netfit.iterations", std::to_string(o.iterations));
  out.set("netfit.steps", std::to_string(o.steps));
  out.set("netfit.lr", std::to_string(o.lr));
  out.set("netfit.lr_decay_power", std::to_string(o.lr_decay_power));
  out.set("netfit.weight_decay", std::to_string(o.weight_decay));
  out.set("netfit.grad_clip_norm", std::to_string(o.grad_clip_norm));
  out.set("netfit.init_scale", std::to_string(o.init_scale));
  out.set("netfit.shared_predictor", o.shared_predictor ? "true" : "false");
  out.set("netfit.spread_center_init", o.spread_center_init ? "true" : "false");
  out.set("netfit.restarts", std::to_string(o.restarts));
  out.set("netfit.seed", std::to_string(o.seed));
  out.set("netfit.eta_detached", o.recurrence.eta_detached ? "true" : "false");
  out.set("netfit.center_link",
          o.recurrence.center_link == CenterLink::Identity ? "identity" : "softplus");
  out.set("netfit.rule", o.recurrence.rule == MixtureRule::Ordered ? "ordered" : "max");
}

PredictOptions predict_options(const Config& cfg, int threads) {
  PredictOptions o;
  o.suppression_radius = cfg.get_double("infer.suppression_radius", o.suppression_radius);
  o.min_peak_intensity = cfg.get_double("infer.min_peak_intensity", o.min_peak_intensity);
  o.suppress_after_denormalize =
      cfg.get_bool("infer.suppress_after_denormalize", o.suppress_after_denormalize);
  o.threads = threads;
  return o;
}

struct TuplePlan {
  std::vector<TupleRequest> requests;
  double min_separation = -1.0;
  std::uint64_t seed = 9;
};

TuplePlan tuple_plan(const Config& cfg, const MultiLayerDepthMap& gt) {
  TuplePlan plan;
  plan.min_separation = cfg.get_double("tuples.min_separation", -1.0);
  plan.seed = cfg.get_seed("tuples.seed", 9);
  const double mixed_share = cfg.get_double("tuples.mixed_share", 0.5);
  const int counts[3] = {cfg.get_int("tuples.pairs", 2000),
                         cfg.get_int("tuples.triplets", 2000),
                         cfg.get_int("tuples.quadruplets", 2000)};
  const int max_layers = gt.max_layer_count();
  for (int a = 2; a <= 4; ++a) {
    const int total = counts[a - 2];
    if (total <= 0) continue;
    const int mixed = static_cast<int>(std::lround(total * mixed_share));
    if (mixed > 0) plan.requests.push_back({a, TupleSubset::Mixed, mixed});
    // the same-layer remainder goes to the odd layers that exist in the map
    std::vector<TupleSubset> layers;
    if (max_layers >= 1) layers.push_back(TupleSubset::Layer1);
    if (max_layers >= 3) layers.push_back(TupleSubset::Layer3);
    if (max_layers >= 5) layers.push_back(TupleSubset::Layer5);
    const int rest = total - mixed;
    if (rest > 0 && !layers.empty()) {
      const int per = rest / static_cast<int>(layers.size());
      int assigned = 0;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const int c = (i + 1 == layers.size()) ? rest - assigned : per;
        if (c > 0) plan.requests.push_back({a, layers[i], c});
        assigned += c;
      }
    }
  }
  return plan;
}

NormParams read_norm_file(const std::string& path) {
  const Config cfg = Config::from_file(path);
  NormParams norm;
  norm.shift = cfg.get_double("norm.shift", 0.0);
  norm.scale = cfg.get_double("norm.scale", 1.0);
  if (!(norm.scale > 0.0)) throw std::invalid_argument("norm.scale must be positive");
  return norm;
}

void write_norm_file(const std::string& path, const NormParams& norm) {
  Config cfg;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", norm.shift);
  cfg.set("norm.shift", buf);
  std::snprintf(buf, sizeof(buf), "%.17g", norm.scale);
  cfg.set("norm.scale", buf);
  cfg.write_file(path);
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "step,lr,total,intensity,coverage,gradient_matching\n";
  out.precision(12);
  for (const auto& row : trace) {
    out << row.step << ',' << row.lr << ',' << row.total << ',' << row.intensity << ','
        << row.coverage << ',' << row.gradient_matching << "\n";
  }
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& common, const std::string& out_dir) {
  const Config cfg = load_config(common);
  const OverlappingPlanesParams params = scene_params(cfg);
  const double sigma = cfg.get_double("scene.noise_sigma", 0.0);
  const std::uint64_t noise_seed = cfg.get_seed("scene.noise_seed", 0);

  const Scene scene = scene_overlapping_planes(params);
  const MultiLayerDepthMap gt = raycast_multilayer(scene);
  const FeatureImage features = render_features(scene, sigma, noise_seed);
  const TuplePlan plan = tuple_plan(cfg, gt);
  const DepthTupleSet tuples =
      sample_tuples(gt, plan.requests, plan.min_separation, plan.seed);
  if (tuples.shortfall > 0) {
    std::cerr << "note: " << tuples.shortfall
              << " requested tuples could not be sampled (not enough distinct depths)\n";
  }

  fs::create_directories(out_dir);
  write_scene((fs::path(out_dir) / "scene.txt").string(), scene);
  write_mld((fs::path(out_dir) / "gt.mld").string(), gt);
  write_feature_image((fs::path(out_dir) / "features.fim").string(), features);
  write_tuples_csv((fs::path(out_dir) / "tuples.csv").string(), tuples);

  Config echo;
  echo_scene(echo, params, sigma, noise_seed);
  echo.set("tuples.min_separation", std::to_string(plan.min_separation));
  echo.set("tuples.seed", std::to_string(plan.seed));
  echo.set("tuples.sampled", std::to_string(tuples.tuples.size()));
  echo.write_file((fs::path(out_dir) / "config_used.cfg").string());

  std::cout << "scene " << scene.surfaces.size() << " surfaces, " << gt.height() << "x"
            << gt.width() << " px, " << tuples.tuples.size() << " tuples -> " << out_dir
            << "\n";
  return kExitOk;
}

int cmd_fit_pixel(const CommonArgs& common, const std::string& gt_path,
                  const std::string& out_dir) {
  const Config cfg = load_config(common);
  const MultiLayerDepthMap gt_raw = read_mld(gt_path);
  const NormalizedMap norm = normalize_scale_invariant(gt_raw);
  const PixelFitOptions opts = pixelfit_options(cfg);

  std::vector<double> trace;
  const MixtureField field = fit_pixel_map(norm.map, opts, common.threads, &trace);

  fs::create_directories(out_dir);
  write_mixture_field((fs::path(out_dir) / "mixtures.mix").string(), field, norm.params);
  {
    std::ofstream tr((fs::path(out_dir) / "trace.csv").string());
    tr << "step,mean_loss\n";
    tr.precision(12);
    for (std::size_t i = 0; i < trace.size(); ++i) tr << i << ',' << trace[i] << "\n";
  }
  write_norm_file((fs::path(out_dir) / "norm.txt").string(), norm.params);
  Config echo;
  echo_pixelfit(echo, opts);
  echo.set("losses.lambda_int", std::to_string(opts.lambda_int));
  echo.set("losses.lambda_cov", std::to_string(opts.lambda_cov));
  echo.write_file((fs::path(out_dir) / "config_used.cfg").string());

  std::cout << "fitted " << field.height << "x" << field.width << " px, "
            << field.num_components << " components; final mean loss "
            << (trace.empty() ? 0.0 : trace.back()) << " -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_fit_net(const CommonArgs& common, const std::string& features_path,
                const std::string& gt_path, const std::string& out_dir) {
  const Config cfg = load_config(common);
  const FeatureImage features = read_feature_image(features_path);
  const MultiLayerDepthMap gt_raw = read_mld(gt_path);
  const NormalizedMap norm = normalize_scale_invariant(gt_raw);
  const NetFitOptions opts = netfit_options(cfg);

  const NetFitResult result = fit_decomposition(features, norm.map, opts);
  if (result.diverged) {
    std::cerr << "fit diverged (non-finite loss); trace written for inspection\n";
  }

  fs::create_directories(out_dir);
  write_trace_csv((fs::path(out_dir) / "trace.csv").string(), result.trace);
  write_norm_file((fs::path(out_dir) / "norm.txt").string(), norm.params);
  Config echo;
  echo_netfit(echo, opts);
  echo_losses(echo, opts.loss);
  echo.write_file((fs::path(out_dir) / "config_used.cfg").string());
  if (result.diverged) return kExitNumerical;

  write_checkpoint((fs::path(out_dir) / "params.lppd").string(), result.params);
  std::cout << "fit " << opts.steps << " steps (restarts " << opts.restarts
            << "), final loss " << result.final_loss.total << " (intensity "
            << result.final_loss.intensity << ", coverage " << result.final_loss.coverage
            << ", gm " << result.final_loss.gradient_matching << "), max eta error "
            << result.max_eta_identity_error << " -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_infer(const CommonArgs& common, const std::string& params_path,
              const std::string& features_path, const std::string& out_path,
              const std::string& norm_path, double shift, double scale, bool normalized_out,
              const std::string& rule_name) {
  const Config cfg = load_config(common);
  const DecompParams params = read_checkpoint(params_path);
  const FeatureImage features = read_feature_image(features_path);

  RecurrenceOptions ropts;
  ropts.scale_clip_lo = cfg.get_double("losses.scale_clip_lo", 1.0);
  ropts.scale_clip_hi = cfg.get_double("losses.scale_clip_hi", 10.0);
  ropts.degenerate_eta_fallback = true;
  const std::string link = cfg.get_string("netfit.center_link", "identity");
  ropts.center_link = link == "softplus" ? CenterLink::Softplus : CenterLink::Identity;
  if (rule_name == "ordered") {
    ropts.rule = MixtureRule::Ordered;
  } else if (rule_name != "max") {
    throw std::invalid_argument("--rule must be max or ordered");
  }

  const RecurrenceResult rec = run_recurrence(features, params, ropts, false);

  PredictOptions popts = predict_options(cfg, common.threads);
  if (!normalized_out) {
    popts.norm = norm_path.empty() ? NormParams{shift, scale} : read_norm_file(norm_path);
  }
  PredictStats stats;
  const MultiLayerDepthMap pred = predict_image(rec.field, popts, &stats);
  write_mld(out_path, pred);
  std::cout << "inferred " << pred.height() << "x" << pred.width() << " px ("
            << pred.total_depth_count() << " layers total";
  if (stats.dropped_nonpositive > 0) {
    std::cout << ", dropped " << stats.dropped_nonpositive << " nonpositive";
  }
  std::cout << ") -> " << out_path << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& common, const std::string& pred_path,
             const std::string& gt_path, const std::string& tuples_path,
             const std::string& csv_path, bool per_layer_align) {
  (void)load_config(common);
  const MultiLayerDepthMap pred = read_mld(pred_path);
  const MultiLayerDepthMap gt = read_mld(gt_path);

  TupleAccuracyReport tuple_report;
  if (!tuples_path.empty()) {
    DepthTupleSet tuples = read_tuples_csv(tuples_path);
    annotate_tuples(tuples, gt);
    tuple_report = tuple_accuracy(pred, tuples);
  }
  const std::vector<PointMetrics> layers = point_metrics_per_layer(pred, gt, per_layer_align);

  print_metric_report(std::cout, tuple_report, layers);
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
    write_metric_report_csv(csv, tuple_report, layers);
    std::cout << "report -> " << csv_path << "\n";
  }
  return kExitOk;
}

int cmd_plot_intensity(const CommonArgs& common, const std::string& mixtures_path,
                       const std::string& params_path, const std::string& features_path,
                       int px, int py, double grid_min, double grid_max, int grid_count,
                       bool denorm, const std::string& out_path) {
  const Config cfg = load_config(common);
  MixtureField field;
  NormParams norm;
  if (!mixtures_path.empty()) {
    auto loaded = read_mixture_field(mixtures_path);
    field = std::move(loaded.first);
    norm = loaded.second;
  } else if (!params_path.empty() && !features_path.empty()) {
    const DecompParams params = read_checkpoint(params_path);
    const FeatureImage features = read_feature_image(features_path);
    RecurrenceOptions ropts;
    ropts.scale_clip_lo = cfg.get_double("losses.scale_clip_lo", 1.0);
    ropts.scale_clip_hi = cfg.get_double("losses.scale_clip_hi", 10.0);
    ropts.degenerate_eta_fallback = true;
    field = run_recurrence(features, params, ropts, false).field;
  } else {
    throw std::invalid_argument("need --mixtures or both --params and --features");
  }
  if (grid_count < 2) throw std::invalid_argument("grid count must be at least 2");

  const IntensityMixture m = mixture_at(field, px, py);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
  out << "x,intensity\n";
  out.precision(12);
  for (int i = 0; i < grid_count; ++i) {
    const double x = grid_min + (grid_max - grid_min) * i / (grid_count - 1);
    const double v = eval_intensity(m, x);
    out << (denorm ? x * norm.scale + norm.shift : x) << ',' << v << "\n";
  }
  std::cout << "intensity curve for pixel (" << px << "," << py << ") -> " << out_path
            << "\n";
  return kExitOk;
}

// central-difference suites for the gradcheck command; forward evaluations
// only, so the analytic backward paths stay independent
double fd(const std::function<double()>& f, double* x, double h = 1e-6) {
  const double x0 = *x;
  *x = x0 + h;
  const double fp = f();
  *x = x0 - h;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2.0 * h);
}

bool close(double analytic, double numeric) {
  if (std::abs(analytic - numeric) <= 1e-6) return true;
  return std::abs(analytic - numeric) /
             std::max({std::abs(analytic), std::abs(numeric), 1e-8}) <
         1e-4;
}

int cmd_gradcheck(const CommonArgs& common, std::uint64_t seed, int trials) {
  (void)load_config(common);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-3.0, 3.0);
  std::uniform_real_distribution<double> us(0.2, 2.0);
  std::uniform_int_distribution<int> un(1, 6);
  std::uniform_int_distribution<int> um(1, 5);

  int failures = 0;
  int done = 0;
  // per-pixel losses
  while (done < trials) {
    IntensityMixture m;
    const int n = un(rng);
    for (int i = 0; i < n; ++i) m.components.push_back({uc(rng), us(rng)});
    std::vector<double> g(um(rng));
    for (double& v : g) v = uc(rng);
    std::sort(g.begin(), g.end());

    // skip instances close to a kink or an argmax/argmin tie
    bool smooth = true;
    for (double gv : g) {
      double best = -1e300, second = -1e300;
      for (const auto& c : m.components) {
        smooth &= std::abs(gv - c.center) > 1e-3;
        const double l = -std::log(2.0 * c.scale) - std::abs(gv - c.center) / c.scale;
        if (l > best) {
          second = best;
          best = l;
        } else {
          second = std::max(second, l);
        }
      }
      smooth &= n == 1 || best - second > 1e-3;
    }
    for (const auto& c : m.components) {
      double best = 1e300, second = 1e300;
      for (double gv : g) {
        const double d = std::abs(gv - c.center);
        if (d < best) {
          second = best;
          best = d;
        } else {
          second = std::min(second, d);
        }
      }
      smooth &= g.size() == 1 || second - best > 1e-3;
    }
    if (!smooth) continue;
    ++done;

    const ParamGrad gi = grad_loss_intensity(m, g);
    const ParamGrad gc = grad_loss_coverage(m, g);
    for (std::size_t j = 0; j < m.components.size(); ++j) {
      const auto fi = [&] { return loss_intensity(m, g); };
      const auto fc = [&] { return loss_coverage(m, g); };
      failures += !close(gi.center[j], fd(fi, &m.components[j].center));
      failures += !close(gi.scale[j], fd(fi, &m.components[j].scale));
      failures += !close(gc.center[j], fd(fc, &m.components[j].center));
      failures += !close(gc.scale[j], fd(fc, &m.components[j].scale));
    }
  }
  std::cout << "per-pixel loss gradients: " << done << " instances, " << failures
            << " failures\n";

  // recurrence backward on tiny instances with a fixed smooth head
  int rec_failures = 0;
  const int rec_trials = std::max(10, trials / 10);
  for (int t = 0; t < rec_trials; ++t) {
    const int F = 2 + static_cast<int>(rng() % 3);
    const int C = 2 + static_cast<int>(rng() % 2);
    const int n = 1 + static_cast<int>(rng() % 3);
    DecompParams p = random_decomp_params(F, C, n, 0.6, rng());
    FeatureImage img = make_feature_image(2, 2, F);
    std::uniform_real_distribution<double> uf(-1.0, 1.0);
    for (Eigen::Index r = 0; r < img.values.rows(); ++r)
      for (Eigen::Index c = 0; c < img.values.cols(); ++c) img.values(r, c) = uf(rng);

    RecurrenceOptions opts;
    const std::size_t planes = 4 * static_cast<std::size_t>(n);
    std::vector<double> wc(planes), ws(planes);
    for (auto& v : wc) v = uf(rng);
    for (auto& v : ws) v = uf(rng);
    const auto head = [&] {
      const MixtureField f = run_recurrence(img, p, opts, false).field;
      double acc = 0.0;
      for (std::size_t i = 0; i < planes; ++i) acc += wc[i] * f.centers[i] + ws[i] * f.scales[i];
      return acc;
    };
    const auto rec = run_recurrence(img, p, opts, true);
    const auto grads = backward_recurrence(p, rec.tape, opts, wc, ws);
    const std::vector<double> flat_grad = flatten_grads(grads);
    std::vector<double> flat = flatten_params(p);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const auto probe = [&] {
        unflatten_params(flat, p);
        return head();
      };
      const double numeric = fd(probe, &flat[i]);
      unflatten_params(flat, p);
      rec_failures += !close(flat_grad[i], numeric);
    }
  }
  std::cout << "recurrence backward: " << rec_trials << " instances, " << rec_failures
            << " failures\n";

  // gradient-matching backward
  int gm_failures = 0;
  {
    Image pred(6, 6), gtimg(6, 6);
    Mask valid(6, 6, true);
    std::uniform_real_distribution<double> uf(-2.0, 2.0);
    for (auto& v : pred.v) v = uf(rng);
    for (auto& v : gtimg.v) v = uf(rng);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) valid.set(x, y, (rng() % 5) != 0);
    Image grad(6, 6, 0.0);
    gradient_matching_backward(pred, gtimg, valid, 3, {}, 1.0, grad);
    const auto f = [&] { return gradient_matching_term(pred, gtimg, valid, 3, {}).value; };
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        gm_failures += !close(grad.at(x, y), fd(f, &pred.at(x, y)));
      }
    }
  }
  std::cout << "gradient-matching backward: 36 coordinates, " << gm_failures
            << " failures\n";

  failures += rec_failures + gm_failures;
  if (failures > 0) {
    std::cerr << "gradcheck FAILED with " << failures << " mismatches\n";
    return kExitNumerical;
  }
  std::cout << "gradcheck OK\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-process multi-layer depth toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a layered scene with GT and tuples");
  add_common(synth, synth_args);
  synth->add_option("--out", synth_out, "output directory")->required();

  CommonArgs fp_args;
  std::string fp_gt, fp_out;
  auto* fit_pixel_cmd =
      app.add_subcommand("fit-pixel", "optimize per-pixel mixtures directly");
  add_common(fit_pixel_cmd, fp_args);
  fit_pixel_cmd->add_option("--gt", fp_gt, "ground-truth MLD1 file")->required();
  fit_pixel_cmd->add_option("--out", fp_out, "output directory")->required();

  CommonArgs fn_args;
  std::string fn_features, fn_gt, fn_out;
  auto* fit_net_cmd = app.add_subcommand("fit-net", "train the decomposition network");
  add_common(fit_net_cmd, fn_args);
  fit_net_cmd->add_option("--features", fn_features, "feature image (FIM1)")->required();
  fit_net_cmd->add_option("--gt", fn_gt, "ground-truth MLD1 file")->required();
  fit_net_cmd->add_option("--out", fn_out, "output directory")->required();

  CommonArgs in_args;
  std::string in_params, in_features, in_out, in_norm, in_rule = "max";
  double in_shift = 0.0, in_scale = 1.0;
  bool in_normalized = false;
  auto* infer_cmd = app.add_subcommand("infer", "predict multi-layer depth maps");
  add_common(infer_cmd, in_args);
  infer_cmd->add_option("--params", in_params, "checkpoint (LPPD)")->required();
  infer_cmd->add_option("--features", in_features, "feature image (FIM1)")->required();
  infer_cmd->add_option("--out", in_out, "output MLD1 path")->required();
  infer_cmd->add_option("--norm", in_norm, "norm.txt with shift/scale");
  infer_cmd->add_option("--shift", in_shift, "normalization shift");
  infer_cmd->add_option("--scale", in_scale, "normalization scale");
  infer_cmd->add_flag("--normalized", in_normalized, "emit normalized depths");
  infer_cmd->add_option("--rule", in_rule, "mixture rule: max | ordered");

  CommonArgs ev_args;
  std::string ev_pred, ev_gt, ev_tuples, ev_csv;
  bool ev_per_layer = false;
  auto* eval_cmd = app.add_subcommand("eval", "tuple accuracy and point metrics");
  add_common(eval_cmd, ev_args);
  eval_cmd->add_option("--pred", ev_pred, "predicted MLD1")->required();
  eval_cmd->add_option("--gt", ev_gt, "ground-truth MLD1")->required();
  eval_cmd->add_option("--tuples", ev_tuples, "tuple CSV");
  eval_cmd->add_option("--csv", ev_csv, "write the report as CSV");
  eval_cmd->add_flag("--per-layer-align", ev_per_layer, "align each layer separately");

  CommonArgs gc_args;
  std::uint64_t gc_seed = 7;
  int gc_trials = 500;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference checks of all gradients");
  add_common(gradcheck_cmd, gc_args);
  gradcheck_cmd->add_option("--seed", gc_seed, "RNG seed");
  gradcheck_cmd->add_option("--trials", gc_trials, "instances per suite")
      ->check(CLI::PositiveNumber);

  CommonArgs pl_args;
  std::string pl_mix, pl_params, pl_features, pl_out;
  int pl_x = 0, pl_y = 0, pl_count = 1000;
  double pl_min = -5.0, pl_max = 5.0;
  bool pl_denorm = false;
  auto* plot_cmd = app.add_subcommand("plot-intensity", "emit one pixel's intensity curve");
  add_common(plot_cmd, pl_args);
  plot_cmd->add_option("--mixtures", pl_mix, "mixture field (MIX1)");
  plot_cmd->add_option("--params", pl_params, "checkpoint (LPPD)");
  plot_cmd->add_option("--features", pl_features, "feature image (FIM1)");
  plot_cmd->add_option("--x", pl_x, "pixel x")->required();
  plot_cmd->add_option("--y", pl_y, "pixel y")->required();
  plot_cmd->add_option("--grid-min", pl_min, "grid start (normalized depth)");
  plot_cmd->add_option("--grid-max", pl_max, "grid end");
  plot_cmd->add_option("--grid-count", pl_count, "number of samples");
  plot_cmd->add_flag("--denormalize", pl_denorm, "emit raw-depth x values");
  plot_cmd->add_option("--out", pl_out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args, synth_out);
    if (fit_pixel_cmd->parsed()) return cmd_fit_pixel(fp_args, fp_gt, fp_out);
    if (fit_net_cmd->parsed()) return cmd_fit_net(fn_args, fn_features, fn_gt, fn_out);
    if (infer_cmd->parsed()) {
      return cmd_infer(in_args, in_params, in_features, in_out, in_norm, in_shift, in_scale,
                       in_normalized, in_rule);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(ev_args, ev_pred, ev_gt, ev_tuples, ev_csv, ev_per_layer);
    }
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_args, gc_seed, gc_trials);
    if (plot_cmd->parsed()) {
      return cmd_plot_intensity(pl_args, pl_mix, pl_params, pl_features, pl_x, pl_y, pl_min,
                                pl_max, pl_count, pl_denorm, pl_out);
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitData;
  } catch (const DegenerateScaleError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const RescaleDegenerateError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const AlignmentError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
