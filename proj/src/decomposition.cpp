#include "mldepth/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "mldepth/common.hpp"

namespace mldepth {

namespace {

constexpr double kDegenerateNorm = 1e-12;

// |x| is capped at 40 before exponentiation: beyond that the tail is under
// 4e-18, and extreme arguments would drag libm onto its slow paths.
double softplus(double x) {
  const double t = std::min(std::abs(x), 40.0);
  return std::log1p(std::exp(-t)) + std::max(x, 0.0);
}

double sigmoid(double x) {
  const double t = std::clamp(x, -40.0, 40.0);
  return 1.0 / (1.0 + std::exp(-t));
}

void check_params(const DecompParams& p) {
  if (p.feature_dim <= 0 || p.component_dim <= 0 || p.iterations < 1) {
    throw std::invalid_argument("decomposition dims/iterations must be positive");
  }
  if (p.w_decomposer.rows() != p.component_dim || p.w_decomposer.cols() != p.feature_dim ||
      p.w_remapper.rows() != p.feature_dim || p.w_remapper.cols() != p.component_dim ||
      p.b_decomposer.size() != p.component_dim || p.b_remapper.size() != p.feature_dim) {
    throw std::invalid_argument("decomposer/remapper weight shapes inconsistent");
  }
  const std::size_t np = p.w_predictor.size();
  if ((np != 1 && np != static_cast<std::size_t>(p.iterations)) ||
      p.b_predictor.size() != np) {
    throw std::invalid_argument("predictor must be shared or one per iteration");
  }
  for (std::size_t k = 0; k < np; ++k) {
    if (p.w_predictor[k].rows() != 2 || p.w_predictor[k].cols() != p.component_dim ||
        p.b_predictor[k].size() != 2) {
      throw std::invalid_argument("predictor weight shapes inconsistent");
    }
  }
}

}  // namespace

FeatureImage make_feature_image(int height, int width, int feature_dim) {
  if (height <= 0 || width <= 0 || feature_dim <= 0) {
    throw std::invalid_argument("feature image dimensions must be positive");
  }
  FeatureImage f;
  f.height = height;
  f.width = width;
  f.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(height) * width, feature_dim);
  return f;
}

DecompParams make_decomp_params(int feature_dim, int component_dim, int iterations,
                                bool shared_predictor) {
  DecompParams p;
  p.feature_dim = feature_dim;
  p.component_dim = component_dim;
  p.iterations = iterations;
  p.w_decomposer = Eigen::MatrixXd::Zero(component_dim, feature_dim);
  p.b_decomposer = Eigen::VectorXd::Zero(component_dim);
  p.w_remapper = Eigen::MatrixXd::Zero(feature_dim, component_dim);
  p.b_remapper = Eigen::VectorXd::Zero(feature_dim);
  const int np = shared_predictor ? 1 : iterations;
  p.w_predictor.assign(np, Eigen::MatrixXd::Zero(2, component_dim));
  p.b_predictor.assign(np, Eigen::VectorXd::Zero(2));
  check_params(p);
  return p;
}

DecompParams random_decomp_params(int feature_dim, int component_dim, int iterations,
                                  double init_scale, std::uint64_t seed,
                                  bool shared_predictor) {
  DecompParams p = make_decomp_params(feature_dim, component_dim, iterations, shared_predictor);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-init_scale, init_scale);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng);
  };
  fill(p.w_decomposer);
  fill(p.w_remapper);
  for (auto& w : p.w_predictor) fill(w);
  return p;
}

DecompStep decompose_step(const FeatureImage& f_prev, const DecompParams& p) {
  check_params(p);
  if (f_prev.feature_dim() != p.feature_dim) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  DecompStep step;
  step.component.height = f_prev.height;
  step.component.width = f_prev.width;
  step.component.values =
      (f_prev.values * p.w_decomposer.transpose()).rowwise() + p.b_decomposer.transpose();

  step.remapped =
      (step.component.values * p.w_remapper.transpose()).rowwise() + p.b_remapper.transpose();
  step.norm_prev = f_prev.values.norm();
  step.norm_remapped = step.remapped.norm();
  if (step.norm_remapped < kDegenerateNorm) {
    throw RescaleDegenerateError("remapped component norm " +
                                 std::to_string(step.norm_remapped) +
                                 " too small for rescaling");
  }
  step.eta = step.norm_prev / step.norm_remapped;
  step.next.height = f_prev.height;
  step.next.width = f_prev.width;
  step.next.values = f_prev.values - step.eta * step.remapped;
  return step;
}

namespace {

// center/scale links plus their raw-output derivatives.
void apply_links(const Eigen::MatrixXd& raw, const RecurrenceOptions& opts, int comp_index,
                 MixtureField& field) {
  const std::size_t plane = field.plane_size();
  const std::size_t base = static_cast<std::size_t>(comp_index) * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    const double rc = raw(static_cast<Eigen::Index>(i), 0);
    const double rs = raw(static_cast<Eigen::Index>(i), 1);
    field.centers[base + i] = opts.center_link == CenterLink::Softplus ? softplus(rc) : rc;
    field.scales[base + i] = std::min(opts.scale_clip_lo + softplus(rs), opts.scale_clip_hi);
  }
}

}  // namespace

RecurrenceResult run_recurrence(const FeatureImage& f0, const DecompParams& p,
                                const RecurrenceOptions& opts, bool record_tape) {
  check_params(p);
  RecurrenceResult out;
  out.field = make_mixture_field(f0.height, f0.width, p.iterations, opts.rule);
  if (record_tape) {
    // reserve so pointers into the tape stay valid across push_back
    out.tape.features.reserve(p.iterations + 1);
    out.tape.components.reserve(p.iterations);
    out.tape.remapped.reserve(p.iterations);
    out.tape.raw_pred.reserve(p.iterations);
    out.tape.features.push_back(f0);
  }

  FeatureImage scratch = f0;
  const FeatureImage* current = record_tape ? &out.tape.features.front() : &scratch;
  for (int i = 0; i < p.iterations; ++i) {
    DecompStep step;
    bool degenerate = false;
    try {
      step = decompose_step(*current, p);
    } catch (const RescaleDegenerateError& e) {
      if (!opts.degenerate_eta_fallback) {
        throw RescaleDegenerateError("iteration " + std::to_string(i) + ": " + e.what());
      }
      degenerate = true;
      step.component.height = current->height;
      step.component.width = current->width;
      step.component.values = (current->values * p.w_decomposer.transpose()).rowwise() +
                              p.b_decomposer.transpose();
      step.norm_prev = current->values.norm();
      step.norm_remapped = 0.0;
      step.eta = 0.0;
      step.next = *current;  // F stays put when nothing can be subtracted
    }
    step.degenerate = degenerate;

    Eigen::MatrixXd raw =
        (step.component.values * p.predictor_w(i).transpose()).rowwise() +
        p.predictor_b(i).transpose();
    apply_links(raw, opts, i, out.field);

    if (!degenerate && step.norm_prev > 0.0) {
      // |eta * R(C)| must reproduce |F_prev|; track the worst deviation.
      const double lhs = (step.eta * step.remapped).norm();
      const double rel = std::abs(lhs - step.norm_prev) / step.norm_prev;
      out.tape.max_eta_identity_error = std::max(out.tape.max_eta_identity_error, rel);
    }

    if (record_tape) {
      out.tape.components.push_back(std::move(step.component));
      out.tape.remapped.push_back(std::move(step.remapped));
      out.tape.raw_pred.push_back(std::move(raw));
      out.tape.eta.push_back(step.eta);
      out.tape.norm_prev.push_back(step.norm_prev);
      out.tape.norm_remapped.push_back(step.norm_remapped);
      out.tape.degenerate.push_back(degenerate ? 1 : 0);
      out.tape.features.push_back(std::move(step.next));
      current = &out.tape.features.back();
    } else {
      scratch = std::move(step.next);
      current = &scratch;
    }
  }
  return out;
}

DecompParamGrads backward_recurrence(const DecompParams& p, const RecurrenceTape& tape,
                                     const RecurrenceOptions& opts,
                                     const std::vector<double>& grad_centers,
                                     const std::vector<double>& grad_scales) {
  check_params(p);
  const int n = p.iterations;
  if (static_cast<int>(tape.components.size()) != n ||
      static_cast<int>(tape.features.size()) != n + 1) {
    throw std::logic_error("backward_recurrence called without a complete forward tape");
  }
  const Eigen::Index pixels = tape.features[0].values.rows();
  const std::size_t plane = static_cast<std::size_t>(pixels);
  if (grad_centers.size() != plane * n || grad_scales.size() != plane * n) {
    throw std::invalid_argument("upstream gradient size mismatch");
  }

  DecompParamGrads g;
  g.w_decomposer = Eigen::MatrixXd::Zero(p.component_dim, p.feature_dim);
  g.b_decomposer = Eigen::VectorXd::Zero(p.component_dim);
  g.w_remapper = Eigen::MatrixXd::Zero(p.feature_dim, p.component_dim);
  g.b_remapper = Eigen::VectorXd::Zero(p.feature_dim);
  g.w_predictor.assign(p.w_predictor.size(), Eigen::MatrixXd::Zero(2, p.component_dim));
  g.b_predictor.assign(p.b_predictor.size(), Eigen::VectorXd::Zero(2));

  // Predictor path: raw -> (center, scale) links, accumulated per iteration.
  std::vector<Eigen::MatrixXd> grad_component(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd& raw = tape.raw_pred[i];
    Eigen::MatrixXd graw(pixels, 2);
    for (Eigen::Index r = 0; r < pixels; ++r) {
      const double gc = grad_centers[static_cast<std::size_t>(i) * plane + r];
      const double gs = grad_scales[static_cast<std::size_t>(i) * plane + r];
      const double dcenter =
          opts.center_link == CenterLink::Softplus ? sigmoid(raw(r, 0)) : 1.0;
      const double pre_clip = opts.scale_clip_lo + softplus(raw(r, 1));
      const double dscale = pre_clip < opts.scale_clip_hi ? sigmoid(raw(r, 1)) : 0.0;
      graw(r, 0) = gc * dcenter;
      graw(r, 1) = gs * dscale;
    }
    const std::size_t k = p.shared_predictor() ? 0 : static_cast<std::size_t>(i);
    g.w_predictor[k] += graw.transpose() * tape.components[i].values;
    g.b_predictor[k] += graw.colwise().sum().transpose();
    grad_component[i] = graw * p.predictor_w(i);
  }

  // Recurrence path, last iteration first.
  Eigen::MatrixXd grad_f = Eigen::MatrixXd::Zero(pixels, p.feature_dim);
  Eigen::MatrixXd grad_fprev(pixels, p.feature_dim);
  Eigen::MatrixXd grad_remapped(pixels, p.feature_dim);
  for (int i = n - 1; i >= 0; --i) {
    const Eigen::MatrixXd& c_i = tape.components[i].values;
    const Eigen::MatrixXd& f_prev = tape.features[i].values;
    grad_fprev = grad_f;  // F_i = F_{i-1} - eta * R(C_i)
    Eigen::MatrixXd& gc = grad_component[i];

    if (!tape.degenerate[i]) {
      const Eigen::MatrixXd& remapped = tape.remapped[i];
      const double eta = tape.eta[i];
      const double na = tape.norm_prev[i];
      const double nb = tape.norm_remapped[i];
      grad_remapped.noalias() = -eta * grad_f;
      if (!opts.eta_detached && na > std::numeric_limits<double>::min()) {
        const double g_eta = -(grad_f.cwiseProduct(remapped)).sum();
        grad_fprev.noalias() += (g_eta / (nb * na)) * f_prev;
        grad_remapped.noalias() += (-g_eta * na / (nb * nb * nb)) * remapped;
      }
      gc.noalias() += grad_remapped * p.w_remapper;
      g.w_remapper.noalias() += grad_remapped.transpose() * c_i;
      g.b_remapper.noalias() += grad_remapped.colwise().sum().transpose();
    }

    grad_fprev.noalias() += gc * p.w_decomposer;
    g.w_decomposer.noalias() += gc.transpose() * f_prev;
    g.b_decomposer.noalias() += gc.colwise().sum().transpose();
    std::swap(grad_f, grad_fprev);
  }
  g.f0 = std::move(grad_f);
  return g;
}

// ---------------------------------------------------------------------------
// Flat views.
// ---------------------------------------------------------------------------

namespace {

void append_matrix(std::vector<double>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

void append_vector(std::vector<double>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
}

std::size_t read_matrix(const std::vector<double>& in, std::size_t pos, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[pos++];
  return pos;
}

std::size_t read_vector(const std::vector<double>& in, std::size_t pos, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = in[pos++];
  return pos;
}

}  // namespace

std::vector<double> flatten_params(const DecompParams& p) {
  std::vector<double> out;
  append_matrix(out, p.w_decomposer);
  append_vector(out, p.b_decomposer);
  append_matrix(out, p.w_remapper);
  append_vector(out, p.b_remapper);
  for (std::size_t k = 0; k < p.w_predictor.size(); ++k) {
    append_matrix(out, p.w_predictor[k]);
    append_vector(out, p.b_predictor[k]);
  }
  return out;
}

void unflatten_params(const std::vector<double>& flat, DecompParams& p) {
  std::size_t pos = 0;
  pos = read_matrix(flat, pos, p.w_decomposer);
  pos = read_vector(flat, pos, p.b_decomposer);
  pos = read_matrix(flat, pos, p.w_remapper);
  pos = read_vector(flat, pos, p.b_remapper);
  for (std::size_t k = 0; k < p.w_predictor.size(); ++k) {
    pos = read_matrix(flat, pos, p.w_predictor[k]);
    pos = read_vector(flat, pos, p.b_predictor[k]);
  }
  if (pos != flat.size()) throw std::invalid_argument("flat parameter size mismatch");
}

std::vector<double> flatten_grads(const DecompParamGrads& g) {
  std::vector<double> out;
  append_matrix(out, g.w_decomposer);
  append_vector(out, g.b_decomposer);
  append_matrix(out, g.w_remapper);
  append_vector(out, g.b_remapper);
  for (std::size_t k = 0; k < g.w_predictor.size(); ++k) {
    append_matrix(out, g.w_predictor[k]);
    append_vector(out, g.b_predictor[k]);
  }
  return out;
}

}  // namespace mldepth
