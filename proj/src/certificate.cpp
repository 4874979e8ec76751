#include "pbvae/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pbvae/errors.hpp"

namespace pbvae {

namespace {

constexpr std::size_t kEvalChunk = 1000;

double xlogx_ratio(double a, double b) {
  // a * log(a / b) with the 0 log 0 = 0 convention.
  if (a == 0.0) return 0.0;
  return a * std::log(a / b);
}

// Shared R-hat evaluation for certificates: mean/stderr of the bounded loss
// over the dataset with per-chunk latent streams.
EvalStats chunked_losses(const VaeModel& model, const ImageDataset& ds,
                         const LossConfig& cfg, const RngStream& base) {
  EvalStats total;
  total.count = ds.count;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t chunk_index = 0;
  for (std::size_t begin = 0; begin < ds.count; begin += kEvalChunk, ++chunk_index) {
    const std::size_t end = std::min(begin + kEvalChunk, ds.count);
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
    Tensor batch = gather_batch(ds, rows);
    RngStream chunk_rng = base.substream(StreamId::latent_noise, chunk_index);
    Tensor losses = reconstruction_loss(model, batch, cfg, chunk_rng);
    for (double v : losses.data) {
      sum += v;
      sum_sq += v * v;
    }
  }
  const double n = static_cast<double>(ds.count);
  total.mean_bounded = sum / n;
  if (ds.count > 1) {
    const double var = (sum_sq - n * total.mean_bounded * total.mean_bounded) / (n - 1.0);
    total.stderr_bounded = std::sqrt(std::max(0.0, var) / n);
  }
  total.mean_nll = total.mean_bounded * bounded_loss_scale(model.input_dim, cfg.p_min);
  return total;
}

void check_bound_set(const ImageDataset& bound_set, const PacBayesConfig& config) {
  if (bound_set.count == 0) {
    throw ContractError("certificate: bound set is empty");
  }
  if (config.n_bound != 0 && config.n_bound != bound_set.count) {
    throw ContractError("certificate: config n_bound (" + std::to_string(config.n_bound) +
                        ") does not match bound set size (" + std::to_string(bound_set.count) + ")");
  }
}

}  // namespace

double binary_kl(double q, double p) {
  if (q < 0.0 || q > 1.0) throw ContractError("binary_kl: q must lie in [0, 1]");
  if (p < 0.0 || p > 1.0) throw ContractError("binary_kl: p must lie in [0, 1]");
  if (p == 0.0) return q == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  if (p == 1.0) return q == 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return xlogx_ratio(q, p) + xlogx_ratio(1.0 - q, 1.0 - p);
}

double kl_inverse(double p, double c) {
  if (p < 0.0 || p > 1.0) throw ContractError("kl_inverse: p must lie in [0, 1]");
  if (c < 0.0) throw ContractError("kl_inverse: c must be >= 0");
  if (c == 0.0 || p >= 1.0) return p;

  // kl(p||q) is continuous and increasing in q on [p, 1), from 0 towards
  // +infinity, so bisection applies. Fully resolve the interval: the extra
  // iterations are cheap and the budget tolerance comes out far below 1e-9.
  double lo = p;
  double hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // adjacent doubles
    if (binary_kl(p, mid) <= c) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (hi < 1.0 && binary_kl(p, hi) - c <= 1e-9) return hi;
  if (binary_kl(p, lo) >= c - 1e-9 && lo > p) return lo;
  // The crossing sits so close to 1 that doubles cannot resolve it; report
  // the vacuous bound.
  return 1.0;
}

double derandomised_budget(const ParamVector& phi, const ParamVector& theta,
                           const WeightPrior& prior, const ParamVector& eps_phi,
                           const ParamVector& eps_theta, std::size_t n, double delta) {
  if (!phi.same_layout(prior.phi0) || !phi.same_layout(eps_phi) ||
      !theta.same_layout(prior.theta0) || !theta.same_layout(eps_theta)) {
    throw ShapeError("derandomised_budget: parameter layouts do not match");
  }
  if (n == 0) throw ContractError("derandomised_budget: n must be positive");
  const double nd = static_cast<double>(n);

  auto shifted_norm_diff = [](const ParamVector& w, const ParamVector& w0,
                              const ParamVector& eps) {
    // ||w - w0 + eps||^2 - ||eps||^2
    double acc = 0.0;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto& wl = w.layers[l];
      const auto& w0l = w0.layers[l];
      const auto& el = eps.layers[l];
      for (std::size_t i = 0; i < wl.weight.data.size(); ++i) {
        const double a = wl.weight.data[i] - w0l.weight.data[i];
        const double e = el.weight.data[i];
        acc += (a + e) * (a + e) - e * e;
      }
      for (std::size_t i = 0; i < wl.bias.data.size(); ++i) {
        const double a = wl.bias.data[i] - w0l.bias.data[i];
        const double e = el.bias.data[i];
        acc += (a + e) * (a + e) - e * e;
      }
    }
    return acc;
  };

  const double phi_term = shifted_norm_diff(phi, prior.phi0, eps_phi) /
                          (2.0 * prior.sigma_phi * prior.sigma_phi * nd);
  const double theta_term = shifted_norm_diff(theta, prior.theta0, eps_theta) /
                            (2.0 * prior.sigma_theta * prior.sigma_theta * nd);
  return phi_term + theta_term + std::log(2.0 * std::sqrt(nd) / delta) / nd;
}

double noise_free_budget(const ParamVector& phi, const ParamVector& theta,
                         const WeightPrior& prior, std::size_t n, double delta) {
  if (!phi.same_layout(prior.phi0) || !theta.same_layout(prior.theta0)) {
    throw ShapeError("noise_free_budget: parameter layouts do not match");
  }
  if (n == 0) throw ContractError("noise_free_budget: n must be positive");
  const double nd = static_cast<double>(n);
  const double phi_term = param_squared_distance(phi, prior.phi0) /
                          (2.0 * prior.sigma_phi * prior.sigma_phi * nd);
  const double theta_term = param_squared_distance(theta, prior.theta0) /
                            (2.0 * prior.sigma_theta * prior.sigma_theta * nd);
  return phi_term + theta_term + std::log(2.0 * std::sqrt(nd) / delta) / (2.0 * nd);
}

std::string certificate_kind_name(CertificateKind kind) {
  switch (kind) {
    case CertificateKind::derandomised: return "derandomised";
    case CertificateKind::noise_free: return "noise_free";
    case CertificateKind::mcallester_randomised: return "mcallester_randomised";
    case CertificateKind::quadratic_randomised: return "quadratic_randomised";
  }
  return "unknown";
}

std::string certificate_mode_name(CertificateMode mode) {
  return mode == CertificateMode::perturbed ? "perturbed" : "small_noise_approx";
}

std::string certificate_to_json(const Certificate& cert) {
  nlohmann::json j;
  j["kind"] = certificate_kind_name(cert.kind);
  j["mode"] = certificate_mode_name(cert.mode);
  j["empirical_loss"] = cert.empirical_loss;
  j["empirical_nll_per_image"] = cert.empirical_nll;
  j["empirical_stderr"] = cert.empirical_stderr;
  j["kl_budget"] = cert.kl_budget;
  j["risk_bound"] = cert.risk_bound;
  j["risk_bound_rescaled_nats_per_image"] = cert.risk_bound_rescaled;
  j["n"] = cert.n;
  j["delta"] = cert.delta;
  j["sigma_phi"] = cert.sigma_phi;
  j["sigma_theta"] = cert.sigma_theta;
  j["noise_seed"] = cert.noise_seed;
  j["checkpoint_hash"] = cert.checkpoint_hash;
  return j.dump();
}

Certificate evaluate_certificate(const VaeModel& model, const WeightPrior& prior,
                                 const ImageDataset& bound_set, const PacBayesConfig& config,
                                 CertificateMode mode, std::uint64_t noise_seed) {
  check_bound_set(bound_set, config);

  RngStream cert_rng(noise_seed);
  RngStream eps_rng = cert_rng.substream(StreamId::certificate_noise);
  // One perturbation draw at the prior scales (the certificate posterior
  // reuses the prior variance).
  PerturbedParams phi_p = perturb_weights(model.phi, prior.sigma_phi, eps_rng);
  PerturbedParams theta_p = perturb_weights(model.theta, prior.sigma_theta, eps_rng);
  // perturb_weights records unit noise; the budget's eps carries the sigma.
  ParamVector eps_phi = zeros_like(phi_p.eps);
  param_axpy(prior.sigma_phi, phi_p.eps, eps_phi);
  ParamVector eps_theta = zeros_like(theta_p.eps);
  param_axpy(prior.sigma_theta, theta_p.eps, eps_theta);

  const VaeModel* eval_model = &model;
  VaeModel perturbed = model;
  if (mode == CertificateMode::perturbed) {
    perturbed.phi = phi_p.noisy;
    perturbed.theta = theta_p.noisy;
    eval_model = &perturbed;
  }

  EvalStats stats = chunked_losses(*eval_model, bound_set, config.loss, cert_rng);

  const double raw_budget = derandomised_budget(model.phi, model.theta, prior, eps_phi,
                                                eps_theta, bound_set.count, config.delta);

  Certificate cert;
  cert.kind = CertificateKind::derandomised;
  cert.mode = mode;
  cert.empirical_loss = stats.mean_bounded;
  cert.empirical_nll = stats.mean_nll;
  cert.empirical_stderr = stats.stderr_bounded;
  cert.kl_budget = std::max(0.0, raw_budget);
  cert.risk_bound = kl_inverse(cert.empirical_loss, cert.kl_budget);
  cert.risk_bound_rescaled =
      cert.risk_bound * bounded_loss_scale(model.input_dim, config.loss.p_min);
  cert.delta = config.delta;
  cert.n = bound_set.count;
  cert.sigma_phi = prior.sigma_phi;
  cert.sigma_theta = prior.sigma_theta;
  cert.noise_seed = noise_seed;
  return cert;
}

Certificate evaluate_noise_free_certificate(const VaeModel& model, const WeightPrior& prior,
                                            const ImageDataset& bound_set,
                                            const PacBayesConfig& config,
                                            std::uint64_t noise_seed) {
  check_bound_set(bound_set, config);
  RngStream cert_rng(noise_seed);
  EvalStats stats = chunked_losses(model, bound_set, config.loss, cert_rng);

  Certificate cert;
  cert.kind = CertificateKind::noise_free;
  cert.mode = CertificateMode::small_noise_approx;
  cert.empirical_loss = stats.mean_bounded;
  cert.empirical_nll = stats.mean_nll;
  cert.empirical_stderr = stats.stderr_bounded;
  cert.kl_budget =
      noise_free_budget(model.phi, model.theta, prior, bound_set.count, config.delta);
  cert.risk_bound = kl_inverse(cert.empirical_loss, cert.kl_budget);
  cert.risk_bound_rescaled =
      cert.risk_bound * bounded_loss_scale(model.input_dim, config.loss.p_min);
  cert.delta = config.delta;
  cert.n = bound_set.count;
  cert.sigma_phi = prior.sigma_phi;
  cert.sigma_theta = prior.sigma_theta;
  cert.noise_seed = noise_seed;
  return cert;
}

RandomisedReport randomised_bound_report(const VaeModel& model, const WeightPrior& prior,
                                         const PosteriorScale& scales,
                                         const ImageDataset& bound_set,
                                         const PacBayesConfig& config, std::size_t m_samples,
                                         std::uint64_t noise_seed) {
  check_bound_set(bound_set, config);
  if (m_samples == 0) throw ContractError("randomised_bound_report: m_samples must be >= 1");

  RandomisedReport report;
  report.m_samples = m_samples;

  // Degenerate-variance guard: s below 1e-8 is clamped and flagged.
  double s_phi = scales.s_phi();
  double s_theta = scales.s_theta();
  if (s_phi < 1e-8 || s_theta < 1e-8) {
    s_phi = std::max(s_phi, 1e-8);
    s_theta = std::max(s_theta, 1e-8);
    report.s_clamped = true;
  }

  RngStream base(noise_seed);
  VaeModel noisy = model;
  for (std::size_t m = 0; m < m_samples; ++m) {
    RngStream draw_rng = base.substream(StreamId::weight_noise, m);
    PerturbedParams phi_p = perturb_weights(model.phi, s_phi, draw_rng);
    PerturbedParams theta_p = perturb_weights(model.theta, s_theta, draw_rng);
    noisy.phi = std::move(phi_p.noisy);
    noisy.theta = std::move(theta_p.noisy);
    EvalStats stats =
        chunked_losses(noisy, bound_set, config.loss, base.substream(StreamId::scratch, m));
    report.mc_loss += stats.mean_bounded / static_cast<double>(m_samples);
  }

  const double nd = static_cast<double>(bound_set.count);
  report.kl_total =
      gaussian_weight_kl(model.phi, prior.phi0, prior.sigma_phi * prior.sigma_phi, s_phi * s_phi) +
      gaussian_weight_kl(model.theta, prior.theta0, prior.sigma_theta * prior.sigma_theta,
                         s_theta * s_theta);
  const double budget =
      (report.kl_total + std::log(2.0 * std::sqrt(nd) / config.delta)) / (2.0 * nd);
  report.mcallester_bound = report.mc_loss + std::sqrt(budget);
  report.quadratic_bound = pbvae::quadratic_bound(report.mc_loss, budget);
  return report;
}

EvalStats dataset_losses(const VaeModel& model, const ImageDataset& ds,
                         const LossConfig& cfg, std::uint64_t seed) {
  if (ds.count == 0) throw ContractError("dataset_losses: dataset is empty");
  RngStream base(seed);
  return chunked_losses(model, ds, cfg, base);
}

}  // namespace pbvae
