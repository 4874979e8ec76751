#include "pbvae/pacbayes.hpp"

#include <cmath>
#include <string>

#include "pbvae/errors.hpp"

namespace pbvae {

namespace {

struct PenaltyTerms {
  double value = 0.0;          // the penalty itself
  double d_dist2 = 0.0;        // derivative w.r.t. the squared distance
  double d_rho = 0.0;          // derivative w.r.t. rho = log s
};

// McAllester per-network penalty and its derivatives.
PenaltyTerms mcallester_penalty(double dist2, std::size_t n_params, double sigma,
                                double s, double n, double delta, double lambda) {
  const double sigma2 = sigma * sigma;
  const double s2 = s * s;
  const double r = s2 / sigma2;
  const double variance_term =
      static_cast<double>(n_params) * (r + std::log(1.0 / r) - 1.0) / (4.0 * n);
  const double dist_term = dist2 / (4.0 * sigma2 * n);
  const double conf = std::log(2.0 * std::sqrt(n) / delta) / (2.0 * n);
  const double inside = lambda * (dist_term + variance_term) + conf;
  if (inside < 0.0) {
    throw ContractError("mcallester penalty: negative value under square root");
  }
  PenaltyTerms out;
  out.value = std::sqrt(inside);
  out.d_dist2 = lambda / (4.0 * sigma2 * n) / (2.0 * out.value);
  out.d_rho = lambda * static_cast<double>(n_params) * (r - 1.0) / (2.0 * n) / (2.0 * out.value);
  return out;
}

void check_config(const PacBayesConfig& config) {
  if (config.delta <= 0.0 || config.delta >= 1.0) {
    throw ContractError("pacbayes: delta must lie in (0, 1)");
  }
  if (config.n_bound == 0) throw ContractError("pacbayes: n_bound must be positive");
  if (config.kl_attenuation <= 0.0 || config.kl_attenuation > 1.0) {
    throw ContractError("pacbayes: kl_attenuation must lie in (0, 1]");
  }
  if (config.weight_noise_samples == 0) {
    throw ContractError("pacbayes: weight_noise_samples must be >= 1");
  }
}

// Stochastic bounded loss at noise-perturbed weights, averaged over
// weight_noise_samples draws, with gradients for all four parameter groups.
struct StochasticLoss {
  double bounded = 0.0;
  double nll = 0.0;
  ParamVector grad_phi;
  ParamVector grad_theta;
  double grad_rho_phi = 0.0;
  double grad_rho_theta = 0.0;
};

StochasticLoss stochastic_loss(const VaeModel& model, const PosteriorScale& scales,
                               const PacBayesConfig& config, const Tensor& batch,
                               RngStream& rng) {
  const double s_phi = scales.s_phi();
  const double s_theta = scales.s_theta();
  const std::size_t K = config.weight_noise_samples;
  const double inv_k = 1.0 / static_cast<double>(K);

  StochasticLoss acc;
  acc.grad_phi = zeros_like(model.phi);
  acc.grad_theta = zeros_like(model.theta);

  VaeModel noisy = model;
  for (std::size_t k = 0; k < K; ++k) {
    RngStream noise_rng = rng.substream(StreamId::weight_noise, k);
    PerturbedParams phi_p = perturb_weights(model.phi, s_phi, noise_rng);
    PerturbedParams theta_p = perturb_weights(model.theta, s_theta, noise_rng);
    noisy.phi = std::move(phi_p.noisy);
    noisy.theta = std::move(theta_p.noisy);

    RngStream loss_rng = k == 0 ? rng : rng.substream(StreamId::scratch, k);
    BoundedLossResult bl = bounded_loss_with_grad(noisy, batch, config.loss, loss_rng);

    acc.bounded += inv_k * bl.mean_bounded;
    acc.nll += inv_k * bl.mean_nll;
    // Pass-through gradient to the centres; chain rule through s*eps to rho.
    acc.grad_rho_phi += inv_k * s_phi * param_dot(bl.grad_phi, phi_p.eps);
    acc.grad_rho_theta += inv_k * s_theta * param_dot(bl.grad_theta, theta_p.eps);
    param_axpy(inv_k, bl.grad_phi, acc.grad_phi);
    param_axpy(inv_k, bl.grad_theta, acc.grad_theta);
  }
  return acc;
}

}  // namespace

double PosteriorScale::s_phi() const { return std::exp(rho_phi); }
double PosteriorScale::s_theta() const { return std::exp(rho_theta); }

double gaussian_weight_kl(const ParamVector& center, const ParamVector& prior_center,
                          double sigma2, double s2) {
  if (sigma2 <= 0.0 || s2 <= 0.0) {
    throw ContractError("gaussian_weight_kl: variances must be positive");
  }
  const double dist2 = param_squared_distance(center, prior_center);
  const double n = static_cast<double>(center.total_count());
  return dist2 / (2.0 * sigma2) + 0.5 * n * (s2 / sigma2 + std::log(sigma2 / s2) - 1.0);
}

PerturbedParams perturb_weights(const ParamVector& params, double s, RngStream& rng) {
  if (s <= 0.0) throw ContractError("perturb_weights: s must be positive");
  PerturbedParams out;
  out.noisy = params;
  out.eps = zeros_like(params);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& noisy = out.noisy.layers[l];
    auto& eps = out.eps.layers[l];
    for (std::size_t i = 0; i < noisy.weight.data.size(); ++i) {
      eps.weight.data[i] = rng.next_gaussian();
      noisy.weight.data[i] += s * eps.weight.data[i];
    }
    for (std::size_t i = 0; i < noisy.bias.data.size(); ++i) {
      eps.bias.data[i] = rng.next_gaussian();
      noisy.bias.data[i] += s * eps.bias.data[i];
    }
  }
  return out;
}

PbObjectiveResult mcallester_objective(const VaeModel& model, const WeightPrior& prior,
                                       const PosteriorScale& scales, const Tensor& batch,
                                       const PacBayesConfig& config, RngStream& rng) {
  check_config(config);
  const double n = static_cast<double>(config.n_bound);
  const double lambda = config.kl_attenuation;

  StochasticLoss sl = stochastic_loss(model, scales, config, batch, rng);

  const double dist2_phi = param_squared_distance(model.phi, prior.phi0);
  const double dist2_theta = param_squared_distance(model.theta, prior.theta0);
  PenaltyTerms pen_phi =
      mcallester_penalty(dist2_phi, model.phi.total_count(), prior.sigma_phi,
                         scales.s_phi(), n, config.delta, lambda);
  PenaltyTerms pen_theta =
      mcallester_penalty(dist2_theta, model.theta.total_count(), prior.sigma_theta,
                         scales.s_theta(), n, config.delta, lambda);

  PbObjectiveResult result;
  result.batch_loss = sl.bounded;
  result.batch_nll = sl.nll;
  result.penalty_phi = pen_phi.value;
  result.penalty_theta = pen_theta.value;
  result.value = sl.bounded + pen_phi.value + pen_theta.value;

  result.grad_phi = std::move(sl.grad_phi);
  result.grad_theta = std::move(sl.grad_theta);
  // d(dist^2)/dw = 2 (w - w0)
  for (std::size_t l = 0; l < result.grad_phi.layers.size(); ++l) {
    auto& g = result.grad_phi.layers[l];
    const auto& w = model.phi.layers[l];
    const auto& w0 = prior.phi0.layers[l];
    for (std::size_t i = 0; i < g.weight.data.size(); ++i) {
      g.weight.data[i] += pen_phi.d_dist2 * 2.0 * (w.weight.data[i] - w0.weight.data[i]);
    }
    for (std::size_t i = 0; i < g.bias.data.size(); ++i) {
      g.bias.data[i] += pen_phi.d_dist2 * 2.0 * (w.bias.data[i] - w0.bias.data[i]);
    }
  }
  for (std::size_t l = 0; l < result.grad_theta.layers.size(); ++l) {
    auto& g = result.grad_theta.layers[l];
    const auto& w = model.theta.layers[l];
    const auto& w0 = prior.theta0.layers[l];
    for (std::size_t i = 0; i < g.weight.data.size(); ++i) {
      g.weight.data[i] += pen_theta.d_dist2 * 2.0 * (w.weight.data[i] - w0.weight.data[i]);
    }
    for (std::size_t i = 0; i < g.bias.data.size(); ++i) {
      g.bias.data[i] += pen_theta.d_dist2 * 2.0 * (w.bias.data[i] - w0.bias.data[i]);
    }
  }
  result.grad_rho_phi = sl.grad_rho_phi + pen_phi.d_rho;
  result.grad_rho_theta = sl.grad_rho_theta + pen_theta.d_rho;
  return result;
}

double quadratic_bound(double empirical_loss, double budget) {
  if (empirical_loss < 0.0 || budget < 0.0) {
    throw ContractError("quadratic_bound: arguments must be nonnegative");
  }
  const double root = std::sqrt(budget) + std::sqrt(empirical_loss + budget);
  return root * root;
}

PbObjectiveResult quadratic_objective(const VaeModel& model, const WeightPrior& prior,
                                      const PosteriorScale& scales, const Tensor& batch,
                                      const PacBayesConfig& config, RngStream& rng) {
  check_config(config);
  const double n = static_cast<double>(config.n_bound);
  const double lambda = config.kl_attenuation;

  StochasticLoss sl = stochastic_loss(model, scales, config, batch, rng);

  const double sp2 = scales.s_phi() * scales.s_phi();
  const double st2 = scales.s_theta() * scales.s_theta();
  const double kl_phi =
      gaussian_weight_kl(model.phi, prior.phi0, prior.sigma_phi * prior.sigma_phi, sp2);
  const double kl_theta =
      gaussian_weight_kl(model.theta, prior.theta0, prior.sigma_theta * prior.sigma_theta, st2);
  const double conf = std::log(2.0 * std::sqrt(n) / config.delta);
  const double budget = (lambda * (kl_phi + kl_theta) + conf) / (2.0 * n);

  const double rhat = sl.bounded;
  const double u = std::sqrt(budget);
  const double v = std::sqrt(rhat + budget);
  const double d_rhat = (u + v) / v;
  const double d_budget = (u + v) * (1.0 / u + 1.0 / v);

  PbObjectiveResult result;
  result.batch_loss = rhat;
  result.batch_nll = sl.nll;
  result.penalty_phi = lambda * kl_phi / (2.0 * n);
  result.penalty_theta = lambda * kl_theta / (2.0 * n);
  result.value = quadratic_bound(rhat, budget);

  result.grad_phi = std::move(sl.grad_phi);
  result.grad_theta = std::move(sl.grad_theta);
  for (auto& layer : result.grad_phi.layers) {
    for (double& g : layer.weight.data) g *= d_rhat;
    for (double& g : layer.bias.data) g *= d_rhat;
  }
  for (auto& layer : result.grad_theta.layers) {
    for (double& g : layer.weight.data) g *= d_rhat;
    for (double& g : layer.bias.data) g *= d_rhat;
  }
  // dKL/dw = (w - w0) / sigma^2; dB/dw = lambda * dKL/dw / (2n).
  const double c_phi = d_budget * lambda / (prior.sigma_phi * prior.sigma_phi) / (2.0 * n);
  const double c_theta = d_budget * lambda / (prior.sigma_theta * prior.sigma_theta) / (2.0 * n);
  for (std::size_t l = 0; l < result.grad_phi.layers.size(); ++l) {
    auto& g = result.grad_phi.layers[l];
    const auto& w = model.phi.layers[l];
    const auto& w0 = prior.phi0.layers[l];
    for (std::size_t i = 0; i < g.weight.data.size(); ++i) {
      g.weight.data[i] += c_phi * (w.weight.data[i] - w0.weight.data[i]);
    }
    for (std::size_t i = 0; i < g.bias.data.size(); ++i) {
      g.bias.data[i] += c_phi * (w.bias.data[i] - w0.bias.data[i]);
    }
  }
  for (std::size_t l = 0; l < result.grad_theta.layers.size(); ++l) {
    auto& g = result.grad_theta.layers[l];
    const auto& w = model.theta.layers[l];
    const auto& w0 = prior.theta0.layers[l];
    for (std::size_t i = 0; i < g.weight.data.size(); ++i) {
      g.weight.data[i] += c_theta * (w.weight.data[i] - w0.weight.data[i]);
    }
    for (std::size_t i = 0; i < g.bias.data.size(); ++i) {
      g.bias.data[i] += c_theta * (w.bias.data[i] - w0.bias.data[i]);
    }
  }
  // dKL/drho = N (s^2/sigma^2 - 1).
  const double np = static_cast<double>(model.phi.total_count());
  const double nt = static_cast<double>(model.theta.total_count());
  result.grad_rho_phi =
      d_rhat * sl.grad_rho_phi +
      d_budget * lambda * np * (sp2 / (prior.sigma_phi * prior.sigma_phi) - 1.0) / (2.0 * n);
  result.grad_rho_theta =
      d_rhat * sl.grad_rho_theta +
      d_budget * lambda * nt * (st2 / (prior.sigma_theta * prior.sigma_theta) - 1.0) / (2.0 * n);
  return result;
}

std::uint64_t epoch_shuffle_seed(const RngStream& run_rng, std::size_t epoch) {
  return run_rng.substream(StreamId::data_shuffle, epoch).key();
}

TrainLog train_posterior(VaeModel& model, const WeightPrior& prior, PosteriorScale& scales,
                         const PacBayesConfig& config, const ImageDataset& dataset,
                         const TrainOptions& opts, RngStream& rng) {
  check_config(config);
  TrainLog log;
  AdamState adam_phi = make_adam_state(model.phi, opts.learning_rate);
  AdamState adam_theta = make_adam_state(model.theta, opts.learning_rate);
  ScalarAdamState adam_rho_phi;
  adam_rho_phi.learning_rate = opts.learning_rate;
  ScalarAdamState adam_rho_theta;
  adam_rho_theta.learning_rate = opts.learning_rate;

  VaeModel snapshot_model = model;
  PosteriorScale snapshot_scales = scales;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Minibatches batches(dataset, opts.batch_size, epoch_shuffle_seed(rng, epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    const double inv_b = 1.0 / static_cast<double>(batches.batch_count());

    for (std::size_t b = 0; b < batches.batch_count(); ++b, ++global_step) {
      Tensor batch = batches.batch(b);
      RngStream step_rng = rng.substream(StreamId::scratch, global_step);
      PbObjectiveResult res =
          config.bound_kind == BoundKind::mcallester
              ? mcallester_objective(model, prior, scales, batch, config, step_rng)
              : quadratic_objective(model, prior, scales, batch, config, step_rng);

      if (!std::isfinite(res.value) || !param_all_finite(res.grad_phi) ||
          !param_all_finite(res.grad_theta) || !std::isfinite(res.grad_rho_phi) ||
          !std::isfinite(res.grad_rho_theta)) {
        model = snapshot_model;
        scales = snapshot_scales;
        log.diverged = true;
        return log;
      }

      adam_step(model.phi, res.grad_phi, adam_phi);
      adam_step(model.theta, res.grad_theta, adam_theta);
      scales.rho_phi = scalar_adam_step(scales.rho_phi, res.grad_rho_phi, adam_rho_phi);
      scales.rho_theta = scalar_adam_step(scales.rho_theta, res.grad_rho_theta, adam_rho_theta);

      rec.objective += inv_b * res.value;
      rec.recon_raw += inv_b * res.batch_nll;
      rec.recon_bounded += inv_b * res.batch_loss;
      rec.penalty_phi += inv_b * res.penalty_phi;
      rec.penalty_theta += inv_b * res.penalty_theta;
    }

    rec.s_phi = scales.s_phi();
    rec.s_theta = scales.s_theta();
    log.records.push_back(rec);
    snapshot_model = model;
    snapshot_scales = scales;
  }
  return log;
}

}  // namespace pbvae
