#ifndef PBVAE_PACBAYES_HPP
#define PBVAE_PACBAYES_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "pbvae/dataset.hpp"
#include "pbvae/mlp.hpp"
#include "pbvae/rng.hpp"
#include "pbvae/vae.hpp"

namespace pbvae {

// Prior over weights: Gaussians centred at (phi0, theta0) with fixed
// isotropic variances. The variances stay fixed during posterior training.
struct WeightPrior {
  ParamVector phi0;
  ParamVector theta0;
  double sigma_phi = 0.01;
  double sigma_theta = 0.01;
};

// Learnable per-network log standard deviations of the training-time weight
// posterior: s = exp(rho) keeps the scales positive.
struct PosteriorScale {
  double rho_phi = 0.0;
  double rho_theta = 0.0;

  double s_phi() const;
  double s_theta() const;
};

enum class BoundKind { mcallester, quadratic };

struct PacBayesConfig {
  double delta = 0.05;
  std::size_t n_bound = 0;      // size of the bound-evaluation set
  BoundKind bound_kind = BoundKind::mcallester;
  double kl_attenuation = 1.0;  // lambda in (0, 1]
  std::size_t weight_noise_samples = 1;
  LossConfig loss;
};

// KL(N(center, s2 I) || N(prior_center, sigma2 I)) in closed form.
double gaussian_weight_kl(const ParamVector& center, const ParamVector& prior_center,
                          double sigma2, double s2);

// w_tilde = w + s * eps with eps ~ N(0, I); eps is recorded so gradients
// w.r.t. w (pass-through) and rho = log s (via s * eps) are exact.
struct PerturbedParams {
  ParamVector noisy;
  ParamVector eps;
};

PerturbedParams perturb_weights(const ParamVector& params, double s, RngStream& rng);

struct PbObjectiveResult {
  double value = 0.0;
  double batch_loss = 0.0;      // stochastic bounded loss at perturbed weights
  double batch_nll = 0.0;       // raw nats/image at perturbed weights
  double penalty_phi = 0.0;     // per-network penalty contribution (see below)
  double penalty_theta = 0.0;
  ParamVector grad_phi;
  ParamVector grad_theta;
  double grad_rho_phi = 0.0;
  double grad_rho_theta = 0.0;
};

// McAllester-form training objective: stochastic bounded batch loss plus one
// sqrt penalty per network,
//   sqrt( lambda * [ d^2/(4 sigma^2 n) + N(s^2/sigma^2 + log(sigma^2/s^2) - 1)/(4n) ]
//         + log(2 sqrt(n)/delta)/(2n) ).
// lambda attenuates the distance and variance terms inside the sqrt; the
// confidence term is never attenuated. penalty_phi/theta hold the two sqrt
// values.
PbObjectiveResult mcallester_objective(const VaeModel& model, const WeightPrior& prior,
                                       const PosteriorScale& scales, const Tensor& batch,
                                       const PacBayesConfig& config, RngStream& rng);

// Quadratic-form objective (sqrt(B) + sqrt(R + B))^2 with
// B = (lambda * KL_total + log(2 sqrt(n)/delta)) / (2n). penalty_phi/theta
// hold the per-network attenuated KL contributions to B.
PbObjectiveResult quadratic_objective(const VaeModel& model, const WeightPrior& prior,
                                      const PosteriorScale& scales, const Tensor& batch,
                                      const PacBayesConfig& config, RngStream& rng);

// Pure algebraic form of the quadratic bound, shared with diagnostics.
double quadratic_bound(double empirical_loss, double budget);

struct EpochRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double recon_raw = 0.0;      // nats/image
  double recon_bounded = 0.0;  // [0, 1]
  double penalty_phi = 0.0;
  double penalty_theta = 0.0;
  double s_phi = 0.0;
  double s_theta = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  bool diverged = false;
};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
};

// Shared epoch-shuffle derivation so baseline and PAC-Bayes runs see the
// same data order for the same seed.
std::uint64_t epoch_shuffle_seed(const RngStream& run_rng, std::size_t epoch);

// Minibatch Adam over (phi, theta, rho_phi, rho_theta) on the configured
// objective. The caller seeds model at the prior centre and scales at
// s = sigma/2. On divergence the last epoch-end snapshot is restored and the
// log is marked.
TrainLog train_posterior(VaeModel& model, const WeightPrior& prior, PosteriorScale& scales,
                         const PacBayesConfig& config, const ImageDataset& dataset,
                         const TrainOptions& opts, RngStream& rng);

}  // namespace pbvae

#endif  // PBVAE_PACBAYES_HPP
