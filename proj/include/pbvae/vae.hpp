#ifndef PBVAE_VAE_HPP
#define PBVAE_VAE_HPP

#include <cstddef>
#include <vector>

#include "pbvae/mlp.hpp"
#include "pbvae/rng.hpp"
#include "pbvae/tensor.hpp"

namespace pbvae {

// Gaussian encoder (outputs mu and log sigma) paired with a sigmoid Bernoulli
// decoder. Encoder output width is 2*latent_dim; decoder output width is
// input_dim.
struct VaeModel {
  MlpConfig encoder_config;
  MlpConfig decoder_config;
  ParamVector phi;
  ParamVector theta;
  std::size_t latent_dim = 0;
  std::size_t input_dim = 0;
};

VaeModel make_vae_model(std::size_t input_dim, std::size_t latent_dim,
                        const std::vector<std::size_t>& hidden_widths,
                        InitScheme scheme, RngStream& rng);

struct LossConfig {
  double p_min = 5e-3;       // decoder outputs clamped to [p_min, 1-p_min]
  std::size_t mc_samples = 1;  // latent draws per datapoint
};

// Normalising constant that maps the clamped negative log-likelihood of one
// image onto [0, 1].
double bounded_loss_scale(std::size_t input_dim, double p_min);

struct EncoderOutput {
  Tensor mu;         // batch x d
  Tensor log_sigma;  // batch x d, clipped to [-30, 10]
};

struct LatentSample {
  Tensor z;    // batch x d
  Tensor eps;  // recorded standard normal draws
};

// log sigma outputs are clipped to this window before exponentiation; a
// numerical guard, not model semantics.
constexpr double kLogSigmaMin = -30.0;
constexpr double kLogSigmaMax = 10.0;

EncoderOutput encode(const VaeModel& model, const Tensor& x, bool strict = false);
LatentSample sample_latent(const EncoderOutput& enc, RngStream& rng);
Tensor decode(const VaeModel& model, const Tensor& z, double p_min);

// Per-example log p(x|omega) under the factorised Bernoulli likelihood.
Tensor bernoulli_log_likelihood(const Tensor& x, const Tensor& omega, double p_min);

// Per-example bounded reconstruction loss in [0, 1]: the clamped negative
// log-likelihood averaged over mc_samples latent draws, divided by
// D * log(1/p_min).
Tensor reconstruction_loss(const VaeModel& model, const Tensor& x,
                           const LossConfig& cfg, RngStream& rng);

// Per-example KL(q(z|x) || N(0, I)).
Tensor latent_kl(const EncoderOutput& enc);

struct BetaVaeResult {
  double value = 0.0;          // mean over batch: raw NLL + beta * latent KL
  double recon_nll = 0.0;      // mean raw negative log-likelihood (nats/image)
  double recon_bounded = 0.0;  // mean bounded loss in [0, 1]
  double kl = 0.0;             // mean latent KL
  ParamVector grad_phi;
  ParamVector grad_theta;
};

// The beta-VAE objective with gradients through the latent
// reparameterisation. dropout_rate applies to hidden activations of both
// networks when train_mode is set.
BetaVaeResult beta_vae_objective(const VaeModel& model, const Tensor& batch,
                                 double beta, const LossConfig& cfg, RngStream& rng,
                                 double dropout_rate = 0.0, bool train_mode = false);

struct BoundedLossResult {
  double mean_bounded = 0.0;  // mean of the [0,1] loss over the batch
  double mean_nll = 0.0;      // mean raw NLL (nats/image)
  ParamVector grad_phi;       // gradient of mean_bounded
  ParamVector grad_theta;
};

// Bounded batch loss with gradients; the stochastic term of the PAC-Bayes
// objectives. No latent-KL term.
BoundedLossResult bounded_loss_with_grad(const VaeModel& model, const Tensor& batch,
                                         const LossConfig& cfg, RngStream& rng);

// Batch statistics without gradients, for certificate and report evaluation.
struct EvalStats {
  double mean_bounded = 0.0;
  double mean_nll = 0.0;
  double stderr_bounded = 0.0;  // standard error of the per-example mean
  std::size_t count = 0;
};

EvalStats evaluate_losses(const VaeModel& model, const Tensor& batch,
                          const LossConfig& cfg, RngStream& rng);

}  // namespace pbvae

#endif  // PBVAE_VAE_HPP
