#ifndef PBVAE_CERTIFICATE_HPP
#define PBVAE_CERTIFICATE_HPP

#include <cstdint>
#include <string>

#include "pbvae/dataset.hpp"
#include "pbvae/pacbayes.hpp"
#include "pbvae/vae.hpp"

namespace pbvae {

// kl(q||p) between Bernoulli parameters, with the 0 log 0 = 0 convention.
// p in {0, 1} with mismatched q yields +infinity.
double binary_kl(double q, double p);

// Upper inverse kl*(p|c) = sup{ q in [p,1] : kl(p||q) <= c }. Bisection down
// to adjacent doubles; returns exactly 1.0 when the solution sits too close
// to 1 for the residual |kl(p||q) - c| to be resolved (the bound is vacuous
// there, and 1 is always a valid upper bound).
double kl_inverse(double p, double c);

// Derandomised budget: shifted-norm differences over the prior variances
// plus the confidence term, exact (the norm terms may be negative; callers
// floor the total at 0 before inversion).
double derandomised_budget(const ParamVector& phi, const ParamVector& theta,
                           const WeightPrior& prior, const ParamVector& eps_phi,
                           const ParamVector& eps_theta, std::size_t n, double delta);

// Noise-free variant: slightly larger distance constants, no eps dependence,
// and a log(2 sqrt(n)/delta)/(2n) confidence term.
double noise_free_budget(const ParamVector& phi, const ParamVector& theta,
                         const WeightPrior& prior, std::size_t n, double delta);

enum class CertificateKind { derandomised, noise_free, mcallester_randomised, quadratic_randomised };
enum class CertificateMode { perturbed, small_noise_approx };

struct Certificate {
  CertificateKind kind = CertificateKind::derandomised;
  CertificateMode mode = CertificateMode::perturbed;
  double empirical_loss = 0.0;   // R-hat in [0, 1]
  double empirical_nll = 0.0;    // same quantity in nats/image
  double empirical_stderr = 0.0; // latent-MC standard error of R-hat
  double kl_budget = 0.0;        // floored at 0
  double risk_bound = 1.0;
  double risk_bound_rescaled = 0.0;  // risk_bound * D * log(1/p_min), nats/image
  double delta = 0.05;
  std::size_t n = 0;
  double sigma_phi = 0.0;
  double sigma_theta = 0.0;
  std::uint64_t noise_seed = 0;
  std::string checkpoint_hash;
};

std::string certificate_kind_name(CertificateKind kind);
std::string certificate_mode_name(CertificateMode mode);
std::string certificate_to_json(const Certificate& cert);

// Derandomised certificate over the bound set. perturbed mode draws one
// (eps_phi, eps_theta) from the prior scales with the given seed, evaluates
// the empirical loss at the perturbed weights, and inverts the derandomised
// budget. small_noise_approx evaluates the loss at the unperturbed weights
// while keeping the drawn-eps budget.
Certificate evaluate_certificate(const VaeModel& model, const WeightPrior& prior,
                                 const ImageDataset& bound_set, const PacBayesConfig& config,
                                 CertificateMode mode, std::uint64_t noise_seed);

// Deterministic variant built on noise_free_budget.
Certificate evaluate_noise_free_certificate(const VaeModel& model, const WeightPrior& prior,
                                            const ImageDataset& bound_set,
                                            const PacBayesConfig& config,
                                            std::uint64_t noise_seed);

// Randomised-bound diagnostics at Q = N(phi, s^2 I) x N(theta, s^2 I):
// Monte-Carlo E_Q[R-hat] plus the McAllester and quadratic bound values.
// Reported without a validity claim (no MC correction term).
struct RandomisedReport {
  double mc_loss = 0.0;
  double kl_total = 0.0;
  double mcallester_bound = 0.0;
  double quadratic_bound = 0.0;
  std::size_t m_samples = 0;
  bool s_clamped = false;
  std::string flag = "diagnostic (no MC correction)";
};

RandomisedReport randomised_bound_report(const VaeModel& model, const WeightPrior& prior,
                                         const PosteriorScale& scales,
                                         const ImageDataset& bound_set,
                                         const PacBayesConfig& config, std::size_t m_samples,
                                         std::uint64_t noise_seed);

// Empirical loss statistics over a dataset, chunked, with per-chunk latent
// substreams derived from the seed.
EvalStats dataset_losses(const VaeModel& model, const ImageDataset& ds,
                         const LossConfig& cfg, std::uint64_t seed);

}  // namespace pbvae

#endif  // PBVAE_CERTIFICATE_HPP
