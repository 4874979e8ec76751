#include "pbvae/vae.hpp"

#include <cmath>
#include <string>

#include "pbvae/errors.hpp"

namespace pbvae {

namespace {

double clip(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

void check_binary(const Tensor& x) {
  for (double v : x.data) {
    if (v != 0.0 && v != 1.0) {
      throw ContractError("encode: input is not binary (strict mode)");
    }
  }
}

// Splits the raw encoder output (batch x 2d) into mu and clipped log sigma.
EncoderOutput split_encoder_output(const Tensor& out, std::size_t d) {
  const std::size_t batch = out.rows();
  EncoderOutput enc;
  enc.mu = Tensor::zeros({batch, d});
  enc.log_sigma = Tensor::zeros({batch, d});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      enc.mu.at(i, k) = out.at(i, k);
      enc.log_sigma.at(i, k) = clip(out.at(i, d + k), kLogSigmaMin, kLogSigmaMax);
    }
  }
  return enc;
}

struct ReconGradients {
  double mean_nll = 0.0;
  ParamVector grad_theta;  // gradient of mean NLL over batch and draws
  Tensor d_mu;             // gradient w.r.t. mu, same scale
  Tensor d_log_sigma;      // gradient w.r.t. (clipped) log sigma
};

// Shared forward/backward for the reconstruction term. Accumulates the
// gradient of (1/(B*S)) * sum_i sum_s NLL(x_i, z_{i,s}) through the decoder
// and the reparameterisation.
ReconGradients recon_pass(const VaeModel& model, const Tensor& batch,
                          const EncoderOutput& enc, const Tensor& raw_enc_out,
                          const LossConfig& cfg, RngStream& latent_rng,
                          double dropout_rate, bool train_mode, RngStream& dropout_rng) {
  const std::size_t B = batch.rows();
  const std::size_t D = model.input_dim;
  const std::size_t d = model.latent_dim;
  const std::size_t S = cfg.mc_samples;
  const double p_min = cfg.p_min;
  const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(S));

  ReconGradients acc;
  acc.grad_theta = zeros_like(model.theta);
  acc.d_mu = Tensor::zeros({B, d});
  acc.d_log_sigma = Tensor::zeros({B, d});

  for (std::size_t s = 0; s < S; ++s) {
    Tensor eps = gaussian_sample(latent_rng, {B, d});
    Tensor z = Tensor::zeros({B, d});
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      z.data[i] = enc.mu.data[i] + std::exp(enc.log_sigma.data[i]) * eps.data[i];
    }

    ForwardCache dec_cache;
    Tensor omega = mlp_forward(model.decoder_config, model.theta, z, dropout_rate,
                               dropout_rng, train_mode, &dec_cache);

    Tensor d_omega = Tensor::zeros({B, D});
    for (std::size_t i = 0; i < B; ++i) {
      double nll = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        const double w = omega.at(i, j);
        const double wc = clip(w, p_min, 1.0 - p_min);
        const double x = batch.at(i, j);
        nll -= x * std::log(wc) + (1.0 - x) * std::log(1.0 - wc);
        if (w > p_min && w < 1.0 - p_min) {
          d_omega.at(i, j) = scale * (wc - x) / (wc * (1.0 - wc));
        }
      }
      acc.mean_nll += scale * nll;
    }

    BackwardResult dec_back = mlp_backward(dec_cache, d_omega);
    param_axpy(1.0, dec_back.param_gradient, acc.grad_theta);

    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double dz = dec_back.input_gradient.at(i, k);
        acc.d_mu.at(i, k) += dz;
        const double raw_ls = raw_enc_out.at(i, d + k);
        if (raw_ls > kLogSigmaMin && raw_ls < kLogSigmaMax) {
          acc.d_log_sigma.at(i, k) += dz * eps.at(i, k) * std::exp(enc.log_sigma.at(i, k));
        }
      }
    }
  }
  return acc;
}

ParamVector encoder_backward(const ForwardCache& enc_cache, const Tensor& d_mu,
                             const Tensor& d_log_sigma, const Tensor& raw_enc_out,
                             std::size_t d) {
  const std::size_t B = d_mu.rows();
  Tensor d_out = Tensor::zeros({B, 2 * d});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      d_out.at(i, k) = d_mu.at(i, k);
      const double raw_ls = raw_enc_out.at(i, d + k);
      // Gradient is zero where the log-sigma clip binds.
      if (raw_ls > kLogSigmaMin && raw_ls < kLogSigmaMax) {
        d_out.at(i, d + k) = d_log_sigma.at(i, k);
      }
    }
  }
  return mlp_backward(enc_cache, d_out).param_gradient;
}

}  // namespace

VaeModel make_vae_model(std::size_t input_dim, std::size_t latent_dim,
                        const std::vector<std::size_t>& hidden_widths,
                        InitScheme scheme, RngStream& rng) {
  VaeModel model;
  model.input_dim = input_dim;
  model.latent_dim = latent_dim;
  model.encoder_config = MlpConfig{input_dim, hidden_widths, 2 * latent_dim,
                                   HiddenActivation::relu, OutputActivation::identity};
  std::vector<std::size_t> rev(hidden_widths.rbegin(), hidden_widths.rend());
  model.decoder_config = MlpConfig{latent_dim, rev, input_dim,
                                   HiddenActivation::relu, OutputActivation::sigmoid};
  RngStream init_rng = rng.substream(StreamId::init, 0);
  model.phi = init_params(model.encoder_config, scheme, init_rng);
  RngStream init_rng2 = rng.substream(StreamId::init, 1);
  model.theta = init_params(model.decoder_config, scheme, init_rng2);
  return model;
}

double bounded_loss_scale(std::size_t input_dim, double p_min) {
  return static_cast<double>(input_dim) * std::log(1.0 / p_min);
}

EncoderOutput encode(const VaeModel& model, const Tensor& x, bool strict) {
  if (strict) check_binary(x);
  RngStream unused(0);
  Tensor out = mlp_forward(model.encoder_config, model.phi, x, 0.0, unused, false);
  return split_encoder_output(out, model.latent_dim);
}

LatentSample sample_latent(const EncoderOutput& enc, RngStream& rng) {
  LatentSample sample;
  sample.eps = gaussian_sample(rng, enc.mu.shape);
  sample.z = Tensor::zeros(enc.mu.shape);
  for (std::size_t i = 0; i < sample.z.data.size(); ++i) {
    sample.z.data[i] = enc.mu.data[i] + std::exp(enc.log_sigma.data[i]) * sample.eps.data[i];
  }
  return sample;
}

Tensor decode(const VaeModel& model, const Tensor& z, double p_min) {
  if (p_min <= 0.0 || p_min >= 0.5) {
    throw ContractError("decode: p_min must lie in (0, 0.5)");
  }
  RngStream unused(0);
  Tensor omega = mlp_forward(model.decoder_config, model.theta, z, 0.0, unused, false);
  for (double& v : omega.data) v = clip(v, p_min, 1.0 - p_min);
  return omega;
}

Tensor bernoulli_log_likelihood(const Tensor& x, const Tensor& omega, double p_min) {
  if (!x.same_shape(omega)) {
    throw ShapeError("bernoulli_log_likelihood: x and omega shapes differ");
  }
  const std::size_t B = x.rows();
  const std::size_t D = x.cols();
  Tensor ll = Tensor::zeros({B});
  for (std::size_t i = 0; i < B; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double w = omega.at(i, j);
      if (w < p_min || w > 1.0 - p_min) {
        throw ContractError("bernoulli_log_likelihood: omega outside clamp range");
      }
      const double xv = x.at(i, j);
      acc += xv * std::log(w) + (1.0 - xv) * std::log(1.0 - w);
    }
    ll.data[i] = acc;
  }
  return ll;
}

Tensor reconstruction_loss(const VaeModel& model, const Tensor& x,
                           const LossConfig& cfg, RngStream& rng) {
  const std::size_t B = x.rows();
  const double scale = bounded_loss_scale(model.input_dim, cfg.p_min);
  EncoderOutput enc = encode(model, x);
  Tensor loss = Tensor::zeros({B});
  RngStream latent = rng.substream(StreamId::latent_noise);
  for (std::size_t s = 0; s < cfg.mc_samples; ++s) {
    LatentSample sample = sample_latent(enc, latent);
    Tensor omega = decode(model, sample.z, cfg.p_min);
    Tensor ll = bernoulli_log_likelihood(x, omega, cfg.p_min);
    for (std::size_t i = 0; i < B; ++i) {
      loss.data[i] += -ll.data[i] / (scale * static_cast<double>(cfg.mc_samples));
    }
  }
  return loss;
}

Tensor latent_kl(const EncoderOutput& enc) {
  const std::size_t B = enc.mu.rows();
  const std::size_t d = enc.mu.cols();
  Tensor kl = Tensor::zeros({B});
  for (std::size_t i = 0; i < B; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double mu = enc.mu.at(i, k);
      const double ls = enc.log_sigma.at(i, k);
      const double s2 = std::exp(2.0 * ls);
      acc += 0.5 * (mu * mu + s2 - 1.0 - 2.0 * ls);
    }
    kl.data[i] = acc;
  }
  return kl;
}

BetaVaeResult beta_vae_objective(const VaeModel& model, const Tensor& batch,
                                 double beta, const LossConfig& cfg, RngStream& rng,
                                 double dropout_rate, bool train_mode) {
  if (beta < 0.0) throw ContractError("beta_vae_objective: beta must be >= 0");
  const std::size_t B = batch.rows();
  const std::size_t d = model.latent_dim;

  RngStream latent_rng = rng.substream(StreamId::latent_noise);
  RngStream enc_dropout = rng.substream(StreamId::dropout, 0);
  RngStream dec_dropout = rng.substream(StreamId::dropout, 1);

  ForwardCache enc_cache;
  Tensor raw_out = mlp_forward(model.encoder_config, model.phi, batch, dropout_rate,
                               enc_dropout, train_mode, &enc_cache);
  EncoderOutput enc = split_encoder_output(raw_out, d);

  ReconGradients recon = recon_pass(model, batch, enc, raw_out, cfg, latent_rng,
                                    dropout_rate, train_mode, dec_dropout);

  Tensor kl = latent_kl(enc);
  double mean_kl = 0.0;
  for (double v : kl.data) mean_kl += v / static_cast<double>(B);

  // KL gradients: d/dmu = mu, d/dlog_sigma = sigma^2 - 1, batch-mean scaled.
  const double kl_scale = beta / static_cast<double>(B);
  Tensor d_mu = recon.d_mu;
  Tensor d_ls = recon.d_log_sigma;
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      d_mu.at(i, k) += kl_scale * enc.mu.at(i, k);
      d_ls.at(i, k) += kl_scale * (std::exp(2.0 * enc.log_sigma.at(i, k)) - 1.0);
    }
  }

  BetaVaeResult result;
  result.grad_phi = encoder_backward(enc_cache, d_mu, d_ls, raw_out, d);
  result.grad_theta = std::move(recon.grad_theta);
  result.recon_nll = recon.mean_nll;
  result.recon_bounded = recon.mean_nll / bounded_loss_scale(model.input_dim, cfg.p_min);
  result.kl = mean_kl;
  result.value = recon.mean_nll + beta * mean_kl;
  return result;
}

BoundedLossResult bounded_loss_with_grad(const VaeModel& model, const Tensor& batch,
                                         const LossConfig& cfg, RngStream& rng) {
  const std::size_t d = model.latent_dim;
  const double scale = bounded_loss_scale(model.input_dim, cfg.p_min);

  RngStream latent_rng = rng.substream(StreamId::latent_noise);
  RngStream unused = rng.substream(StreamId::dropout);

  ForwardCache enc_cache;
  Tensor raw_out = mlp_forward(model.encoder_config, model.phi, batch, 0.0,
                               unused, false, &enc_cache);
  EncoderOutput enc = split_encoder_output(raw_out, d);

  ReconGradients recon = recon_pass(model, batch, enc, raw_out, cfg, latent_rng,
                                    0.0, false, unused);

  BoundedLossResult result;
  result.mean_nll = recon.mean_nll;
  result.mean_bounded = recon.mean_nll / scale;
  // The bounded loss is the NLL divided by the fixed scale, so its gradients
  // are the NLL gradients divided by the same scale.
  result.grad_theta = std::move(recon.grad_theta);
  for (auto& layer : result.grad_theta.layers) {
    for (double& v : layer.weight.data) v /= scale;
    for (double& v : layer.bias.data) v /= scale;
  }
  Tensor d_mu = recon.d_mu;
  Tensor d_ls = recon.d_log_sigma;
  for (double& v : d_mu.data) v /= scale;
  for (double& v : d_ls.data) v /= scale;
  result.grad_phi = encoder_backward(enc_cache, d_mu, d_ls, raw_out, d);
  return result;
}

EvalStats evaluate_losses(const VaeModel& model, const Tensor& batch,
                          const LossConfig& cfg, RngStream& rng) {
  const std::size_t B = batch.rows();
  const double scale = bounded_loss_scale(model.input_dim, cfg.p_min);
  Tensor bounded = reconstruction_loss(model, batch, cfg, rng);
  EvalStats stats;
  stats.count = B;
  for (double v : bounded.data) stats.mean_bounded += v / static_cast<double>(B);
  double var = 0.0;
  for (double v : bounded.data) {
    const double dlt = v - stats.mean_bounded;
    var += dlt * dlt;
  }
  if (B > 1) {
    var /= static_cast<double>(B - 1);
    stats.stderr_bounded = std::sqrt(var / static_cast<double>(B));
  }
  stats.mean_nll = stats.mean_bounded * scale;
  return stats;
}

}  // namespace pbvae
