#ifndef PBVAE_MLP_HPP
#define PBVAE_MLP_HPP

#include <cstddef>
#include <utility>
#include <vector>

#include "pbvae/rng.hpp"
#include "pbvae/tensor.hpp"

namespace pbvae {

enum class HiddenActivation { relu };
enum class OutputActivation { identity, sigmoid };
enum class InitScheme { zero, clamped_normal };

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 0;
  HiddenActivation hidden_activation = HiddenActivation::relu;
  OutputActivation output_activation = OutputActivation::identity;

  // Widths of every layer boundary: input, hidden..., output.
  std::vector<std::size_t> layer_widths() const;
  std::size_t layer_count() const { return hidden_widths.size() + 1; }
  bool operator==(const MlpConfig&) const = default;
};

// Per-layer weight matrix (out x in, row-major) and bias vector (out).
struct LayerParams {
  Tensor weight;
  Tensor bias;
};

// Flat storage for one network's parameters. Layer dimensions must chain.
struct ParamVector {
  std::vector<LayerParams> layers;

  std::size_t total_count() const;
  bool same_layout(const ParamVector& other) const;
};

// Elementwise helpers used across the optimisation and PAC-Bayes code.
ParamVector zeros_like(const ParamVector& p);
void param_fill(ParamVector& p, double value);
// y += alpha * x
void param_axpy(double alpha, const ParamVector& x, ParamVector& y);
double param_dot(const ParamVector& a, const ParamVector& b);
double param_squared_distance(const ParamVector& a, const ParamVector& b);
bool param_all_finite(const ParamVector& p);

struct AdamState {
  ParamVector first_moment;
  ParamVector second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(const ParamVector& params, double learning_rate);

// Scalar variant for the posterior log-scales.
struct ScalarAdamState {
  double first_moment = 0.0;
  double second_moment = 0.0;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

double scalar_adam_step(double value, double grad, ScalarAdamState& state);

// Everything mlp_backward needs to replay the forward pass exactly,
// including the parameters and the dropout masks that were drawn.
struct ForwardCache {
  MlpConfig config;
  ParamVector params;
  Tensor input;
  std::vector<Tensor> pre_activations;   // one per layer
  std::vector<Tensor> activations;       // post-activation per layer (last = output)
  std::vector<Tensor> dropout_masks;     // per hidden layer; empty when unused
  bool valid = false;
};

struct BackwardResult {
  ParamVector param_gradient;
  Tensor input_gradient;
};

// Dense forward pass over a (batch x input_dim) tensor. Dropout applies to
// hidden activations only, with inverted scaling 1/(1-rate) in train mode.
Tensor mlp_forward(const MlpConfig& config, const ParamVector& params,
                   const Tensor& input, double dropout_rate, RngStream& rng,
                   bool train_mode, ForwardCache* cache = nullptr);

// Exact reverse pass for the scalar loss whose output gradient is supplied.
BackwardResult mlp_backward(const ForwardCache& cache, const Tensor& output_gradient);

// Standard Adam with bias correction; mutates params and state in place.
void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state);

// I.i.d. standard normal entries; scaling/shifting is the caller's job.
Tensor gaussian_sample(RngStream& rng, std::vector<std::size_t> shape);

// zero: all parameters zero. clamped_normal: weights ~ N(0, 1/n_in)
// truncated to +-2 standard deviations (rejection), biases zero.
ParamVector init_params(const MlpConfig& config, InitScheme scheme, RngStream& rng);

}  // namespace pbvae

#endif  // PBVAE_MLP_HPP
