#include "pbvae/mlp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "pbvae/errors.hpp"

namespace pbvae {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using ConstMapM = Eigen::Map<const MatrixRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using ConstMapV = Eigen::Map<const Eigen::VectorXd>;

ConstMapM mat(const Tensor& t) {
  return ConstMapM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

MapM mat(Tensor& t) {
  return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

bool layer_finite(const LayerParams& layer) {
  auto finite = [](const AlignedDoubles& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(layer.weight.data) && finite(layer.bias.data);
}

}  // namespace

std::vector<std::size_t> MlpConfig::layer_widths() const {
  std::vector<std::size_t> widths;
  widths.reserve(hidden_widths.size() + 2);
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
  widths.push_back(output_dim);
  return widths;
}

std::size_t ParamVector::total_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].weight.same_shape(other.layers[i].weight)) return false;
    if (!layers[i].bias.same_shape(other.layers[i].bias)) return false;
  }
  return true;
}

ParamVector zeros_like(const ParamVector& p) {
  ParamVector out;
  out.layers.reserve(p.layers.size());
  for (const auto& layer : p.layers) {
    out.layers.push_back({Tensor::zeros(layer.weight.shape), Tensor::zeros(layer.bias.shape)});
  }
  return out;
}

void param_fill(ParamVector& p, double value) {
  for (auto& layer : p.layers) {
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), value);
    std::fill(layer.bias.data.begin(), layer.bias.data.end(), value);
  }
}

void param_axpy(double alpha, const ParamVector& x, ParamVector& y) {
  if (!x.same_layout(y)) throw ShapeError("param_axpy: layout mismatch");
  for (std::size_t l = 0; l < x.layers.size(); ++l) {
    const auto& xs = x.layers[l];
    auto& ys = y.layers[l];
    for (std::size_t i = 0; i < xs.weight.data.size(); ++i) ys.weight.data[i] += alpha * xs.weight.data[i];
    for (std::size_t i = 0; i < xs.bias.data.size(); ++i) ys.bias.data[i] += alpha * xs.bias.data[i];
  }
}

double param_dot(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) throw ShapeError("param_dot: layout mismatch");
  double acc = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& as = a.layers[l];
    const auto& bs = b.layers[l];
    for (std::size_t i = 0; i < as.weight.data.size(); ++i) acc += as.weight.data[i] * bs.weight.data[i];
    for (std::size_t i = 0; i < as.bias.data.size(); ++i) acc += as.bias.data[i] * bs.bias.data[i];
  }
  return acc;
}

double param_squared_distance(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) throw ShapeError("param_squared_distance: layout mismatch");
  double acc = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& as = a.layers[l];
    const auto& bs = b.layers[l];
    for (std::size_t i = 0; i < as.weight.data.size(); ++i) {
      double d = as.weight.data[i] - bs.weight.data[i];
      acc += d * d;
    }
    for (std::size_t i = 0; i < as.bias.data.size(); ++i) {
      double d = as.bias.data[i] - bs.bias.data[i];
      acc += d * d;
    }
  }
  return acc;
}

bool param_all_finite(const ParamVector& p) {
  return std::all_of(p.layers.begin(), p.layers.end(), layer_finite);
}

AdamState make_adam_state(const ParamVector& params, double learning_rate) {
  AdamState state;
  state.first_moment = zeros_like(params);
  state.second_moment = zeros_like(params);
  state.learning_rate = learning_rate;
  return state;
}

double scalar_adam_step(double value, double grad, ScalarAdamState& state) {
  if (!std::isfinite(grad)) throw NumericError("scalar adam: non-finite gradient");
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad;
  double m_hat = state.first_moment / (1.0 - std::pow(state.beta1, state.step_count));
  double v_hat = state.second_moment / (1.0 - std::pow(state.beta2, state.step_count));
  return value - state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
}

Tensor mlp_forward(const MlpConfig& config, const ParamVector& params,
                   const Tensor& input, double dropout_rate, RngStream& rng,
                   bool train_mode, ForwardCache* cache) {
  const auto widths = config.layer_widths();
  const std::size_t n_layers = config.layer_count();
  if (params.layers.size() != n_layers) {
    throw ShapeError("mlp_forward: expected " + std::to_string(n_layers) +
                     " layers, got " + std::to_string(params.layers.size()));
  }
  if (input.rank() != 2 || input.cols() != config.input_dim) {
    throw ShapeError("mlp_forward: input must be (batch, " +
                     std::to_string(config.input_dim) + ")");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ContractError("mlp_forward: dropout_rate must lie in [0, 1)");
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& w = params.layers[l].weight;
    const auto& b = params.layers[l].bias;
    if (w.rows() != widths[l + 1] || w.cols() != widths[l] || b.size() != widths[l + 1]) {
      throw ShapeError("mlp_forward: dimension mismatch at layer " + std::to_string(l));
    }
  }

  const std::size_t batch = input.rows();
  const bool use_dropout = train_mode && dropout_rate > 0.0;
  const double keep = 1.0 - dropout_rate;

  if (cache) {
    cache->config = config;
    cache->params = params;
    cache->input = input;
    cache->pre_activations.assign(n_layers, Tensor{});
    cache->activations.assign(n_layers, Tensor{});
    cache->dropout_masks.assign(use_dropout ? n_layers - 1 : 0, Tensor{});
    cache->valid = true;
  }

  Tensor h = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tensor z = Tensor::zeros({batch, widths[l + 1]});
    mat(z).noalias() = mat(h) * mat(params.layers[l].weight).transpose();
    ConstMapV b(params.layers[l].bias.data.data(),
                static_cast<Eigen::Index>(params.layers[l].bias.size()));
    mat(z).rowwise() += b.transpose();
    if (cache) cache->pre_activations[l] = z;

    if (l + 1 < n_layers) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      if (use_dropout) {
        Tensor mask = Tensor::zeros(z.shape);
        for (std::size_t i = 0; i < mask.data.size(); ++i) {
          mask.data[i] = rng.next_uniform() < keep ? 1.0 / keep : 0.0;
        }
        for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i];
        if (cache) cache->dropout_masks[l] = std::move(mask);
      }
    } else if (config.output_activation == OutputActivation::sigmoid) {
      for (double& v : z.data) v = 1.0 / (1.0 + std::exp(-v));
    }
    if (cache) cache->activations[l] = z;
    h = std::move(z);
  }
  return h;
}

BackwardResult mlp_backward(const ForwardCache& cache, const Tensor& output_gradient) {
  if (!cache.valid || cache.pre_activations.empty()) {
    throw ContractError("mlp_backward: cache is stale or missing");
  }
  const auto& config = cache.config;
  const std::size_t n_layers = config.layer_count();
  const auto widths = config.layer_widths();
  const std::size_t batch = cache.input.rows();
  if (output_gradient.rows() != batch || output_gradient.cols() != config.output_dim) {
    throw ShapeError("mlp_backward: output_gradient must be (batch, output_dim)");
  }

  BackwardResult result;
  result.param_gradient.layers.resize(n_layers);

  Tensor g = output_gradient;
  if (config.output_activation == OutputActivation::sigmoid) {
    const Tensor& y = cache.activations[n_layers - 1];
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      g.data[i] *= y.data[i] * (1.0 - y.data[i]);
    }
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const Tensor& h_prev = l == 0 ? cache.input : cache.activations[l - 1];
    auto& grad_layer = result.param_gradient.layers[l];
    grad_layer.weight = Tensor::zeros({widths[l + 1], widths[l]});
    grad_layer.bias = Tensor::zeros({widths[l + 1]});
    mat(grad_layer.weight).noalias() = mat(g).transpose() * mat(h_prev);
    MapV db(grad_layer.bias.data.data(), static_cast<Eigen::Index>(grad_layer.bias.size()));
    db = mat(g).colwise().sum().transpose();

    Tensor g_prev = Tensor::zeros({batch, widths[l]});
    mat(g_prev).noalias() = mat(g) * mat(cache.params.layers[l].weight);
    if (l == 0) {
      result.input_gradient = std::move(g_prev);
      break;
    }
    if (!cache.dropout_masks.empty()) {
      const Tensor& mask = cache.dropout_masks[l - 1];
      for (std::size_t i = 0; i < g_prev.data.size(); ++i) g_prev.data[i] *= mask.data[i];
    }
    const Tensor& z = cache.pre_activations[l - 1];
    for (std::size_t i = 0; i < g_prev.data.size(); ++i) {
      if (z.data[i] <= 0.0) g_prev.data[i] = 0.0;
    }
    g = std::move(g_prev);
  }
  return result;
}

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment)) {
    throw ShapeError("adam_step: layout mismatch");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    if (!layer_finite(grads.layers[l])) {
      throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(l));
    }
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](AlignedDoubles& p, const AlignedDoubles& g,
                      AlignedDoubles& m, AlignedDoubles& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        double m_hat = m[i] / bc1;
        double v_hat = v[i] / bc2;
        p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      }
    };
    update(params.layers[l].weight.data, grads.layers[l].weight.data,
           state.first_moment.layers[l].weight.data, state.second_moment.layers[l].weight.data);
    update(params.layers[l].bias.data, grads.layers[l].bias.data,
           state.first_moment.layers[l].bias.data, state.second_moment.layers[l].bias.data);
  }
}

Tensor gaussian_sample(RngStream& rng, std::vector<std::size_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.next_gaussian();
  return t;
}

ParamVector init_params(const MlpConfig& config, InitScheme scheme, RngStream& rng) {
  const auto widths = config.layer_widths();
  ParamVector params;
  params.layers.resize(config.layer_count());
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    params.layers[l].weight = Tensor::zeros({widths[l + 1], widths[l]});
    params.layers[l].bias = Tensor::zeros({widths[l + 1]});
    if (scheme == InitScheme::clamped_normal) {
      const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      for (double& w : params.layers[l].weight.data) {
        double draw;
        do {
          draw = rng.next_gaussian();
        } while (std::abs(draw) > 2.0);
        w = stddev * draw;
      }
    }
  }
  return params;
}

}  // namespace pbvae
