#include "ultr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ultr::nn {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax_group(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

void glorot_uniform(Matrix& w, Rng& rng) {
  const double half = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  std::uniform_real_distribution<double> dist(-half, half);
  for (auto& v : w.data) v = dist(rng);
}

// ---------------------------------------------------------------- Linear

LinearLayer::LinearLayer(std::size_t in_features, std::size_t out_features)
    : weight(out_features, in_features),
      bias(out_features, 0.0),
      grad_weight(out_features, in_features),
      grad_bias(out_features, 0.0) {}

Matrix LinearLayer::forward(const Matrix& x) {
  if (x.cols != weight.cols) {
    throw DimensionError("linear_forward: input has " + std::to_string(x.cols) +
                         " features, layer expects " +
                         std::to_string(weight.cols));
  }
  input_cache_ = x;
  has_cache_ = true;
  Matrix out(x.rows, weight.rows);
  for (std::size_t b = 0; b < x.rows; ++b) {
    const double* xb = x.row(b);
    double* ob = out.row(b);
    for (std::size_t o = 0; o < weight.rows; ++o) {
      const double* wo = weight.row(o);
      double acc = bias[o];
      for (std::size_t i = 0; i < weight.cols; ++i) acc += wo[i] * xb[i];
      ob[o] = acc;
    }
  }
  return out;
}

Matrix LinearLayer::backward(const Matrix& grad_out) {
  if (!has_cache_) {
    throw StateError("linear_backward: no cached forward input");
  }
  if (grad_out.rows != input_cache_.rows || grad_out.cols != weight.rows) {
    throw DimensionError("linear_backward: grad shape mismatch");
  }
  const Matrix& x = input_cache_;
  for (std::size_t b = 0; b < x.rows; ++b) {
    const double* gb = grad_out.row(b);
    const double* xb = x.row(b);
    for (std::size_t o = 0; o < weight.rows; ++o) {
      const double g = gb[o];
      grad_bias[o] += g;
      double* gw = grad_weight.row(o);
      for (std::size_t i = 0; i < weight.cols; ++i) gw[i] += g * xb[i];
    }
  }
  Matrix grad_in(x.rows, weight.cols, 0.0);
  for (std::size_t b = 0; b < x.rows; ++b) {
    const double* gb = grad_out.row(b);
    double* gi = grad_in.row(b);
    for (std::size_t o = 0; o < weight.rows; ++o) {
      const double g = gb[o];
      const double* wo = weight.row(o);
      for (std::size_t i = 0; i < weight.cols; ++i) gi[i] += g * wo[i];
    }
  }
  return grad_in;
}

void LinearLayer::zero_grad() {
  grad_weight.fill(0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

// ------------------------------------------------------------------ Relu

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  if (x.rows != grad_out.rows || x.cols != grad_out.cols) {
    throw DimensionError("relu_backward: shape mismatch");
  }
  Matrix out = grad_out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.data[i] <= 0.0) out.data[i] = 0.0;
  }
  return out;
}

Matrix ReluLayer::forward(const Matrix& x) {
  input_cache_ = x;
  has_cache_ = true;
  return relu(x);
}

Matrix ReluLayer::backward(const Matrix& grad_out) {
  if (!has_cache_) throw StateError("relu backward: no cached forward input");
  return relu_backward(input_cache_, grad_out);
}

// ------------------------------------------------------------- BatchNorm

BatchNormLayer::BatchNormLayer(std::size_t features)
    : gamma(features, 1.0),
      beta(features, 0.0),
      running_mean(features, 0.0),
      running_var(features, 1.0),
      grad_gamma(features, 0.0),
      grad_beta(features, 0.0) {}

void BatchNormLayer::freeze_stats(bool on) {
  if (on && !has_cache_) {
    throw StateError("batchnorm freeze: no batch statistics captured yet");
  }
  frozen_ = on;
  has_frozen_stats_ = on;
}

Matrix BatchNormLayer::forward_affine(const Matrix& x,
                                      const std::vector<double>& mean,
                                      const std::vector<double>& var) {
  Matrix out(x.rows, x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    const double inv_std = 1.0 / std::sqrt(var[f] + eps);
    for (std::size_t b = 0; b < x.rows; ++b) {
      out(b, f) = gamma[f] * (x(b, f) - mean[f]) * inv_std + beta[f];
    }
  }
  return out;
}

Matrix BatchNormLayer::forward(const Matrix& x) {
  if (x.cols != gamma.size()) {
    throw DimensionError("batchnorm_forward: feature count mismatch");
  }
  if (mode == Mode::kEval) {
    return forward_affine(x, running_mean, running_var);
  }
  if (frozen_) {
    if (!has_frozen_stats_) {
      throw StateError("batchnorm_forward: frozen without captured stats");
    }
    // Stats pinned; cache the normalized input for the affine backward.
    Matrix out(x.rows, x.cols);
    xhat_cache_ = Matrix(x.rows, x.cols);
    for (std::size_t f = 0; f < x.cols; ++f) {
      const double inv_std = 1.0 / std::sqrt(batch_var_[f] + eps);
      for (std::size_t b = 0; b < x.rows; ++b) {
        const double xh = (x(b, f) - batch_mean_[f]) * inv_std;
        xhat_cache_(b, f) = xh;
        out(b, f) = gamma[f] * xh + beta[f];
      }
    }
    cached_batch_ = x.rows;
    has_cache_ = true;
    return out;
  }
  if (x.rows < 2) {
    throw DimensionError("batchnorm_forward: train mode needs batch >= 2");
  }
  const auto batch = static_cast<double>(x.rows);
  batch_mean_.assign(x.cols, 0.0);
  batch_var_.assign(x.cols, 0.0);
  for (std::size_t b = 0; b < x.rows; ++b) {
    for (std::size_t f = 0; f < x.cols; ++f) batch_mean_[f] += x(b, f);
  }
  for (auto& m : batch_mean_) m /= batch;
  for (std::size_t b = 0; b < x.rows; ++b) {
    for (std::size_t f = 0; f < x.cols; ++f) {
      const double d = x(b, f) - batch_mean_[f];
      batch_var_[f] += d * d;
    }
  }
  for (auto& v : batch_var_) v /= batch;

  for (std::size_t f = 0; f < x.cols; ++f) {
    running_mean[f] = (1.0 - momentum) * running_mean[f] + momentum * batch_mean_[f];
    running_var[f] = (1.0 - momentum) * running_var[f] + momentum * batch_var_[f];
  }

  xhat_cache_ = Matrix(x.rows, x.cols);
  Matrix out(x.rows, x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    const double inv_std = 1.0 / std::sqrt(batch_var_[f] + eps);
    for (std::size_t b = 0; b < x.rows; ++b) {
      const double xh = (x(b, f) - batch_mean_[f]) * inv_std;
      xhat_cache_(b, f) = xh;
      out(b, f) = gamma[f] * xh + beta[f];
    }
  }
  cached_batch_ = x.rows;
  has_cache_ = true;
  return out;
}

Matrix BatchNormLayer::backward(const Matrix& grad_out) {
  if (mode == Mode::kEval) {
    throw StateError("batchnorm_backward: called in eval mode");
  }
  if (!has_cache_) {
    throw StateError("batchnorm_backward: no cached forward batch");
  }
  if (grad_out.rows != cached_batch_ || grad_out.cols != gamma.size()) {
    throw DimensionError("batchnorm_backward: grad shape mismatch");
  }
  const std::size_t batch = cached_batch_;
  const std::size_t features = gamma.size();
  Matrix grad_in(batch, features);

  for (std::size_t f = 0; f < features; ++f) {
    const double inv_std = 1.0 / std::sqrt(batch_var_[f] + eps);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = grad_out(b, f);
      sum_g += g;
      sum_gx += g * xhat_cache_(b, f);
    }
    grad_beta[f] += sum_g;
    grad_gamma[f] += sum_gx;

    if (frozen_) {
      // Statistics are constants: plain affine gradient.
      for (std::size_t b = 0; b < batch; ++b) {
        grad_in(b, f) = grad_out(b, f) * gamma[f] * inv_std;
      }
    } else {
      const double n = static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        grad_in(b, f) = gamma[f] * inv_std *
                        (grad_out(b, f) - sum_g / n -
                         xhat_cache_(b, f) * sum_gx / n);
      }
    }
  }
  return grad_in;
}

void BatchNormLayer::zero_grad() {
  std::fill(grad_gamma.begin(), grad_gamma.end(), 0.0);
  std::fill(grad_beta.begin(), grad_beta.end(), 0.0);
}

// ------------------------------------------------------------- Embedding

EmbeddingTable::EmbeddingTable(std::size_t vocab_size, std::size_t dim)
    : table(vocab_size, dim), grad(vocab_size, dim) {}

Matrix EmbeddingTable::lookup(const std::vector<std::size_t>& ids) {
  for (std::size_t id : ids) {
    if (id >= table.rows) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " out of range for vocab " + std::to_string(table.rows));
    }
  }
  ids_cache_ = ids;
  has_cache_ = true;
  Matrix out(ids.size(), table.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = table.row(ids[i]);
    std::copy(src, src + table.cols, out.row(i));
  }
  return out;
}

void EmbeddingTable::backward(const Matrix& grad_rows) {
  if (!has_cache_) {
    throw StateError("embedding backward: no cached lookup");
  }
  if (grad_rows.rows != ids_cache_.size() || grad_rows.cols != table.cols) {
    throw DimensionError("embedding backward: grad shape mismatch");
  }
  for (std::size_t i = 0; i < ids_cache_.size(); ++i) {
    double* dst = grad.row(ids_cache_[i]);
    const double* src = grad_rows.row(i);
    for (std::size_t d = 0; d < table.cols; ++d) dst[d] += src[d];
  }
}

void EmbeddingTable::zero_grad() { grad.fill(0.0); }

// ------------------------------------------------------------------ Adam

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads) {
  if (state.m.size() != params.size() || grads.size() != params.size()) {
    throw DimensionError("adam_step: state/param/grad size mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps_adam);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<ParamRef> params, double lr)
    : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (const auto& p : params_) states_.emplace_back(p.size, lr);
}

void AdamOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(states_[i], std::span<double>(params_[i].data, params_[i].size),
              std::span<const double>(params_[i].grad, params_[i].size));
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) std::fill(p.grad, p.grad + p.size, 0.0);
}

}  // namespace ultr::nn
