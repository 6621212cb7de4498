#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ultr/matrix.hpp"
#include "ultr/rng.hpp"

namespace ultr::nn {

// Probabilities are clamped to [kProbEps, 1-kProbEps] before any log.
inline constexpr double kProbEps = 1e-12;

double sigmoid(double x);

// Numerically stable softmax (max subtraction). Output sums to 1 within 1e-12.
std::vector<double> softmax_group(std::span<const double> logits);

// Zero-mean uniform init with half-width sqrt(6 / (rows + cols)).
void glorot_uniform(Matrix& w, Rng& rng);

// Fully connected layer, weight is (out x in), applied per batch row.
class LinearLayer {
 public:
  LinearLayer(std::size_t in_features, std::size_t out_features);

  // x is (batch x in); returns (batch x out); caches x for backward.
  Matrix forward(const Matrix& x);
  // grad_out is (batch x out); accumulates grad_weight/grad_bias and
  // returns the gradient w.r.t. the cached input.
  Matrix backward(const Matrix& grad_out);

  void zero_grad();
  std::size_t in_features() const { return weight.cols; }
  std::size_t out_features() const { return weight.rows; }

  Matrix weight;              // out x in
  std::vector<double> bias;   // out
  Matrix grad_weight;
  std::vector<double> grad_bias;

 private:
  Matrix input_cache_;
  bool has_cache_ = false;
};

// Rectifier with cached input for the backward mask (grad is zeroed
// where the forward input was <= 0).
class ReluLayer {
 public:
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);

 private:
  Matrix input_cache_;
  bool has_cache_ = false;
};

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);

enum class Mode { kTrain, kEval };

// Per-feature batch normalization.
//
// Train mode normalizes by batch statistics (biased variance) and updates
// running statistics with `momentum`; eval mode is a deterministic affine
// map using the running statistics. freeze_stats(true) pins the batch
// statistics captured by the last unfrozen train forward, making the layer
// a constant affine map of its input while still accepting backward; this
// is what the gradient checker runs under.
class BatchNormLayer {
 public:
  explicit BatchNormLayer(std::size_t features);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);

  void set_mode(Mode m) { mode = m; }
  void freeze_stats(bool on);
  void zero_grad();
  std::size_t features() const { return gamma.size(); }

  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
  double eps = 1e-5;
  double momentum = 0.1;
  Mode mode = Mode::kTrain;

 private:
  Matrix forward_affine(const Matrix& x, const std::vector<double>& mean,
                        const std::vector<double>& var);

  std::vector<double> batch_mean_;
  std::vector<double> batch_var_;
  Matrix xhat_cache_;
  std::size_t cached_batch_ = 0;
  bool frozen_ = false;
  bool has_frozen_stats_ = false;
  bool has_cache_ = false;
};

// Embedding table (vocab x dim) with scatter-add backward.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t vocab_size, std::size_t dim);

  // Row i of the result is table row ids[i]; caches ids for backward.
  Matrix lookup(const std::vector<std::size_t>& ids);
  // grad_rows is (batch x dim); duplicates accumulate into the same row.
  void backward(const Matrix& grad_rows);

  void zero_grad();
  std::size_t vocab_size() const { return table.rows; }
  std::size_t dim() const { return table.cols; }

  Matrix table;
  Matrix grad;

 private:
  std::vector<std::size_t> ids_cache_;
  bool has_cache_ = false;
};

// Adam moment buffers for one parameter tensor.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double lr = 1e-3;

  explicit AdamState(std::size_t size, double lr_ = 1e-3)
      : m(size, 0.0), v(size, 0.0), lr(lr_) {}
};

// One bias-corrected Adam update. t is incremented before correction.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);

// Non-owning view of a parameter tensor and its gradient buffer.
struct ParamRef {
  const char* name;
  double* data;
  double* grad;
  std::size_t size;
};

// Joint Adam over a set of parameter tensors.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamRef> params, double lr);

  void step();
  void zero_grad();

 private:
  std::vector<ParamRef> params_;
  std::vector<AdamState> states_;
};

}  // namespace ultr::nn
