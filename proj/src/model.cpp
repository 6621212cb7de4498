#include "ultr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ultr::model {

void validate(const TrainConfig& config) {
  if (!config.features.use_position) {
    throw ConfigError("train: the position factor is always required");
  }
  if (config.group_size < 2) {
    throw ConfigError("train: group_size must be >= 2");
  }
  if (config.layers < 1) throw ConfigError("train: layers must be >= 1");
  if (config.hidden < 1) throw ConfigError("train: hidden must be >= 1");
  if (!(config.lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
}

// -------------------------------------------------------------- ExamModel

ExamModel::ExamModel(const FeatureSet& features, const data::CorpusHeader& header,
                     std::size_t layers, std::size_t hidden, Rng& rng)
    : features_(features), header_(header), head_(hidden, 1) {
  if (features.use_position) {
    tables_.emplace_back(header.max_positions, kEmbeddingDim);
  }
  if (features.use_mtype) {
    tables_.emplace_back(header.mtype_vocab, kEmbeddingDim);
  }
  if (features.use_serph) {
    tables_.emplace_back(header.serph_vocab, kEmbeddingDim);
  }
  if (features.use_slipoff) {
    tables_.emplace_back(header.slipoff_vocab, kEmbeddingDim);
  }
  for (auto& table : tables_) nn::glorot_uniform(table.table, rng);

  const std::size_t input_width = kEmbeddingDim * tables_.size();
  std::size_t in = input_width;
  for (std::size_t l = 0; l < layers; ++l) {
    fcs_.emplace_back(in, hidden);
    nn::glorot_uniform(fcs_.back().weight, rng);
    bns_.emplace_back(hidden);
    relus_.emplace_back();
    in = hidden;
  }
  head_ = nn::LinearLayer(hidden, 1);
  // Every exam score starts at exactly +3. sigmoid(E*R) is invariant under
  // flipping the sign of both towers and ranking uses R alone, so the
  // orientation must be pinned: a constant positive examination prior makes
  // the relevance tower's first gradient step "clicked up" on every seed,
  // and the exam tower only starts differentiating documents once R carries
  // signal. Random head weights would instead hand each slipoff bucket an
  // arbitrary initial examination score, and that coin flip can lock both
  // towers into the mirrored basin where R ranks backwards.
  head_.weight.fill(0.0);
  head_.bias[0] = 3.0;
}

std::vector<std::size_t> ExamModel::embedding_ids(
    const data::BiasFactors& bias) const {
  std::vector<std::size_t> ids;
  ids.reserve(tables_.size());
  if (features_.use_position) {
    if (bias.position_id < 1 ||
        bias.position_id > static_cast<int>(header_.max_positions)) {
      throw IndexError("exam_forward: position_id " +
                       std::to_string(bias.position_id) + " outside [1, " +
                       std::to_string(header_.max_positions) + "]");
    }
    ids.push_back(static_cast<std::size_t>(bias.position_id - 1));
  }
  if (features_.use_mtype) ids.push_back(static_cast<std::size_t>(bias.mtype_id));
  if (features_.use_serph) {
    ids.push_back(static_cast<std::size_t>(bias.serph_bucket));
  }
  if (features_.use_slipoff) {
    ids.push_back(static_cast<std::size_t>(bias.slipoff_bucket));
  }
  return ids;
}

std::vector<double> ExamModel::forward(
    const std::vector<data::BiasFactors>& batch) {
  const std::size_t rows = batch.size();
  const std::size_t width = kEmbeddingDim * tables_.size();

  // Gather per-factor id columns, then concatenate the embedding rows.
  std::vector<std::vector<std::size_t>> ids(tables_.size(),
                                            std::vector<std::size_t>(rows));
  for (std::size_t b = 0; b < rows; ++b) {
    auto doc_ids = embedding_ids(batch[b]);
    for (std::size_t t = 0; t < tables_.size(); ++t) ids[t][b] = doc_ids[t];
  }
  Matrix x(rows, width);
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    Matrix rows_t = tables_[t].lookup(ids[t]);
    for (std::size_t b = 0; b < rows; ++b) {
      std::copy(rows_t.row(b), rows_t.row(b) + kEmbeddingDim,
                x.row(b) + t * kEmbeddingDim);
    }
  }

  Matrix h = std::move(x);
  for (std::size_t l = 0; l < fcs_.size(); ++l) {
    h = relus_[l].forward(bns_[l].forward(fcs_[l].forward(h)));
  }
  Matrix out = head_.forward(h);
  std::vector<double> scores(rows);
  for (std::size_t b = 0; b < rows; ++b) scores[b] = out(b, 0);
  return scores;
}

void ExamModel::backward(const std::vector<double>& grad_scores) {
  Matrix g(grad_scores.size(), 1);
  for (std::size_t b = 0; b < grad_scores.size(); ++b) g(b, 0) = grad_scores[b];
  Matrix grad = head_.backward(g);
  for (std::size_t l = fcs_.size(); l-- > 0;) {
    grad = fcs_[l].backward(bns_[l].backward(relus_[l].backward(grad)));
  }
  // Split the concatenated embedding gradient back to the tables.
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    Matrix slice(grad.rows, kEmbeddingDim);
    for (std::size_t b = 0; b < grad.rows; ++b) {
      std::copy(grad.row(b) + t * kEmbeddingDim,
                grad.row(b) + (t + 1) * kEmbeddingDim, slice.row(b));
    }
    tables_[t].backward(slice);
  }
}

void ExamModel::set_mode(nn::Mode m) {
  for (auto& bn : bns_) bn.set_mode(m);
}

void ExamModel::freeze_stats(bool on) {
  for (auto& bn : bns_) bn.freeze_stats(on);
}

void ExamModel::zero_grad() {
  for (auto& t : tables_) t.zero_grad();
  for (auto& fc : fcs_) fc.zero_grad();
  for (auto& bn : bns_) bn.zero_grad();
  head_.zero_grad();
}

std::vector<nn::ParamRef> ExamModel::params() {
  std::vector<nn::ParamRef> refs;
  for (auto& t : tables_) {
    refs.push_back({"exam.table", t.table.data.data(), t.grad.data.data(),
                    t.table.size()});
  }
  for (std::size_t l = 0; l < fcs_.size(); ++l) {
    refs.push_back({"exam.fc.weight", fcs_[l].weight.data.data(),
                    fcs_[l].grad_weight.data.data(), fcs_[l].weight.size()});
    refs.push_back({"exam.fc.bias", fcs_[l].bias.data(),
                    fcs_[l].grad_bias.data(), fcs_[l].bias.size()});
    refs.push_back({"exam.bn.gamma", bns_[l].gamma.data(),
                    bns_[l].grad_gamma.data(), bns_[l].gamma.size()});
    refs.push_back({"exam.bn.beta", bns_[l].beta.data(),
                    bns_[l].grad_beta.data(), bns_[l].beta.size()});
  }
  refs.push_back({"exam.head.weight", head_.weight.data.data(),
                  head_.grad_weight.data.data(), head_.weight.size()});
  refs.push_back({"exam.head.bias", head_.bias.data(), head_.grad_bias.data(),
                  head_.bias.size()});
  return refs;
}

std::vector<nn::ParamRef> ExamModel::state_tensors() {
  std::vector<nn::ParamRef> refs;
  for (auto& t : tables_) {
    refs.push_back({"exam.table", t.table.data.data(), t.grad.data.data(),
                    t.table.size()});
  }
  for (std::size_t l = 0; l < fcs_.size(); ++l) {
    refs.push_back({"exam.fc.weight", fcs_[l].weight.data.data(),
                    fcs_[l].grad_weight.data.data(), fcs_[l].weight.size()});
    refs.push_back({"exam.fc.bias", fcs_[l].bias.data(),
                    fcs_[l].grad_bias.data(), fcs_[l].bias.size()});
    refs.push_back({"exam.bn.gamma", bns_[l].gamma.data(),
                    bns_[l].grad_gamma.data(), bns_[l].gamma.size()});
    refs.push_back({"exam.bn.beta", bns_[l].beta.data(),
                    bns_[l].grad_beta.data(), bns_[l].beta.size()});
    refs.push_back({"exam.bn.running_mean", bns_[l].running_mean.data(),
                    nullptr, bns_[l].running_mean.size()});
    refs.push_back({"exam.bn.running_var", bns_[l].running_var.data(), nullptr,
                    bns_[l].running_var.size()});
  }
  refs.push_back({"exam.head.weight", head_.weight.data.data(),
                  head_.grad_weight.data.data(), head_.weight.size()});
  refs.push_back({"exam.head.bias", head_.bias.data(), head_.grad_bias.data(),
                  head_.bias.size()});
  return refs;
}

// --------------------------------------------------------- RelevanceModel

RelevanceModel::RelevanceModel(std::size_t feature_dim, std::size_t hidden,
                               Rng& rng)
    : fc1_(feature_dim, hidden), fc2_(hidden, hidden), fc3_(hidden, 1) {
  nn::glorot_uniform(fc1_.weight, rng);
  nn::glorot_uniform(fc2_.weight, rng);
  // Output layer starts at zero: relevance scores begin exactly flat, so
  // the first click gradients (scaled by the positive exam prior) decide
  // the tower's orientation instead of the random init winning the race.
  fc3_.weight.fill(0.0);
}

std::vector<double> RelevanceModel::forward(const Matrix& features) {
  Matrix h = relu1_.forward(fc1_.forward(features));
  h = relu2_.forward(fc2_.forward(h));
  Matrix out = fc3_.forward(h);
  std::vector<double> scores(out.rows);
  for (std::size_t b = 0; b < out.rows; ++b) scores[b] = out(b, 0);
  return scores;
}

void RelevanceModel::backward(const std::vector<double>& grad_scores) {
  Matrix g(grad_scores.size(), 1);
  for (std::size_t b = 0; b < grad_scores.size(); ++b) g(b, 0) = grad_scores[b];
  Matrix grad = fc3_.backward(g);
  grad = fc2_.backward(relu2_.backward(grad));
  fc1_.backward(relu1_.backward(grad));
}

void RelevanceModel::zero_grad() {
  fc1_.zero_grad();
  fc2_.zero_grad();
  fc3_.zero_grad();
}

std::vector<nn::ParamRef> RelevanceModel::params() {
  return {
      {"rel.fc1.weight", fc1_.weight.data.data(), fc1_.grad_weight.data.data(),
       fc1_.weight.size()},
      {"rel.fc1.bias", fc1_.bias.data(), fc1_.grad_bias.data(),
       fc1_.bias.size()},
      {"rel.fc2.weight", fc2_.weight.data.data(), fc2_.grad_weight.data.data(),
       fc2_.weight.size()},
      {"rel.fc2.bias", fc2_.bias.data(), fc2_.grad_bias.data(),
       fc2_.bias.size()},
      {"rel.fc3.weight", fc3_.weight.data.data(), fc3_.grad_weight.data.data(),
       fc3_.weight.size()},
      {"rel.fc3.bias", fc3_.bias.data(), fc3_.grad_bias.data(),
       fc3_.bias.size()},
  };
}

// -------------------------------------------------------------- MfimModel

MfimModel::MfimModel(const FeatureSet& features, const data::CorpusHeader& header,
                     std::size_t layers, std::size_t hidden, Rng& rng)
    : features_(features),
      header_(header),
      layers_(layers),
      hidden_(hidden),
      exam_(features, header, layers, hidden, rng),
      rel_(header.feature_dim, hidden, rng) {}

void MfimModel::set_mode(nn::Mode m) {
  mode_ = m;
  exam_.set_mode(m);
}

void MfimModel::zero_grad() {
  exam_.zero_grad();
  rel_.zero_grad();
}

std::vector<nn::ParamRef> MfimModel::params() {
  auto refs = exam_.params();
  auto rel_refs = rel_.params();
  refs.insert(refs.end(), rel_refs.begin(), rel_refs.end());
  return refs;
}

std::vector<nn::ParamRef> MfimModel::state_tensors() {
  auto refs = exam_.state_tensors();
  auto rel_refs = rel_.params();
  refs.insert(refs.end(), rel_refs.begin(), rel_refs.end());
  return refs;
}

// ------------------------------------------------------------------ Loss

double click_prob(double exam_score, double rel_score) {
  return nn::sigmoid(exam_score * rel_score);
}

namespace {

double clamp_prob(double p) {
  return std::clamp(p, nn::kProbEps, 1.0 - nn::kProbEps);
}

void check_binary(std::span<const int> clicks) {
  for (int c : clicks) {
    if (c != 0 && c != 1) {
      throw ValidationError("loss: clicks must be 0 or 1");
    }
  }
}

std::size_t checked_single_click(std::span<const int> clicks) {
  check_binary(clicks);
  std::size_t clicked = clicks.size();
  int count = 0;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    if (clicks[i] == 1) {
      clicked = i;
      ++count;
    }
  }
  if (count != 1) {
    throw ValidationError("loss_group: group must contain exactly one click");
  }
  return clicked;
}

}  // namespace

double loss_pointwise(std::span<const int> clicks, std::span<const double> chat,
                      bool mean_reduction) {
  if (clicks.size() != chat.size()) {
    throw DimensionError("loss_pointwise: clicks/chat size mismatch");
  }
  check_binary(clicks);
  double loss = 0.0;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    const double p = clamp_prob(chat[i]);
    loss -= clicks[i] * std::log(p) + (1 - clicks[i]) * std::log(1.0 - p);
  }
  if (mean_reduction && !clicks.empty()) {
    loss /= static_cast<double>(clicks.size());
  }
  return loss;
}

double loss_pointwise_grad(std::span<const int> clicks,
                           std::span<const double> logits,
                           std::span<double> grad_logits) {
  if (clicks.size() != logits.size() || grad_logits.size() != logits.size()) {
    throw DimensionError("loss_pointwise_grad: size mismatch");
  }
  check_binary(clicks);
  double loss = 0.0;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    const double p = nn::sigmoid(logits[i]);
    const double pc = clamp_prob(p);
    loss -= clicks[i] * std::log(pc) + (1 - clicks[i]) * std::log(1.0 - pc);
    // Gradient is zero where the clamp is active.
    grad_logits[i] =
        (p > nn::kProbEps && p < 1.0 - nn::kProbEps) ? p - clicks[i] : 0.0;
  }
  return loss;
}

double loss_group(std::span<const int> clicks, std::span<const double> logits) {
  if (clicks.size() != logits.size()) {
    throw DimensionError("loss_group: clicks/logits size mismatch");
  }
  checked_single_click(clicks);
  auto chat = nn::softmax_group(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    const double p = clamp_prob(chat[i]);
    loss -= clicks[i] * std::log(p) + (1 - clicks[i]) * std::log(1.0 - p);
  }
  return loss;
}

double loss_group_grad(std::span<const int> clicks,
                       std::span<const double> logits,
                       std::span<double> grad_logits) {
  if (clicks.size() != logits.size() || grad_logits.size() != logits.size()) {
    throw DimensionError("loss_group_grad: size mismatch");
  }
  checked_single_click(clicks);
  auto chat = nn::softmax_group(logits);
  const std::size_t n = clicks.size();
  double loss = 0.0;
  std::vector<double> dchat(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = clamp_prob(chat[i]);
    loss -= clicks[i] * std::log(p) + (1 - clicks[i]) * std::log(1.0 - p);
    if (chat[i] > nn::kProbEps && chat[i] < 1.0 - nn::kProbEps) {
      dchat[i] = -clicks[i] / p + (1 - clicks[i]) / (1.0 - p);
    }
  }
  // Chain through the softmax Jacobian.
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) weighted += dchat[i] * chat[i];
  for (std::size_t j = 0; j < n; ++j) {
    grad_logits[j] = chat[j] * (dchat[j] - weighted);
  }
  return loss;
}

double loss_listwise_ce(std::span<const int> clicks,
                        std::span<const double> logits) {
  if (clicks.size() != logits.size()) {
    throw DimensionError("loss_listwise_ce: clicks/logits size mismatch");
  }
  const std::size_t clicked = checked_single_click(clicks);
  auto chat = nn::softmax_group(logits);
  return -std::log(clamp_prob(chat[clicked]));
}

double loss_listwise_ce_grad(std::span<const int> clicks,
                             std::span<const double> logits,
                             std::span<double> grad_logits) {
  if (clicks.size() != logits.size() || grad_logits.size() != logits.size()) {
    throw DimensionError("loss_listwise_ce_grad: size mismatch");
  }
  const std::size_t clicked = checked_single_click(clicks);
  auto chat = nn::softmax_group(logits);
  const double loss = -std::log(clamp_prob(chat[clicked]));
  const bool clamped = !(chat[clicked] > nn::kProbEps);
  for (std::size_t j = 0; j < clicks.size(); ++j) {
    grad_logits[j] = clamped ? 0.0 : chat[j] - clicks[j];
  }
  return loss;
}

// ------------------------------------------------------------ Prediction

std::vector<double> predict_relevance(MfimModel& model,
                                      const data::SessionLog& session) {
  if (model.mode() != nn::Mode::kEval) {
    throw StateError("predict_relevance: model must be in eval mode");
  }
  const std::size_t dim = model.header().feature_dim;
  Matrix features(session.docs.size(), dim);
  for (std::size_t d = 0; d < session.docs.size(); ++d) {
    const auto& values = session.docs[d].features.values;
    if (values.size() != dim) {
      throw DimensionError("predict_relevance: feature dimension mismatch");
    }
    std::copy(values.begin(), values.end(), features.row(d));
  }
  return model.rel().forward(features);
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores,
                                       const std::vector<std::string>& doc_ids) {
  if (scores.size() != doc_ids.size()) {
    throw DimensionError("rank_by_score: size mismatch");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return doc_ids[a] < doc_ids[b];
                   });
  return order;
}

}  // namespace ultr::model
