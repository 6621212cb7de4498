#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ultr/data.hpp"
#include "ultr/gradcheck.hpp"
#include "ultr/nn.hpp"

namespace ultr::model {

// Which categorical factors feed the examination tower. Position is always
// on; the remaining flags mirror the ablation presets.
struct FeatureSet {
  bool use_position = true;
  bool use_mtype = false;
  bool use_serph = false;
  bool use_slipoff = false;

  int count() const {
    return (use_position ? 1 : 0) + (use_mtype ? 1 : 0) + (use_serph ? 1 : 0) +
           (use_slipoff ? 1 : 0);
  }
  bool operator==(const FeatureSet&) const = default;
};

enum class LossMode {
  kPointwiseEq2,  // per-document binary cross-entropy on sigmoid(E*R)
  kGroupEq3,      // group softmax, both click and non-click terms
  kListwiseCe,    // group softmax, clicked-term only (non-default variant)
};

struct TrainConfig {
  double lr = 1e-3;            // desk-scale default; 5e-6 remains selectable
  std::size_t batch_size = 128;  // groups per optimizer step
  std::size_t epochs = 10;
  std::size_t group_size = 6;  // g
  std::size_t layers = 5;      // L fc+bn+relu blocks in the exam tower
  std::size_t hidden = 32;     // H
  std::uint64_t seed = 1;
  LossMode loss_mode = LossMode::kGroupEq3;
  FeatureSet features;
};

void validate(const TrainConfig& config);

inline constexpr std::size_t kEmbeddingDim = 8;

// Examination-bias tower: one 8-wide embedding per enabled factor,
// concatenated and passed through `layers` fc+bn+relu blocks of width
// `hidden`, then a linear head to one unbounded score per document.
class ExamModel {
 public:
  ExamModel(const FeatureSet& features, const data::CorpusHeader& header,
            std::size_t layers, std::size_t hidden, Rng& rng);

  std::vector<double> forward(const std::vector<data::BiasFactors>& batch);
  void backward(const std::vector<double>& grad_scores);

  void set_mode(nn::Mode m);
  void freeze_stats(bool on);
  void zero_grad();
  std::vector<nn::ParamRef> params();
  // Parameters plus batch-norm running statistics, in checkpoint order.
  std::vector<nn::ParamRef> state_tensors();

  const FeatureSet& features() const { return features_; }

 private:
  std::vector<std::size_t> embedding_ids(const data::BiasFactors& bias) const;

  FeatureSet features_;
  data::CorpusHeader header_;
  std::vector<nn::EmbeddingTable> tables_;  // enabled factors, declared order
  std::vector<nn::LinearLayer> fcs_;
  std::vector<nn::BatchNormLayer> bns_;
  std::vector<nn::ReluLayer> relus_;
  nn::LinearLayer head_;
};

// Relevance tower: D -> H -> H -> 1 with relu, no normalization. Reads
// only ranking features, never bias factors.
class RelevanceModel {
 public:
  RelevanceModel(std::size_t feature_dim, std::size_t hidden, Rng& rng);

  std::vector<double> forward(const Matrix& features);
  void backward(const std::vector<double>& grad_scores);

  void zero_grad();
  std::vector<nn::ParamRef> params();
  std::size_t feature_dim() const { return fc1_.in_features(); }

 private:
  nn::LinearLayer fc1_, fc2_, fc3_;
  nn::ReluLayer relu1_, relu2_;
};

class MfimModel {
 public:
  MfimModel(const FeatureSet& features, const data::CorpusHeader& header,
            std::size_t layers, std::size_t hidden, Rng& rng);

  void set_mode(nn::Mode m);
  nn::Mode mode() const { return mode_; }
  void freeze_exam_stats(bool on) { exam_.freeze_stats(on); }
  void zero_grad();
  std::vector<nn::ParamRef> params();
  std::vector<nn::ParamRef> state_tensors();

  ExamModel& exam() { return exam_; }
  RelevanceModel& rel() { return rel_; }
  const ExamModel& exam() const { return exam_; }
  const FeatureSet& features() const { return features_; }
  const data::CorpusHeader& header() const { return header_; }
  std::size_t layers() const { return layers_; }
  std::size_t hidden() const { return hidden_; }

 private:
  FeatureSet features_;
  data::CorpusHeader header_;
  std::size_t layers_;
  std::size_t hidden_;
  nn::Mode mode_ = nn::Mode::kTrain;
  ExamModel exam_;
  RelevanceModel rel_;

  friend MfimModel load_checkpoint(std::istream&);
};

// Click probability under the factorized model: sigmoid(E * R).
double click_prob(double exam_score, double rel_score);

// Binary cross-entropy over a document batch, natural log, probabilities
// clamped to [1e-12, 1-1e-12]. Sum reduction by default.
double loss_pointwise(std::span<const int> clicks, std::span<const double> chat,
                      bool mean_reduction = false);

// Group loss: chat = softmax(logits), then the same two-term cross-entropy
// summed over the group. Requires exactly one clicked member.
double loss_group(std::span<const int> clicks, std::span<const double> logits);

// Listwise variant: -log softmax(logits)[clicked].
double loss_listwise_ce(std::span<const int> clicks,
                        std::span<const double> logits);

// Loss + analytic gradient w.r.t. the raw logits, used by the trainer and
// verified against finite differences.
double loss_pointwise_grad(std::span<const int> clicks,
                           std::span<const double> logits,
                           std::span<double> grad_logits);
double loss_group_grad(std::span<const int> clicks,
                       std::span<const double> logits,
                       std::span<double> grad_logits);
double loss_listwise_ce_grad(std::span<const int> clicks,
                             std::span<const double> logits,
                             std::span<double> grad_logits);

struct LossTrace {
  std::vector<double> train_loss;  // per-epoch mean loss per group
  std::vector<double> val_dcg10;   // per-epoch, only when annotations given
};

struct TrainResult {
  MfimModel model;
  LossTrace trace;
};

// Full training loop: per epoch, shuffle sessions, draw groups, forward
// both towers, apply the configured loss and one joint Adam step per
// minibatch. Throws DivergenceError (naming epoch and batch) on a
// non-finite loss and Error when the corpus has no clicked session.
TrainResult train(const data::Corpus& corpus, const TrainConfig& config,
                  const std::vector<data::AnnotationRecord>* annotations = nullptr);

// Relevance scores for one session; the model must be in eval mode and
// bias factors are ignored entirely.
std::vector<double> predict_relevance(MfimModel& model,
                                      const data::SessionLog& session);

// Indices of docs sorted by descending score, ties broken by ascending
// doc_id; deterministic total order.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores,
                                       const std::vector<std::string>& doc_ids);

// Versioned binary checkpoint: header (format id, feature set, L, H, D,
// vocabulary sizes) followed by parameter and running-stat arrays in
// declared order as 64-bit little-endian floats. Round-trips bit-exactly.
void save_checkpoint(const MfimModel& model, std::ostream& out);
MfimModel load_checkpoint(std::istream& in);
void save_checkpoint_file(const MfimModel& model, const std::string& path);
MfimModel load_checkpoint_file(const std::string& path);

// Loss trace TSV: epoch, train_loss and, when present, val_dcg10.
void write_trace(const LossTrace& trace, std::ostream& out);

// Fixed synthetic batch (ids within the header vocabularies, unit-normal
// features, exactly one click) for gradient checking.
struct GradcheckBatch {
  std::vector<data::BiasFactors> bias;
  Matrix features;
  std::vector<int> clicks;
};
GradcheckBatch make_gradcheck_batch(const data::CorpusHeader& header,
                                    std::size_t batch, std::uint64_t seed);

// Central-difference check of the configured loss through the whole model
// (embeddings, fc+bn blocks with frozen batch statistics, both towers).
// The batch forms a single group for the group losses. Parameters are
// jittered by seeded noise first so the check runs at a generic point
// rather than the zeroed output layers of a fresh model.
nn::GradCheckReport gradcheck_model(MfimModel& model,
                                    const GradcheckBatch& batch,
                                    LossMode loss_mode, double h,
                                    std::size_t min_coords,
                                    std::uint64_t seed);

}  // namespace ultr::model
