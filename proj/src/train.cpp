#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "ultr/ensemble.hpp"
#include "ultr/eval.hpp"
#include "ultr/model.hpp"

namespace ultr::model {

namespace {

struct FlatBatch {
  std::vector<data::BiasFactors> bias;
  Matrix features;
  std::vector<int> clicks;
  std::vector<std::size_t> group_offsets;  // size = groups + 1
};

FlatBatch flatten_groups(const data::Corpus& corpus,
                         std::span<const data::GroupSample> groups) {
  FlatBatch flat;
  std::size_t docs = 0;
  for (const auto& g : groups) docs += g.members.size();
  flat.features = Matrix(docs, corpus.header.feature_dim);
  flat.bias.reserve(docs);
  flat.clicks.reserve(docs);
  flat.group_offsets.push_back(0);
  std::size_t row = 0;
  for (const auto& g : groups) {
    const auto& session = corpus.sessions[g.session_index];
    for (std::size_t member : g.members) {
      const auto& doc = session.docs[member];
      flat.bias.push_back(doc.bias);
      flat.clicks.push_back(doc.click);
      std::copy(doc.features.values.begin(), doc.features.values.end(),
                flat.features.row(row));
      ++row;
    }
    flat.group_offsets.push_back(row);
  }
  return flat;
}

// The per-document loss sums over whole sessions, clicked or not; the
// group-selection layer belongs to the softmax losses only.
FlatBatch flatten_sessions(const data::Corpus& corpus,
                           std::span<const std::size_t> session_indices) {
  FlatBatch flat;
  std::size_t docs = 0;
  for (std::size_t s : session_indices) docs += corpus.sessions[s].docs.size();
  flat.features = Matrix(docs, corpus.header.feature_dim);
  flat.bias.reserve(docs);
  flat.clicks.reserve(docs);
  flat.group_offsets.push_back(0);
  std::size_t row = 0;
  for (std::size_t s : session_indices) {
    for (const auto& doc : corpus.sessions[s].docs) {
      flat.bias.push_back(doc.bias);
      flat.clicks.push_back(doc.click);
      std::copy(doc.features.values.begin(), doc.features.values.end(),
                flat.features.row(row));
      ++row;
    }
    flat.group_offsets.push_back(row);
  }
  return flat;
}

// Sum-form loss over the batch plus gradient w.r.t. the logits.
double batch_loss_grad(LossMode mode, const FlatBatch& flat,
                       std::span<const double> logits,
                       std::span<double> grad_logits) {
  double loss = 0.0;
  const std::size_t groups = flat.group_offsets.size() - 1;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t lo = flat.group_offsets[g];
    const std::size_t hi = flat.group_offsets[g + 1];
    auto clicks = std::span<const int>(flat.clicks).subspan(lo, hi - lo);
    auto s = logits.subspan(lo, hi - lo);
    auto ds = grad_logits.subspan(lo, hi - lo);
    switch (mode) {
      case LossMode::kPointwiseEq2:
        loss += loss_pointwise_grad(clicks, s, ds);
        break;
      case LossMode::kGroupEq3:
        loss += loss_group_grad(clicks, s, ds);
        break;
      case LossMode::kListwiseCe:
        loss += loss_listwise_ce_grad(clicks, s, ds);
        break;
    }
  }
  return loss;
}

double validation_dcg10(MfimModel& model, const data::Corpus& corpus,
                        const std::vector<data::AnnotationRecord>& annotations) {
  std::set<std::string> queries;
  for (const auto& rec : annotations) queries.insert(rec.query_id);
  const nn::Mode previous = model.mode();
  model.set_mode(nn::Mode::kEval);
  eval::ScoreMap scores = eval::score_corpus(model, corpus, &queries);
  model.set_mode(previous);
  return eval::evaluate(scores, annotations).mean10;
}

}  // namespace

TrainResult train(const data::Corpus& corpus, const TrainConfig& config,
                  const std::vector<data::AnnotationRecord>* annotations) {
  validate(config);
  bool any_click = false;
  for (const auto& session : corpus.sessions) {
    for (const auto& doc : session.docs) any_click |= doc.click == 1;
  }
  if (!any_click) {
    throw Error("train: corpus has no clicked session");
  }

  Rng init_rng(derive_seed(config.seed, 0));
  TrainResult result{MfimModel(config.features, corpus.header, config.layers,
                               config.hidden, init_rng),
                     LossTrace{}};
  MfimModel& model = result.model;
  model.set_mode(nn::Mode::kTrain);
  nn::AdamOptimizer optimizer(model.params(), config.lr);
  Rng epoch_rng(derive_seed(config.seed, 1));

  std::vector<std::size_t> order(corpus.sessions.size());
  std::iota(order.begin(), order.end(), 0);

  const bool per_document = config.loss_mode == LossMode::kPointwiseEq2;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), epoch_rng);
    // Unit of batching: whole sessions for the per-document loss, sampled
    // groups for the softmax losses.
    std::vector<data::GroupSample> groups;
    if (!per_document) {
      for (std::size_t session_index : order) {
        auto session_groups =
            data::group_select(corpus.sessions[session_index],
                               config.group_size, epoch_rng, session_index);
        groups.insert(groups.end(), session_groups.begin(),
                      session_groups.end());
      }
    }
    const std::size_t units = per_document ? order.size() : groups.size();

    double loss_sum = 0.0;
    std::size_t units_seen = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < units;
         start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, units - start);
      FlatBatch flat =
          per_document
              ? flatten_sessions(
                    corpus, std::span<const std::size_t>(order).subspan(start,
                                                                        count))
              : flatten_groups(corpus, std::span<const data::GroupSample>(
                                           groups).subspan(start, count));
      // Batch norm needs at least two rows; a lone single-doc unit at the
      // tail cannot be normalized, so it is skipped.
      if (flat.bias.size() < 2) continue;

      std::vector<double> exam_scores = model.exam().forward(flat.bias);
      std::vector<double> rel_scores = model.rel().forward(flat.features);
      const std::size_t docs = flat.bias.size();
      std::vector<double> logits(docs);
      bool finite = true;
      for (std::size_t i = 0; i < docs; ++i) {
        logits[i] = exam_scores[i] * rel_scores[i];
        finite = finite && std::isfinite(logits[i]);
      }

      std::vector<double> grad_logits(docs, 0.0);
      const double batch_loss =
          finite ? batch_loss_grad(config.loss_mode, flat, logits, grad_logits)
                 : std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("train: non-finite loss at epoch " +
                              std::to_string(epoch + 1) + ", batch " +
                              std::to_string(batch_index + 1));
      }
      loss_sum += batch_loss;
      units_seen += count;

      // Optimize the per-unit mean for scale-stable learning rates.
      const double scale = 1.0 / static_cast<double>(count);
      std::vector<double> grad_exam(docs), grad_rel(docs);
      for (std::size_t i = 0; i < docs; ++i) {
        const double g = grad_logits[i] * scale;
        grad_exam[i] = g * rel_scores[i];
        grad_rel[i] = g * exam_scores[i];
      }
      model.zero_grad();
      model.exam().backward(grad_exam);
      model.rel().backward(grad_rel);
      optimizer.step();
    }

    result.trace.train_loss.push_back(
        units_seen > 0 ? loss_sum / static_cast<double>(units_seen) : 0.0);
    if (annotations != nullptr && !annotations->empty()) {
      result.trace.val_dcg10.push_back(
          validation_dcg10(model, corpus, *annotations));
    }
  }
  return result;
}

void write_trace(const LossTrace& trace, std::ostream& out) {
  const bool with_val = !trace.val_dcg10.empty();
  out << (with_val ? "#epoch\ttrain_loss\tval_dcg10\n"
                   : "#epoch\ttrain_loss\n");
  for (std::size_t e = 0; e < trace.train_loss.size(); ++e) {
    out << (e + 1) << '\t' << data::format_double9(trace.train_loss[e]);
    if (with_val) out << '\t' << data::format_double9(trace.val_dcg10[e]);
    out << '\n';
  }
}

GradcheckBatch make_gradcheck_batch(const data::CorpusHeader& header,
                                    std::size_t batch, std::uint64_t seed) {
  GradcheckBatch out;
  out.features = Matrix(batch, header.feature_dim);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> position(
      1, static_cast<int>(header.max_positions));
  std::uniform_int_distribution<int> mtype(
      0, static_cast<int>(header.mtype_vocab) - 1);
  std::uniform_int_distribution<int> serph(
      0, static_cast<int>(header.serph_vocab) - 1);
  std::uniform_int_distribution<int> slipoff(
      0, static_cast<int>(header.slipoff_vocab) - 1);
  for (std::size_t b = 0; b < batch; ++b) {
    data::BiasFactors bias;
    bias.position_id = position(rng);
    bias.mtype_id = mtype(rng);
    bias.serph_bucket = serph(rng);
    bias.slipoff_bucket = slipoff(rng);
    out.bias.push_back(bias);
    for (std::size_t f = 0; f < header.feature_dim; ++f) {
      out.features(b, f) = gauss(rng);
    }
    out.clicks.push_back(0);
  }
  if (batch > 0) out.clicks[0] = 1;  // the group losses need one click
  return out;
}

nn::GradCheckReport gradcheck_model(MfimModel& model,
                                    const GradcheckBatch& batch,
                                    LossMode loss_mode, double h,
                                    std::size_t min_coords,
                                    std::uint64_t seed) {
  model.set_mode(nn::Mode::kTrain);
  // Jitter every parameter so the check runs at a generic point; freshly
  // constructed models hold zeroed output layers where most coordinate
  // gradients vanish identically.
  {
    Rng jitter_rng(derive_seed(seed, 2));
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (auto& ref : model.params()) {
      for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] += jitter(jitter_rng);
    }
  }
  // One live forward captures the batch statistics, then they are pinned so
  // the loss is a deterministic function of the parameters.
  model.exam().forward(batch.bias);
  model.freeze_exam_stats(true);

  auto logits_now = [&]() {
    std::vector<double> exam_scores = model.exam().forward(batch.bias);
    std::vector<double> rel_scores = model.rel().forward(batch.features);
    std::vector<double> logits(exam_scores.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] = exam_scores[i] * rel_scores[i];
    }
    return std::tuple(exam_scores, rel_scores, logits);
  };

  auto loss_value = [&]() {
    auto [exam_scores, rel_scores, logits] = logits_now();
    switch (loss_mode) {
      case LossMode::kPointwiseEq2: {
        std::vector<double> chat(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
          chat[i] = nn::sigmoid(logits[i]);
        }
        return loss_pointwise(batch.clicks, chat);
      }
      case LossMode::kGroupEq3:
        return loss_group(batch.clicks, logits);
      case LossMode::kListwiseCe:
        return loss_listwise_ce(batch.clicks, logits);
    }
    return 0.0;
  };

  auto backward_pass = [&]() {
    model.zero_grad();
    auto [exam_scores, rel_scores, logits] = logits_now();
    std::vector<double> grad_logits(logits.size(), 0.0);
    switch (loss_mode) {
      case LossMode::kPointwiseEq2:
        loss_pointwise_grad(batch.clicks, logits, grad_logits);
        break;
      case LossMode::kGroupEq3:
        loss_group_grad(batch.clicks, logits, grad_logits);
        break;
      case LossMode::kListwiseCe:
        loss_listwise_ce_grad(batch.clicks, logits, grad_logits);
        break;
    }
    std::vector<double> grad_exam(logits.size()), grad_rel(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad_exam[i] = grad_logits[i] * rel_scores[i];
      grad_rel[i] = grad_logits[i] * exam_scores[i];
    }
    model.exam().backward(grad_exam);
    model.rel().backward(grad_rel);
  };

  Rng rng(seed);
  auto report =
      nn::gradcheck(loss_value, backward_pass, model.params(), h, min_coords, rng);
  model.freeze_exam_stats(false);
  return report;
}

}  // namespace ultr::model
