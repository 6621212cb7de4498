#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "ultr/model.hpp"
#include "ultr/simulator.hpp"

using namespace ultr;
using namespace ultr::model;

namespace {

data::CorpusHeader small_header() {
  return data::CorpusHeader{.feature_dim = 4,
                            .mtype_vocab = 3,
                            .serph_vocab = 4,
                            .slipoff_vocab = 5,
                            .max_positions = 6};
}

FeatureSet all_factors() {
  return FeatureSet{.use_position = true,
                    .use_mtype = true,
                    .use_serph = true,
                    .use_slipoff = true};
}

std::vector<double> snapshot(std::vector<nn::ParamRef> refs) {
  std::vector<double> out;
  for (const auto& r : refs) out.insert(out.end(), r.data, r.data + r.size);
  return out;
}

}  // namespace

TEST_CASE("click_prob: zero product gives one half") {
  CHECK(click_prob(0.0, 5.0) == doctest::Approx(0.5));
  CHECK(click_prob(5.0, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("click_prob: scalar evaluation of sigmoid(6)") {
  CHECK(click_prob(2.0, 3.0) == doctest::Approx(0.9975273768433652).epsilon(1e-12));
}

TEST_CASE("click_prob: flipping both signs leaves it unchanged") {
  CHECK(click_prob(-2.0, -3.0) == click_prob(2.0, 3.0));
  CHECK(click_prob(-1.7, 0.4) == click_prob(1.7, -0.4));
}

TEST_CASE("loss_pointwise: perfect prediction tends to zero") {
  std::vector<int> c = {1};
  std::vector<double> chat = {1.0 - 1e-13};  // clamped internally
  CHECK(loss_pointwise(c, chat) < 1e-10);
}

TEST_CASE("loss_pointwise: chat=0.5 contributes ln 2 either way") {
  std::vector<int> c1 = {1}, c0 = {0};
  std::vector<double> chat = {0.5};
  CHECK(loss_pointwise(c1, chat) == doctest::Approx(0.6931471805599453));
  CHECK(loss_pointwise(c0, chat) == doctest::Approx(0.6931471805599453));
}

TEST_CASE("loss_pointwise: sum vs mean reduction") {
  std::vector<int> c = {1, 0};
  std::vector<double> chat = {0.5, 0.5};
  CHECK(loss_pointwise(c, chat) == doctest::Approx(2.0 * 0.6931471805599453));
  CHECK(loss_pointwise(c, chat, true) == doctest::Approx(0.6931471805599453));
}

TEST_CASE("loss_pointwise: clicks must be binary") {
  std::vector<int> c = {2};
  std::vector<double> chat = {0.5};
  CHECK_THROWS_AS(loss_pointwise(c, chat), ValidationError);
}

TEST_CASE("loss_group: two equal logits give 2 ln 2") {
  std::vector<int> c = {1, 0};
  std::vector<double> s = {0.3, 0.3};
  CHECK(loss_group(c, s) == doctest::Approx(1.3862943611198906));
}

TEST_CASE("loss_group: perfect separation drives the loss to zero") {
  std::vector<int> c = {1, 0, 0};
  std::vector<double> s = {60.0, 0.0, 0.0};
  CHECK(loss_group(c, s) < 1e-10);
}

TEST_CASE("loss_group: invariant to adding a constant to all logits") {
  std::vector<int> c = {0, 1, 0, 0};
  std::vector<double> s = {0.4, -1.2, 2.0, 0.0};
  std::vector<double> shifted = s;
  for (auto& v : shifted) v += 17.5;
  CHECK(loss_group(c, s) == doctest::Approx(loss_group(c, shifted)));
}

TEST_CASE("loss_group: positive for any finite logits") {
  std::vector<int> c = {1, 0};
  std::vector<double> s = {9.0, -9.0};
  CHECK(loss_group(c, s) > 0.0);
}

TEST_CASE("loss_group: exactly one click required") {
  std::vector<double> s = {0.0, 0.0};
  std::vector<int> none = {0, 0}, both = {1, 1};
  CHECK_THROWS_AS(loss_group(none, s), ValidationError);
  CHECK_THROWS_AS(loss_group(both, s), ValidationError);
}

TEST_CASE("logit-level gradients match finite differences") {
  Rng rng(3);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(5);
    for (auto& v : s) v = dist(rng);
    std::vector<int> c(5, 0);
    c[trial % 5] = 1;

    for (int mode = 0; mode < 3; ++mode) {
      auto value = [&](std::span<const double> logits) {
        if (mode == 0) {
          std::vector<double> chat(logits.size());
          for (std::size_t i = 0; i < logits.size(); ++i)
            chat[i] = nn::sigmoid(logits[i]);
          return loss_pointwise(c, chat);
        }
        if (mode == 1) return loss_group(c, logits);
        return loss_listwise_ce(c, logits);
      };
      std::vector<double> grad(5, 0.0);
      if (mode == 0) {
        loss_pointwise_grad(c, s, grad);
      } else if (mode == 1) {
        loss_group_grad(c, s, grad);
      } else {
        loss_listwise_ce_grad(c, s, grad);
      }
      const double h = 1e-6;
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::vector<double> sp = s, sm = s;
        sp[i] += h;
        sm[i] -= h;
        const double numeric = (value(sp) - value(sm)) / (2 * h);
        CHECK(std::abs(numeric - grad[i]) <
              1e-4 * std::max(1.0, std::abs(numeric)));
      }
    }
  }
}

TEST_CASE("exam tower: position-only output ignores other factors") {
  Rng rng(5);
  FeatureSet fs;  // position only
  ExamModel exam(fs, small_header(), 1, 8, rng);
  exam.set_mode(nn::Mode::kEval);
  std::vector<data::BiasFactors> a = {{.position_id = 2, .mtype_id = 0,
                                       .serph_bucket = 1, .slipoff_bucket = 0}};
  std::vector<data::BiasFactors> b = {{.position_id = 2, .mtype_id = 2,
                                       .serph_bucket = 3, .slipoff_bucket = 4}};
  CHECK(exam.forward(a)[0] == exam.forward(b)[0]);
}

TEST_CASE("exam tower: zero tables and zero head give zero scores") {
  Rng rng(7);
  ExamModel exam(all_factors(), small_header(), 2, 8, rng);
  exam.set_mode(nn::Mode::kEval);
  for (auto ref : exam.params()) {
    std::fill(ref.data, ref.data + ref.size, 0.0);
  }
  std::vector<data::BiasFactors> batch = {
      {.position_id = 1, .mtype_id = 1, .serph_bucket = 2, .slipoff_bucket = 3},
      {.position_id = 4, .mtype_id = 0, .serph_bucket = 0, .slipoff_bucket = 0}};
  for (double e : exam.forward(batch)) CHECK(e == 0.0);
}

TEST_CASE("exam tower rejects out-of-vocabulary ids") {
  Rng rng(9);
  ExamModel exam(all_factors(), small_header(), 1, 8, rng);
  exam.set_mode(nn::Mode::kEval);
  std::vector<data::BiasFactors> bad = {
      {.position_id = 7, .mtype_id = 0, .serph_bucket = 0, .slipoff_bucket = 0}};
  CHECK_THROWS_AS(exam.forward(bad), IndexError);
}

TEST_CASE("relevance tower: zero weights give zero scores") {
  Rng rng(11);
  RelevanceModel rel(4, 8, rng);
  for (auto ref : rel.params()) std::fill(ref.data, ref.data + ref.size, 0.0);
  Matrix x(3, 4, 1.5);
  for (double r : rel.forward(x)) CHECK(r == 0.0);
}

TEST_CASE("relevance tower: permuting the batch permutes outputs") {
  Rng rng(13);
  RelevanceModel rel(4, 8, rng);
  Matrix x(3, 4);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : x.data) v = dist(rng);
  auto scores = rel.forward(x);
  Matrix perm(3, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    perm(0, c) = x(2, c);
    perm(1, c) = x(0, c);
    perm(2, c) = x(1, c);
  }
  auto permuted = rel.forward(perm);
  CHECK(permuted[0] == scores[2]);
  CHECK(permuted[1] == scores[0]);
  CHECK(permuted[2] == scores[1]);
}

TEST_CASE("relevance tower rejects wrong feature dimension") {
  Rng rng(15);
  RelevanceModel rel(4, 8, rng);
  Matrix x(2, 5, 0.0);
  CHECK_THROWS_AS(rel.forward(x), DimensionError);
}

TEST_CASE("full-model gradcheck passes for all loss modes") {
  Rng rng(17);
  MfimModel model(all_factors(), small_header(), 3, 12, rng);
  auto batch = make_gradcheck_batch(small_header(), 8, 99);
  for (LossMode mode :
       {LossMode::kPointwiseEq2, LossMode::kGroupEq3, LossMode::kListwiseCe}) {
    auto report = gradcheck_model(model, batch, mode, 1e-5, 64, 7);
    CAPTURE(static_cast<int>(mode));
    CAPTURE(report.worst_param);
    CHECK(report.coords_checked >= 64);
    CHECK(report.max_rel_err <= 1e-4);
  }
}

TEST_CASE("PBM degeneracy: position-only single-block tower is a table lookup") {
  Rng rng(19);
  data::CorpusHeader header = small_header();
  FeatureSet fs;  // position only
  MfimModel model(fs, header, 1, 8, rng);
  model.set_mode(nn::Mode::kEval);
  // Enumerate all positions x a few other-factor combinations: the exam
  // score is a function of the position id alone.
  for (int pos = 1; pos <= static_cast<int>(header.max_positions); ++pos) {
    std::vector<double> seen;
    for (int mt = 0; mt < 3; ++mt) {
      for (int sb : {0, 3}) {
        std::vector<data::BiasFactors> b = {{.position_id = pos,
                                             .mtype_id = mt,
                                             .serph_bucket = sb,
                                             .slipoff_bucket = mt}};
        seen.push_back(model.exam().forward(b)[0]);
      }
    }
    for (double v : seen) CHECK(v == seen[0]);
  }
}

TEST_CASE("predict_relevance ignores bias factors entirely") {
  Rng rng(21);
  data::CorpusHeader header = small_header();
  MfimModel model(all_factors(), header, 2, 8, rng);
  model.set_mode(nn::Mode::kEval);

  data::SessionLog session;
  session.query_id = "q";
  data::DocumentRecord doc;
  doc.doc_id = "d";
  doc.features.values = {0.5, -0.25, 1.0, 0.0};
  // Exhaustive over every factor combination for this one document.
  std::vector<double> seen;
  for (int pos = 1; pos <= static_cast<int>(header.max_positions); ++pos) {
    for (int mt = 0; mt < static_cast<int>(header.mtype_vocab); ++mt) {
      for (int sb = 0; sb < static_cast<int>(header.serph_vocab); ++sb) {
        for (int sl = 0; sl < static_cast<int>(header.slipoff_vocab); ++sl) {
          session.docs.clear();
          doc.position = pos;
          doc.bias = {pos, mt, sb, sl};
          doc.click = sl > 0 ? 1 : 0;
          session.docs.push_back(doc);
          seen.push_back(predict_relevance(model, session)[0]);
        }
      }
    }
  }
  for (double v : seen) CHECK(v == seen[0]);
}

TEST_CASE("predict_relevance requires eval mode") {
  Rng rng(23);
  MfimModel model(all_factors(), small_header(), 1, 8, rng);
  data::SessionLog session;
  session.query_id = "q";
  data::DocumentRecord doc;
  doc.doc_id = "d";
  doc.position = 1;
  doc.bias = {1, 0, 0, 0};
  doc.features.values = {0, 0, 0, 0};
  session.docs.push_back(doc);
  CHECK_THROWS_AS(predict_relevance(model, session), StateError);
}

TEST_CASE("rank_by_score: stable order with doc_id tiebreak") {
  std::vector<double> scores = {1.0, 3.0, 1.0, 2.0};
  std::vector<std::string> ids = {"d", "a", "b", "c"};
  auto order = rank_by_score(scores, ids);
  CHECK(order == std::vector<std::size_t>{1, 3, 2, 0});
}

namespace {

sim::SimOutput small_sim(std::size_t queries, bool perception, std::uint64_t seed) {
  sim::SimConfig config;
  config.num_queries = queries;
  config.seed = seed;
  config.header.feature_dim = 8;
  if (!perception) {
    config.perception_table = sim::flat_perception_table(
        config.header.mtype_vocab, config.header.serph_vocab);
  }
  return sim::gen_corpus(config);
}

TrainConfig quick_config() {
  TrainConfig config;
  config.epochs = 1;
  config.batch_size = 64;
  config.layers = 2;
  config.hidden = 8;
  config.features = all_factors();
  return config;
}

}  // namespace

TEST_CASE("train: lr=0 for one epoch leaves parameters at initialization") {
  auto simdata = small_sim(50, true, 3);
  TrainConfig config = quick_config();
  config.lr = 0.0;
  auto result = train(simdata.corpus, config);
  CHECK(result.trace.train_loss.size() == 1);
  CHECK(result.trace.val_dcg10.empty());

  Rng init_rng(derive_seed(config.seed, 0));
  MfimModel fresh(config.features, simdata.corpus.header, config.layers,
                  config.hidden, init_rng);
  auto got = snapshot(result.model.params());
  auto want = snapshot(fresh.params());
  REQUIRE(got.size() == want.size());
  CHECK(std::memcmp(got.data(), want.data(), got.size() * sizeof(double)) == 0);
}

TEST_CASE("train: identical config and seed give bit-identical models") {
  auto simdata = small_sim(60, true, 5);
  TrainConfig config = quick_config();
  config.epochs = 2;
  auto a = train(simdata.corpus, config);
  auto b = train(simdata.corpus, config);
  auto pa = snapshot(a.model.state_tensors());
  auto pb = snapshot(b.model.state_tensors());
  REQUIRE(pa.size() == pb.size());
  CHECK(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0);
  CHECK(a.trace.train_loss == b.trace.train_loss);
}

TEST_CASE("train: corpus without clicks is an error") {
  auto simdata = small_sim(20, true, 7);
  for (auto& session : simdata.corpus.sessions) {
    for (auto& doc : session.docs) {
      doc.click = 0;
      doc.bias.slipoff_bucket = 0;
    }
  }
  CHECK_THROWS_AS(train(simdata.corpus, quick_config()), Error);
}

TEST_CASE("train: non-finite forward raises DivergenceError naming the epoch") {
  auto simdata = small_sim(30, true, 9);
  // A feature at the edge of the double range plus an aggressive learning
  // rate: once first-layer weights pass 1 the accumulation overflows and
  // the batch logits stop being finite. The doc is clicked, so it enters
  // one group every epoch.
  simdata.corpus.sessions[0].docs[0].features.values[0] = 1e308;
  simdata.corpus.sessions[0].docs[0].click = 1;
  simdata.corpus.sessions[0].docs[0].bias.slipoff_bucket = 1;
  TrainConfig config = quick_config();
  config.lr = 2.0;
  config.epochs = 6;
  try {
    train(simdata.corpus, config);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("train: loss trace shrinks on a PBM corpus") {
  auto simdata = small_sim(300, false, 11);
  TrainConfig config = quick_config();
  config.epochs = 8;
  config.loss_mode = LossMode::kGroupEq3;
  auto result = train(simdata.corpus, config);
  REQUIRE(result.trace.train_loss.size() == 8);
  CHECK(result.trace.train_loss.back() < result.trace.train_loss.front());
}

TEST_CASE("train: 30-epoch smoke run reaches 0.7x of the first epoch loss") {
  auto simdata = small_sim(2000, true, 13);
  TrainConfig config;  // defaults: L=5, H=32, g=6, group loss
  config.epochs = 30;
  config.features = all_factors();
  auto result = train(simdata.corpus, config);
  REQUIRE(result.trace.train_loss.size() == 30);
  CHECK(result.trace.train_loss.back() <
        0.7 * result.trace.train_loss.front());
}

TEST_CASE("train: validation trace appears when annotations are supplied") {
  auto simdata = small_sim(100, true, 15);
  TrainConfig config = quick_config();
  config.epochs = 2;
  auto result = train(simdata.corpus, config, &simdata.annotations);
  CHECK(result.trace.val_dcg10.size() == 2);
  for (double v : result.trace.val_dcg10) CHECK(v > 0.0);
}

TEST_CASE("train config validation") {
  TrainConfig config;
  config.group_size = 1;
  CHECK_THROWS_AS(validate(config), ConfigError);
  config = TrainConfig{};
  config.layers = 0;
  CHECK_THROWS_AS(validate(config), ConfigError);
  config = TrainConfig{};
  config.features.use_position = false;
  CHECK_THROWS_AS(validate(config), ConfigError);
  config = TrainConfig{};
  config.lr = -1.0;
  CHECK_THROWS_AS(validate(config), ConfigError);
}

TEST_CASE("checkpoint: save/load round-trips bit-exactly") {
  Rng rng(25);
  MfimModel model(all_factors(), small_header(), 2, 8, rng);
  std::ostringstream out;
  save_checkpoint(model, out);
  std::istringstream in(out.str());
  MfimModel back = load_checkpoint(in);

  CHECK(back.features() == model.features());
  CHECK(back.header() == model.header());
  CHECK(back.layers() == model.layers());
  CHECK(back.hidden() == model.hidden());

  std::ostringstream again;
  save_checkpoint(back, again);
  CHECK(out.str() == again.str());
}

TEST_CASE("checkpoint: loaded model predicts identically") {
  Rng rng(27);
  data::CorpusHeader header = small_header();
  MfimModel model(all_factors(), header, 2, 8, rng);
  model.set_mode(nn::Mode::kEval);

  data::SessionLog session;
  session.query_id = "q";
  for (int k = 1; k <= 3; ++k) {
    data::DocumentRecord doc;
    doc.doc_id = "d" + std::to_string(k);
    doc.position = k;
    doc.bias = {k, 0, 0, 0};
    doc.features.values = {0.1 * k, -0.2, 0.3, 0.5 * k};
    session.docs.push_back(doc);
  }
  auto want = predict_relevance(model, session);

  std::ostringstream out;
  save_checkpoint(model, out);
  std::istringstream in(out.str());
  MfimModel back = load_checkpoint(in);
  auto got = predict_relevance(back, session);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("checkpoint: truncated stream is an error") {
  Rng rng(29);
  MfimModel model(all_factors(), small_header(), 1, 8, rng);
  std::ostringstream out;
  save_checkpoint(model, out);
  std::string bytes = out.str();
  std::istringstream in(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(in), Error);
}
