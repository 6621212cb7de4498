#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ultr/eval.hpp"

using namespace ultr;
using namespace ultr::eval;

TEST_CASE("dcg: single relevant document at depth 1") {
  std::vector<int> labels = {1};
  CHECK(dcg_at_n(labels, 1) == 1.0);  // log2(2) == 1, exact
}

TEST_CASE("dcg: hand-evaluated four-document list") {
  // 4 + 2/log2(3) + 0 + 1/log2(5), high-precision value frozen below.
  std::vector<int> labels = {4, 2, 0, 1};
  CHECK(std::abs(dcg_at_n(labels, 4) - 5.6925360652163079) < 1e-9);
}

TEST_CASE("dcg: all-zero labels") {
  std::vector<int> labels = {0, 0, 0};
  CHECK(dcg_at_n(labels, 3) == 0.0);
}

TEST_CASE("dcg: depth below 1 is an argument error") {
  std::vector<int> labels = {1};
  CHECK_THROWS_AS(dcg_at_n(labels, 0), ConfigError);
}

TEST_CASE("dcg: truncates at list length") {
  std::vector<int> labels = {3, 1};
  CHECK(dcg_at_n(labels, 10) == doctest::Approx(3.0 + 1.0 / std::log2(3.0)));
}

TEST_CASE("dcg properties: monotone in labels, invariant beyond depth") {
  Rng rng(7);
  std::uniform_int_distribution<int> label(0, 4);
  std::uniform_int_distribution<int> len(1, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = len(rng);
    std::vector<int> labels(n);
    for (auto& v : labels) v = label(rng);
    const std::size_t depth = 1 + static_cast<std::size_t>(trial % 10);
    const double base = dcg_at_n(labels, depth);

    // Raising one label never lowers the value.
    std::uniform_int_distribution<int> pick(0, n - 1);
    int idx = pick(rng);
    std::vector<int> raised = labels;
    if (raised[idx] < 4) {
      raised[idx] += 1;
      CHECK(dcg_at_n(raised, depth) >= base);
    }

    // Entries beyond the depth do not matter.
    if (static_cast<std::size_t>(n) > depth) {
      std::vector<int> tail_changed = labels;
      for (std::size_t i = depth; i < static_cast<std::size_t>(n); ++i) {
        tail_changed[i] = 4 - tail_changed[i];
      }
      CHECK(dcg_at_n(tail_changed, depth) == base);
    }
  }
}

namespace {

std::vector<data::AnnotationRecord> two_doc_annotations() {
  return {{"q1", "a", 4}, {"q1", "b", 0}};
}

}  // namespace

TEST_CASE("evaluate: scores equal to labels reach the ideal DCG") {
  std::vector<data::AnnotationRecord> annotations = {
      {"q1", "a", 3}, {"q1", "b", 1}, {"q1", "c", 4}, {"q2", "x", 2},
      {"q2", "y", 0},
  };
  ScoreMap scores;
  for (const auto& rec : annotations) {
    scores[rec.query_id][rec.doc_id] = static_cast<double>(rec.label);
  }
  DcgReport report = evaluate(scores, annotations);
  CHECK(report.n_queries == 2);
  // q1 ideal: labels 4,3,1 -> 4 + 3/log2(3) + 1/2
  const double q1 = 4.0 + 3.0 / std::log2(3.0) + 0.5;
  // q2 ideal: labels 2,0
  const double q2 = 2.0;
  CHECK(report.per_query[0].dcg10 == doctest::Approx(q1));
  CHECK(report.per_query[1].dcg10 == doctest::Approx(q2));
  CHECK(report.mean10 == doctest::Approx((q1 + q2) / 2.0));
}

TEST_CASE("evaluate: inverted scores on a two-doc query give DCG@1 = 0") {
  ScoreMap scores;
  scores["q1"]["a"] = 0.0;
  scores["q1"]["b"] = 1.0;  // wrong doc on top
  DcgReport report = evaluate(scores, two_doc_annotations());
  CHECK(report.mean1 == 0.0);
}

TEST_CASE("evaluate: missing score is a coverage error naming the pair") {
  ScoreMap scores;
  scores["q1"]["a"] = 1.0;
  try {
    evaluate(scores, two_doc_annotations());
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    std::string msg = e.what();
    CHECK(msg.find("q1") != std::string::npos);
    CHECK(msg.find("b") != std::string::npos);
  }
}

TEST_CASE("evaluate: per-query DCG matches brute-force recomputation") {
  Rng rng(21);
  std::uniform_int_distribution<int> label(0, 4);
  std::uniform_real_distribution<double> score(-3.0, 3.0);
  std::uniform_int_distribution<int> ndocs(1, 12);

  std::vector<data::AnnotationRecord> annotations;
  ScoreMap scores;
  for (int q = 0; q < 50; ++q) {
    std::string qid = "q" + std::to_string(q);
    const int n = ndocs(rng);
    for (int d = 0; d < n; ++d) {
      std::string did = "d" + std::to_string(d);
      annotations.push_back({qid, did, label(rng)});
      scores[qid][did] = score(rng);
    }
  }
  DcgReport report = evaluate(scores, annotations);

  double sum10 = 0.0;
  for (const auto& [qid, doc_scores] : scores) {
    std::vector<std::pair<std::string, double>> items(doc_scores.begin(),
                                                      doc_scores.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    double dcg = 0.0;
    for (std::size_t k = 0; k < items.size() && k < 10; ++k) {
      int lab = 0;
      for (const auto& rec : annotations) {
        if (rec.query_id == qid && rec.doc_id == items[k].first) lab = rec.label;
      }
      dcg += lab / std::log2(static_cast<double>(k) + 2.0);
    }
    sum10 += dcg;
  }
  CHECK(report.mean10 == doctest::Approx(sum10 / 50.0));
}

TEST_CASE("evaluate is invariant under positive monotone score transforms") {
  Rng rng(33);
  std::uniform_int_distribution<int> label(0, 4);
  std::uniform_real_distribution<double> score(-2.0, 2.0);
  std::vector<data::AnnotationRecord> annotations;
  ScoreMap scores, transformed;
  for (int q = 0; q < 10; ++q) {
    std::string qid = "q" + std::to_string(q);
    for (int d = 0; d < 8; ++d) {
      std::string did = "d" + std::to_string(d);
      annotations.push_back({qid, did, label(rng)});
      double s = score(rng);
      scores[qid][did] = s;
      transformed[qid][did] = std::exp(2.0 * s) + 1.0;  // strictly monotone
    }
  }
  DcgReport a = evaluate(scores, annotations);
  DcgReport b = evaluate(transformed, annotations);
  REQUIRE(a.per_query.size() == b.per_query.size());
  for (std::size_t i = 0; i < a.per_query.size(); ++i) {
    CHECK(a.per_query[i].dcg1 == b.per_query[i].dcg1);
    CHECK(a.per_query[i].dcg10 == b.per_query[i].dcg10);
  }
}

TEST_CASE("kendall tau: identical, reversed, and random orders") {
  std::map<std::string, double> truth = {
      {"a", 5.0}, {"b", 4.0}, {"c", 3.0}, {"d", 2.0}, {"e", 1.0}};
  CHECK(kendall_tau({"a", "b", "c", "d", "e"}, truth) == doctest::Approx(1.0));
  CHECK(kendall_tau({"e", "d", "c", "b", "a"}, truth) == doctest::Approx(-1.0));

  Rng rng(17);
  std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  double acc = 0.0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    std::shuffle(ids.begin(), ids.end(), rng);
    acc += kendall_tau(ids, truth);
  }
  CHECK(std::abs(acc / trials) < 0.05);
}

TEST_CASE("kendall tau: item-set mismatch raises KeyError") {
  std::map<std::string, double> truth = {{"a", 1.0}, {"b", 2.0}};
  CHECK_THROWS_AS(kendall_tau({"a", "z"}, truth), KeyError);
  CHECK_THROWS_AS(kendall_tau({"a"}, truth), KeyError);
}

TEST_CASE("kendall tau handles ties in the truth values") {
  std::map<std::string, double> truth = {{"a", 1.0}, {"b", 1.0}, {"c", 0.0}};
  const double tau = kendall_tau({"a", "b", "c"}, truth);
  CHECK(tau > 0.0);
  CHECK(tau < 1.0);  // ties keep tau-b below 1
}

TEST_CASE("report serialization is stable and parsable") {
  ScoreMap scores;
  scores["q1"]["a"] = 2.0;
  scores["q1"]["b"] = 1.0;
  DcgReport report = evaluate(scores, two_doc_annotations());
  std::ostringstream a, b;
  write_report(report, a, true);
  write_report(report, b, true);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("dcg@10") != std::string::npos);
  CHECK(a.str().find("q1") != std::string::npos);
}
