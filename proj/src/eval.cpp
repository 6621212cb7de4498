#include "ultr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ultr/data.hpp"

namespace ultr::eval {

double dcg_at_n(std::span<const int> labels_in_rank_order, std::size_t depth) {
  if (depth < 1) {
    throw ConfigError("dcg_at_n: depth must be >= 1");
  }
  double dcg = 0.0;
  const std::size_t top = std::min(depth, labels_in_rank_order.size());
  for (std::size_t k = 0; k < top; ++k) {
    if (labels_in_rank_order[k] < 0) {
      throw ConfigError("dcg_at_n: labels must be non-negative");
    }
    dcg += static_cast<double>(labels_in_rank_order[k]) /
           std::log2(static_cast<double>(k) + 2.0);
  }
  return dcg;
}

DcgReport evaluate(const ScoreMap& scores,
                   const std::vector<data::AnnotationRecord>& annotations) {
  // query -> (doc, label), grouped in query_id order.
  std::map<std::string, std::vector<std::pair<std::string, int>>> grouped;
  for (const auto& rec : annotations) {
    grouped[rec.query_id].emplace_back(rec.doc_id, rec.label);
  }

  DcgReport report;
  for (const auto& [query_id, docs] : grouped) {
    auto query_scores = scores.find(query_id);
    struct Item {
      double score;
      std::string doc_id;
      int label;
    };
    std::vector<Item> items;
    items.reserve(docs.size());
    for (const auto& [doc_id, label] : docs) {
      if (query_scores == scores.end() ||
          !query_scores->second.contains(doc_id)) {
        throw CoverageError("evaluate: no score for annotated (" + query_id +
                            ", " + doc_id + ")");
      }
      items.push_back({query_scores->second.at(doc_id), doc_id, label});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    std::vector<int> labels;
    labels.reserve(items.size());
    for (const auto& item : items) labels.push_back(item.label);

    QueryDcg row;
    row.query_id = query_id;
    row.dcg1 = dcg_at_n(labels, 1);
    row.dcg3 = dcg_at_n(labels, 3);
    row.dcg5 = dcg_at_n(labels, 5);
    row.dcg10 = dcg_at_n(labels, 10);
    report.mean1 += row.dcg1;
    report.mean3 += row.dcg3;
    report.mean5 += row.dcg5;
    report.mean10 += row.dcg10;
    report.per_query.push_back(std::move(row));
  }
  report.n_queries = report.per_query.size();
  if (report.n_queries > 0) {
    const double n = static_cast<double>(report.n_queries);
    report.mean1 /= n;
    report.mean3 /= n;
    report.mean5 /= n;
    report.mean10 /= n;
  }
  return report;
}

double kendall_tau(const std::vector<std::string>& ranked_ids,
                   const std::map<std::string, double>& truth_values) {
  if (ranked_ids.size() != truth_values.size()) {
    throw KeyError("kendall_tau: item sets differ in size");
  }
  std::vector<double> truth;
  truth.reserve(ranked_ids.size());
  for (const auto& id : ranked_ids) {
    auto it = truth_values.find(id);
    if (it == truth_values.end()) {
      throw KeyError("kendall_tau: unknown item '" + id + "'");
    }
    truth.push_back(it->second);
  }

  // tau-b over all pairs; x is the (tie-free) rank order, y the truth.
  const std::size_t n = truth.size();
  long concordant = 0, discordant = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (truth[i] == truth[j]) {
        ++ties_y;
      } else if (truth[i] > truth[j]) {
        ++concordant;  // ranked earlier and truly higher
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(n) * (n - 1) / 2.0;
  const double denom = std::sqrt(n0 * (n0 - static_cast<double>(ties_y)));
  if (denom == 0.0) return 0.0;
  return (static_cast<double>(concordant) - static_cast<double>(discordant)) /
         denom;
}

void write_report(const DcgReport& report, std::ostream& out, bool per_query) {
  out << "metric\tmean\tn_queries\n";
  const auto line = [&](const char* name, double value) {
    out << name << '\t' << data::format_double9(value) << '\t'
        << report.n_queries << '\n';
  };
  line("dcg@1", report.mean1);
  line("dcg@3", report.mean3);
  line("dcg@5", report.mean5);
  line("dcg@10", report.mean10);
  if (per_query) {
    out << "#query\tdcg@1\tdcg@3\tdcg@5\tdcg@10\n";
    for (const auto& row : report.per_query) {
      out << row.query_id << '\t' << data::format_double9(row.dcg1) << '\t'
          << data::format_double9(row.dcg3) << '\t'
          << data::format_double9(row.dcg5) << '\t'
          << data::format_double9(row.dcg10) << '\n';
    }
  }
}

}  // namespace ultr::eval
