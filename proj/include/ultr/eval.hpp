#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ultr/data.hpp"

namespace ultr::eval {

// DCG@N = sum_{k=1..min(N,len)} G_k / log2(k+1), raw integer grades.
double dcg_at_n(std::span<const int> labels_in_rank_order, std::size_t depth);

// query_id -> doc_id -> model score.
using ScoreMap = std::map<std::string, std::map<std::string, double>>;

struct QueryDcg {
  std::string query_id;
  double dcg1 = 0.0, dcg3 = 0.0, dcg5 = 0.0, dcg10 = 0.0;
};

struct DcgReport {
  std::vector<QueryDcg> per_query;  // sorted by query_id
  double mean1 = 0.0, mean3 = 0.0, mean5 = 0.0, mean10 = 0.0;
  std::size_t n_queries = 0;
};

// Ranks each query's annotated documents by score (descending, stable,
// doc_id tiebreak) and reports DCG@{1,3,5,10}. A missing score for an
// annotated document raises CoverageError naming (query, doc).
DcgReport evaluate(const ScoreMap& scores,
                   const std::vector<data::AnnotationRecord>& annotations);

// Kendall tau-b between a ranking and ground-truth values for the same
// item set (KeyError on mismatch). 1 = identical order, -1 = reversed.
double kendall_tau(const std::vector<std::string>& ranked_ids,
                   const std::map<std::string, double>& truth_values);

// Report TSV: `metric  mean  n_queries` rows, then optional per-query rows.
void write_report(const DcgReport& report, std::ostream& out,
                  bool per_query = false);

}  // namespace ultr::eval
