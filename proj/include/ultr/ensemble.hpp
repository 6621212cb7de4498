#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "ultr/data.hpp"
#include "ultr/eval.hpp"
#include "ultr/model.hpp"

namespace ultr::eval {

struct EnsembleMember {
  std::string path;
  double weight = 1.0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
};

// Spec file: one `path<TAB>weight` line per member.
EnsembleSpec parse_ensemble_spec(std::istream& in);
void write_ensemble_spec(const EnsembleSpec& spec, std::ostream& out);

// Relevance scores for every document of every session (optionally
// restricted to the given query ids). Puts the model in eval mode.
ScoreMap score_corpus(model::MfimModel& model, const data::Corpus& corpus,
                      const std::set<std::string>* only_queries = nullptr);

// Weighted sum of member relevance scores. All members must share the
// corpus feature dimension (CompatibilityError otherwise).
ScoreMap ensemble_scores(std::vector<model::MfimModel>& members,
                         const std::vector<double>& weights,
                         const data::Corpus& corpus,
                         const std::set<std::string>* only_queries = nullptr);

// Loads every member checkpoint and combines with the spec weights.
ScoreMap ensemble_scores(const EnsembleSpec& spec, const data::Corpus& corpus,
                         const std::set<std::string>* only_queries = nullptr);

// Exhaustive search over the weight simplex (step-sized grid, vertices
// included) maximizing mean DCG@10 on the given annotations. Deterministic:
// first grid point on ties.
std::vector<double> grid_search_weights(
    std::vector<model::MfimModel>& members, const data::Corpus& corpus,
    const std::vector<data::AnnotationRecord>& annotations, double step = 0.1);

}  // namespace ultr::eval
