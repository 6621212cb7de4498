#include "ultr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace ultr::eval {

EnsembleSpec parse_ensemble_spec(std::istream& in) {
  EnsembleSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("ensemble spec line " + std::to_string(line_no) +
                       ": expected 'path<TAB>weight'");
    }
    EnsembleMember member;
    member.path = line.substr(0, tab);
    try {
      member.weight = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("ensemble spec line " + std::to_string(line_no) +
                       ": bad weight");
    }
    if (!std::isfinite(member.weight)) {
      throw ValidationError("ensemble spec: weights must be finite");
    }
    spec.members.push_back(std::move(member));
  }
  if (spec.members.empty()) {
    throw ValidationError("ensemble spec: needs at least one member");
  }
  return spec;
}

void write_ensemble_spec(const EnsembleSpec& spec, std::ostream& out) {
  for (const auto& member : spec.members) {
    out << member.path << '\t' << data::format_double9(member.weight) << '\n';
  }
}

ScoreMap score_corpus(model::MfimModel& model, const data::Corpus& corpus,
                      const std::set<std::string>* only_queries) {
  model.set_mode(nn::Mode::kEval);
  ScoreMap scores;
  for (const auto& session : corpus.sessions) {
    if (only_queries != nullptr && !only_queries->contains(session.query_id)) {
      continue;
    }
    auto session_scores = model::predict_relevance(model, session);
    auto& slot = scores[session.query_id];
    for (std::size_t d = 0; d < session.docs.size(); ++d) {
      slot[session.docs[d].doc_id] = session_scores[d];
    }
  }
  return scores;
}

ScoreMap ensemble_scores(std::vector<model::MfimModel>& members,
                         const std::vector<double>& weights,
                         const data::Corpus& corpus,
                         const std::set<std::string>* only_queries) {
  if (members.empty() || members.size() != weights.size()) {
    throw ValidationError("ensemble: members/weights mismatch or empty");
  }
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].header().feature_dim != members[0].header().feature_dim) {
      throw CompatibilityError(
          "ensemble: member feature dimensions disagree (" +
          std::to_string(members[i].header().feature_dim) + " vs " +
          std::to_string(members[0].header().feature_dim) + ")");
    }
  }
  ScoreMap combined;
  for (std::size_t i = 0; i < members.size(); ++i) {
    ScoreMap scores = score_corpus(members[i], corpus, only_queries);
    if (i == 0 && weights[i] == 1.0) {
      // Keep the single-member weight-1 path bit-exact.
      combined = std::move(scores);
      continue;
    }
    for (auto& [query_id, docs] : scores) {
      auto& slot = combined[query_id];
      for (auto& [doc_id, score] : docs) {
        slot[doc_id] += weights[i] * score;
      }
    }
  }
  return combined;
}

ScoreMap ensemble_scores(const EnsembleSpec& spec, const data::Corpus& corpus,
                         const std::set<std::string>* only_queries) {
  std::vector<model::MfimModel> members;
  std::vector<double> weights;
  members.reserve(spec.members.size());
  for (const auto& member : spec.members) {
    members.push_back(model::load_checkpoint_file(member.path));
    weights.push_back(member.weight);
  }
  return ensemble_scores(members, weights, corpus, only_queries);
}

namespace {

// All weight vectors over the simplex with the given step, vertices first
// in lexicographic enumeration order.
void enumerate_simplex(std::size_t members, int steps,
                       std::vector<int>& current,
                       std::vector<std::vector<double>>& out) {
  if (current.size() == members - 1) {
    int used = 0;
    for (int v : current) used += v;
    if (used > steps) return;
    std::vector<double> w(members);
    for (std::size_t i = 0; i < current.size(); ++i) {
      w[i] = static_cast<double>(current[i]) / steps;
    }
    w[members - 1] = static_cast<double>(steps - used) / steps;
    out.push_back(std::move(w));
    return;
  }
  for (int v = 0; v <= steps; ++v) {
    current.push_back(v);
    enumerate_simplex(members, steps, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<double> grid_search_weights(
    std::vector<model::MfimModel>& members, const data::Corpus& corpus,
    const std::vector<data::AnnotationRecord>& annotations, double step) {
  if (members.empty()) {
    throw ValidationError("grid_search_weights: no members");
  }
  if (!(step > 0.0) || step > 1.0) {
    throw ConfigError("grid_search_weights: step must be in (0,1]");
  }
  const int steps = static_cast<int>(std::lround(1.0 / step));

  std::set<std::string> queries;
  for (const auto& rec : annotations) queries.insert(rec.query_id);

  // Score each member once; candidate weights only recombine the maps.
  std::vector<ScoreMap> member_scores;
  member_scores.reserve(members.size());
  for (auto& member : members) {
    member_scores.push_back(score_corpus(member, corpus, &queries));
  }

  std::vector<std::vector<double>> candidates;
  std::vector<int> scratch;
  enumerate_simplex(members.size(), steps, scratch, candidates);

  std::vector<double> best_weights;
  double best_dcg = -1.0;
  for (const auto& weights : candidates) {
    ScoreMap combined = member_scores[0];
    for (auto& [query_id, docs] : combined) {
      for (auto& [doc_id, score] : docs) {
        score *= weights[0];
        for (std::size_t i = 1; i < members.size(); ++i) {
          score += weights[i] * member_scores[i].at(query_id).at(doc_id);
        }
      }
    }
    const double dcg = evaluate(combined, annotations).mean10;
    if (dcg > best_dcg) {
      best_dcg = dcg;
      best_weights = weights;
    }
  }
  return best_weights;
}

}  // namespace ultr::eval
