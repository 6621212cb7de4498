#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ultr/data.hpp"
#include "ultr/matrix.hpp"

namespace ultr::sim {

// Synthetic corpus generator. Clicks follow a two-step examination story:
// a position-dependent observation draw followed by a perception draw whose
// probability is the true relevance distorted by a per-(mtype, serph)
// multiplier. Multipliers identically 1 reduce the generator to a pure
// position-based click model.
struct SimConfig {
  std::size_t num_queries = 2000;
  std::size_t docs_per_query = 10;  // n
  std::uint64_t seed = 1;
  // Observation probability per position (1-based profile, length n,
  // each in (0,1], non-increasing). Default 1/k.
  std::vector<double> obs_profile;
  // Perception multiplier per (mtype_id, serph_bucket), all > 0.
  Matrix perception_table;
  double relevance_noise = 0.7;  // feature noise scale
  double slipoff_rate = 2.0;     // slip-off mean = rate * rho/perceived
  double annotate_fraction = 0.2; // trailing query fraction given labels
  data::CorpusHeader header;      // D and vocabularies of the emitted corpus

  SimConfig();
};

void validate(const SimConfig& config);

// Default observation profile: obs[k] = 1/k.
std::vector<double> inverse_rank_profile(std::size_t n);

// All-ones table: no perception distortion (pure PBM).
Matrix flat_perception_table(std::size_t mtype_vocab, std::size_t serph_vocab);

// Separable geometric grid a_m * b_s spanning [0.25, 2.0]: both factor
// vectors run geometrically over [0.5, sqrt(2)].
Matrix spread_perception_table(std::size_t mtype_vocab, std::size_t serph_vocab);

// Key=value text format for SimConfig (see README for keys).
SimConfig parse_sim_config(std::istream& in);
SimConfig sim_config_from_kv(const std::map<std::string, std::string>& kv);

// Simulator-side truth for one (query, document).
struct TruthRecord {
  std::string query_id;
  std::string doc_id;
  double rho = 0.0;            // true relevance in [0,1]
  int label = 0;               // floor(5*rho) clamped to 4
  double obs_prob = 0.0;       // observation probability at its position
  double perceived_prob = 0.0; // clamp(rho * multiplier, 0, 1)
};

class GroundTruth {
 public:
  void add(TruthRecord rec);
  const TruthRecord& at(const std::string& query_id,
                        const std::string& doc_id) const;  // KeyError if absent
  bool contains(const std::string& query_id, const std::string& doc_id) const;
  const std::vector<TruthRecord>& records() const { return records_; }

 private:
  std::vector<TruthRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Truth TSV: query_id doc_id rho label obs_prob perceived_prob
void write_truth(const GroundTruth& truth, std::ostream& out);
GroundTruth parse_truth(std::istream& in);

struct SimOutput {
  data::Corpus corpus;
  GroundTruth truth;
  std::vector<data::AnnotationRecord> annotations;
};

SimOutput gen_corpus(const SimConfig& config);

// One observation/perception/slip-off draw; the exact sampling path used
// per document inside gen_corpus, exposed for Monte-Carlo tests.
struct ClickDraw {
  int click = 0;
  int slipoff_count = 0;
};
ClickDraw draw_click(Rng& rng, double obs_prob, double perceived_prob,
                     double slipoff_mean);

// DCG of a ranking against the true labels, plus the achievable ceiling
// (documents sorted by true rho). Unknown documents raise KeyError.
struct OracleDcg {
  double dcg = 0.0;
  double ideal = 0.0;
};
OracleDcg oracle_dcg(const GroundTruth& truth, const std::string& query_id,
                     const std::vector<std::string>& ranked_doc_ids,
                     std::size_t depth);

}  // namespace ultr::sim
