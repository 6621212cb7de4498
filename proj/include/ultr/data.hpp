#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ultr/errors.hpp"
#include "ultr/rng.hpp"

namespace ultr::data {

// Categorical presentation/behaviour ids attached to one displayed document.
// slipoff_bucket must be 0 for unclicked documents; for clicked documents
// bucket b >= 1 encodes a slip-off count of b-1, with the top bucket as
// overflow.
struct BiasFactors {
  int position_id = 1;
  int mtype_id = 0;
  int serph_bucket = 0;
  int slipoff_bucket = 0;
};

// Dense ranking-feature vector; fixed dimension across a corpus.
struct RankingFeatures {
  std::vector<double> values;
};

struct DocumentRecord {
  std::string doc_id;
  int position = 1;  // 1-based rank on the result page
  BiasFactors bias;
  RankingFeatures features;
  int click = 0;  // {0,1}
};

// One query with its ranked candidate documents. Positions are exactly
// {1..docs.size()}.
struct SessionLog {
  std::string query_id;
  std::vector<DocumentRecord> docs;

  std::size_t size() const { return docs.size(); }
};

// Corpus-wide vocabulary declaration, serialized as the TSV header line
//   #dims D V_m V_s V_p n_max
struct CorpusHeader {
  std::size_t feature_dim = 16;    // D
  std::size_t mtype_vocab = 8;     // V_m
  std::size_t serph_vocab = 16;    // V_s
  std::size_t slipoff_vocab = 11;  // V_p
  std::size_t max_positions = 10;  // n_max

  bool operator==(const CorpusHeader&) const = default;
};

struct Corpus {
  CorpusHeader header;
  std::vector<SessionLog> sessions;
};

// Expert-style relevance judgment, grade in {0..4}.
struct AnnotationRecord {
  std::string query_id;
  std::string doc_id;
  int label = 0;
};

// Session log TSV, one document per line:
//   query_id doc_id position mtype_id serph_bucket slipoff_bucket click f1,...,fD
// Floats carry 9 significant digits. Parse errors name the line; invariant
// violations raise ValidationError.
Corpus parse_session_log(std::istream& in);
void write_session_log(const Corpus& corpus, std::ostream& out);

// Annotation TSV: query_id doc_id label
std::vector<AnnotationRecord> parse_annotations(std::istream& in);
void write_annotations(const std::vector<AnnotationRecord>& records,
                       std::ostream& out);

// Re-checks every corpus invariant (used by the simulator and tests; the
// parser validates as it reads).
void validate(const Corpus& corpus);

// Serialize one double with 9 significant digits (locale-independent).
std::string format_double9(double v);

// One clicked document plus up to g-1 non-clicked companions; indices are
// slots into the owning session's doc list.
struct GroupSample {
  std::size_t session_index = 0;
  std::vector<std::size_t> members;
  std::size_t clicked_slot = 0;  // position of the clicked member in `members`
};

// One group per clicked document; companions sampled uniformly without
// replacement from the session's non-clicked documents. Sessions without
// clicks yield an empty list. g < 2 raises ConfigError.
std::vector<GroupSample> group_select(const SessionLog& session, std::size_t g,
                                      Rng& rng, std::size_t session_index = 0);

}  // namespace ultr::data
