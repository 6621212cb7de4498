#include "ultr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace ultr::data {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

long parse_int(const std::string& s, std::size_t line_no, const char* field) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + field +
                     " '" + s + "'");
  }
  return value;
}

double parse_float(const std::string& s, std::size_t line_no,
                   const char* field) {
  if (s.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty " + field);
  }
  char* end = nullptr;
  double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(value)) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + field +
                     " '" + s + "'");
  }
  return value;
}

void validate_session(const SessionLog& session, const CorpusHeader& header) {
  const std::string& q = session.query_id;
  if (session.docs.empty() || session.docs.size() > header.max_positions) {
    throw ValidationError("session " + q + ": document count " +
                          std::to_string(session.docs.size()) +
                          " outside [1, " +
                          std::to_string(header.max_positions) + "]");
  }
  std::set<int> positions;
  for (const auto& doc : session.docs) {
    if (!positions.insert(doc.position).second) {
      throw ValidationError("session " + q + ": duplicate position " +
                            std::to_string(doc.position));
    }
    if (doc.position != doc.bias.position_id) {
      throw ValidationError("session " + q + ": position_id disagrees");
    }
    if (doc.click != 0 && doc.click != 1) {
      throw ValidationError("session " + q + ": click must be 0 or 1");
    }
    if (doc.click == 0 && doc.bias.slipoff_bucket != 0) {
      throw ValidationError("session " + q + ", doc " + doc.doc_id +
                            ": slipoff_bucket must be 0 without a click");
    }
    if (doc.bias.mtype_id < 0 ||
        doc.bias.mtype_id >= static_cast<int>(header.mtype_vocab)) {
      throw ValidationError("session " + q + ": mtype_id out of vocabulary");
    }
    if (doc.bias.serph_bucket < 0 ||
        doc.bias.serph_bucket >= static_cast<int>(header.serph_vocab)) {
      throw ValidationError("session " + q + ": serph_bucket out of vocabulary");
    }
    if (doc.bias.slipoff_bucket < 0 ||
        doc.bias.slipoff_bucket >= static_cast<int>(header.slipoff_vocab)) {
      throw ValidationError("session " + q +
                            ": slipoff_bucket out of vocabulary");
    }
    if (doc.features.values.size() != header.feature_dim) {
      throw ValidationError("session " + q + ": expected " +
                            std::to_string(header.feature_dim) +
                            " features, got " +
                            std::to_string(doc.features.values.size()));
    }
    for (double v : doc.features.values) {
      if (!std::isfinite(v)) {
        throw ValidationError("session " + q + ": non-finite feature");
      }
    }
  }
  // Unique positions in [1, n]; together that means exactly {1..n}.
  if (*positions.begin() != 1 ||
      *positions.rbegin() != static_cast<int>(session.docs.size())) {
    throw ValidationError("session " + q + ": positions must be exactly 1.." +
                          std::to_string(session.docs.size()));
  }
}

}  // namespace

std::string format_double9(double v) {
  char buf[64];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, ptr);
}

Corpus parse_session_log(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) {
    throw ParseError("line 1: missing #dims header");
  }
  ++line_no;
  {
    std::istringstream hs(line);
    std::string tag;
    hs >> tag;
    if (tag != "#dims") {
      throw ParseError("line 1: expected '#dims D V_m V_s V_p n_max'");
    }
    long d = 0, vm = 0, vs = 0, vp = 0, nmax = 0;
    if (!(hs >> d >> vm >> vs >> vp >> nmax) || d < 1 || vm < 1 || vs < 1 ||
        vp < 1 || nmax < 1) {
      throw ParseError("line 1: malformed #dims header");
    }
    corpus.header.feature_dim = static_cast<std::size_t>(d);
    corpus.header.mtype_vocab = static_cast<std::size_t>(vm);
    corpus.header.serph_vocab = static_cast<std::size_t>(vs);
    corpus.header.slipoff_vocab = static_cast<std::size_t>(vp);
    corpus.header.max_positions = static_cast<std::size_t>(nmax);
  }

  std::unordered_set<std::string> seen_queries;
  SessionLog current;
  auto flush = [&]() {
    if (current.docs.empty()) return;
    validate_session(current, corpus.header);
    if (!seen_queries.insert(current.query_id).second) {
      throw ValidationError("duplicate query_id '" + current.query_id + "'");
    }
    corpus.sessions.push_back(std::move(current));
    current = SessionLog{};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 8) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 8 " +
                       "tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    DocumentRecord doc;
    const std::string& query_id = fields[0];
    doc.doc_id = fields[1];
    doc.position = static_cast<int>(parse_int(fields[2], line_no, "position"));
    doc.bias.position_id = doc.position;
    doc.bias.mtype_id =
        static_cast<int>(parse_int(fields[3], line_no, "mtype_id"));
    doc.bias.serph_bucket =
        static_cast<int>(parse_int(fields[4], line_no, "serph_bucket"));
    doc.bias.slipoff_bucket =
        static_cast<int>(parse_int(fields[5], line_no, "slipoff_bucket"));
    doc.click = static_cast<int>(parse_int(fields[6], line_no, "click"));
    for (const auto& f : split(fields[7], ',')) {
      doc.features.values.push_back(parse_float(f, line_no, "feature"));
    }
    if (query_id.empty() || doc.doc_id.empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": empty query_id or doc_id");
    }
    if (!current.docs.empty() && current.query_id != query_id) {
      flush();
    }
    current.query_id = query_id;
    current.docs.push_back(std::move(doc));
  }
  flush();
  return corpus;
}

void write_session_log(const Corpus& corpus, std::ostream& out) {
  const auto& h = corpus.header;
  out << "#dims " << h.feature_dim << ' ' << h.mtype_vocab << ' '
      << h.serph_vocab << ' ' << h.slipoff_vocab << ' ' << h.max_positions
      << '\n';
  for (const auto& session : corpus.sessions) {
    for (const auto& doc : session.docs) {
      out << session.query_id << '\t' << doc.doc_id << '\t' << doc.position
          << '\t' << doc.bias.mtype_id << '\t' << doc.bias.serph_bucket << '\t'
          << doc.bias.slipoff_bucket << '\t' << doc.click << '\t';
      for (std::size_t i = 0; i < doc.features.values.size(); ++i) {
        if (i) out << ',';
        out << format_double9(doc.features.values[i]);
      }
      out << '\n';
    }
  }
}

std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
  std::vector<AnnotationRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'query_id doc_id label'");
    }
    AnnotationRecord rec;
    rec.query_id = fields[0];
    rec.doc_id = fields[1];
    rec.label = static_cast<int>(parse_int(fields[2], line_no, "label"));
    if (rec.label < 0 || rec.label > 4) {
      throw ValidationError("line " + std::to_string(line_no) + ": label " +
                            std::to_string(rec.label) + " outside 0..4");
    }
    if (!seen.insert({rec.query_id, rec.doc_id}).second) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate annotation for (" + rec.query_id +
                            ", " + rec.doc_id + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_annotations(const std::vector<AnnotationRecord>& records,
                       std::ostream& out) {
  for (const auto& rec : records) {
    out << rec.query_id << '\t' << rec.doc_id << '\t' << rec.label << '\n';
  }
}

void validate(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (const auto& session : corpus.sessions) {
    validate_session(session, corpus.header);
    if (!seen.insert(session.query_id).second) {
      throw ValidationError("duplicate query_id '" + session.query_id + "'");
    }
  }
}

std::vector<GroupSample> group_select(const SessionLog& session, std::size_t g,
                                      Rng& rng, std::size_t session_index) {
  if (g < 2) {
    throw ConfigError("group_select: g must be >= 2, got " + std::to_string(g));
  }
  std::vector<std::size_t> clicked;
  std::vector<std::size_t> non_clicked;
  for (std::size_t i = 0; i < session.docs.size(); ++i) {
    (session.docs[i].click ? clicked : non_clicked).push_back(i);
  }
  std::vector<GroupSample> groups;
  if (clicked.empty()) return groups;

  const std::size_t companions = std::min(g - 1, non_clicked.size());
  std::vector<std::size_t> pool(non_clicked.size());
  for (std::size_t c : clicked) {
    GroupSample sample;
    sample.session_index = session_index;
    sample.members.push_back(c);
    sample.clicked_slot = 0;
    // Partial Fisher-Yates: first `companions` entries of pool.
    std::copy(non_clicked.begin(), non_clicked.end(), pool.begin());
    for (std::size_t j = 0; j < companions; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng)]);
      sample.members.push_back(pool[j]);
    }
    groups.push_back(std::move(sample));
  }
  return groups;
}

}  // namespace ultr::data
