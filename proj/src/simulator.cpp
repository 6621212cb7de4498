#include "ultr/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ultr/eval.hpp"

namespace ultr::sim {

SimConfig::SimConfig() {
  obs_profile = inverse_rank_profile(docs_per_query);
  perception_table =
      spread_perception_table(header.mtype_vocab, header.serph_vocab);
}

std::vector<double> inverse_rank_profile(std::size_t n) {
  std::vector<double> profile(n);
  for (std::size_t k = 0; k < n; ++k) {
    profile[k] = 1.0 / static_cast<double>(k + 1);
  }
  return profile;
}

Matrix flat_perception_table(std::size_t mtype_vocab, std::size_t serph_vocab) {
  return Matrix(mtype_vocab, serph_vocab, 1.0);
}

namespace {

// Geometric sweep over [lo, hi]; a single-entry vocabulary gets the
// geometric midpoint.
std::vector<double> geometric_factors(std::size_t vocab, double lo, double hi) {
  std::vector<double> f(vocab, std::sqrt(lo * hi));
  if (vocab < 2) return f;
  for (std::size_t i = 0; i < vocab; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(vocab - 1);
    f[i] = lo * std::pow(hi / lo, t);
  }
  return f;
}

}  // namespace

Matrix spread_perception_table(std::size_t mtype_vocab,
                               std::size_t serph_vocab) {
  // Product grid spanning [0.25, 2.0]. The top corner alone reaches 2.0;
  // keeping most cells at or below 1 limits how often clamp(rho*m, 0, 1)
  // saturates, which would hand out deterministic clicks.
  const auto a = geometric_factors(mtype_vocab, 0.5, std::pow(2.0, 0.25));
  const auto b = geometric_factors(serph_vocab, 0.5, std::pow(2.0, 0.75));
  Matrix table(mtype_vocab, serph_vocab);
  for (std::size_t m = 0; m < mtype_vocab; ++m) {
    for (std::size_t s = 0; s < serph_vocab; ++s) {
      table(m, s) = a[m] * b[s];
    }
  }
  return table;
}

void validate(const SimConfig& config) {
  if (config.num_queries < 1) throw ConfigError("sim: queries must be >= 1");
  if (config.docs_per_query < 1) {
    throw ConfigError("sim: docs_per_query must be >= 1");
  }
  if (config.docs_per_query > config.header.max_positions) {
    throw ConfigError("sim: docs_per_query exceeds n_max");
  }
  if (config.obs_profile.size() != config.docs_per_query) {
    throw ConfigError("sim: obs_profile length must equal docs_per_query");
  }
  double prev = 1.0 + 1e-15;
  for (double p : config.obs_profile) {
    if (!(p > 0.0) || p > 1.0) {
      throw ConfigError("sim: obs_profile entries must be in (0,1]");
    }
    if (p > prev) {
      throw ConfigError("sim: obs_profile must be non-increasing");
    }
    prev = p;
  }
  if (config.perception_table.rows != config.header.mtype_vocab ||
      config.perception_table.cols != config.header.serph_vocab) {
    throw ConfigError("sim: perception_table must be V_m x V_s");
  }
  for (double v : config.perception_table.data) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw ConfigError("sim: perception multipliers must be finite and > 0");
    }
  }
  if (!(config.relevance_noise >= 0.0)) {
    throw ConfigError("sim: relevance_noise must be >= 0");
  }
  if (!(config.slipoff_rate > 0.0)) {
    throw ConfigError("sim: slipoff_rate must be > 0");
  }
  if (config.annotate_fraction < 0.0 || config.annotate_fraction > 1.0) {
    throw ConfigError("sim: annotate_fraction must be in [0,1]");
  }
}

ClickDraw draw_click(Rng& rng, double obs_prob, double perceived_prob,
                     double slipoff_mean) {
  ClickDraw draw;
  std::bernoulli_distribution observe(obs_prob);
  std::bernoulli_distribution perceive(perceived_prob);
  const bool observed = observe(rng);
  const bool perceived = perceive(rng);
  if (observed && perceived) {
    draw.click = 1;
    std::poisson_distribution<int> slip(std::max(slipoff_mean, 1e-12));
    draw.slipoff_count = slip(rng);
  }
  return draw;
}

void GroundTruth::add(TruthRecord rec) {
  index_.emplace(rec.query_id + '\t' + rec.doc_id, records_.size());
  records_.push_back(std::move(rec));
}

const TruthRecord& GroundTruth::at(const std::string& query_id,
                                   const std::string& doc_id) const {
  auto it = index_.find(query_id + '\t' + doc_id);
  if (it == index_.end()) {
    throw KeyError("ground truth: unknown (" + query_id + ", " + doc_id + ")");
  }
  return records_[it->second];
}

bool GroundTruth::contains(const std::string& query_id,
                           const std::string& doc_id) const {
  return index_.contains(query_id + '\t' + doc_id);
}

void write_truth(const GroundTruth& truth, std::ostream& out) {
  for (const auto& rec : truth.records()) {
    out << rec.query_id << '\t' << rec.doc_id << '\t'
        << data::format_double9(rec.rho) << '\t' << rec.label << '\t'
        << data::format_double9(rec.obs_prob) << '\t'
        << data::format_double9(rec.perceived_prob) << '\n';
  }
}

GroundTruth parse_truth(std::istream& in) {
  GroundTruth truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TruthRecord rec;
    if (!(ls >> rec.query_id >> rec.doc_id >> rec.rho >> rec.label >>
          rec.obs_prob >> rec.perceived_prob)) {
      throw ParseError("truth line " + std::to_string(line_no) + ": malformed");
    }
    truth.add(std::move(rec));
  }
  return truth;
}

namespace {

// Feature generator: a fixed corpus-wide affine map of rho plus Gaussian
// noise, quantized through the 9-significant-digit wire format so written
// corpora parse back bit-identically.
double feature_value(std::size_t dim_index, double rho, double noise) {
  const double slope = (dim_index % 2 == 0 ? 1.0 : -1.0) *
                       (0.5 + static_cast<double>(dim_index) * 0.05);
  return slope * rho + noise;
}

double quantize9(double v) {
  return std::strtod(data::format_double9(v).c_str(), nullptr);
}

// Production-ranking noise. The deployed ranker the logs come from is a
// decent one: positions correlate strongly with true relevance, which is
// precisely what makes position a confounder worth debiasing.
constexpr double kProductionNoise = 0.1;

std::string padded_index(std::size_t value) {
  std::string s = std::to_string(value);
  if (s.size() < 6) s.insert(0, 6 - s.size(), '0');
  return s;
}

}  // namespace

SimOutput gen_corpus(const SimConfig& config) {
  validate(config);
  SimOutput out;
  out.corpus.header = config.header;
  out.corpus.header.max_positions = config.header.max_positions;

  const std::size_t n = config.docs_per_query;
  const std::size_t annotated =
      static_cast<std::size_t>(std::llround(config.annotate_fraction *
                                            static_cast<double>(config.num_queries)));
  const std::size_t annotate_from = config.num_queries - annotated;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t qi = 0; qi < config.num_queries; ++qi) {
    Rng rng(derive_seed(config.seed, qi));
    const std::string query_id = "q" + padded_index(qi);

    std::vector<double> rho(n);
    std::vector<int> mtype(n), serph(n);
    std::vector<double> production(n);
    std::uniform_int_distribution<int> mtype_pick(
        0, static_cast<int>(config.header.mtype_vocab) - 1);
    std::uniform_int_distribution<int> serph_pick(
        0, static_cast<int>(config.header.serph_vocab) - 1);
    for (std::size_t d = 0; d < n; ++d) {
      rho[d] = unit(rng);
      mtype[d] = mtype_pick(rng);
      serph[d] = serph_pick(rng);
      production[d] = rho[d] + kProductionNoise * gauss(rng);
    }

    // Rank by the noisy production score to fix positions.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return production[a] > production[b];
    });

    data::SessionLog session;
    session.query_id = query_id;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t d = order[k];
      data::DocumentRecord doc;
      doc.doc_id = "d" + padded_index(qi) + "_" + std::to_string(d);
      doc.position = static_cast<int>(k + 1);
      doc.bias.position_id = doc.position;
      doc.bias.mtype_id = mtype[d];
      doc.bias.serph_bucket = serph[d];
      for (std::size_t f = 0; f < config.header.feature_dim; ++f) {
        doc.features.values.push_back(quantize9(
            feature_value(f, rho[d], config.relevance_noise * gauss(rng))));
      }

      const double mult = config.perception_table(mtype[d], serph[d]);
      const double perceived = std::clamp(rho[d] * mult, 0.0, 1.0);
      const double obs = config.obs_profile[k];
      // Post-click engagement reflects how the document's true relevance
      // compares with what its presentation promised: misperceived clicks
      // (perceived >> rho) slip off quickly. With no perception distortion
      // the ratio is 1 and slip-offs carry no relevance signal.
      const double engagement =
          perceived > 0.0 ? rho[d] / perceived : 1.0;
      ClickDraw draw =
          draw_click(rng, obs, perceived, config.slipoff_rate * engagement);
      doc.click = draw.click;
      if (draw.click) {
        const int cap = static_cast<int>(config.header.slipoff_vocab) - 2;
        doc.bias.slipoff_bucket = 1 + std::min(draw.slipoff_count, cap);
      }

      TruthRecord rec;
      rec.query_id = query_id;
      rec.doc_id = doc.doc_id;
      rec.rho = rho[d];
      rec.label = std::min(4, static_cast<int>(rho[d] * 5.0));
      rec.obs_prob = obs;
      rec.perceived_prob = perceived;
      out.truth.add(std::move(rec));

      if (qi >= annotate_from) {
        out.annotations.push_back({query_id, doc.doc_id,
                                   std::min(4, static_cast<int>(rho[d] * 5.0))});
      }
      session.docs.push_back(std::move(doc));
    }
    out.corpus.sessions.push_back(std::move(session));
  }
  return out;
}

OracleDcg oracle_dcg(const GroundTruth& truth, const std::string& query_id,
                     const std::vector<std::string>& ranked_doc_ids,
                     std::size_t depth) {
  std::vector<int> labels;
  labels.reserve(ranked_doc_ids.size());
  for (const auto& doc_id : ranked_doc_ids) {
    labels.push_back(truth.at(query_id, doc_id).label);
  }
  OracleDcg result;
  result.dcg = eval::dcg_at_n(labels, depth);

  // Ceiling: this query's documents sorted by true relevance.
  std::vector<const TruthRecord*> query_records;
  for (const auto& rec : truth.records()) {
    if (rec.query_id == query_id) query_records.push_back(&rec);
  }
  std::sort(query_records.begin(), query_records.end(),
            [](const TruthRecord* a, const TruthRecord* b) {
              if (a->rho != b->rho) return a->rho > b->rho;
              return a->doc_id < b->doc_id;
            });
  std::vector<int> ideal_labels;
  ideal_labels.reserve(query_records.size());
  for (const auto* rec : query_records) ideal_labels.push_back(rec->label);
  result.ideal = eval::dcg_at_n(ideal_labels, depth);
  return result;
}

SimConfig parse_sim_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto pos = line.find('=');
    if (pos == std::string::npos) {
      throw ConfigError("sim config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    kv[line.substr(0, pos)] = line.substr(pos + 1);
  }
  return sim_config_from_kv(kv);
}

namespace {

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> values;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("sim: bad ") + what + " entry '" + item +
                        "'");
    }
  }
  return values;
}

}  // namespace

SimConfig sim_config_from_kv(const std::map<std::string, std::string>& kv) {
  SimConfig config;
  std::string perception = "spread";
  std::string obs = "inverse_rank";
  for (const auto& [key, value] : kv) {
    try {
      if (key == "queries") {
        config.num_queries = std::stoull(value);
      } else if (key == "docs_per_query") {
        config.docs_per_query = std::stoull(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "obs_profile") {
        obs = value;
      } else if (key == "perception") {
        perception = value;
      } else if (key == "relevance_noise") {
        config.relevance_noise = std::stod(value);
      } else if (key == "slipoff_rate") {
        config.slipoff_rate = std::stod(value);
      } else if (key == "annotate_fraction") {
        config.annotate_fraction = std::stod(value);
      } else if (key == "feature_dim") {
        config.header.feature_dim = std::stoull(value);
      } else if (key == "mtype_vocab") {
        config.header.mtype_vocab = std::stoull(value);
      } else if (key == "serph_vocab") {
        config.header.serph_vocab = std::stoull(value);
      } else if (key == "slipoff_vocab") {
        config.header.slipoff_vocab = std::stoull(value);
      } else {
        throw ConfigError("sim: unknown config key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("sim: bad value for key '" + key + "': '" + value +
                        "'");
    }
  }
  config.header.max_positions = config.docs_per_query;

  if (obs == "inverse_rank") {
    config.obs_profile = inverse_rank_profile(config.docs_per_query);
  } else {
    config.obs_profile = parse_double_list(obs, "obs_profile");
  }

  if (perception == "spread") {
    config.perception_table = spread_perception_table(
        config.header.mtype_vocab, config.header.serph_vocab);
  } else if (perception == "none") {
    config.perception_table = flat_perception_table(config.header.mtype_vocab,
                                                    config.header.serph_vocab);
  } else {
    auto values = parse_double_list(perception, "perception");
    const std::size_t want =
        config.header.mtype_vocab * config.header.serph_vocab;
    if (values.size() != want) {
      throw ConfigError("sim: perception list needs V_m*V_s = " +
                        std::to_string(want) + " entries");
    }
    config.perception_table =
        Matrix(config.header.mtype_vocab, config.header.serph_vocab);
    config.perception_table.data = std::move(values);
  }
  return config;
}

}  // namespace ultr::sim
