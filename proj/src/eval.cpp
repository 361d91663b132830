#include "latgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "latgen/error.hpp"

namespace latgen {

namespace {

using NgramCounts = std::map<TokenSeq, std::size_t>;

NgramCounts ngrams(const TokenSeq& s, int n) {
  NgramCounts out;
  const auto k = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + k <= s.size(); ++i) ++out[TokenSeq(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + k))];
  return out;
}

}  // namespace

double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<std::vector<TokenSeq>>& references, int n,
            bool smoothing) {
  if (n < 1 || n > 4) throw ConfigError("BLEU order must be in 1..4");
  if (hypotheses.empty()) throw EmptyInput("BLEU over an empty corpus");
  if (hypotheses.size() != references.size()) throw AlignmentError("hypothesis and reference counts differ");

  std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& refs = references[s];
    if (refs.empty()) throw EmptyBag("pair without references");
    hyp_len += static_cast<double>(hyp.size());
    std::size_t closest = refs[0].size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
      if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
    }
    ref_len += static_cast<double>(closest);
    for (int k = 1; k <= n; ++k) {
      const NgramCounts h = ngrams(hyp, k);
      NgramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngrams(r, k)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : h) {
        auto it = max_ref.find(g);
        matched[static_cast<std::size_t>(k - 1)] += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
        total[static_cast<std::size_t>(k - 1)] += static_cast<double>(c);
      }
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    double m = matched[static_cast<std::size_t>(k)], t = total[static_cast<std::size_t>(k)];
    if (smoothing && k > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / n);
}

double ngram_overlap(const TokenSeq& response, const TokenSeq& latent, int n) {
  if (n < 1) throw ConfigError("n-gram order must be positive");
  if (response.size() < static_cast<std::size_t>(n))
    throw Undefined("response shorter than " + std::to_string(n) + " tokens");
  const NgramCounts r = ngrams(response, n);
  const NgramCounts z = ngrams(latent, n);
  std::size_t shared = 0;
  for (const auto& [g, c] : r) shared += z.count(g);
  return 100.0 * static_cast<double>(shared) / static_cast<double>(r.size());
}

std::size_t levenshtein(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double normalized_edit_distance(const TokenSeq& response_pos, const TokenSeq& selected_pos) {
  if (selected_pos.empty()) throw EmptyInput("empty selected POS sequence");
  return static_cast<double>(levenshtein(response_pos, selected_pos)) / static_cast<double>(selected_pos.size());
}

void save_generations(const std::vector<GenerationRecord>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& r : records)
    out << r.pair_id << '\t' << to_string(r.kind) << '\t' << join(r.latent) << '\t' << join(r.response) << '\n';
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  auto split_tokens = [](const std::string& s) {
    TokenSeq t;
    std::istringstream ss(s);
    for (std::string w; ss >> w;) t.push_back(w);
    return t;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 4) throw ParseError(lineno, "expected 4 tab-separated fields");
    GenerationRecord r;
    try {
      r.pair_id = std::stoul(fields[0]);
      r.kind = parse_decision_kind(fields[1]);
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
    r.latent = split_tokens(fields[2]);
    r.response = split_tokens(fields[3]);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["bleu"] = bleu;
  j["overlap"] = overlap ? nlohmann::json(*overlap) : nlohmann::json(nullptr);
  j["edit_distance"] = edit_distance ? nlohmann::json(*edit_distance) : nlohmann::json(nullptr);
  j["n"] = n;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.bleu = j.at("bleu").get<std::array<double, 4>>();
  if (!j.at("overlap").is_null()) r.overlap = j["overlap"].get<std::array<double, 4>>();
  if (!j.at("edit_distance").is_null()) r.edit_distance = j["edit_distance"].get<double>();
  r.n = j.at("n").get<std::size_t>();
  return r;
}

EvalReport evaluate(const Corpus& corpus, const std::vector<GenerationRecord>& records, const EvalOptions& opts) {
  if (records.empty()) throw EmptyInput("no generations to evaluate");
  std::set<std::size_t> seen;
  std::vector<TokenSeq> hyps;
  std::vector<std::vector<TokenSeq>> refs;
  for (const auto& r : records) {
    if (r.pair_id >= corpus.pairs.size())
      throw AlignmentError("generation for unknown pair id " + std::to_string(r.pair_id));
    if (!seen.insert(r.pair_id).second) throw AlignmentError("repeated pair id " + std::to_string(r.pair_id));
    hyps.push_back(r.response);
    refs.push_back(corpus.pairs[r.pair_id].responses);
  }

  EvalReport rep;
  rep.n = records.size();
  for (int k = 1; k <= 4; ++k) rep.bleu[static_cast<std::size_t>(k - 1)] = bleu(hyps, refs, k, opts.smoothing);

  // Overlap: mean over the sentence-latent records where the order is defined.
  std::array<double, 4> ov_sum{};
  std::array<std::size_t, 4> ov_n{};
  bool any_sentence = false;
  double ed_sum = 0.0;
  std::size_t ed_n = 0;
  const LexiconTagger fallback = corpus.make_tagger();
  const PosTagger& tagger = opts.tagger ? *opts.tagger : static_cast<const PosTagger&>(fallback);
  for (const auto& r : records) {
    if (r.kind == DecisionKind::Sentence) {
      any_sentence = true;
      for (int k = 1; k <= 4; ++k) {
        if (r.response.size() < static_cast<std::size_t>(k)) continue;
        ov_sum[static_cast<std::size_t>(k - 1)] += ngram_overlap(r.response, r.latent, k);
        ++ov_n[static_cast<std::size_t>(k - 1)];
      }
    } else {
      if (r.latent.empty()) continue;
      const TokenSeq pos = r.response.empty() ? TokenSeq{} : pos_tag(tagger, corpus.tagset, r.response);
      ed_sum += normalized_edit_distance(pos, r.latent);
      ++ed_n;
    }
  }
  if (any_sentence) {
    std::array<double, 4> ov{};
    for (std::size_t k = 0; k < 4; ++k) ov[k] = ov_n[k] ? ov_sum[k] / static_cast<double>(ov_n[k]) : 0.0;
    rep.overlap = ov;
  }
  if (ed_n > 0) rep.edit_distance = ed_sum / static_cast<double>(ed_n);
  return rep;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  try {
    return EvalReport::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
}

void save_edit_distance_curve(const std::vector<double>& per_epoch, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "epoch,mean_edit_distance\n";
  for (std::size_t e = 0; e < per_epoch.size(); ++e) out << e << ',' << nlohmann::json(per_epoch[e]).dump() << '\n';
}

}  // namespace latgen
