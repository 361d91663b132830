#include "latgen/latentspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "latgen/error.hpp"

namespace latgen {

Encoding BagOfWordsEncoder::encode(const TokenSeq& tokens) const {
  Encoding v(vocab_->size(), 0.0);
  for (const auto& t : tokens) v[static_cast<std::size_t>(vocab_->id(t))] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (double& x : v) x /= norm;
  return v;
}

double squared_distance(const Encoding& a, const Encoding& b) {
  if (a.size() != b.size()) throw ShapeError("encoding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::string to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::Sentence: return "sentence";
    case DecisionKind::PosSampled: return "pos-sampled";
    case DecisionKind::PosGenerated: return "pos-generated";
  }
  return "sentence";
}

DecisionKind parse_decision_kind(const std::string& s) {
  if (s == "sentence") return DecisionKind::Sentence;
  if (s == "pos-sampled") return DecisionKind::PosSampled;
  if (s == "pos-generated") return DecisionKind::PosGenerated;
  throw ConfigError("unknown latent kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// k-means

namespace {

std::size_t nearest(const Encoding& p, const std::vector<Encoding>& centroids, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = squared_distance(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<Encoding>& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (k == 0) throw ConfigError("k-means needs at least one cluster");
  const std::set<Encoding> distinct(points.begin(), points.end());
  if (distinct.size() < k)
    throw InsufficientPoints(std::to_string(k) + " clusters requested for " + std::to_string(distinct.size()) +
                             " distinct points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("k-means points differ in dimension");
    for (double x : p)
      if (!std::isfinite(x)) throw NumericalFault("non-finite encoding");
  }

  std::mt19937_64 rng(seed);
  KMeansResult res;
  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  res.centroids.push_back(points[first(rng)]);
  std::vector<double> d2(points.size());
  while (res.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest(points[i], res.centroids, &d2[i]);
      total += d2[i];
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double acc = 0.0;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc >= r) break;
    }
    res.centroids.push_back(points[pick]);
  }

  auto assign = [&](std::vector<std::size_t>& a) {
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d;
      a[i] = nearest(points[i], res.centroids, &d);
      sse += d;
    }
    res.sse_history.push_back(sse);
  };

  res.assignment.assign(points.size(), 0);
  assign(res.assignment);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<Encoding> sums(k, Encoding(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < dim; ++j) res.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    std::vector<std::size_t> next(points.size());
    assign(next);
    ++res.iterations;
    const bool fixpoint = next == res.assignment;
    res.assignment = std::move(next);
    if (fixpoint) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sentence candidates

SentenceCandidateSet build_sentence_candidates(const std::vector<TokenSeq>& responses, const SentenceEncoder& encoder,
                                               std::size_t clusters, std::size_t count, std::uint64_t seed,
                                               std::size_t max_iters) {
  if (clusters == 0 || count == 0) throw ConfigError("cluster and candidate counts must be positive");
  if (clusters > count) throw ConfigError("more clusters than candidates requested");
  std::vector<TokenSeq> distinct;
  std::set<TokenSeq> seen;
  for (const auto& r : responses)
    if (seen.insert(r).second) distinct.push_back(r);
  if (distinct.size() < count)
    throw InsufficientCandidates(std::to_string(count) + " sentence candidates requested from " +
                                 std::to_string(distinct.size()) + " distinct responses");

  std::vector<Encoding> enc;
  enc.reserve(distinct.size());
  for (const auto& r : distinct) enc.push_back(encoder.encode(r));
  KMeansResult km = kmeans(enc, clusters, max_iters, seed);

  // Members of each cluster sorted by distance to the centroid, then index.
  std::vector<std::vector<std::pair<double, std::size_t>>> members(clusters);
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const std::size_t c = km.assignment[i];
    members[c].emplace_back(squared_distance(enc[i], km.centroids[c]), i);
  }
  for (auto& m : members) std::sort(m.begin(), m.end());

  // Clusters by size (descending), ties by id.
  std::vector<std::size_t> by_size(clusters);
  std::iota(by_size.begin(), by_size.end(), 0);
  std::stable_sort(by_size.begin(), by_size.end(),
                   [&](std::size_t a, std::size_t b) { return members[a].size() > members[b].size(); });

  std::vector<std::size_t> quota(clusters, count / clusters);
  for (std::size_t r = 0; r < count % clusters; ++r) ++quota[by_size[r]];
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < clusters; ++c)
    if (quota[c] > members[c].size()) {
      deficit += quota[c] - members[c].size();
      quota[c] = members[c].size();
    }
  while (deficit > 0) {
    for (std::size_t c : by_size) {
      if (deficit == 0) break;
      if (quota[c] < members[c].size()) {
        ++quota[c];
        --deficit;
      }
    }
  }

  SentenceCandidateSet out;
  for (std::size_t c = 0; c < clusters; ++c)
    for (std::size_t j = 0; j < quota[c]; ++j) {
      const std::size_t i = members[c][j].second;
      out.entries.push_back(distinct[i]);
      out.encodings.push_back(enc[i]);
      out.cluster_of.push_back(c);
    }
  return out;
}

std::size_t nearest_sentence_label(const TokenSeq& response, const SentenceCandidateSet& cands,
                                   const SentenceEncoder& encoder) {
  if (cands.size() == 0) throw InsufficientCandidates("empty sentence candidate set");
  const Encoding e = encoder.encode(response);
  std::size_t best = 0;
  double best_d = squared_distance(e, cands.encodings[0]);
  for (std::size_t i = 1; i < cands.size(); ++i) {
    const double d = squared_distance(e, cands.encodings[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// POS candidates

double align_score(const TokenSeq& a, const TokenSeq& b, const AlignmentScoring& s) {
  if (a.empty() || b.empty()) throw EmptyInput("alignment of an empty sequence");
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j) * s.gap;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<double>(i) * s.gap;
    for (std::size_t j = 1; j <= m; ++j) {
      const double diag = prev[j - 1] + (a[i - 1] == b[j - 1] ? s.match : s.mismatch);
      cur[j] = std::max({diag, prev[j] + s.gap, cur[j - 1] + s.gap});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

PosCandidateSet build_pos_candidates(const Corpus& corpus, std::size_t count) {
  if (count == 0) throw ConfigError("POS candidate count must be positive");
  std::map<TokenSeq, std::pair<std::size_t, std::size_t>> stats;  // seq -> (freq, first occurrence)
  std::size_t order = 0;
  for (const auto& p : corpus.pairs)
    for (const auto& pos : p.response_pos) {
      auto [it, inserted] = stats.emplace(pos, std::make_pair(0, order));
      ++it->second.first;
      ++order;
    }
  if (stats.size() < count)
    throw InsufficientCandidates(std::to_string(count) + " POS candidates requested from " +
                                 std::to_string(stats.size()) + " distinct sequences");
  std::vector<std::pair<const TokenSeq*, std::pair<std::size_t, std::size_t>>> ranked;
  for (const auto& [seq, st] : stats) ranked.emplace_back(&seq, st);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  PosCandidateSet out;
  for (std::size_t i = 0; i < count; ++i) {
    out.entries.push_back(*ranked[i].first);
    out.frequency.push_back(ranked[i].second.first);
  }
  return out;
}

std::size_t nearest_pos_label(const TokenSeq& pos, const PosCandidateSet& cands, const AlignmentScoring& scoring) {
  if (cands.size() == 0) throw InsufficientCandidates("empty POS candidate set");
  std::size_t best = 0;
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double norm = static_cast<double>(std::max(pos.size(), cands.entries[i].size()));
    const double s = align_score(pos, cands.entries[i], scoring) / norm;
    if (s > best_s) {
      best_s = s;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Labeling

namespace {

template <class LabelFn>
std::vector<LabeledExample> label_all(const Corpus& corpus, std::size_t workers, LabelFn label) {
  std::vector<LabeledExample> out;
  for (std::size_t p = 0; p < corpus.pairs.size(); ++p)
    for (std::size_t r = 0; r < corpus.pairs[p].responses.size(); ++r) out.push_back({p, r, 0});
  // Each slot is written by exactly one worker, so results do not depend on
  // the worker count.
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i].label = label(out[i].pair, out[i].response);
  };
  workers = std::max<std::size_t>(1, std::min(workers, out.size()));
  if (workers == 1) {
    run(0, out.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (out.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(out.size(), b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
  }
  return out;
}

}  // namespace

std::vector<LabeledExample> label_sentences(const Corpus& corpus, const SentenceCandidateSet& cands,
                                            const SentenceEncoder& encoder, std::size_t workers) {
  return label_all(corpus, workers, [&](std::size_t p, std::size_t r) {
    return nearest_sentence_label(corpus.pairs[p].responses[r], cands, encoder);
  });
}

std::vector<LabeledExample> label_pos(const Corpus& corpus, const PosCandidateSet& cands, std::size_t workers) {
  return label_all(corpus, workers, [&](std::size_t p, std::size_t r) {
    return nearest_pos_label(corpus.pairs[p].response_pos[r], cands);
  });
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    if (out.back().value("idx", std::size_t{0}) != out.size() - 1)
      throw ParseError(lineno, "candidate indices must be consecutive from 0");
  }
  return out;
}

}  // namespace

void save_sentence_candidates(const SentenceCandidateSet& cands, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    nlohmann::json j;
    j["idx"] = i;
    j["tokens"] = cands.entries[i];
    j["cluster"] = cands.cluster_of[i];
    out << j.dump() << '\n';
  }
}

SentenceCandidateSet load_sentence_candidates(const std::filesystem::path& path, const SentenceEncoder& encoder) {
  SentenceCandidateSet c;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    if (!j.contains("tokens")) throw ParseError(lineno, "missing tokens");
    c.entries.push_back(j["tokens"].get<TokenSeq>());
    c.encodings.push_back(encoder.encode(c.entries.back()));
    c.cluster_of.push_back(j.value("cluster", std::size_t{0}));
  }
  return c;
}

void save_pos_candidates(const PosCandidateSet& cands, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    nlohmann::json j;
    j["idx"] = i;
    j["pos"] = cands.entries[i];
    j["freq"] = cands.frequency[i];
    out << j.dump() << '\n';
  }
}

PosCandidateSet load_pos_candidates(const std::filesystem::path& path) {
  PosCandidateSet c;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    if (!j.contains("pos")) throw ParseError(lineno, "missing pos");
    c.entries.push_back(j["pos"].get<TokenSeq>());
    c.frequency.push_back(j.value("freq", std::size_t{0}));
  }
  return c;
}

void save_labels(const std::vector<LabeledExample>& labels, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& l : labels) out << l.pair << '\t' << l.response << '\t' << l.label << '\n';
}

std::vector<LabeledExample> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    LabeledExample l;
    if (!(ss >> l.pair >> l.response >> l.label)) throw ParseError(lineno, "expected pair_id, response_idx, label");
    out.push_back(l);
  }
  return out;
}

}  // namespace latgen
