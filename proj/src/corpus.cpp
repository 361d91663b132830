#include "latgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "latgen/error.hpp"

namespace latgen {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte, keep as-is
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

TokenizeScheme parse_scheme(std::string_view name) {
  if (name == "whitespace" || name == "word") return TokenizeScheme::Whitespace;
  if (name == "char") return TokenizeScheme::Char;
  throw ConfigError("unknown tokenization scheme '" + std::string(name) + "'");
}

TokenSeq tokenize(std::string_view text, TokenizeScheme scheme) {
  TokenSeq out;
  if (scheme == TokenizeScheme::Whitespace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      if (j > i) out.emplace_back(text.substr(i, j - i));
      i = j;
    }
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      if (is_space(text[i])) {
        ++i;
        continue;
      }
      std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  if (out.empty()) throw EmptyInput("text is empty after normalization");
  return out;
}

std::string join(const TokenSeq& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<TokenSeq>& stream, std::size_t max_size,
                             std::size_t min_freq) {
  if (max_size <= kNumSpecials) throw ConfigError("vocabulary max_size must exceed the special count");
  Vocabulary v;
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : stream)
    for (const auto& tok : seq) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, c] : counts)
    if (c >= min_freq && !v.contains(tok)) ranked.emplace_back(tok, c);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, c] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const TokenSeq& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.size() < kNumSpecials) throw ParseError(lines.size(), "vocabulary file lacks specials");
  Vocabulary v;
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    if (lines[i] != v.tokens_[i]) throw ParseError(i + 1, "expected special token " + v.tokens_[i]);
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
    if (lines[i].empty()) throw ParseError(i + 1, "empty token");
    v.add(lines[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) return tokens_[kUnk];
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary::Encoded Vocabulary::encode(const TokenSeq& tokens) const {
  Encoded e;
  e.ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = index_.find(t);
    if (it != index_.end()) {
      e.ids.push_back(it->second);
    } else {
      e.ids.push_back(kUnk);
      if (std::find(e.oov.begin(), e.oov.end(), t) == e.oov.end()) e.oov.push_back(t);
    }
  }
  return e;
}

TokenSeq Vocabulary::decode(const IdSeq& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

// ---------------------------------------------------------------------------
// Tag set and tagging

PosTagSet::PosTagSet(const TokenSeq& tags) {
  TokenSeq sorted = tags;
  sorted.emplace_back(kFallbackTag);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& t : sorted) {
    if (t.empty()) continue;
    index_.emplace(t, static_cast<int>(tags_.size()));
    tags_.push_back(t);
  }
}

PosTagSet PosTagSet::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  TokenSeq tags;
  for (auto& l : lines)
    if (!l.empty()) tags.push_back(l);
  return PosTagSet(tags);
}

void PosTagSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  for (const auto& t : tags_) out << t << '\n';
}

int PosTagSet::id(const std::string& tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) throw TagsetViolation("tag '" + tag + "' not in tag set");
  return it->second;
}

TokenSeq LexiconTagger::tag(const TokenSeq& tokens) const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = lexicon_.find(t);
    out.push_back(it == lexicon_.end() ? fallback_ : it->second);
  }
  return out;
}

TokenSeq pos_tag(const PosTagger& tagger, const PosTagSet& tagset, const TokenSeq& tokens) {
  if (tokens.empty()) throw EmptyInput("cannot tag an empty sequence");
  TokenSeq tags = tagger.tag(tokens);
  if (tags.size() != tokens.size())
    throw LengthViolation("tagger returned " + std::to_string(tags.size()) + " tags for " +
                          std::to_string(tokens.size()) + " tokens");
  for (const auto& t : tags)
    if (!tagset.contains(t)) throw TagsetViolation("tagger emitted unknown tag '" + t + "'");
  return tags;
}

// ---------------------------------------------------------------------------
// Corpus

std::size_t Corpus::num_responses() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.responses.size();
  return n;
}

namespace {

LexiconTagger majority_lexicon(const std::vector<std::pair<const TokenSeq*, const TokenSeq*>>& tagged) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (auto [toks, tags] : tagged)
    for (std::size_t i = 0; i < toks->size(); ++i) ++counts[(*toks)[i]][(*tags)[i]];
  std::map<std::string, std::string> lex;
  for (const auto& [word, per_tag] : counts) {
    const std::string* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [tag, c] : per_tag)
      if (c > best_count) {
        best = &tag;
        best_count = c;
      }
    lex.emplace(word, *best);
  }
  return LexiconTagger(std::move(lex));
}

}  // namespace

LexiconTagger Corpus::make_tagger() const {
  std::vector<std::pair<const TokenSeq*, const TokenSeq*>> tagged;
  for (const auto& p : pairs)
    for (std::size_t i = 0; i < p.responses.size(); ++i)
      tagged.emplace_back(&p.responses[i], &p.response_pos[i]);
  return majority_lexicon(tagged);
}

Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options) {
  if (!std::filesystem::exists(path)) throw ParseError(0, "corpus file not found: " + path.string());
  auto lines = read_lines(path);

  struct Record {
    std::size_t line;
    TokenSeq post, response, pos;
  };
  std::vector<Record> records;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::size_t lineno = i + 1;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record is not an object");
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name) || !j[name].is_string()) throw ParseError(lineno, std::string("missing string field '") + name + "'");
      return j[name].get<std::string>();
    };
    Record r;
    r.line = lineno;
    try {
      r.post = tokenize(field("post"), options.scheme);
      r.response = tokenize(field("response"), options.scheme);
      if (j.contains("response_pos") && !j["response_pos"].is_null()) {
        if (!j["response_pos"].is_string()) throw ParseError(lineno, "response_pos must be a string");
        r.pos = tokenize(j["response_pos"].get<std::string>(), TokenizeScheme::Whitespace);
        if (r.pos.size() != r.response.size())
          throw ParseError(lineno, "response_pos length " + std::to_string(r.pos.size()) +
                                       " != response length " + std::to_string(r.response.size()));
      }
    } catch (const EmptyInput& e) {
      throw ParseError(lineno, e.what());
    }
    records.push_back(std::move(r));
  }

  // Fill in missing tags.
  std::unique_ptr<LexiconTagger> derived;
  const PosTagger* tagger = options.tagger;
  if (!tagger) {
    std::vector<std::pair<const TokenSeq*, const TokenSeq*>> tagged;
    for (const auto& r : records)
      if (!r.pos.empty()) tagged.emplace_back(&r.response, &r.pos);
    derived = std::make_unique<LexiconTagger>(majority_lexicon(tagged));
    tagger = derived.get();
  }
  for (auto& r : records)
    if (r.pos.empty()) r.pos = tagger->tag(r.response);

  Corpus corpus;
  if (options.tagset) {
    corpus.tagset = *options.tagset;
  } else {
    TokenSeq all_tags;
    for (const auto& r : records) all_tags.insert(all_tags.end(), r.pos.begin(), r.pos.end());
    corpus.tagset = PosTagSet(all_tags);
  }
  for (const auto& r : records)
    for (const auto& t : r.pos)
      if (!corpus.tagset.contains(t)) throw ParseError(r.line, "tag '" + t + "' not in tag set");

  std::map<TokenSeq, std::size_t> group;
  for (auto& r : records) {
    auto [it, inserted] = group.emplace(r.post, corpus.pairs.size());
    if (inserted) corpus.pairs.push_back(DialoguePair{r.post, {}, {}});
    auto& pair = corpus.pairs[it->second];
    pair.responses.push_back(std::move(r.response));
    pair.response_pos.push_back(std::move(r.pos));
  }

  if (options.vocabulary) {
    corpus.vocabulary = *options.vocabulary;
  } else {
    std::vector<TokenSeq> stream;
    for (const auto& p : corpus.pairs) {
      stream.push_back(p.post);
      for (const auto& r : p.responses) stream.push_back(r);
    }
    corpus.vocabulary = Vocabulary::build(stream, options.vocab_max_size, options.vocab_min_freq);
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& p : corpus.pairs)
    for (std::size_t i = 0; i < p.responses.size(); ++i) {
      nlohmann::json j;
      j["post"] = join(p.post);
      j["response"] = join(p.responses[i]);
      j["response_pos"] = join(p.response_pos[i]);
      out << j.dump() << '\n';
    }
}

}  // namespace latgen
