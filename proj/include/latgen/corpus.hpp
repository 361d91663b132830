#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace latgen {

using TokenSeq = std::vector<std::string>;
using IdSeq = std::vector<int>;

enum class TokenizeScheme { Whitespace, Char };

TokenizeScheme parse_scheme(std::string_view name);

// Whitespace scheme splits on runs of ASCII whitespace. Char scheme yields one
// token per UTF-8 code point and drops whitespace. Throws EmptyInput when
// nothing remains after trimming.
TokenSeq tokenize(std::string_view text, TokenizeScheme scheme);

std::string join(const TokenSeq& tokens, std::string_view sep = " ");

/// Token inventory with the four reserved ids PAD, BOS, EOS, UNK at the front.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  /// Frequency-ranked vocabulary; ties broken lexicographically. `max_size`
  /// counts the specials and must exceed their number.
  static Vocabulary build(const std::vector<TokenSeq>& stream, std::size_t max_size,
                          std::size_t min_freq);
  /// Specials followed by `tokens` in the given order.
  static Vocabulary from_tokens(const TokenSeq& tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  const TokenSeq& tokens() const { return tokens_; }

  struct Encoded {
    IdSeq ids;
    TokenSeq oov;  // distinct OOV tokens, first-occurrence order
  };
  Encoded encode(const TokenSeq& tokens) const;
  TokenSeq decode(const IdSeq& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);

  TokenSeq tokens_;
  std::unordered_map<std::string, int> index_;
};

class PosTagSet {
 public:
  static constexpr const char* kFallbackTag = "x";

  PosTagSet() = default;
  /// Tags are deduplicated and sorted; the fallback tag is always included.
  explicit PosTagSet(const TokenSeq& tags);

  static PosTagSet load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tags_.size(); }
  bool contains(const std::string& tag) const { return index_.count(tag) != 0; }
  int id(const std::string& tag) const;  // throws TagsetViolation
  const std::string& tag(int id) const { return tags_.at(static_cast<std::size_t>(id)); }
  const TokenSeq& tags() const { return tags_; }

  bool operator==(const PosTagSet& other) const { return tags_ == other.tags_; }

 private:
  TokenSeq tags_;
  std::map<std::string, int> index_;
};

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual TokenSeq tag(const TokenSeq& tokens) const = 0;
};

// Deterministic word->tag lookup with a fallback tag for unknown words.
class LexiconTagger final : public PosTagger {
 public:
  explicit LexiconTagger(std::map<std::string, std::string> lexicon,
                         std::string fallback = PosTagSet::kFallbackTag)
      : lexicon_(std::move(lexicon)), fallback_(std::move(fallback)) {}

  TokenSeq tag(const TokenSeq& tokens) const override;
  const std::map<std::string, std::string>& lexicon() const { return lexicon_; }

 private:
  std::map<std::string, std::string> lexicon_;
  std::string fallback_;
};

/// Runs `tagger` and checks its output against the tag set.
TokenSeq pos_tag(const PosTagger& tagger, const PosTagSet& tagset, const TokenSeq& tokens);

struct DialoguePair {
  TokenSeq post;
  std::vector<TokenSeq> responses;
  std::vector<TokenSeq> response_pos;  // parallel to responses
};

enum class Split { Train, Valid, Test };

struct Corpus {
  std::vector<DialoguePair> pairs;
  Vocabulary vocabulary;
  PosTagSet tagset;
  Split split = Split::Train;

  std::size_t num_responses() const;
  /// Majority-tag lexicon built from the tagged responses.
  LexiconTagger make_tagger() const;
};

struct CorpusOptions {
  TokenizeScheme scheme = TokenizeScheme::Whitespace;
  std::size_t vocab_max_size = 50000;
  std::size_t vocab_min_freq = 1;
  // Used for records without "response_pos"; when null, a lexicon tagger is
  // derived from the tagged records of the same file.
  const PosTagger* tagger = nullptr;
  // Fixed vocabulary / tag set (e.g. from a training run); built when absent.
  const Vocabulary* vocabulary = nullptr;
  const PosTagSet* tagset = nullptr;
};

/// Reads JSON Lines records {"post", "response", "response_pos"?}; records that
/// share a post are merged into one DialoguePair.
Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options = {});

/// Writes one record per (post, response), grouped order.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace latgen
