#include "latgen/corpus.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "latgen/error.hpp"

namespace latgen {
namespace {

namespace fs = std::filesystem;

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("latgen_corpus_test_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

TEST(Tokenize, Whitespace) {
  EXPECT_EQ(tokenize("a b  c", TokenizeScheme::Whitespace), (TokenSeq{"a", "b", "c"}));
  EXPECT_EQ(tokenize("  lead\ttrail \n", TokenizeScheme::Whitespace), (TokenSeq{"lead", "trail"}));
}

TEST(Tokenize, Char) {
  EXPECT_EQ(tokenize("ab", TokenizeScheme::Char), (TokenSeq{"a", "b"}));
  // UTF-8 code points stay whole.
  EXPECT_EQ(tokenize("你好 a", TokenizeScheme::Char), (TokenSeq{"你", "好", "a"}));
}

TEST(Tokenize, EmptyAfterTrim) {
  EXPECT_THROW(tokenize("  ", TokenizeScheme::Whitespace), EmptyInput);
  EXPECT_THROW(tokenize("", TokenizeScheme::Char), EmptyInput);
}

TEST(Tokenize, JoinReproducesNormalizedInput) {
  EXPECT_EQ(join(tokenize(" x  y z ", TokenizeScheme::Whitespace)), "x y z");
  EXPECT_EQ(join(tokenize("xyz", TokenizeScheme::Char), ""), "xyz");
}

TEST(Vocabulary, SpecialsFirstAndDistinct) {
  Vocabulary v;
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id("<pad>"), Vocabulary::kPad);
  EXPECT_EQ(v.id("<bos>"), Vocabulary::kBos);
  EXPECT_EQ(v.id("<eos>"), Vocabulary::kEos);
  EXPECT_EQ(v.id("<unk>"), Vocabulary::kUnk);
}

TEST(Vocabulary, FrequencyOrder) {
  auto v = Vocabulary::build({{"a", "a", "b"}}, 6, 1);
  EXPECT_EQ(v.tokens(), (TokenSeq{"<pad>", "<bos>", "<eos>", "<unk>", "a", "b"}));
}

TEST(Vocabulary, MinFreqAndMaxSize) {
  auto v = Vocabulary::build({{"a", "a", "b"}}, 5, 2);
  EXPECT_EQ(v.tokens(), (TokenSeq{"<pad>", "<bos>", "<eos>", "<unk>", "a"}));
  auto capped = Vocabulary::build({{"c", "b", "a", "c"}}, 5, 1);
  EXPECT_EQ(capped.tokens().back(), "c");
  EXPECT_EQ(capped.size(), 5u);
}

TEST(Vocabulary, LexicographicTieBreak) {
  auto v = Vocabulary::build({{"z", "m", "a"}}, 10, 1);
  EXPECT_EQ(v.tokens(), (TokenSeq{"<pad>", "<bos>", "<eos>", "<unk>", "a", "m", "z"}));
}

TEST(Vocabulary, EmptyStreamGivesSpecialsOnly) {
  EXPECT_EQ(Vocabulary::build({}, 5, 1).size(), 4u);
  EXPECT_THROW(Vocabulary::build({}, 4, 1), ConfigError);
}

TEST(Vocabulary, EncodeFoldsOov) {
  auto v = Vocabulary::from_tokens({"a", "b"});
  auto e = v.encode({"a", "x", "b", "x"});
  EXPECT_EQ(e.ids, (IdSeq{v.id("a"), Vocabulary::kUnk, v.id("b"), Vocabulary::kUnk}));
  EXPECT_EQ(e.oov, (TokenSeq{"x"}));
  EXPECT_TRUE(v.encode({"a", "b"}).oov.empty());
  auto empty = Vocabulary().encode({"x", "y"});
  EXPECT_EQ(empty.ids, (IdSeq{Vocabulary::kUnk, Vocabulary::kUnk}));
  EXPECT_EQ(empty.oov, (TokenSeq{"x", "y"}));
}

TEST(Vocabulary, RoundTripProperty) {
  std::mt19937 rng(11);
  const TokenSeq pool = {"a", "b", "c", "d", "e", "f", "g"};
  auto v = Vocabulary::from_tokens({"a", "c", "e"});
  for (int trial = 0; trial < 200; ++trial) {
    TokenSeq seq(rng() % 12 + 1);
    for (auto& t : seq) t = pool[rng() % pool.size()];
    TokenSeq expected = seq;
    for (auto& t : expected)
      if (!v.contains(t)) t = "<unk>";
    EXPECT_EQ(v.decode(v.encode(seq).ids), expected);
  }
  for (std::size_t id = 0; id < v.size(); ++id) EXPECT_EQ(v.id(v.token(static_cast<int>(id))), static_cast<int>(id));
}

TEST(Vocabulary, FileRoundTrip) {
  auto v = Vocabulary::build({{"b", "a", "a"}}, 10, 1);
  auto path = fs::temp_directory_path() / "latgen_vocab_test.txt";
  v.save(path);
  EXPECT_EQ(Vocabulary::load(path), v);
}

TEST(PosTagging, LexiconLookup) {
  LexiconTagger tagger(std::map<std::string, std::string>{{"dog", "n"}, {"runs", "v"}});
  PosTagSet tags({"n", "v"});
  EXPECT_EQ(pos_tag(tagger, tags, {"dog", "runs"}), (TokenSeq{"n", "v"}));
}

TEST(PosTagging, FallbackTag) {
  LexiconTagger tagger({});
  PosTagSet tags({"n"});
  EXPECT_EQ(pos_tag(tagger, tags, {"dog"}), (TokenSeq{"x"}));
}

class BrokenTagger : public PosTagger {
 public:
  explicit BrokenTagger(TokenSeq out) : out_(std::move(out)) {}
  TokenSeq tag(const TokenSeq&) const override { return out_; }

 private:
  TokenSeq out_;
};

TEST(PosTagging, ContractViolations) {
  PosTagSet tags({"n"});
  EXPECT_THROW(pos_tag(BrokenTagger({"n"}), tags, {"a", "b"}), LengthViolation);
  EXPECT_THROW(pos_tag(BrokenTagger({"zz"}), tags, {"a"}), TagsetViolation);
  EXPECT_THROW(pos_tag(BrokenTagger({}), tags, {}), EmptyInput);
}

TEST(PosTagging, BundledTaggerClosedOverTagset) {
  LexiconTagger tagger(std::map<std::string, std::string>{{"a", "n"}, {"b", "v"}});
  PosTagSet tags({"n", "v"});
  std::mt19937 rng(3);
  const TokenSeq pool = {"a", "b", "c"};
  for (int i = 0; i < 50; ++i) {
    TokenSeq seq(rng() % 6 + 1);
    for (auto& t : seq) t = pool[rng() % 3];
    EXPECT_EQ(pos_tag(tagger, tags, seq).size(), seq.size());
  }
}

TEST(LoadCorpus, GroupsByPost) {
  auto p = write_temp("group.jsonl",
                      R"({"post": "hi there", "response": "hello", "response_pos": "n"})"
                      "\n"
                      R"({"post": "hi there", "response": "hey you", "response_pos": "n r"})"
                      "\n"
                      R"({"post": "bye", "response": "see you", "response_pos": "v r"})"
                      "\n");
  Corpus c = load_corpus(p);
  ASSERT_EQ(c.pairs.size(), 2u);
  EXPECT_EQ(c.pairs[0].post, (TokenSeq{"hi", "there"}));
  ASSERT_EQ(c.pairs[0].responses.size(), 2u);
  EXPECT_EQ(c.pairs[0].response_pos[1], (TokenSeq{"n", "r"}));
  EXPECT_EQ(c.num_responses(), 3u);
  EXPECT_TRUE(c.tagset.contains("r"));
  EXPECT_TRUE(c.tagset.contains("x"));
  EXPECT_TRUE(c.vocabulary.contains("you"));
}

TEST(LoadCorpus, GroupingIsIdempotent) {
  auto p = write_temp("idem.jsonl",
                      R"({"post": "a", "response": "b", "response_pos": "n"})"
                      "\n"
                      R"({"post": "c", "response": "d", "response_pos": "v"})"
                      "\n"
                      R"({"post": "a", "response": "e", "response_pos": "n"})"
                      "\n");
  Corpus first = load_corpus(p);
  auto q = fs::temp_directory_path() / "latgen_corpus_test_idem2.jsonl";
  save_corpus(first, q);
  Corpus second = load_corpus(q);
  ASSERT_EQ(first.pairs.size(), second.pairs.size());
  for (std::size_t i = 0; i < first.pairs.size(); ++i) {
    EXPECT_EQ(first.pairs[i].post, second.pairs[i].post);
    EXPECT_EQ(first.pairs[i].responses, second.pairs[i].responses);
    EXPECT_EQ(first.pairs[i].response_pos, second.pairs[i].response_pos);
  }
  EXPECT_EQ(first.vocabulary, second.vocabulary);
  EXPECT_EQ(first.tagset, second.tagset);
}

TEST(LoadCorpus, MissingResponseReportsLine) {
  auto p = write_temp("bad.jsonl",
                      R"({"post": "a", "response": "b"})"
                      "\n"
                      R"({"post": "c"})"
                      "\n");
  try {
    load_corpus(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadCorpus, MalformedJsonAndPosLength) {
  EXPECT_THROW(load_corpus(write_temp("json.jsonl", "{not json}\n")), ParseError);
  EXPECT_THROW(load_corpus(write_temp("len.jsonl", R"({"post": "a", "response": "b c", "response_pos": "n"})" "\n")),
               ParseError);
  EXPECT_THROW(load_corpus(write_temp("blank.jsonl", R"({"post": "a", "response": "  "})" "\n")), ParseError);
}

TEST(LoadCorpus, UntaggedRecordsUseDerivedLexicon) {
  auto p = write_temp("untagged.jsonl",
                      R"({"post": "a", "response": "dog runs", "response_pos": "n v"})"
                      "\n"
                      R"({"post": "b", "response": "runs dog cat"})"
                      "\n");
  Corpus c = load_corpus(p);
  EXPECT_EQ(c.pairs[1].response_pos[0], (TokenSeq{"v", "n", "x"}));
}

TEST(LoadCorpus, FullScaleTestSetIfPresent) {
  const char* env = std::getenv("LATGEN_WEIBO_TEST");
  if (!env || !fs::exists(env)) GTEST_SKIP() << "full-scale test file not available";
  Corpus c = load_corpus(env);
  EXPECT_EQ(c.pairs.size(), 3200u);
}

}  // namespace
}  // namespace latgen
