#include "latgen/generator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "latgen/beam.hpp"
#include "latgen/error.hpp"
#include "support/beam_oracle.hpp"
#include "support/gradcheck.hpp"

namespace latgen {
namespace {

namespace fs = std::filesystem;
using nn::Tensor;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = n(rng);
  return Tensor::from(r, c, std::move(v), grad);
}

std::vector<Tensor> all_params(const nn::ParameterSet& ps) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : ps.items()) out.push_back(t);
  return out;
}

void scale_params(const nn::ParameterSet& ps, double s) {
  for (const auto& [n, t] : ps.items())
    for (double& x : Tensor(t).mutable_values()) x *= s;
}

Vocabulary words(int n) {
  TokenSeq t;
  for (int i = 0; i < n; ++i) t.push_back("w" + std::to_string(i));
  return Vocabulary::from_tokens(t);
}

PointerGeneratorConfig small_pointer(std::uint64_t seed = 2) {
  PointerGeneratorConfig c;
  c.embed_dim = 8;
  c.enc_hidden = 8;
  c.dec_hidden = 8;
  c.attn_dim = 8;
  c.seed = seed;
  return c;
}

ConcatTransformerConfig small_concat(std::uint64_t seed = 3) {
  ConcatTransformerConfig c;
  c.encoder = {16, 2, 1, 32};
  c.decoder = {16, 2, 1, 32};
  c.max_input_len = 16;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------

TEST(Attention, WeightsSumToOne) {
  nn::ParameterSet ps;
  nn::Rng rng(1);
  AttentionLayer a(ps, "a", 6, 4, 5, rng);
  std::mt19937_64 g(2);
  for (std::size_t len : {1u, 3u, 9u}) {
    auto r = a(random_tensor(len, 6, g), random_tensor(1, 4, g));
    EXPECT_EQ(r.weights.cols(), len);
    EXPECT_NEAR(std::accumulate(r.weights.values().begin(), r.weights.values().end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Attention, SinglePositionCopiesState) {
  nn::ParameterSet ps;
  nn::Rng rng(1);
  AttentionLayer a(ps, "a", 6, 4, 5, rng);
  std::mt19937_64 g(3);
  const Tensor h = random_tensor(1, 6, g);
  auto r = a(h, random_tensor(1, 4, g));
  EXPECT_DOUBLE_EQ(r.weights.item(), 1.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(r.context.values()[i], h.values()[i]);
}

TEST(Attention, ShapeErrors) {
  nn::ParameterSet ps;
  nn::Rng rng(1);
  AttentionLayer a(ps, "a", 6, 4, 5, rng);
  std::mt19937_64 g(3);
  EXPECT_THROW(a(random_tensor(3, 5, g), random_tensor(1, 4, g)), ShapeError);
  EXPECT_THROW(a(random_tensor(3, 6, g), random_tensor(1, 3, g)), ShapeError);
}

TEST(Attention, GradientCheck) {
  nn::ParameterSet ps;
  nn::Rng rng(4);
  AttentionLayer a(ps, "a", 5, 3, 4, rng);
  std::mt19937_64 g(5);
  const Tensor h = random_tensor(4, 5, g, true);
  const Tensor s = random_tensor(1, 3, g, true);
  const Tensor w = random_tensor(5, 1, g);
  auto inputs = all_params(ps);
  inputs.push_back(h);
  inputs.push_back(s);
  auto r = testing::grad_check(inputs, [&] {
    auto out = a(h, s);
    return nn::add(nn::sum(nn::matmul(out.context, w)), nn::sum(nn::mul(out.weights, out.weights)));
  });
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

// ---------------------------------------------------------------------------

TEST(MixCopy, HandEvaluatedRepeatedLatentToken) {
  // Vocabulary ids: a = 4, b = 5 (after the four specials), six ids total.
  const std::vector<double> p_vocab = {0.0, 0.0, 0.2, 0.2, 0.1, 0.5};
  auto d = mix_copy(p_vocab, {0.5, 0.3, 0.2}, {4, 5, 4}, 0, 0.4);
  EXPECT_NEAR(d.at(4), 0.46, 1e-12);
  EXPECT_NEAR(d.at(5), 0.4 * 0.5 + 0.6 * 0.3, 1e-12);
  EXPECT_NEAR(d.total(), 1.0, 1e-12);
  EXPECT_EQ(d.p_gen + d.l_copy, 1.0);
}

TEST(MixCopy, Limits) {
  const std::vector<double> p_vocab = {0.1, 0.1, 0.3, 0.1, 0.4};
  auto gen = mix_copy(p_vocab, {1.0}, {5}, 1, 1.0);
  for (std::size_t i = 0; i < p_vocab.size(); ++i) EXPECT_EQ(gen.at(i), p_vocab[i]);
  EXPECT_EQ(gen.at(5), 0.0);
  auto copy = mix_copy(p_vocab, {1.0}, {5}, 1, 0.0);
  EXPECT_EQ(copy.at(5), 1.0);
  for (std::size_t i = 0; i < p_vocab.size(); ++i) EXPECT_EQ(copy.at(i), 0.0);
}

TEST(PointerGenerator, StepMatchesPlainMixture) {
  PointerGeneratorModel m(words(5), small_pointer());
  nn::NoGradGuard ng;
  auto enc = m.encode({"w0", "w1"}, {"w2", "zz", "w2", "yy"});
  ASSERT_EQ(enc.oov, (TokenSeq{"zz", "yy"}));
  EXPECT_EQ(enc.latent_ext, (IdSeq{6, 9, 6, 10}));
  auto s = m.step(enc, enc.init_state, Vocabulary::kBos);
  auto d = mix_copy(s.p_vocab.values(), s.copy_weights.values(), enc.latent_ext, enc.oov.size(), s.p_gen.item());
  ASSERT_EQ(s.dist.cols(), 11u);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_NEAR(s.dist.values()[i], d.at(i), 1e-15);
  EXPECT_NEAR(d.total(), 1.0, 1e-12);
  EXPECT_GT(s.p_gen.item(), 0.0);
  EXPECT_LT(s.p_gen.item(), 1.0);
  EXPECT_EQ(s.p_gen.item() + s.l_copy.item(), 1.0);
}

TEST(PointerGenerator, ForcedSwitch) {
  PointerGeneratorModel m(words(5), small_pointer());
  nn::NoGradGuard ng;
  auto enc = m.encode({"w0", "w1"}, {"zz"});
  auto gen = m.step(enc, enc.init_state, Vocabulary::kBos, 1.0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(gen.dist.values()[i], gen.p_vocab.values()[i]);
  EXPECT_EQ(gen.dist.values()[9], 0.0);
  auto copy = m.step(enc, enc.init_state, Vocabulary::kBos, 0.0);
  EXPECT_EQ(copy.dist.values()[9], 1.0);
}

TEST(PointerGenerator, CopyOnlyDecodeStaysInLatent) {
  PointerGeneratorModel m(words(6), small_pointer());
  DecodeOptions o;
  o.forced_p_gen = 0.0;
  o.max_len = 6;
  const TokenSeq latent = {"w3", "qq", "w1"};
  auto g = m.decode({"w0", "w2"}, latent, o);
  ASSERT_FALSE(g.tokens.empty());
  for (const auto& t : g.tokens) EXPECT_NE(std::find(latent.begin(), latent.end(), t), latent.end()) << t;
}

TEST(PointerGenerator, TargetIds) {
  PointerGeneratorModel m(words(3), small_pointer());
  auto enc = m.encode({"w0"}, {"w1", "zz"});
  EXPECT_EQ(m.target_ids(enc, {"zz", "w2", "other"}),
            (IdSeq{7, 6, Vocabulary::kUnk, Vocabulary::kEos}));
}

TEST(PointerGenerator, GradientCheckThroughLoss) {
  PointerGeneratorModel m(words(4), small_pointer(9));
  scale_params(m.params(), 4.0);
  auto r = testing::grad_check(
      all_params(m.params()), [&] { return m.loss({"w0", "w1"}, {"w2", "zz"}, {"zz", "w3"}); }, 1e-5, 4);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(PointerGenerator, EmptyInputs) {
  PointerGeneratorModel m(words(3), small_pointer());
  EXPECT_THROW(m.encode({}, {"w0"}), EmptyInput);
  EXPECT_THROW(m.encode({"w0"}, {}), EmptyInput);
}

// Stepwise argmax with PAD and BOS excluded.
IdSeq pointer_greedy(const PointerGeneratorModel& m, const TokenSeq& post, const TokenSeq& latent,
                     std::size_t max_len) {
  nn::NoGradGuard ng;
  auto enc = m.encode(post, latent);
  Tensor state = enc.init_state;
  int prev = Vocabulary::kBos;
  IdSeq out;
  while (out.size() < max_len) {
    auto s = m.step(enc, state, prev);
    auto v = s.dist.values();
    v[Vocabulary::kPad] = v[Vocabulary::kBos] = -1.0;
    const int best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    state = s.state;
    prev = best;
  }
  return out;
}

TEST(PointerGenerator, BeamOneIsGreedy) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PointerGeneratorModel m(words(5), small_pointer(seed));
    scale_params(m.params(), 6.0);
    DecodeOptions o;
    o.beam_size = 1;
    o.max_len = 6;
    auto g = m.decode({"w0", "w4"}, {"w1", "zz"}, o);
    EXPECT_EQ(g.ids, pointer_greedy(m, {"w0", "w4"}, {"w1", "zz"}, 6));
  }
}

std::vector<double> pointer_next(const PointerGeneratorModel& m, const PointerGeneratorModel::Encoded& enc,
                                 const IdSeq& prefix) {
  nn::NoGradGuard ng;
  Tensor state = enc.init_state;
  int prev = Vocabulary::kBos;
  for (int t : prefix) {
    state = m.step(enc, state, prev).state;
    prev = t;
  }
  std::vector<double> lp(m.step(enc, state, prev).dist.values());
  for (double& x : lp) x = std::log(x);
  lp[Vocabulary::kPad] = lp[Vocabulary::kBos] = kNegInf;
  return lp;
}

TEST(PointerGenerator, WideBeamMatchesExhaustiveSearch) {
  // Emittable ids: UNK, w0, w1, one latent OOV, EOS.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PointerGeneratorModel m(words(2), small_pointer(seed));
    scale_params(m.params(), 6.0);
    const TokenSeq post = {"w0", "w1"}, latent = {"w1", "zz"};
    auto enc = m.encode(post, latent);
    for (bool normalize : {true, false}) {
      DecodeOptions o;
      o.beam_size = 64;
      o.max_len = 3;
      o.length_normalize = normalize;
      auto g = m.decode(post, latent, o);
      auto best = testing::exhaustive_search([&](const IdSeq& p) { return pointer_next(m, enc, p); }, 3,
                                             Vocabulary::kEos, normalize);
      EXPECT_EQ(g.ids, best.tokens) << "seed " << seed;
      EXPECT_DOUBLE_EQ(g.log_prob, best.log_prob);

      // A narrow beam can only do worse than the exact optimum.
      o.beam_size = 2;
      auto narrow = m.decode(post, latent, o);
      const std::size_t len = narrow.ids.size() + (narrow.ids.size() < 3 ? 1 : 0);
      EXPECT_LE(beam_score(narrow.log_prob, len, normalize), best.score + 1e-12);
    }
  }
}

TEST(PointerGenerator, RealizesOovOutputs) {
  PointerGeneratorModel m(words(3), small_pointer());
  DecodeOptions o;
  o.forced_p_gen = 0.0;
  o.max_len = 2;
  auto g = m.decode({"w0"}, {"unseen"}, o);
  EXPECT_EQ(g.tokens, (TokenSeq{"unseen", "unseen"}));
  EXPECT_EQ(g.ids, (IdSeq{7, 7}));
}

// ---------------------------------------------------------------------------

PosTagSet toy_tags() { return PosTagSet({"n", "v", "a"}); }

TEST(ConcatTransformer, InputLayout) {
  ConcatTransformerModel m(words(4), toy_tags(), small_concat());
  // Tags sort to a, n, v, x.
  EXPECT_EQ(m.sep_id(), 8);
  EXPECT_EQ(m.input_ids({"w0", "zz"}, {"v", "a"}), (IdSeq{4, Vocabulary::kUnk, 8, 8 + 1 + 2, 8 + 1 + 0}));
  EXPECT_THROW(m.input_ids({"w0"}, {"q"}), TagsetViolation);
  EXPECT_THROW(m.input_ids({}, {"n"}), EmptyInput);
}

TEST(ConcatTransformer, InputTooLong) {
  ConcatTransformerModel m(words(4), toy_tags(), small_concat());
  const TokenSeq post(10, "w1");
  EXPECT_NO_THROW(m.input_ids(post, TokenSeq(5, "n")));
  EXPECT_THROW(m.input_ids(post, TokenSeq(6, "n")), InputTooLong);
  EXPECT_THROW(m.decode(post, TokenSeq(6, "n"), {}), InputTooLong);
}

TEST(ConcatTransformer, GradientCheckThroughLoss) {
  ConcatTransformerModel m(words(3), toy_tags(), small_concat(5));
  auto r = testing::grad_check(
      all_params(m.params()), [&] { return m.loss({"w0", "w1"}, {"n", "v"}, {"w2", "w0"}); }, 1e-5, 3);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

std::vector<double> concat_next(const ConcatTransformerModel& m, const Tensor& memory, const IdSeq& prefix) {
  nn::NoGradGuard ng;
  IdSeq slots = prefix;
  slots.push_back(Vocabulary::kEos);
  const Tensor lp = m.log_probs(memory, slots);
  std::vector<double> row(lp.cols());
  for (std::size_t w = 0; w < row.size(); ++w) row[w] = lp.at(lp.rows() - 1, w);
  row[Vocabulary::kPad] = row[Vocabulary::kBos] = kNegInf;
  return row;
}

TEST(ConcatTransformer, BeamOneIsGreedy) {
  ConcatTransformerModel m(words(4), toy_tags(), small_concat(7));
  scale_params(m.params(), 2.0);
  const TokenSeq post = {"w0", "w3"}, pos = {"n", "a"};
  const Tensor memory = [&] {
    nn::NoGradGuard ng;
    return m.encode(post, pos);
  }();
  IdSeq greedy;
  while (greedy.size() < 6) {
    auto lp = concat_next(m, memory, greedy);
    const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == Vocabulary::kEos) break;
    greedy.push_back(best);
  }
  DecodeOptions o;
  o.beam_size = 1;
  o.max_len = 6;
  EXPECT_EQ(m.decode(post, pos, o).ids, greedy);
}

TEST(ConcatTransformer, WideBeamMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ConcatTransformerModel m(words(1), toy_tags(), small_concat(seed));
    scale_params(m.params(), 2.0);
    const TokenSeq post = {"w0"}, pos = {"n", "v"};
    const Tensor memory = [&] {
      nn::NoGradGuard ng;
      return m.encode(post, pos);
    }();
    DecodeOptions o;
    o.beam_size = 64;
    o.max_len = 3;
    auto g = m.decode(post, pos, o);
    auto best = testing::exhaustive_search([&](const IdSeq& p) { return concat_next(m, memory, p); }, 3,
                                           Vocabulary::kEos, true);
    EXPECT_EQ(g.ids, best.tokens) << "seed " << seed;
    EXPECT_NEAR(g.log_prob, best.log_prob, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Toy training

struct ToyPair {
  TokenSeq post, latent, pos, response;
};

// Twenty posts with distinct first words; responses are fixed functions of
// the post. Each latent sentence is the response of the partner pair 2k/2k+1.
std::vector<ToyPair> toy_pairs() {
  auto response = [](int i) {
    TokenSeq r;
    for (int k = 0; k < 3 + i % 3; ++k) r.push_back("w" + std::to_string((i * 3 + k * 5 + 1) % 20));
    return r;
  };
  const TokenSeq tags = {"n", "v", "a"};
  std::vector<ToyPair> out;
  for (int i = 0; i < 20; ++i) {
    ToyPair p;
    p.post = {"w" + std::to_string(i), "w" + std::to_string((i * 7 + 3) % 20)};
    p.response = response(i);
    p.latent = response(i ^ 1);
    for (const auto& w : p.response) p.pos.push_back(tags[static_cast<std::size_t>(std::stoi(w.substr(1)) % 3)]);
    out.push_back(p);
  }
  return out;
}

TEST(Pretrain, PointerFirstLossNearUniform) {
  auto pairs = toy_pairs();
  PointerGeneratorModel m(words(20), small_pointer());
  const double v = static_cast<double>(m.vocabulary().size());
  // The vocabulary branch alone starts near a uniform cross-entropy.
  double ce = 0.0;
  std::size_t n = 0;
  nn::NoGradGuard ng;
  for (const auto& p : pairs) {
    auto enc = m.encode(p.post, p.latent);
    auto ids = m.target_ids(enc, p.response);
    Tensor state = enc.init_state;
    int prev = Vocabulary::kBos;
    for (int t : ids) {
      auto s = m.step(enc, state, prev);
      ce -= std::log(s.p_vocab.values()[static_cast<std::size_t>(t)]);
      ++n;
      state = s.state;
      prev = t;
    }
  }
  EXPECT_NEAR(ce / static_cast<double>(n), std::log(v), 0.1 * std::log(v));
}

TEST(Pretrain, ConcatFirstLossNearUniform) {
  auto pairs = toy_pairs();
  ConcatTransformerModel m(words(20), toy_tags(), small_concat());
  nn::Tensor(m.params().get("decoder.out.weight")).mutable_values().assign(16 * 24, 0.0);
  double loss = 0.0;
  for (const auto& p : pairs) loss += m.loss(p.post, p.pos, p.response).item();
  EXPECT_NEAR(loss / 20.0, std::log(24.0), 0.1 * std::log(24.0));
}

TEST(Pretrain, PointerOverfitsToyPairs) {
  auto pairs = toy_pairs();
  std::vector<GeneratorExample> ex;
  for (const auto& p : pairs) ex.push_back({p.post, p.latent, p.response});
  PointerGeneratorConfig c = small_pointer();
  c.embed_dim = c.enc_hidden = c.dec_hidden = c.attn_dim = 32;
  PointerGeneratorModel m(words(20), c);
  PretrainOptions o;
  o.epochs = 200;
  o.batch_size = 2;
  o.schedule.base = 1e-3;
  o.stop_at_accuracy = 1.0;
  auto curve = pretrain_generator(m, ex, o);
  EXPECT_GE(teacher_forced_accuracy(m, ex), 0.99) << curve.size() << " epochs";
  DecodeOptions d;
  d.beam_size = 1;
  std::size_t exact = 0;
  for (const auto& e : ex) exact += m.decode(e.post, e.latent, d).tokens == e.response;
  EXPECT_GE(exact, 19u);
}

TEST(Pretrain, ConcatOverfitsAndFollowsPos) {
  // Each post appears with two tag sequences; the response realizes the tags.
  std::vector<GeneratorExample> ex;
  const TokenSeq by_tag[] = {{"w0", "w3"}, {"w1", "w4"}, {"w2", "w5"}};
  auto tags = toy_tags();
  auto realize = [&](int post, const TokenSeq& pos) {
    TokenSeq r;
    for (const auto& t : pos) r.push_back(by_tag[tags.id(t) % 3][static_cast<std::size_t>(post % 2)]);
    return r;
  };
  const TokenSeq pos_a = {"n", "v"}, pos_b = {"a", "a", "n"};
  for (int i = 0; i < 10; ++i) {
    const TokenSeq post = {"w" + std::to_string(6 + i)};
    ex.push_back({post, pos_a, realize(i, pos_a)});
    ex.push_back({post, pos_b, realize(i, pos_b)});
  }
  ConcatTransformerModel m(words(16), tags, small_concat());
  PretrainOptions o;
  o.epochs = 150;
  o.batch_size = 4;
  o.schedule.base = 3e-3;
  o.stop_at_accuracy = 1.0;
  pretrain_generator(m, ex, o);
  EXPECT_GE(teacher_forced_accuracy(m, ex), 0.99);
  std::size_t differ = 0;
  DecodeOptions d;
  d.beam_size = 3;
  for (int i = 0; i < 10; ++i) {
    const TokenSeq post = {"w" + std::to_string(6 + i)};
    differ += m.decode(post, pos_a, d).tokens != m.decode(post, pos_b, d).tokens;
  }
  EXPECT_GE(differ, 1u);
}

TEST(Pretrain, ZeroEpochsUnchanged) {
  PointerGeneratorModel m(words(4), small_pointer());
  const double before = m.loss({"w0"}, {"w1"}, {"w2"}).item();
  PretrainOptions o;
  o.epochs = 0;
  EXPECT_TRUE(pretrain_generator(m, {{{"w0"}, {"w1"}, {"w2"}}}, o).empty());
  EXPECT_EQ(m.loss({"w0"}, {"w1"}, {"w2"}).item(), before);
}

TEST(Checkpoint, GeneratorsRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "latgen_generator_test";
  fs::create_directories(dir);
  PointerGeneratorModel p(words(4), small_pointer());
  save_generator(p, dir / "p.json", {{"epoch", 1}});
  nlohmann::json state;
  auto p2 = load_generator(dir / "p.json", &state);
  EXPECT_EQ(state["epoch"], 1);
  EXPECT_EQ(p2->loss({"w0"}, {"w1", "q"}, {"q"}).item(), p.loss({"w0"}, {"w1", "q"}, {"q"}).item());

  ConcatTransformerModel c(words(4), toy_tags(), small_concat());
  save_generator(c, dir / "c.json");
  auto c2 = load_generator(dir / "c.json");
  EXPECT_EQ(c2->loss({"w0"}, {"n"}, {"w1"}).item(), c.loss({"w0"}, {"n"}, {"w1"}).item());
  EXPECT_THROW(make_generator({{"type", "rnn"}, {"vocabulary", TokenSeq{}}}), ConfigError);
}

}  // namespace
}  // namespace latgen
