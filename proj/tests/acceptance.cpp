// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/cli.hpp"
#include "latgen/eval.hpp"
#include "latgen/generator.hpp"
#include "latgen/nn/layers.hpp"
#include "latgen/rl.hpp"
#include "support/beam_oracle.hpp"
#include "support/gradcheck.hpp"

namespace {

namespace fs = std::filesystem;
using latgen::IdSeq;
using latgen::TokenSeq;
using latgen::Vocabulary;
using latgen::nn::Tensor;
using nlohmann::json;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::map<int, std::pair<bool, std::string>> results;

void report(int id, bool ok, const std::string& what) {
  results[id] = {ok, what};
  std::cerr << "criterion " << id << " done" << std::endl;
}

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Tensor> params_of(const latgen::nn::ParameterSet& ps) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : ps.items()) out.push_back(t);
  return out;
}

void scale_params(const latgen::nn::ParameterSet& ps, double s) {
  for (const auto& [n, t] : ps.items())
    for (double& x : Tensor(t).mutable_values()) x *= s;
}

Vocabulary words(int n) {
  TokenSeq t;
  for (int i = 0; i < n; ++i) t.push_back("w" + std::to_string(i));
  return Vocabulary::from_tokens(t);
}

TokenSeq random_words(std::size_t len, int vocab, std::mt19937_64& g, const TokenSeq& extra = {}) {
  TokenSeq out;
  const std::size_t pool = static_cast<std::size_t>(vocab) + extra.size();
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t k = g() % pool;
    out.push_back(k < static_cast<std::size_t>(vocab) ? "w" + std::to_string(k) : extra[k - vocab]);
  }
  return out;
}

std::size_t pick(std::mt19937_64& g, std::size_t lo, std::size_t hi) { return lo + g() % (hi - lo + 1); }

// ---------------------------------------------------------------------------

void gradient_checks() {
  using latgen::testing::grad_check;
  using latgen::testing::project;
  using latgen::testing::random_like;
  namespace nn = latgen::nn;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kShapes = 20;
  std::mt19937_64 g(2024);
  struct LayerResult {
    std::string name;
    double worst = 0.0;
    int shapes = 0;
  };
  std::vector<LayerResult> layers;
  auto run = [&](const std::string& name, const std::function<double(std::uint64_t)>& one) {
    LayerResult r{name};
    for (int s = 0; s < kShapes; ++s) {
      r.worst = std::max(r.worst, one(g()));
      ++r.shapes;
    }
    layers.push_back(r);
  };

  run("gru-step", [&](std::uint64_t seed) {
    nn::ParameterSet ps;
    nn::Rng rng(seed);
    const std::size_t in = pick(g, 1, 5), hid = pick(g, 1, 5);
    nn::GRUCell cell(ps, "gru", in, hid, nn::Init::Uniform, rng);
    scale_params(ps, 10.0);
    Tensor x = random_like(1, in, rng, -1, 1, true), h = random_like(1, hid, rng, -1, 1, true);
    Tensor w = random_like(1, hid, rng);
    auto inputs = params_of(ps);
    inputs.push_back(x);
    inputs.push_back(h);
    return grad_check(inputs, [&] { return project(cell.step(x, h), w); }).max_rel_error;
  });

  run("bigru", [&](std::uint64_t seed) {
    nn::ParameterSet ps;
    nn::Rng rng(seed);
    const std::size_t in = pick(g, 1, 4), hid = pick(g, 1, 4), len = pick(g, 1, 5);
    nn::BiGRU enc(ps, "enc", in, hid, nn::Init::Uniform, rng);
    scale_params(ps, 10.0);
    Tensor xs = random_like(len, in, rng, -1, 1, true);
    Tensor w = random_like(len, 2 * hid, rng), wf = random_like(1, 2 * hid, rng);
    auto inputs = params_of(ps);
    inputs.push_back(xs);
    return grad_check(inputs, [&] {
             auto o = enc(xs);
             return nn::add(project(o.states, w), project(o.final, wf));
           }).max_rel_error;
  });

  run("attention", [&](std::uint64_t seed) {
    nn::ParameterSet ps;
    nn::Rng rng(seed);
    const std::size_t sd = pick(g, 1, 5), qd = pick(g, 1, 5), ad = pick(g, 1, 5), len = pick(g, 1, 6);
    latgen::AttentionLayer a(ps, "a", sd, qd, ad, rng);
    scale_params(ps, 10.0);
    Tensor h = random_like(len, sd, rng, -1, 1, true), s = random_like(1, qd, rng, -1, 1, true);
    Tensor wc = random_like(1, sd, rng), ww = random_like(1, len, rng);
    auto inputs = params_of(ps);
    inputs.push_back(h);
    inputs.push_back(s);
    return grad_check(inputs, [&] {
             auto out = a(h, s);
             return nn::add(project(out.context, wc), project(out.weights, ww));
           }).max_rel_error;
  });

  run("pointer-step", [&](std::uint64_t seed) {
    latgen::PointerGeneratorConfig c;
    c.embed_dim = pick(g, 2, 5);
    c.enc_hidden = pick(g, 2, 5);
    c.dec_hidden = pick(g, 2, 5);
    c.attn_dim = pick(g, 2, 5);
    c.seed = seed;
    const int v = static_cast<int>(pick(g, 2, 5));
    latgen::PointerGeneratorModel m(words(v), c);
    scale_params(m.params(), 4.0);
    const TokenSeq post = random_words(pick(g, 1, 3), v, g);
    const TokenSeq latent = random_words(pick(g, 1, 3), v, g, {"zz", "yy"});
    const TokenSeq response = random_words(pick(g, 1, 3), v, g, {"zz"});
    return grad_check(params_of(m.params()), [&] { return m.loss(post, latent, response); })
        .max_rel_error;
  });

  run("transformer-encoder", [&](std::uint64_t seed) {
    nn::ParameterSet ps;
    nn::Rng rng(seed);
    const std::size_t heads = pick(g, 1, 2), dim = heads * pick(g, 1, 3), ff = pick(g, 2, 6), len = pick(g, 1, 4);
    nn::TransformerEncoderLayer enc(ps, "enc", dim, heads, ff, rng);
    Tensor x = random_like(len, dim, rng, -1, 1, true), w = random_like(len, dim, rng);
    auto inputs = params_of(ps);
    inputs.push_back(x);
    return grad_check(inputs, [&] { return project(enc(x), w); }).max_rel_error;
  });

  run("transformer-decoder", [&](std::uint64_t seed) {
    nn::ParameterSet ps;
    nn::Rng rng(seed);
    const std::size_t heads = pick(g, 1, 2), dim = heads * pick(g, 1, 3), ff = pick(g, 2, 6);
    const std::size_t src = pick(g, 1, 4), tgt = pick(g, 1, 4);
    nn::TransformerDecoderLayer dec(ps, "dec", dim, heads, ff, rng);
    Tensor mem = random_like(src, dim, rng, -1, 1, true), x = random_like(tgt, dim, rng, -1, 1, true);
    Tensor w = random_like(tgt, dim, rng);
    auto inputs = params_of(ps);
    inputs.push_back(mem);
    inputs.push_back(x);
    return grad_check(inputs, [&] { return project(dec(x, mem, nn::attention_mask(tgt, tgt, true)), w); })
        .max_rel_error;
  });

  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 60.0;
  std::string detail;
  for (const auto& r : layers) {
    ok = ok && r.shapes >= kShapes && r.worst < 1e-3;
    detail += " " + r.name + "=" + num(r.worst, 2);
  }
  report(1, ok, "gradient checks, " + std::to_string(kShapes) + " shapes per layer, max rel error:" + detail + ", " +
                    num(elapsed, 3) + " s");
}

// ---------------------------------------------------------------------------

void normalization() {
  std::mt19937_64 g(7);
  std::size_t steps = 0, exact = 0;
  double worst = 0.0;
  for (std::uint64_t model = 0; model < 20; ++model) {
    latgen::PointerGeneratorConfig c{6, 6, 6, 6, 100 + model};
    const int v = static_cast<int>(pick(g, 3, 8));
    latgen::PointerGeneratorModel m(words(v), c);
    scale_params(m.params(), 1.0 + static_cast<double>(g() % 8));
    latgen::nn::NoGradGuard ng;
    for (int k = 0; k < 5; ++k) {
      auto enc = m.encode(random_words(pick(g, 1, 5), v, g), random_words(pick(g, 1, 6), v, g, {"q1", "q2", "q3"}));
      const std::size_t ext = static_cast<std::size_t>(v) + Vocabulary::kNumSpecials + enc.oov.size();
      Tensor state = enc.init_state;
      int prev = Vocabulary::kBos;
      for (int t = 0; t < 10; ++t) {
        auto s = m.step(enc, state, prev);
        double total = 0.0;
        for (double p : s.dist.values()) total += p;
        worst = std::max(worst, std::abs(total - 1.0));
        exact += s.p_gen.item() + s.l_copy.item() == 1.0;
        ++steps;
        state = s.state;
        prev = static_cast<int>(g() % ext);
      }
    }
  }
  report(2, steps >= 1000 && worst <= 1e-6 && exact == steps,
         "normalization over " + std::to_string(steps) + " decode steps: max |sum - 1| = " + num(worst, 3) +
             ", p_gen + l_copy == 1 exactly in " + std::to_string(exact) + "/" + std::to_string(steps));
}

// ---------------------------------------------------------------------------

void copy_faithfulness() {
  std::mt19937_64 g(11);
  std::size_t decodes = 0, tokens = 0, inside = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    latgen::PointerGeneratorConfig c{6, 6, 6, 6, 300 + i};
    const int v = static_cast<int>(pick(g, 3, 8));
    latgen::PointerGeneratorModel m(words(v), c);
    scale_params(m.params(), 3.0);
    const TokenSeq latent = random_words(pick(g, 1, 5), v, g, {"q1", "q2"});
    latgen::DecodeOptions o;
    o.forced_p_gen = 0.0;
    o.beam_size = pick(g, 1, 4);
    o.max_len = pick(g, 1, 6);
    auto out = m.decode(random_words(pick(g, 1, 4), v, g), latent, o);
    ++decodes;
    for (const auto& t : out.tokens) {
      ++tokens;
      inside += std::find(latent.begin(), latent.end(), t) != latent.end();
    }
  }
  report(3, decodes == 100 && tokens > 0 && inside == tokens,
         "copy-only decoding: " + std::to_string(inside) + "/" + std::to_string(tokens) +
             " emitted tokens are latent tokens over " + std::to_string(decodes) + " decodes");
}

// ---------------------------------------------------------------------------

std::vector<double> pointer_next(const latgen::PointerGeneratorModel& m,
                                 const latgen::PointerGeneratorModel::Encoded& enc, const IdSeq& prefix) {
  latgen::nn::NoGradGuard ng;
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

std::vector<double> concat_next(const latgen::ConcatTransformerModel& m, const Tensor& memory, const IdSeq& prefix) {
  latgen::nn::NoGradGuard ng;
  IdSeq slots = prefix;
  slots.push_back(Vocabulary::kEos);
  const Tensor lp = m.log_probs(memory, slots);
  std::vector<double> row(lp.cols());
  for (std::size_t w = 0; w < row.size(); ++w) row[w] = lp.at(lp.rows() - 1, w);
  row[Vocabulary::kPad] = row[Vocabulary::kBos] = kNegInf;
  return row;
}

void beam_oracle() {
  std::size_t agree = 0, models = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    // Emittable ids: UNK, w0, w1, the latent OOV and EOS.
    latgen::PointerGeneratorModel m(words(2), {6, 6, 6, 6, seed});
    scale_params(m.params(), 6.0);
    const TokenSeq post = {"w0", "w1"}, latent = {"w1", "zz"};
    auto enc = m.encode(post, latent);
    latgen::DecodeOptions o;
    o.beam_size = 64;
    o.max_len = 3;
    o.length_normalize = seed % 2 == 0;
    auto out = m.decode(post, latent, o);
    auto best = latgen::testing::exhaustive_search([&](const IdSeq& p) { return pointer_next(m, enc, p); }, 3,
                                                   Vocabulary::kEos, o.length_normalize);
    agree += out.ids == best.tokens;
    ++models;
  }
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    // Emittable ids: EOS, UNK, w0.
    latgen::ConcatTransformerConfig c;
    c.encoder = {8, 2, 1, 16};
    c.decoder = {8, 2, 1, 16};
    c.max_input_len = 16;
    c.seed = seed;
    latgen::ConcatTransformerModel m(words(1), latgen::PosTagSet({"n", "v"}), c);
    scale_params(m.params(), 2.0);
    const TokenSeq post = {"w0"}, pos = {"n", "v"};
    const Tensor memory = [&] {
      latgen::nn::NoGradGuard ng;
      return m.encode(post, pos);
    }();
    latgen::DecodeOptions o;
    o.beam_size = 64;
    o.max_len = 3;
    o.length_normalize = seed % 2 == 0;
    auto out = m.decode(post, pos, o);
    auto best = latgen::testing::exhaustive_search([&](const IdSeq& p) { return concat_next(m, memory, p); }, 3,
                                                   Vocabulary::kEos, o.length_normalize);
    agree += out.ids == best.tokens;
    ++models;
  }
  report(4, agree == models && models == 100,
         "beam 64 equals exhaustive search in " + std::to_string(agree) + "/" + std::to_string(models) +
             " random models (vocab <= 5, max_len 3)");
}

// ---------------------------------------------------------------------------

void reinforce() {
  using latgen::SoftmaxBandit;
  std::size_t converged = 0, worst_updates = 0;
  const std::size_t runs = 20;
  for (std::uint64_t seed = 1; seed <= runs; ++seed) {
    SoftmaxBandit b({0.0, 0.0});
    latgen::nn::Rng rng(seed);
    std::size_t updates = 0;
    while (b.distribution({})[0] < 0.99 && updates < 2000) {
      auto d = latgen::choose_latent(b.distribution({}), latgen::ChooseMode::Sample, 1.0, rng);
      latgen::reinforce_select_update(b, {}, d, d.index == 0 ? 1.0 : 0.0);
      latgen::nn::sgd_step(b.params(), 0.05);
      ++updates;
    }
    converged += b.distribution({})[0] >= 0.99;
    worst_updates = std::max(worst_updates, updates);
  }

  SoftmaxBandit b({0.5, -0.3, 0.1});
  const std::vector<double> rewards = {1.0, 0.0, 0.3};
  const auto p = b.distribution({});
  double expected_q = 0.0;
  for (std::size_t k = 0; k < 3; ++k) expected_q += p[k] * rewards[k];
  latgen::nn::Rng rng(5);
  const std::size_t samples = 50000;
  for (std::size_t s = 0; s < samples; ++s) {
    auto d = latgen::choose_latent(p, latgen::ChooseMode::Sample, 1.0, rng);
    latgen::reinforce_select_update(b, {}, d, rewards[d.index]);
  }
  const auto& grad = b.params().items()[0].second.grad();
  double err = 0.0, norm = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double ascent = -grad[k] / static_cast<double>(samples);
    const double exact = p[k] * (rewards[k] - expected_q);
    err += (ascent - exact) * (ascent - exact);
    norm += exact * exact;
  }
  const double rel = std::sqrt(err / norm);
  report(5, converged == runs && rel < 0.05,
         "REINFORCE: bandit reached P(best) >= 0.99 in " + std::to_string(converged) + "/" + std::to_string(runs) +
             " runs (max " + std::to_string(worst_updates) + " updates at lr 0.05); 50k-sample gradient rel error " +
             num(rel, 3));
}

// ---------------------------------------------------------------------------

std::size_t lev_recursive(const TokenSeq& a, std::size_t i, const TokenSeq& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  return std::min({lev_recursive(a, i + 1, b, j) + 1, lev_recursive(a, i, b, j + 1) + 1,
                   lev_recursive(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1)});
}

void metric_oracles() {
  // Every sequence over a two-tag alphabet up to length 6.
  std::vector<TokenSeq> seqs;
  for (std::size_t len = 0; len <= 6; ++len)
    for (std::size_t mask = 0; mask < (std::size_t{1} << len); ++mask) {
      TokenSeq s;
      for (std::size_t i = 0; i < len; ++i) s.push_back((mask >> i) & 1 ? "v" : "n");
      seqs.push_back(s);
    }
  std::size_t pairs = 0, lev_ok = 0;
  for (const auto& a : seqs)
    for (const auto& b : seqs) {
      ++pairs;
      lev_ok += latgen::levenshtein(a, b) == lev_recursive(a, 0, b, 0);
    }
  const double identity = latgen::bleu({{"a", "b", "c", "d"}}, {{{"a", "b", "c", "d"}}}, 4);
  const double half = latgen::bleu({{"a", "b", "c", "d"}}, {{{"a", "b", "x", "y"}}}, 1);
  const double f_id = latgen::f1_reward({"a", "b"}, {"a", "b"});
  const double f_dis = latgen::f1_reward({"a", "b"}, {"c", "d"});
  const double f_half = latgen::f1_reward({"a", "b"}, {"a", "c"});
  const bool ok = lev_ok == pairs && std::abs(identity - 100.0) < 1e-9 && std::abs(half - 50.0) <= 0.01 &&
                  f_id == 1.0 && f_dis == 0.0 && std::abs(f_half - 0.5) < 1e-12;
  report(6, ok,
         "metric oracles: levenshtein " + std::to_string(lev_ok) + "/" + std::to_string(pairs) +
             " tag pairs; BLEU identity " + num(identity, 6) + ", half-unigram BLEU-1 " + num(half, 6) + "; F1 " +
             num(f_id) + "/" + num(f_dis) + "/" + num(f_half));
}

// ---------------------------------------------------------------------------
// End-to-end runs through the command line.

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult latgen_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"latgen"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = latgen::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Copies a toy config with absolute paths into `dir` and returns its path.
fs::path stage_config(const std::string& name, const fs::path& dir, const json& overrides = json::object()) {
  const fs::path src = fs::path(LATGEN_SOURCE_DIR) / "configs" / (name + ".json");
  std::ifstream in(src);
  json cfg = json::parse(in);
  cfg["paths"]["corpus"] = (fs::path(LATGEN_SOURCE_DIR) / "data" / "toy_corpus.jsonl").string();
  cfg["paths"]["work_dir"] = (dir / "work").string();
  cfg.merge_patch(overrides);
  fs::create_directories(dir);
  const fs::path path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

bool run_steps(const fs::path& config, const std::vector<std::vector<std::string>>& steps, std::string* failure) {
  for (const auto& step : steps) {
    std::vector<std::string> args = {"-c", config.string()};
    args.insert(args.end(), step.begin(), step.end());
    const auto r = latgen_cli(args);
    if (r.code != 0) {
      *failure = step.front() + " exited " + std::to_string(r.code) + ": " + r.err;
      return false;
    }
  }
  return true;
}

const std::vector<std::vector<std::string>> kPipeline = {
    {"prepare"}, {"pretrain"}, {"train-joint"}, {"generate"}, {"evaluate"}};

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  bool well_formed = true;
};

Csv read_csv(const fs::path& path) {
  Csv csv;
  std::ifstream f(path);
  std::string line;
  if (!std::getline(f, line)) {
    csv.well_formed = false;
    return csv;
  }
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) csv.header.push_back(cell);
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::vector<double> row;
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) csv.well_formed = false;
      } catch (const std::exception&) {
        csv.well_formed = false;
      }
    }
    if (row.size() != csv.header.size()) csv.well_formed = false;
    csv.rows.push_back(row);
  }
  return csv;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void pos_toy(const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = root / "pos";
  const fs::path work = dir / "work";
  std::string failure;
  if (!run_steps(stage_config("toy-sample-pos", dir), kPipeline, &failure)) {
    report(7, false, "POS toy pipeline failed: " + failure);
    report(9, false, "no joint run to inspect");
    return;
  }
  const double elapsed = seconds_since(t0);
  const Csv pred = read_csv(work / "predictor_curve.csv");
  const Csv gen = read_csv(work / "generator_curve.csv");
  const Csv reward = read_csv(work / "joint" / "reward.csv");
  const double pred_acc = pred.rows.empty() ? 0.0 : pred.rows.back()[2];
  const double gen_acc = gen.rows.empty() ? 0.0 : gen.rows.back()[2];
  const double q0 = reward.rows.empty() ? 0.0 : reward.rows.front()[1];
  const double q_last = reward.rows.empty() ? 0.0 : reward.rows.back()[1];
  const double gain = q0 > 0 ? (q_last - q0) / q0 : 0.0;
  const bool ok = pred_acc >= 0.95 && gen_acc >= 0.99 && reward.rows.size() <= 50 && gain >= 0.2 && elapsed < 600;
  report(7, ok,
         "POS toy (sample-pos, K_p = 4): predictor accuracy " + num(pred_acc) + ", generator teacher-forced accuracy " +
             num(gen_acc) + ", mean Q " + num(q0) + " -> " + num(q_last) + " (+" + num(100 * gain, 3) + "%) over " +
             std::to_string(reward.rows.size()) + " epochs, " + num(elapsed, 3) + " s");

  const Csv ed = read_csv(work / "joint" / "edit_distance.csv");
  bool covers = ed.well_formed && ed.header == std::vector<std::string>{"epoch", "mean_edit_distance"} &&
                ed.rows.size() == reward.rows.size() && !ed.rows.empty();
  for (std::size_t e = 0; covers && e < ed.rows.size(); ++e)
    covers = ed.rows[e][0] == static_cast<double>(e) && std::isfinite(ed.rows[e][1]) && ed.rows[e][1] >= 0;
  std::string trend = "n/a";
  if (covers) {
    const double first = ed.rows.front()[1], last = ed.rows.back()[1];
    trend = num(first) + " -> " + num(last) + (last < first ? " (decreasing)" : last > first ? " (increasing)" : " (flat)");
  }
  report(9, covers,
         "edit-distance curve joint/edit_distance.csv: " + std::to_string(ed.rows.size()) +
             " epochs, well-formed; trend " + trend);
}

void sentence_toy(const fs::path& root) {
  const fs::path dir = root / "sentence";
  const fs::path work = dir / "work";
  std::string failure;
  if (!run_steps(stage_config("toy-latent-sentence", dir), kPipeline, &failure)) {
    report(8, false, "sentence toy pipeline failed: " + failure);
    return;
  }
  const auto report_json = latgen::load_report(work / "report.json");
  std::string overlap = "missing";
  if (report_json.overlap) {
    overlap.clear();
    for (std::size_t n = 0; n < 4; ++n) overlap += (n ? "/" : "") + num((*report_json.overlap)[n]);
  }
  report(8, report_json.bleu[0] >= 80.0 && report_json.overlap.has_value(),
         "sentence toy (K_s = 8, C = 2): training-set BLEU-1 " + num(report_json.bleu[0]) +
             " after joint training; latent overlap 1-4 grams " + overlap + " %");
}

void determinism(const fs::path& root) {
  // A second run of the POS pipeline, plus a joint run split across a resume.
  const fs::path first = root / "pos" / "work";
  const fs::path dir = root / "pos-again";
  std::string failure;
  bool ok = run_steps(stage_config("toy-sample-pos", dir), kPipeline, &failure);
  const std::vector<std::string> files = {
      "vocab.txt",           "tags.txt",           "pos_candidates.jsonl",     "pos_labels.tsv",
      "predictor.ckpt.json", "generator.ckpt.json", "predictor_curve.csv",      "generator_curve.csv",
      "joint/predictor.ckpt.json", "joint/generator.ckpt.json", "joint/progress.json", "joint/events.jsonl",
      "joint/edit_distance.csv", "generations.tsv", "report.json"};
  std::size_t same = 0;
  for (const auto& f : files)
    if (ok && fs::exists(first / f) && read_bytes(first / f) == read_bytes(dir / "work" / f)) ++same;

  const fs::path split = root / "pos-resume";
  const fs::path cfg = stage_config("toy-sample-pos", split, {{"joint", {{"epochs", 20}}}});
  ok = ok && run_steps(cfg, {{"prepare"}, {"pretrain"}, {"train-joint"}}, &failure);
  ok = ok && run_steps(cfg, {{"--set", "joint.epochs=50", "train-joint", "--resume"}}, &failure);
  std::size_t resumed = 0;
  const std::vector<std::string> joint_files = {"joint/predictor.ckpt.json", "joint/generator.ckpt.json",
                                                "joint/progress.json", "joint/events.jsonl"};
  for (const auto& f : joint_files)
    if (ok && read_bytes(first / f) == read_bytes(split / "work" / f)) ++resumed;

  report(10, ok && same == files.size() && resumed == joint_files.size(),
         "determinism: " + std::to_string(same) + "/" + std::to_string(files.size()) +
             " artifacts byte-identical across two runs; 20 + 30 resumed joint epochs match 50 straight in " +
             std::to_string(resumed) + "/" + std::to_string(joint_files.size()) + " files" +
             (failure.empty() ? "" : "; " + failure));
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "latgen-acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  gradient_checks();
  normalization();
  copy_faithfulness();
  beam_oracle();
  reinforce();
  metric_oracles();
  pos_toy(root);
  sentence_toy(root);
  determinism(root);

  int failures = 0;
  for (const auto& [id, r] : results) {
    std::cout << (r.first ? "[PASS] " : "[FAIL] ") << id << " " << r.second << "\n";
    failures += !r.first;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
