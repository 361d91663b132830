#include "latgen/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latgen/beam.hpp"
#include "latgen/error.hpp"
#include "latgen/nn/checkpoint.hpp"

namespace latgen {

using nn::Tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Keeps -log P finite when the copy switch saturates.
constexpr double kProbFloor = 1e-12;

TokenSeq regular_tokens(const Vocabulary& v) {
  return TokenSeq(v.tokens().begin() + Vocabulary::kNumSpecials, v.tokens().end());
}

std::vector<double> mask_specials(std::vector<double> log_probs) {
  log_probs[Vocabulary::kPad] = kNegInf;
  log_probs[Vocabulary::kBos] = kNegInf;
  return log_probs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Attention

AttentionLayer::AttentionLayer(nn::ParameterSet& ps, const std::string& name, std::size_t state_dim,
                               std::size_t query_dim, std::size_t attn_dim, nn::Rng& rng)
    : w_h(ps.create(name + ".w_h", state_dim, attn_dim, nn::Init::Uniform, rng)),
      w_s(ps.create(name + ".w_s", query_dim, attn_dim, nn::Init::Uniform, rng)),
      b(ps.create(name + ".b", 1, attn_dim, nn::Init::Zeros, rng)),
      v(ps.create(name + ".v", attn_dim, 1, nn::Init::Uniform, rng)) {}

AttentionLayer::Result AttentionLayer::operator()(const Tensor& states, const Tensor& projected,
                                                  const Tensor& query) const {
  if (query.rows() != 1 || query.cols() != w_s.rows()) throw ShapeError("attention query has the wrong width");
  if (states.cols() != w_h.rows() || projected.rows() != states.rows())
    throw ShapeError("attention states have the wrong shape");
  const Tensor e = nn::matmul(nn::tanh(nn::add_row(projected, nn::add(nn::matmul(query, w_s), b))), v);
  Result r;
  r.weights = nn::softmax(nn::transpose(e));
  r.context = nn::matmul(r.weights, states);
  return r;
}

// ---------------------------------------------------------------------------
// Extended distribution

double ExtendedVocabDistribution::total() const {
  return std::accumulate(preset.begin(), preset.end(), 0.0) + std::accumulate(oov.begin(), oov.end(), 0.0);
}

double ExtendedVocabDistribution::at(std::size_t ext_id) const {
  return ext_id < preset.size() ? preset[ext_id] : oov.at(ext_id - preset.size());
}

ExtendedVocabDistribution mix_copy(const std::vector<double>& p_vocab, const std::vector<double>& copy_weights,
                                   const IdSeq& latent_ext, std::size_t num_oov, double p_gen) {
  if (copy_weights.size() != latent_ext.size()) throw ShapeError("one copy weight per latent position");
  ExtendedVocabDistribution d;
  d.p_gen = p_gen;
  d.l_copy = 1.0 - p_gen;
  d.preset.resize(p_vocab.size());
  d.oov.assign(num_oov, 0.0);
  for (std::size_t w = 0; w < p_vocab.size(); ++w) d.preset[w] = p_gen * p_vocab[w];
  for (std::size_t i = 0; i < latent_ext.size(); ++i) {
    const auto id = static_cast<std::size_t>(latent_ext[i]);
    if (id < d.preset.size())
      d.preset[id] += d.l_copy * copy_weights[i];
    else
      d.oov.at(id - d.preset.size()) += d.l_copy * copy_weights[i];
  }
  return d;
}

// ---------------------------------------------------------------------------
// Pointer-generator

PointerGeneratorModel::PointerGeneratorModel(Vocabulary vocab, const PointerGeneratorConfig& cfg)
    : vocab_(std::move(vocab)), cfg_(cfg) {
  nn::Rng rng(cfg.seed);
  const std::size_t v = vocab_.size();
  const std::size_t enc_out = 2 * cfg.enc_hidden;
  embed_ = nn::Embedding(params_, "embed", v, cfg.embed_dim, nn::Init::Uniform, rng);
  post_encoder_ = nn::BiGRU(params_, "post_encoder", cfg.embed_dim, cfg.enc_hidden, nn::Init::Uniform, rng);
  latent_encoder_ = nn::BiGRU(params_, "latent_encoder", cfg.embed_dim, cfg.enc_hidden, nn::Init::Uniform, rng);
  init_ = nn::Linear(params_, "init", enc_out, cfg.dec_hidden, nn::Init::Uniform, rng);
  decoder_ = nn::GRUCell(params_, "decoder", cfg.embed_dim + 2 * enc_out, cfg.dec_hidden, nn::Init::Uniform, rng);
  attn_post_ = AttentionLayer(params_, "attn_post", enc_out, cfg.dec_hidden, cfg.attn_dim, rng);
  attn_latent_ = AttentionLayer(params_, "attn_latent", enc_out, cfg.dec_hidden, cfg.attn_dim, rng);
  const std::size_t feat = cfg.dec_hidden + 2 * enc_out;
  out_ = nn::Linear(params_, "out", feat, v, nn::Init::Uniform, rng);
  gen_ = nn::Linear(params_, "gen", feat, 1, nn::Init::Uniform, rng);
}

nlohmann::json PointerGeneratorModel::config() const {
  return {{"type", "pointer-generator"}, {"vocabulary", regular_tokens(vocab_)}, {"embed_dim", cfg_.embed_dim},
          {"enc_hidden", cfg_.enc_hidden}, {"dec_hidden", cfg_.dec_hidden},       {"attn_dim", cfg_.attn_dim},
          {"seed", cfg_.seed}};
}

PointerGeneratorModel::Encoded PointerGeneratorModel::encode(const TokenSeq& post, const TokenSeq& latent) const {
  if (post.empty()) throw EmptyInput("empty post");
  if (latent.empty()) throw EmptyInput("empty latent sentence");
  Encoded e;
  const auto p = vocab_.encode(post);
  const auto z = vocab_.encode(latent);
  e.oov = z.oov;
  for (std::size_t i = 0; i < latent.size(); ++i) {
    if (vocab_.contains(latent[i])) {
      e.latent_ext.push_back(z.ids[i]);
    } else {
      const auto at = std::find(e.oov.begin(), e.oov.end(), latent[i]) - e.oov.begin();
      e.latent_ext.push_back(static_cast<int>(vocab_.size()) + static_cast<int>(at));
    }
  }
  const auto po = post_encoder_(embed_(p.ids));
  const auto zo = latent_encoder_(embed_(z.ids));
  e.post_states = po.states;
  e.post_proj = attn_post_.project(po.states);
  e.latent_states = zo.states;
  e.latent_proj = attn_latent_.project(zo.states);
  const Tensor init[] = {init_(po.final), Tensor::zeros(1, 2 * po.states.cols())};
  e.init_state = nn::concat_cols(init);
  return e;
}

PointerGeneratorModel::Step PointerGeneratorModel::step(const Encoded& enc, const Tensor& prev_state, int prev,
                                                        std::optional<double> forced_p_gen) const {
  const int input = prev >= static_cast<int>(vocab_.size()) ? Vocabulary::kUnk : prev;
  const int ids[] = {input};
  const std::size_t h = cfg_.dec_hidden;
  const Tensor feed[] = {embed_(ids), nn::slice_cols(prev_state, h, prev_state.cols() - h)};
  const Tensor hidden = decoder_.step(nn::concat_cols(feed), nn::slice_cols(prev_state, 0, h));
  const auto ap = attn_post_(enc.post_states, enc.post_proj, hidden);
  const auto az = attn_latent_(enc.latent_states, enc.latent_proj, hidden);
  const Tensor parts[] = {hidden, ap.context, az.context};
  const Tensor feat = nn::concat_cols(parts);
  Step s;
  s.state = feat;
  s.p_vocab = nn::softmax(out_(feat));
  s.p_gen = forced_p_gen ? Tensor::scalar(*forced_p_gen) : nn::sigmoid(gen_(feat));
  s.l_copy = nn::one_minus(s.p_gen);
  s.copy_weights = az.weights;
  const std::size_t width = vocab_.size() + enc.oov.size();
  s.dist = nn::add(nn::pad_cols(nn::mul_scalar(s.p_vocab, s.p_gen), enc.oov.size()),
                   nn::scatter_add_cols(nn::mul_scalar(az.weights, s.l_copy), enc.latent_ext, width));
  return s;
}

IdSeq PointerGeneratorModel::target_ids(const Encoded& enc, const TokenSeq& response) const {
  IdSeq ids;
  for (const auto& t : response) {
    if (vocab_.contains(t)) {
      ids.push_back(vocab_.id(t));
      continue;
    }
    const auto it = std::find(enc.oov.begin(), enc.oov.end(), t);
    ids.push_back(it == enc.oov.end() ? Vocabulary::kUnk
                                      : static_cast<int>(vocab_.size()) + static_cast<int>(it - enc.oov.begin()));
  }
  ids.push_back(Vocabulary::kEos);
  return ids;
}

Tensor PointerGeneratorModel::loss(const TokenSeq& post, const TokenSeq& latent, const TokenSeq& response) const {
  const Encoded enc = encode(post, latent);
  const IdSeq targets = target_ids(enc, response);
  Tensor state = enc.init_state;
  int prev = Vocabulary::kBos;
  std::vector<Tensor> picked;
  for (int t : targets) {
    Step s = step(enc, state, prev);
    picked.push_back(nn::pick(s.dist, 0, static_cast<std::size_t>(t)));
    state = s.state;
    prev = t;
  }
  const Tensor probs = nn::concat_cols(picked);
  return nn::scale(nn::sum(nn::log(nn::add_scalar(probs, kProbFloor))), -1.0 / static_cast<double>(targets.size()));
}

std::pair<std::size_t, std::size_t> PointerGeneratorModel::token_hits(const TokenSeq& post, const TokenSeq& latent,
                                                                      const TokenSeq& response) const {
  nn::NoGradGuard ng;
  const Encoded enc = encode(post, latent);
  const IdSeq targets = target_ids(enc, response);
  Tensor state = enc.init_state;
  int prev = Vocabulary::kBos;
  std::size_t hits = 0;
  for (int t : targets) {
    Step s = step(enc, state, prev);
    hits += static_cast<int>(nn::argmax_rows(s.dist)[0]) == t;
    state = s.state;
    prev = t;
  }
  return {hits, targets.size()};
}

Generation PointerGeneratorModel::decode(const TokenSeq& post, const TokenSeq& latent,
                                         const DecodeOptions& opts) const {
  nn::NoGradGuard ng;
  const Encoded enc = encode(post, latent);
  BeamOptions bo;
  bo.beam_size = opts.beam_size;
  bo.max_len = opts.max_len;
  bo.eos = Vocabulary::kEos;
  bo.length_normalize = opts.length_normalize;
  auto best = beam_search(
      enc.init_state,
      [&](const Tensor& state, const std::vector<int>& toks) {
        Step s = step(enc, state, toks.empty() ? Vocabulary::kBos : toks.back(), opts.forced_p_gen);
        std::vector<double> lp(s.dist.values());
        for (double& x : lp) x = std::log(x);
        return std::make_pair(s.state, mask_specials(std::move(lp)));
      },
      bo);
  Generation g;
  g.ids = best.tokens;
  g.log_prob = best.log_prob;
  for (int id : g.ids)
    g.tokens.push_back(id >= static_cast<int>(vocab_.size()) ? enc.oov.at(static_cast<std::size_t>(id) - vocab_.size())
                                                             : vocab_.token(id));
  return g;
}

// ---------------------------------------------------------------------------
// Concatenated-input Transformer

ConcatTransformerModel::ConcatTransformerModel(Vocabulary vocab, PosTagSet tags, const ConcatTransformerConfig& cfg)
    : vocab_(std::move(vocab)), tags_(std::move(tags)), cfg_(cfg) {
  if (tags_.size() == 0) throw ConfigError("concatenated-input model needs a tag set");
  nn::Rng rng(cfg.seed);
  encoder_ = nn::TransformerEncoder(params_, "encoder", vocab_.size() + 1 + tags_.size(), cfg.encoder, rng);
  decoder_ = nn::TransformerDecoder(params_, "decoder", vocab_.size(), cfg.decoder, rng);
}

nlohmann::json ConcatTransformerModel::config() const {
  return {{"type", "concat-transformer"}, {"vocabulary", regular_tokens(vocab_)}, {"tags", tags_.tags()},
          {"encoder", cfg_.encoder},        {"decoder", cfg_.decoder},                {"max_input_len", cfg_.max_input_len},
          {"seed", cfg_.seed}};
}

IdSeq ConcatTransformerModel::input_ids(const TokenSeq& post, const TokenSeq& pos) const {
  if (post.empty()) throw EmptyInput("empty post");
  const std::size_t len = post.size() + 1 + pos.size();
  if (len > cfg_.max_input_len)
    throw InputTooLong("input of " + std::to_string(len) + " ids exceeds " + std::to_string(cfg_.max_input_len));
  IdSeq ids = vocab_.encode(post).ids;
  ids.push_back(sep_id());
  for (const auto& t : pos) ids.push_back(sep_id() + 1 + tags_.id(t));
  return ids;
}

Tensor ConcatTransformerModel::encode(const TokenSeq& post, const TokenSeq& pos) const {
  return encoder_(input_ids(post, pos));
}

Tensor ConcatTransformerModel::log_probs(const Tensor& memory, const IdSeq& targets) const {
  if (targets.empty()) throw EmptyInput("no target positions");
  IdSeq prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), targets.begin(), targets.end() - 1);
  return nn::log_softmax(decoder_(memory, prefix));
}

namespace {

IdSeq response_targets(const Vocabulary& v, const TokenSeq& response) {
  IdSeq ids = v.encode(response).ids;
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace

Tensor ConcatTransformerModel::loss(const TokenSeq& post, const TokenSeq& pos, const TokenSeq& response) const {
  const IdSeq targets = response_targets(vocab_, response);
  return nn::scale(nn::nll(log_probs(encode(post, pos), targets), targets), 1.0 / static_cast<double>(targets.size()));
}

std::pair<std::size_t, std::size_t> ConcatTransformerModel::token_hits(const TokenSeq& post, const TokenSeq& pos,
                                                                       const TokenSeq& response) const {
  nn::NoGradGuard ng;
  const IdSeq targets = response_targets(vocab_, response);
  const auto pred = nn::argmax_rows(log_probs(encode(post, pos), targets));
  std::size_t hits = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) hits += static_cast<int>(pred[t]) == targets[t];
  return {hits, targets.size()};
}

Generation ConcatTransformerModel::decode(const TokenSeq& post, const TokenSeq& pos, const DecodeOptions& opts) const {
  nn::NoGradGuard ng;
  const Tensor memory = encode(post, pos);
  BeamOptions bo;
  bo.beam_size = opts.beam_size;
  bo.max_len = opts.max_len;
  bo.eos = Vocabulary::kEos;
  bo.length_normalize = opts.length_normalize;
  struct Empty {};
  auto best = beam_search(
      Empty{},
      [&](const Empty&, const std::vector<int>& toks) {
        IdSeq slots = toks;
        slots.push_back(Vocabulary::kEos);  // placeholder for the predicted position
        const Tensor lp = log_probs(memory, slots);
        std::vector<double> row(lp.values().end() - static_cast<long>(lp.cols()), lp.values().end());
        return std::make_pair(Empty{}, mask_specials(std::move(row)));
      },
      bo);
  Generation g;
  g.ids = best.tokens;
  g.log_prob = best.log_prob;
  g.tokens = vocab_.decode(g.ids);
  return g;
}

// ---------------------------------------------------------------------------
// Training and checkpoints

double teacher_forced_accuracy(const DialogueGenerator& model, const std::vector<GeneratorExample>& examples) {
  std::size_t hits = 0, total = 0;
  for (const auto& e : examples) {
    const auto [h, n] = model.token_hits(e.post, e.latent, e.response);
    hits += h;
    total += n;
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

std::vector<EpochStats> pretrain_generator(DialogueGenerator& model, const std::vector<GeneratorExample>& examples,
                                           const PretrainOptions& opts) {
  return train_epochs(
      model.params(), examples.size(), opts,
      [&](std::size_t i) { return model.loss(examples[i].post, examples[i].latent, examples[i].response); },
      [&] { return teacher_forced_accuracy(model, examples); });
}

std::unique_ptr<DialogueGenerator> make_generator(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  const Vocabulary vocab = Vocabulary::from_tokens(j.at("vocabulary").get<TokenSeq>());
  if (type == "pointer-generator") {
    PointerGeneratorConfig c;
    c.embed_dim = j.at("embed_dim");
    c.enc_hidden = j.at("enc_hidden");
    c.dec_hidden = j.at("dec_hidden");
    c.attn_dim = j.at("attn_dim");
    c.seed = j.at("seed");
    return std::make_unique<PointerGeneratorModel>(vocab, c);
  }
  if (type == "concat-transformer") {
    ConcatTransformerConfig c;
    c.encoder = j.at("encoder").get<nn::TransformerConfig>();
    c.decoder = j.at("decoder").get<nn::TransformerConfig>();
    c.max_input_len = j.at("max_input_len");
    c.seed = j.at("seed");
    return std::make_unique<ConcatTransformerModel>(vocab, PosTagSet(j.at("tags").get<TokenSeq>()), c);
  }
  throw ConfigError("unknown generator type '" + type + "'");
}

void save_generator(const DialogueGenerator& model, const std::filesystem::path& path, const nlohmann::json& state) {
  nn::save_checkpoint(path, model.config(), model.params(), state);
}

std::unique_ptr<DialogueGenerator> load_generator(const std::filesystem::path& path, nlohmann::json* state) {
  const auto doc = nn::read_checkpoint(path);
  auto model = make_generator(doc.at("model"));
  nn::parameters_from_json(doc.at("parameters"), model->params());
  if (state) *state = doc.at("state");
  return model;
}

}  // namespace latgen
