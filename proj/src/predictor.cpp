#include "latgen/predictor.hpp"

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

void check_post(const IdSeq& post) {
  if (post.empty()) throw EmptyInput("empty post");
}

constexpr double kMasked = -1e9;

}  // namespace

// ---------------------------------------------------------------------------
// Classifiers

std::vector<double> LatentClassifier::distribution(const IdSeq& post) const {
  nn::NoGradGuard ng;
  return nn::softmax(logits(post)).values();
}

Tensor LatentClassifier::log_prob(const IdSeq& post, std::size_t index) const {
  if (index >= num_classes()) throw LabelError("class " + std::to_string(index) + " out of range");
  return nn::pick(nn::log_softmax(logits(post)), 0, index);
}

LatentSentencePredictor::LatentSentencePredictor(const SentencePredictorConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size == 0 || cfg.num_classes == 0) throw ConfigError("predictor needs a vocabulary and classes");
  nn::Rng rng(cfg.seed);
  embed_ = nn::Embedding(params_, "embed", cfg.vocab_size, cfg.embed_dim, nn::Init::Uniform, rng);
  encoder_ = nn::BiGRU(params_, "encoder", cfg.embed_dim, cfg.hidden, nn::Init::Uniform, rng);
  classifier_ = nn::MLP(params_, "classifier", {2 * cfg.hidden, cfg.mlp_hidden, cfg.mlp_hidden, cfg.num_classes},
                        nn::Init::Uniform, rng);
}

Tensor LatentSentencePredictor::logits(const IdSeq& post) const {
  check_post(post);
  return classifier_(encoder_(embed_(post)).final);
}

nlohmann::json LatentSentencePredictor::config() const {
  return {{"type", "sentence"},           {"vocab_size", cfg_.vocab_size}, {"num_classes", cfg_.num_classes},
          {"embed_dim", cfg_.embed_dim},   {"hidden", cfg_.hidden},         {"mlp_hidden", cfg_.mlp_hidden},
          {"seed", cfg_.seed}};
}

LatentPosSampler::LatentPosSampler(const PosSamplerConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size == 0 || cfg.num_classes == 0) throw ConfigError("predictor needs a vocabulary and classes");
  nn::Rng rng(cfg.seed);
  encoder_ = nn::TransformerEncoder(params_, "encoder", cfg.vocab_size, cfg.encoder, rng);
  classifier_ =
      nn::MLP(params_, "classifier", {cfg.encoder.dim, cfg.mlp_hidden, cfg.num_classes}, nn::Init::ScaledNormal, rng);
}

Tensor LatentPosSampler::logits(const IdSeq& post) const {
  check_post(post);
  const std::unique_ptr<bool[]> flags(new bool[post.size()]);
  std::size_t last = post.size();
  for (std::size_t i = 0; i < post.size(); ++i) {
    flags[i] = post[i] == Vocabulary::kPad;
    if (!flags[i]) last = i;
  }
  if (last == post.size()) throw EmptyInput("post contains only padding");
  const Tensor h = encoder_(post, std::span<const bool>(flags.get(), post.size()));
  return classifier_(nn::slice_rows(h, last, 1));
}

nlohmann::json LatentPosSampler::config() const {
  return {{"type", "pos-sampler"},        {"vocab_size", cfg_.vocab_size}, {"num_classes", cfg_.num_classes},
          {"encoder", cfg_.encoder},       {"mlp_hidden", cfg_.mlp_hidden}, {"seed", cfg_.seed}};
}

std::unique_ptr<LatentClassifier> make_classifier(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "sentence") {
    SentencePredictorConfig c;
    c.vocab_size = j.at("vocab_size");
    c.num_classes = j.at("num_classes");
    c.embed_dim = j.at("embed_dim");
    c.hidden = j.at("hidden");
    c.mlp_hidden = j.at("mlp_hidden");
    c.seed = j.at("seed");
    return std::make_unique<LatentSentencePredictor>(c);
  }
  if (type == "pos-sampler") {
    PosSamplerConfig c;
    c.vocab_size = j.at("vocab_size");
    c.num_classes = j.at("num_classes");
    c.encoder = j.at("encoder").get<nn::TransformerConfig>();
    c.mlp_hidden = j.at("mlp_hidden");
    c.seed = j.at("seed");
    return std::make_unique<LatentPosSampler>(c);
  }
  throw ConfigError("unknown predictor type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Choosing a latent

ChooseMode parse_choose_mode(const std::string& s) {
  if (s == "argmax") return ChooseMode::Argmax;
  if (s == "sample") return ChooseMode::Sample;
  throw ConfigError("unknown selection mode '" + s + "' (argmax|sample)");
}

LatentDecision choose_latent(const std::vector<double>& dist, ChooseMode mode, double temperature, nn::Rng& rng) {
  if (dist.empty()) throw EmptyInput("empty distribution");
  LatentDecision d;
  if (mode == ChooseMode::Argmax) {
    d.index = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  } else {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    std::vector<double> w(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) w[i] = dist[i] > 0.0 ? std::pow(dist[i], 1.0 / temperature) : 0.0;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double acc = 0.0;
    d.index = dist.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      acc += w[i];
      d.index = i;
      if (r < acc) break;
    }
  }
  d.log_prob = std::log(dist[d.index]);
  return d;
}

LatentDecision choose_latent(const std::vector<double>& dist, ChooseMode mode, double temperature,
                             std::uint64_t seed) {
  nn::Rng rng(seed);
  return choose_latent(dist, mode, temperature, rng);
}

// ---------------------------------------------------------------------------
// POS generator

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "greedy") return DecodeMode::Greedy;
  if (s == "beam") return DecodeMode::Beam;
  if (s == "sample") return DecodeMode::Sample;
  throw ConfigError("unknown decode mode '" + s + "' (greedy|beam|sample)");
}

LatentPosGenerator::LatentPosGenerator(const PosGeneratorConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size == 0 || cfg.num_tags == 0) throw ConfigError("POS generator needs words and tags");
  nn::Rng rng(cfg.seed);
  encoder_ = nn::TransformerEncoder(params_, "encoder", cfg.vocab_size, cfg.encoder, rng);
  decoder_ = nn::TransformerDecoder(params_, "decoder", target_size(), cfg.decoder, rng);
}

nlohmann::json LatentPosGenerator::config() const {
  return {{"type", "pos-generator"}, {"vocab_size", cfg_.vocab_size}, {"num_tags", cfg_.num_tags},
          {"encoder", cfg_.encoder},  {"decoder", cfg_.decoder},        {"seed", cfg_.seed}};
}

Tensor LatentPosGenerator::encode(const IdSeq& post) const {
  check_post(post);
  return encoder_(post);
}

Tensor LatentPosGenerator::log_probs(const Tensor& memory, const IdSeq& ids) const {
  if (ids.empty()) throw EmptyInput("no target positions");
  IdSeq prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), ids.begin(), ids.end() - 1);
  const Tensor logits = decoder_(memory, prefix);
  std::vector<double> mask(logits.size(), 0.0);
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (int s = 0; s < Vocabulary::kNumSpecials; ++s)
      if (s != Vocabulary::kEos) mask[r * logits.cols() + static_cast<std::size_t>(s)] = kMasked;
  return nn::log_softmax(nn::add(logits, Tensor::from(logits.rows(), logits.cols(), std::move(mask))));
}

Tensor LatentPosGenerator::score(const IdSeq& post, const IdSeq& ids) const {
  if (ids.empty()) throw EmptyInput("nothing to score");
  return nn::scale(nn::nll(log_probs(encode(post), ids), ids), -1.0);
}

LatentDecision LatentPosGenerator::generate(const IdSeq& post, const PosTagSet& tags, const PosGenerateOptions& opts,
                                            nn::Rng* rng) const {
  nn::NoGradGuard ng;
  const Tensor memory = encode(post);
  LatentDecision d;
  d.kind = DecisionKind::PosGenerated;

  auto next_log_probs = [&](const IdSeq& prefix_ids) {
    IdSeq with_slot = prefix_ids;
    with_slot.push_back(Vocabulary::kEos);  // placeholder for the position being predicted
    const Tensor lp = log_probs(memory, with_slot);
    std::vector<double> row(lp.values().end() - static_cast<long>(lp.cols()), lp.values().end());
    for (int s = 0; s < Vocabulary::kNumSpecials; ++s)
      if (s != Vocabulary::kEos) row[static_cast<std::size_t>(s)] = -std::numeric_limits<double>::infinity();
    return row;
  };

  if (opts.mode == DecodeMode::Beam) {
    BeamOptions bo;
    bo.beam_size = opts.beam_size;
    bo.max_len = opts.max_len;
    bo.eos = Vocabulary::kEos;
    struct Empty {};
    auto best = beam_search(
        Empty{}, [&](const Empty&, const std::vector<int>& toks) { return std::make_pair(Empty{}, next_log_probs(toks)); },
        bo);
    d.ids = best.tokens;
    if (best.finished) d.ids.push_back(Vocabulary::kEos);
    d.step_log_probs = best.step_log_probs;
  } else {
    if (opts.mode == DecodeMode::Sample && !rng) throw ConfigError("sampling needs a random generator");
    for (std::size_t t = 0; t < opts.max_len; ++t) {
      const auto row = next_log_probs(d.ids);
      std::size_t pick = 0;
      if (opts.mode == DecodeMode::Greedy) {
        pick = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      } else {
        std::vector<double> p(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) p[i] = std::exp(row[i]);
        pick = choose_latent(p, ChooseMode::Sample, opts.temperature, *rng).index;
      }
      d.ids.push_back(static_cast<int>(pick));
      d.step_log_probs.push_back(row[pick]);
      if (static_cast<int>(pick) == Vocabulary::kEos) break;
    }
  }
  d.log_prob = std::accumulate(d.step_log_probs.begin(), d.step_log_probs.end(), 0.0);
  for (int id : d.ids)
    if (id != Vocabulary::kEos) d.sequence.push_back(tags.tags().at(static_cast<std::size_t>(id - Vocabulary::kNumSpecials)));
  return d;
}

IdSeq pos_target_ids(const PosTagSet& tags, const TokenSeq& pos) {
  IdSeq ids;
  for (const auto& t : pos) ids.push_back(Vocabulary::kNumSpecials + tags.id(t));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

// ---------------------------------------------------------------------------
// Pretraining

double classifier_accuracy(const LatentClassifier& model, const std::vector<ClassExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t right = 0;
  for (const auto& e : examples) {
    const auto d = model.distribution(e.post);
    right += static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin()) == e.label;
  }
  return static_cast<double>(right) / static_cast<double>(examples.size());
}

std::vector<EpochStats> pretrain_classifier(LatentClassifier& model, const std::vector<ClassExample>& examples,
                                            const PretrainOptions& opts) {
  for (const auto& e : examples)
    if (e.label >= model.num_classes())
      throw LabelError("label " + std::to_string(e.label) + " >= class count " + std::to_string(model.num_classes()));
  return train_epochs(
      model.params(), examples.size(), opts,
      [&](std::size_t i) {
        const int t[] = {static_cast<int>(examples[i].label)};
        return nn::cross_entropy(model.logits(examples[i].post), t);
      },
      [&] { return classifier_accuracy(model, examples); });
}

std::vector<EpochStats> pretrain_pos_generator(LatentPosGenerator& model, const std::vector<SequenceExample>& examples,
                                               const PretrainOptions& opts) {
  for (const auto& e : examples) {
    if (e.target.empty()) throw EmptyInput("empty POS target");
    for (int id : e.target)
      if (id < 0 || static_cast<std::size_t>(id) >= model.target_size() ||
          (id < Vocabulary::kNumSpecials && id != Vocabulary::kEos))
        throw LabelError("POS target id " + std::to_string(id) + " outside the tag vocabulary");
  }
  auto accuracy = [&] {
    nn::NoGradGuard ng;
    std::size_t right = 0, total = 0;
    for (const auto& e : examples) {
      const auto pred = nn::argmax_rows(model.log_probs(model.encode(e.post), e.target));
      for (std::size_t t = 0; t < e.target.size(); ++t) right += static_cast<int>(pred[t]) == e.target[t];
      total += e.target.size();
    }
    return total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
  };
  return train_epochs(
      model.params(), examples.size(), opts,
      [&](std::size_t i) {
        const auto& e = examples[i];
        return nn::scale(nn::nll(model.log_probs(model.encode(e.post), e.target), e.target),
                         1.0 / static_cast<double>(e.target.size()));
      },
      accuracy);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_classifier(const LatentClassifier& model, const std::filesystem::path& path, const nlohmann::json& state) {
  nn::save_checkpoint(path, model.config(), model.params(), state);
}

std::unique_ptr<LatentClassifier> load_classifier(const std::filesystem::path& path, nlohmann::json* state) {
  const auto doc = nn::read_checkpoint(path);
  auto model = make_classifier(doc.at("model"));
  nn::parameters_from_json(doc.at("parameters"), model->params());
  if (state) *state = doc.at("state");
  return model;
}

void save_pos_generator(const LatentPosGenerator& model, const std::filesystem::path& path,
                        const nlohmann::json& state) {
  nn::save_checkpoint(path, model.config(), model.params(), state);
}

std::unique_ptr<LatentPosGenerator> load_pos_generator(const std::filesystem::path& path, nlohmann::json* state) {
  const auto doc = nn::read_checkpoint(path);
  const auto& m = doc.at("model");
  if (m.value("type", "") != "pos-generator") throw ConfigError(path.string() + " is not a POS generator checkpoint");
  PosGeneratorConfig c;
  c.vocab_size = m.at("vocab_size");
  c.num_tags = m.at("num_tags");
  c.encoder = m.at("encoder").get<nn::TransformerConfig>();
  c.decoder = m.at("decoder").get<nn::TransformerConfig>();
  c.seed = m.at("seed");
  auto model = std::make_unique<LatentPosGenerator>(c);
  nn::parameters_from_json(doc.at("parameters"), model->params());
  if (state) *state = doc.at("state");
  return model;
}

}  // namespace latgen
