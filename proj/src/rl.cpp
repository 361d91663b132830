#include "latgen/rl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "latgen/error.hpp"
#include "latgen/eval.hpp"
#include "latgen/nn/optim.hpp"

namespace latgen {

using nn::Tensor;

RewardTokenization parse_reward_tokenization(const std::string& s) {
  if (s == "word") return RewardTokenization::Word;
  if (s == "char") return RewardTokenization::Char;
  throw ConfigError("unknown reward tokenization '" + s + "' (word|char)");
}

namespace {

TokenSeq reward_units(const TokenSeq& tokens, RewardTokenization t) {
  if (t == RewardTokenization::Word || tokens.empty()) return tokens;
  const std::string text = join(tokens, "");
  if (text.empty()) return {};
  return tokenize(text, TokenizeScheme::Char);
}

}  // namespace

double f1_reward(const TokenSeq& hyp, const TokenSeq& ref, const RewardSpec& spec) {
  const TokenSeq h = reward_units(hyp, spec.tokenization);
  const TokenSeq r = reward_units(ref, spec.tokenization);
  if (h.empty() || r.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& w : r) ++counts[w];
  std::size_t overlap = 0;
  for (const auto& w : h) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(h.size());
  const double rc = static_cast<double>(overlap) / static_cast<double>(r.size());
  return 2.0 * p * rc / (p + rc);
}

EpisodeReward episode_reward(const TokenSeq& generated, const std::vector<TokenSeq>& refs, const RewardSpec& spec) {
  if (refs.empty()) throw EmptyBag("no references to reward against");
  EpisodeReward best{f1_reward(generated, refs[0], spec), 0};
  for (std::size_t i = 1; i < refs.size(); ++i) {
    const double q = f1_reward(generated, refs[i], spec);
    if (q > best.q) best = {q, i};
  }
  return best;
}

// ---------------------------------------------------------------------------

SoftmaxBandit::SoftmaxBandit(std::vector<double> initial_logits) {
  if (initial_logits.empty()) throw ConfigError("bandit needs at least one arm");
  theta_ = Tensor::row(std::move(initial_logits), true);
  params_.add("theta", theta_);
}

Tensor SoftmaxBandit::logits(const IdSeq&) const { return theta_; }

nlohmann::json SoftmaxBandit::config() const { return {{"type", "bandit"}, {"arms", num_classes()}}; }

namespace {

void check_fresh(double recorded, double live) {
  if (!(std::abs(recorded - live) <= kStaleTolerance))
    throw StaleEpisode("recorded log-probability " + std::to_string(recorded) + " differs from the live model's " +
                       std::to_string(live));
}

}  // namespace

double reinforce_select_update(const LatentClassifier& predictor, const IdSeq& post, const LatentDecision& decision,
                               double q, double baseline) {
  if (decision.kind == DecisionKind::PosGenerated) throw ConfigError("selection update on a generated decision");
  const Tensor log_p = predictor.log_prob(post, decision.index);
  check_fresh(decision.log_prob, log_p.item());
  const Tensor surrogate = nn::scale(log_p, -(q - baseline));
  surrogate.backward();
  return surrogate.item();
}

double reinforce_generate_update(const LatentPosGenerator& generator, const IdSeq& post,
                                 const LatentDecision& decision, double q, double baseline) {
  if (decision.kind != DecisionKind::PosGenerated) throw ConfigError("generation update on a selected decision");
  if (decision.ids.empty()) return 0.0;
  if (decision.step_log_probs.size() != decision.ids.size())
    throw ConfigError("one recorded log-probability per generated id is required");
  const Tensor lp = generator.log_probs(generator.encode(post), decision.ids);
  for (std::size_t t = 0; t < decision.ids.size(); ++t)
    check_fresh(decision.step_log_probs[t], lp.at(t, static_cast<std::size_t>(decision.ids[t])));
  const Tensor surrogate = nn::scale(nn::nll(lp, decision.ids), q - baseline);
  surrogate.backward();
  return surrogate.item();
}

// ---------------------------------------------------------------------------

JointVariant parse_joint_variant(const std::string& s) {
  if (s == "latent-sentence") return JointVariant::LatentSentence;
  if (s == "sample-pos") return JointVariant::SamplePos;
  if (s == "generate-pos") return JointVariant::GeneratePos;
  throw ConfigError("unknown variant '" + s + "' (latent-sentence|sample-pos|generate-pos)");
}

std::string to_string(JointVariant v) {
  switch (v) {
    case JointVariant::LatentSentence: return "latent-sentence";
    case JointVariant::SamplePos: return "sample-pos";
    case JointVariant::GeneratePos: return "generate-pos";
  }
  return "";
}

DecisionKind decision_kind(JointVariant v) {
  switch (v) {
    case JointVariant::LatentSentence: return DecisionKind::Sentence;
    case JointVariant::SamplePos: return DecisionKind::PosSampled;
    case JointVariant::GeneratePos: return DecisionKind::PosGenerated;
  }
  return DecisionKind::Sentence;
}

BaselineKind parse_baseline(const std::string& s) {
  if (s == "none") return BaselineKind::None;
  if (s == "moving-average") return BaselineKind::MovingAverage;
  throw ConfigError("unknown baseline '" + s + "' (none|moving-average)");
}

std::string to_string(BaselineKind b) { return b == BaselineKind::None ? "none" : "moving-average"; }

void to_json(nlohmann::json& j, const TrainingEvent& e) {
  j = {{"step", e.step},       {"epoch", e.epoch},   {"meanQ", e.mean_q},
       {"genLoss", e.gen_loss}, {"predLr", e.pred_lr}, {"meanEditDistance", e.mean_edit_distance}};
}

void from_json(const nlohmann::json& j, TrainingEvent& e) {
  e.step = j.at("step");
  e.epoch = j.at("epoch");
  e.mean_q = j.at("meanQ");
  e.gen_loss = j.at("genLoss");
  e.pred_lr = j.at("predLr");
  e.mean_edit_distance = j.at("meanEditDistance");
}

void to_json(nlohmann::json& j, const JointProgress& p) {
  j = {{"epoch", p.epoch},
       {"step", p.step},
       {"rng", p.rng},
       {"predictor_optimizer", p.predictor_optimizer},
       {"generator_optimizer", p.generator_optimizer},
       {"baseline", p.baseline ? nlohmann::json(*p.baseline) : nlohmann::json()}};
  j["history"] = nlohmann::json::array();
  for (const auto& h : p.history)
    j["history"].push_back({{"epoch", h.epoch}, {"meanQ", h.mean_q}, {"meanEditDistance", h.mean_edit_distance}});
}

void from_json(const nlohmann::json& j, JointProgress& p) {
  p.epoch = j.at("epoch");
  p.step = j.at("step");
  p.rng = j.at("rng");
  p.predictor_optimizer = j.at("predictor_optimizer");
  p.generator_optimizer = j.at("generator_optimizer");
  p.baseline.reset();
  if (!j.at("baseline").is_null()) p.baseline = j.at("baseline").get<double>();
  p.history.clear();
  for (const auto& h : j.at("history"))
    p.history.push_back({h.at("epoch").get<std::size_t>(), h.at("meanQ").get<double>(),
                         h.at("meanEditDistance").get<double>()});
}

namespace {

struct Episode {
  std::size_t pair = 0;
  IdSeq post_ids;
  LatentDecision decision;
  Generation generated;
  EpisodeReward reward;
  std::optional<double> edit_distance;
};

void validate(const JointModels& m, const JointTrainConfig& cfg) {
  if (!m.generator) throw ConfigError("joint training needs a generator");
  if (!(cfg.predictor_lr >= 0.0)) throw ConfigError("predictor learning rate must be non-negative");
  if (cfg.episodes_per_step == 0) throw ConfigError("episodes_per_step must be positive");
  switch (cfg.variant) {
    case JointVariant::LatentSentence:
      if (!m.classifier || !m.sentences) throw ConfigError("latent-sentence needs a classifier and sentence candidates");
      if (m.classifier->num_classes() != m.sentences->size())
        throw ConfigError("classifier has " + std::to_string(m.classifier->num_classes()) + " classes but there are " +
                          std::to_string(m.sentences->size()) + " sentence candidates");
      break;
    case JointVariant::SamplePos:
      if (!m.classifier || !m.pos) throw ConfigError("sample-pos needs a classifier and POS candidates");
      if (m.classifier->num_classes() != m.pos->size())
        throw ConfigError("classifier has " + std::to_string(m.classifier->num_classes()) + " classes but there are " +
                          std::to_string(m.pos->size()) + " POS candidates");
      break;
    case JointVariant::GeneratePos:
      if (!m.pos_generator) throw ConfigError("generate-pos needs a POS generator");
      break;
  }
}

}  // namespace

std::vector<EpochSummary> joint_train(const JointModels& models, const Corpus& corpus, const JointTrainConfig& cfg,
                                      const JointHooks& hooks, std::optional<JointProgress> resume) {
  validate(models, cfg);
  if (corpus.pairs.empty()) throw EmptyInput("empty corpus");
  const nn::ParameterSet& pred_params =
      cfg.variant == JointVariant::GeneratePos ? models.pos_generator->params() : models.classifier->params();
  const nn::ParameterSet& gen_params = models.generator->params();
  nn::Adam pred_opt(pred_params), gen_opt(gen_params);
  nn::Rng rng(cfg.seed);
  JointProgress progress;
  if (resume) {
    progress = *resume;
    std::istringstream(progress.rng) >> rng;
    pred_opt.load_state(progress.predictor_optimizer);
    gen_opt.load_state(progress.generator_optimizer);
  }
  const LexiconTagger tagger = corpus.make_tagger();
  const Vocabulary& vocab = models.generator->vocabulary();
  const DecisionKind kind = decision_kind(cfg.variant);

  auto rollout = [&](std::size_t pair_index) {
    const DialoguePair& pair = corpus.pairs[pair_index];
    Episode e;
    e.pair = pair_index;
    e.post_ids = vocab.encode(pair.post).ids;
    if (cfg.variant == JointVariant::GeneratePos) {
      PosGenerateOptions o;
      o.mode = cfg.choose == ChooseMode::Sample ? DecodeMode::Sample : DecodeMode::Greedy;
      o.max_len = cfg.pos_max_len;
      o.temperature = cfg.temperature;
      e.decision = models.pos_generator->generate(e.post_ids, corpus.tagset, o, &rng);
    } else {
      e.decision = choose_latent(models.classifier->distribution(e.post_ids), cfg.choose, cfg.temperature, rng);
      e.decision.kind = kind;
      e.decision.sequence = kind == DecisionKind::Sentence ? models.sentences->entries[e.decision.index]
                                                           : models.pos->entries[e.decision.index];
    }
    e.generated = models.generator->decode(pair.post, e.decision.sequence, cfg.decode);
    e.reward = episode_reward(e.generated.tokens, pair.responses, cfg.reward);
    if (!e.decision.sequence.empty()) {
      const TokenSeq produced =
          kind == DecisionKind::Sentence ? e.generated.tokens : pos_tag(tagger, corpus.tagset, e.generated.tokens);
      e.edit_distance = normalized_edit_distance(produced, e.decision.sequence);
    }
    return e;
  };

  std::vector<EpochSummary> summaries;
  std::vector<std::size_t> order(corpus.pairs.size());
  for (std::size_t epoch = progress.epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double pred_lr = cfg.predictor_lr * std::pow(cfg.predictor_decay, static_cast<double>(epoch));
    double epoch_q = 0.0, epoch_ed = 0.0;
    std::size_t epoch_ed_count = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.episodes_per_step) {
      const std::size_t end = std::min(order.size(), begin + cfg.episodes_per_step);
      std::vector<Episode> episodes;
      for (std::size_t i = begin; i < end; ++i) episodes.push_back(rollout(order[i]));

      const double n = static_cast<double>(episodes.size());
      const double baseline = cfg.baseline == BaselineKind::MovingAverage ? progress.baseline.value_or(0.0) : 0.0;
      pred_params.zero_grad();
      gen_params.zero_grad();
      double q_sum = 0.0, loss_sum = 0.0, ed_sum = 0.0;
      std::size_t ed_count = 0;
      for (const auto& e : episodes) {
        // Rewards are averaged over the step, so each episode contributes q / n.
        const double q = e.reward.q / n, b = baseline / n;
        if (kind == DecisionKind::PosGenerated)
          reinforce_generate_update(*models.pos_generator, e.post_ids, e.decision, q, b);
        else
          reinforce_select_update(*models.classifier, e.post_ids, e.decision, q, b);
        const DialoguePair& pair = corpus.pairs[e.pair];
        const Tensor loss = models.generator->loss(pair.post, e.decision.sequence, pair.responses[e.reward.best_ref]);
        nn::scale(loss, 1.0 / n).backward();
        q_sum += e.reward.q;
        loss_sum += loss.item();
        if (e.edit_distance) {
          ed_sum += *e.edit_distance;
          ++ed_count;
        }
      }
      if (cfg.clip_norm > 0) {
        pred_params.clip_grad_norm(cfg.clip_norm);
        gen_params.clip_grad_norm(cfg.clip_norm);
      }
      pred_opt.step(pred_lr);
      gen_opt.step(cfg.generator_lr);

      const double mean_q = q_sum / n;
      if (cfg.baseline == BaselineKind::MovingAverage)
        progress.baseline = progress.baseline ? cfg.baseline_momentum * *progress.baseline +
                                                    (1.0 - cfg.baseline_momentum) * mean_q
                                              : mean_q;
      TrainingEvent ev;
      ev.step = progress.step++;
      ev.epoch = epoch;
      ev.mean_q = mean_q;
      ev.gen_loss = loss_sum / n;
      ev.pred_lr = pred_lr;
      ev.mean_edit_distance = ed_count ? ed_sum / static_cast<double>(ed_count) : 0.0;
      if (hooks.on_event) hooks.on_event(ev);
      epoch_q += q_sum;
      epoch_ed += ed_sum;
      epoch_ed_count += ed_count;
    }

    EpochSummary s;
    s.epoch = epoch;
    s.mean_q = epoch_q / static_cast<double>(order.size());
    s.mean_edit_distance = epoch_ed_count ? epoch_ed / static_cast<double>(epoch_ed_count) : 0.0;
    summaries.push_back(s);
    progress.history.push_back(s);
    progress.epoch = epoch + 1;
    std::ostringstream rs;
    rs << rng;
    progress.rng = rs.str();
    progress.predictor_optimizer = pred_opt.state();
    progress.generator_optimizer = gen_opt.state();
    if (hooks.on_epoch) hooks.on_epoch(s, progress);
  }
  return summaries;
}

}  // namespace latgen
