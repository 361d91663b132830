#pragma once

// Joint fine-tuning. The latent predictor is trained with REINFORCE on the
// best F1 between the generated response and the post's reference bag; the
// generator keeps training with cross-entropy toward that best reference,
// conditioned on the sampled latent sequence.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/corpus.hpp"
#include "latgen/generator.hpp"
#include "latgen/latentspace.hpp"
#include "latgen/predictor.hpp"

namespace latgen {

enum class RewardTokenization { Word, Char };
RewardTokenization parse_reward_tokenization(const std::string& s);

struct RewardSpec {
  RewardTokenization tokenization = RewardTokenization::Word;
};

/// Multiset-overlap F1. Empty inputs score 0.
double f1_reward(const TokenSeq& hyp, const TokenSeq& ref, const RewardSpec& spec = {});

struct EpisodeReward {
  double q = 0.0;
  std::size_t best_ref = 0;  // lowest index on ties
};

/// Max F1 over the bag; throws EmptyBag.
EpisodeReward episode_reward(const TokenSeq& generated, const std::vector<TokenSeq>& refs,
                             const RewardSpec& spec = {});

/// Policy over K arms that ignores the post. Handy for checking REINFORCE.
class SoftmaxBandit final : public LatentClassifier {
 public:
  explicit SoftmaxBandit(std::vector<double> initial_logits);
  nn::Tensor logits(const IdSeq& post) const override;
  std::size_t num_classes() const override { return theta_.cols(); }
  nlohmann::json config() const override;

 private:
  nn::Tensor theta_;
};

/// Tolerance for matching a recorded log-probability against the live model.
inline constexpr double kStaleTolerance = 1e-9;

/// Accumulates the gradient of -(q - baseline) * log p(choice | post) into the
/// predictor's parameters and returns that surrogate loss. Throws StaleEpisode
/// when the decision's log_prob no longer matches the model.
double reinforce_select_update(const LatentClassifier& predictor, const IdSeq& post, const LatentDecision& decision,
                               double q, double baseline = 0.0);

/// Same for a generated tag sequence: every emitted position receives the
/// episode return.
double reinforce_generate_update(const LatentPosGenerator& generator, const IdSeq& post,
                                 const LatentDecision& decision, double q, double baseline = 0.0);

enum class JointVariant { LatentSentence, SamplePos, GeneratePos };
JointVariant parse_joint_variant(const std::string& s);
std::string to_string(JointVariant v);
DecisionKind decision_kind(JointVariant v);

enum class BaselineKind { None, MovingAverage };
BaselineKind parse_baseline(const std::string& s);
std::string to_string(BaselineKind b);

struct JointTrainConfig {
  JointVariant variant = JointVariant::LatentSentence;
  std::size_t epochs = 10;
  double predictor_lr = 1e-5;
  double predictor_decay = 0.5;  // multiplies the predictor rate after every epoch
  double generator_lr = 1e-4;
  double clip_norm = 5.0;
  std::size_t episodes_per_step = 8;
  ChooseMode choose = ChooseMode::Sample;
  double temperature = 1.0;
  std::size_t pos_max_len = 20;  // generate-pos
  BaselineKind baseline = BaselineKind::None;
  double baseline_momentum = 0.9;
  DecodeOptions decode;
  RewardSpec reward;
  std::uint64_t seed = 1;
};

struct TrainingEvent {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double mean_q = 0.0;
  double gen_loss = 0.0;
  double pred_lr = 0.0;
  double mean_edit_distance = 0.0;
};
void to_json(nlohmann::json& j, const TrainingEvent& e);
void from_json(const nlohmann::json& j, TrainingEvent& e);

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_q = 0.0;
  double mean_edit_distance = 0.0;
};

/// Everything besides model parameters needed to continue a run.
struct JointProgress {
  std::size_t epoch = 0;  // next epoch to run
  std::size_t step = 0;
  std::string rng;  // serialized engine state
  nlohmann::json predictor_optimizer;
  nlohmann::json generator_optimizer;
  std::optional<double> baseline;
  std::vector<EpochSummary> history;
};
void to_json(nlohmann::json& j, const JointProgress& p);
void from_json(const nlohmann::json& j, JointProgress& p);

/// The latent side of a joint run: a classifier over `sentences` or `pos`
/// candidates, or a tag-sequence generator.
struct JointModels {
  LatentClassifier* classifier = nullptr;
  LatentPosGenerator* pos_generator = nullptr;
  DialogueGenerator* generator = nullptr;
  const SentenceCandidateSet* sentences = nullptr;
  const PosCandidateSet* pos = nullptr;
};

struct JointHooks {
  std::function<void(const TrainingEvent&)> on_event;
  std::function<void(const EpochSummary&, const JointProgress&)> on_epoch;
};

/// Runs epochs [progress.epoch, cfg.epochs). Pairs are visited in a seeded
/// shuffled order; each step rolls out `episodes_per_step` pairs and applies
/// one update to each model.
std::vector<EpochSummary> joint_train(const JointModels& models, const Corpus& corpus, const JointTrainConfig& cfg,
                                      const JointHooks& hooks = {}, std::optional<JointProgress> resume = {});

}  // namespace latgen
