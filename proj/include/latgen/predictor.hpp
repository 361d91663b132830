#pragma once

// Latent sequence predictors: classifiers over a candidate set (biGRU + MLP
// for sentences, Transformer encoder + MLP for POS sequences) and an
// encoder-decoder that writes a POS sequence tag by tag.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/corpus.hpp"
#include "latgen/latentspace.hpp"
#include "latgen/nn/layers.hpp"
#include "latgen/nn/optim.hpp"
#include "latgen/nn/transformer.hpp"
#include "latgen/training.hpp"

namespace latgen {

struct LatentDecision {
  DecisionKind kind = DecisionKind::Sentence;
  std::size_t index = 0;  // candidate label, sampled kinds only
  TokenSeq sequence;      // the realized latent sentence or tags
  IdSeq ids;              // generated kind: decoder ids, EOS included when emitted
  double log_prob = 0.0;
  std::vector<double> step_log_probs;  // generated kind: one per id
};

/// A model scoring every entry of a fixed candidate set for a post.
class LatentClassifier {
 public:
  virtual ~LatentClassifier() = default;

  virtual nn::Tensor logits(const IdSeq& post) const = 0;  // 1 x num_classes
  virtual std::size_t num_classes() const = 0;
  virtual nlohmann::json config() const = 0;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// softmax(logits), computed without recording a graph.
  std::vector<double> distribution(const IdSeq& post) const;
  nn::Tensor log_prob(const IdSeq& post, std::size_t index) const;

 protected:
  nn::ParameterSet params_;
};

struct SentencePredictorConfig {
  std::size_t vocab_size = 0;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden = 64;
  std::size_t mlp_hidden = 64;
  std::uint64_t seed = 1;
};

/// Embedding -> biGRU -> 3-layer MLP on [fwd_final; bwd_final].
class LatentSentencePredictor final : public LatentClassifier {
 public:
  explicit LatentSentencePredictor(const SentencePredictorConfig& cfg);
  nn::Tensor logits(const IdSeq& post) const override;
  std::size_t num_classes() const override { return cfg_.num_classes; }
  nlohmann::json config() const override;
  const SentencePredictorConfig& cfg() const { return cfg_; }

 private:
  SentencePredictorConfig cfg_;
  nn::Embedding embed_;
  nn::BiGRU encoder_;
  nn::MLP classifier_;
};

struct PosSamplerConfig {
  std::size_t vocab_size = 0;
  std::size_t num_classes = 0;
  nn::TransformerConfig encoder;
  std::size_t mlp_hidden = 64;
  std::uint64_t seed = 1;
};

/// Transformer encoder -> MLP on the hidden state of the last non-pad position.
class LatentPosSampler final : public LatentClassifier {
 public:
  explicit LatentPosSampler(const PosSamplerConfig& cfg);
  nn::Tensor logits(const IdSeq& post) const override;
  std::size_t num_classes() const override { return cfg_.num_classes; }
  nlohmann::json config() const override;
  const PosSamplerConfig& cfg() const { return cfg_; }

 private:
  PosSamplerConfig cfg_;
  nn::TransformerEncoder encoder_;
  nn::MLP classifier_;
};

/// Builds a classifier from config() output ("type" selects the class).
std::unique_ptr<LatentClassifier> make_classifier(const nlohmann::json& config);

enum class ChooseMode { Argmax, Sample };
ChooseMode parse_choose_mode(const std::string& s);

/// Picks an index from `dist`. Sampling draws from dist^(1/temperature)
/// (renormalized); the recorded log_prob is always log dist[index].
LatentDecision choose_latent(const std::vector<double>& dist, ChooseMode mode, double temperature, nn::Rng& rng);
LatentDecision choose_latent(const std::vector<double>& dist, ChooseMode mode, double temperature,
                             std::uint64_t seed);

struct PosGeneratorConfig {
  std::size_t vocab_size = 0;  // post words
  std::size_t num_tags = 0;    // tag set size; decoder ids are kNumSpecials + tag index
  nn::TransformerConfig encoder;
  nn::TransformerConfig decoder;
  std::uint64_t seed = 1;
};

enum class DecodeMode { Greedy, Beam, Sample };
DecodeMode parse_decode_mode(const std::string& s);

struct PosGenerateOptions {
  DecodeMode mode = DecodeMode::Greedy;
  std::size_t beam_size = 3;
  std::size_t max_len = 20;
  double temperature = 1.0;
};

/// Encoder-decoder over the post producing tags followed by EOS.
class LatentPosGenerator {
 public:
  explicit LatentPosGenerator(const PosGeneratorConfig& cfg);

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nlohmann::json config() const;
  const PosGeneratorConfig& cfg() const { return cfg_; }
  std::size_t target_size() const { return Vocabulary::kNumSpecials + cfg_.num_tags; }

  int tag_id(std::size_t tag_index) const { return static_cast<int>(Vocabulary::kNumSpecials + tag_index); }

  nn::Tensor encode(const IdSeq& post) const;
  /// Log-probabilities (T x target_size) for predicting ids[t] from the
  /// prefix BOS, ids[0..t-1]. Ids other than tags and EOS get -inf mass
  /// (stored as a large negative constant).
  nn::Tensor log_probs(const nn::Tensor& memory, const IdSeq& ids) const;
  /// Sum of log p(ids[t] | prefix); ids may end with EOS.
  nn::Tensor score(const IdSeq& post, const IdSeq& ids) const;

  LatentDecision generate(const IdSeq& post, const PosTagSet& tags, const PosGenerateOptions& opts,
                          nn::Rng* rng = nullptr) const;

 private:
  PosGeneratorConfig cfg_;
  nn::ParameterSet params_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
};

/// Decoder ids for a tag sequence, EOS appended.
IdSeq pos_target_ids(const PosTagSet& tags, const TokenSeq& pos);

/// One training example: the post and its target class.
struct ClassExample {
  IdSeq post;
  std::size_t label = 0;
};

/// Cross-entropy training of a classifier. Returns per-epoch mean loss and
/// training accuracy (accuracy measured after each epoch's updates).
std::vector<EpochStats> pretrain_classifier(LatentClassifier& model, const std::vector<ClassExample>& examples,
                                            const PretrainOptions& opts);

struct SequenceExample {
  IdSeq post;
  IdSeq target;  // EOS-terminated
};

/// Teacher-forced cross-entropy training of the POS generator. Accuracy is
/// teacher-forced token accuracy.
std::vector<EpochStats> pretrain_pos_generator(LatentPosGenerator& model, const std::vector<SequenceExample>& examples,
                                               const PretrainOptions& opts);

double classifier_accuracy(const LatentClassifier& model, const std::vector<ClassExample>& examples);

/// Checkpoint helpers: model config + parameters (+ optional optimizer state).
void save_classifier(const LatentClassifier& model, const std::filesystem::path& path,
                     const nlohmann::json& state = nlohmann::json::object());
std::unique_ptr<LatentClassifier> load_classifier(const std::filesystem::path& path, nlohmann::json* state = nullptr);
void save_pos_generator(const LatentPosGenerator& model, const std::filesystem::path& path,
                        const nlohmann::json& state = nlohmann::json::object());
std::unique_ptr<LatentPosGenerator> load_pos_generator(const std::filesystem::path& path,
                                                       nlohmann::json* state = nullptr);

}  // namespace latgen
