#pragma once

// Response generators conditioned on a post and a latent sequence.
//
// PointerGeneratorModel: separate biGRU encoders for the post and the latent
// sentence, a GRU decoder with additive attention over both (the previous
// step's context vectors are fed back with the input embedding), and a copy
// switch that mixes the vocabulary distribution with copy mass from the
// latent sentence:
//   P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i : z_i = w} a_i
// over the vocabulary extended with the latent sentence's OOV tokens.
//
// ConcatTransformerModel: a Transformer encoder-decoder reading
// [post, SEP, tags] where tags live in their own id range after SEP.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/corpus.hpp"
#include "latgen/nn/layers.hpp"
#include "latgen/nn/transformer.hpp"
#include "latgen/training.hpp"

namespace latgen {

/// e_i = v^T tanh(W_h h_i + W_s s + b), alpha = softmax(e), c = sum_i alpha_i h_i.
struct AttentionLayer {
  AttentionLayer() = default;
  AttentionLayer(nn::ParameterSet& ps, const std::string& name, std::size_t state_dim, std::size_t query_dim,
                 std::size_t attn_dim, nn::Rng& rng);

  /// W_h h_i for every row, reusable across decoder steps.
  nn::Tensor project(const nn::Tensor& states) const { return nn::matmul(states, w_h); }

  struct Result {
    nn::Tensor weights;  // 1 x L
    nn::Tensor context;  // 1 x state_dim
  };
  Result operator()(const nn::Tensor& states, const nn::Tensor& projected, const nn::Tensor& query) const;
  Result operator()(const nn::Tensor& states, const nn::Tensor& query) const {
    return (*this)(states, project(states), query);
  }

  nn::Tensor w_h, w_s, b, v;
};

/// Plain-value form of the extended distribution.
struct ExtendedVocabDistribution {
  std::vector<double> preset;  // over the vocabulary
  std::vector<double> oov;     // over the latent sentence's OOV tokens
  double p_gen = 0.0;
  double l_copy = 0.0;  // 1 - p_gen

  double total() const;
  double at(std::size_t ext_id) const;
};

/// Mixes a vocabulary distribution with copy attention over latent positions
/// whose extended ids are `latent_ext`.
ExtendedVocabDistribution mix_copy(const std::vector<double>& p_vocab, const std::vector<double>& copy_weights,
                                   const IdSeq& latent_ext, std::size_t num_oov, double p_gen);

struct DecodeOptions {
  std::size_t beam_size = 4;
  std::size_t max_len = 20;
  bool length_normalize = true;
  std::optional<double> forced_p_gen;  // pointer model only
};

struct Generation {
  TokenSeq tokens;
  IdSeq ids;  // extended ids for the pointer model, EOS excluded
  double log_prob = 0.0;
};

/// Interface used by pretraining, joint training and the CLI.
class DialogueGenerator {
 public:
  virtual ~DialogueGenerator() = default;

  virtual nlohmann::json config() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;

  /// Mean teacher-forced negative log-likelihood of response + EOS.
  virtual nn::Tensor loss(const TokenSeq& post, const TokenSeq& latent, const TokenSeq& response) const = 0;
  /// Teacher-forced argmax hits and positions (EOS included).
  virtual std::pair<std::size_t, std::size_t> token_hits(const TokenSeq& post, const TokenSeq& latent,
                                                         const TokenSeq& response) const = 0;
  virtual Generation decode(const TokenSeq& post, const TokenSeq& latent, const DecodeOptions& opts) const = 0;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 protected:
  nn::ParameterSet params_;
};

struct PointerGeneratorConfig {
  std::size_t embed_dim = 64;
  std::size_t enc_hidden = 64;
  std::size_t dec_hidden = 64;
  std::size_t attn_dim = 64;
  std::uint64_t seed = 1;
};

class PointerGeneratorModel final : public DialogueGenerator {
 public:
  PointerGeneratorModel(Vocabulary vocab, const PointerGeneratorConfig& cfg);

  nlohmann::json config() const override;
  const Vocabulary& vocabulary() const override { return vocab_; }

  struct Encoded {
    nn::Tensor post_states, post_proj;
    nn::Tensor latent_states, latent_proj;
    nn::Tensor init_state;  // decoder state before the first step
    IdSeq latent_ext;  // extended id per latent position
    TokenSeq oov;      // latent OOV tokens in first-occurrence order
  };
  Encoded encode(const TokenSeq& post, const TokenSeq& latent) const;

  struct Step {
    nn::Tensor state;         // [s_t, c^post_t, c^latent_t]; contexts feed the next input
    nn::Tensor p_vocab;       // 1 x V
    nn::Tensor copy_weights;  // 1 x L, attention over the latent sentence
    nn::Tensor p_gen;         // 1 x 1
    nn::Tensor l_copy;        // 1 x 1, 1 - p_gen
    nn::Tensor dist;          // 1 x (V + |oov|)
  };
  /// One decoder step from `prev_state` after emitting extended id `prev`.
  Step step(const Encoded& enc, const nn::Tensor& prev_state, int prev,
            std::optional<double> forced_p_gen = {}) const;

  /// Extended target ids for a response (OOV tokens map to their latent copy
  /// slot when present, UNK otherwise), EOS appended.
  IdSeq target_ids(const Encoded& enc, const TokenSeq& response) const;

  nn::Tensor loss(const TokenSeq& post, const TokenSeq& latent, const TokenSeq& response) const override;
  std::pair<std::size_t, std::size_t> token_hits(const TokenSeq& post, const TokenSeq& latent,
                                                 const TokenSeq& response) const override;
  Generation decode(const TokenSeq& post, const TokenSeq& latent, const DecodeOptions& opts) const override;

  const PointerGeneratorConfig& cfg() const { return cfg_; }

 private:
  Vocabulary vocab_;
  PointerGeneratorConfig cfg_;
  nn::Embedding embed_;
  nn::BiGRU post_encoder_, latent_encoder_;
  nn::Linear init_;
  nn::GRUCell decoder_;
  AttentionLayer attn_post_, attn_latent_;
  nn::Linear out_;
  nn::Linear gen_;  // W_gen
};

struct ConcatTransformerConfig {
  nn::TransformerConfig encoder{32, 4, 2, 64};
  nn::TransformerConfig decoder{32, 4, 2, 64};
  std::size_t max_input_len = 128;
  std::uint64_t seed = 1;
};

class ConcatTransformerModel final : public DialogueGenerator {
 public:
  ConcatTransformerModel(Vocabulary vocab, PosTagSet tags, const ConcatTransformerConfig& cfg);

  nlohmann::json config() const override;
  const Vocabulary& vocabulary() const override { return vocab_; }
  const PosTagSet& tagset() const { return tags_; }

  int sep_id() const { return static_cast<int>(vocab_.size()); }
  /// [post ids, SEP, tag ids]; throws InputTooLong past max_input_len.
  IdSeq input_ids(const TokenSeq& post, const TokenSeq& pos) const;

  /// Log-probabilities (T x V) for each position of `targets` given the prefix.
  nn::Tensor log_probs(const nn::Tensor& memory, const IdSeq& targets) const;
  nn::Tensor encode(const TokenSeq& post, const TokenSeq& pos) const;

  nn::Tensor loss(const TokenSeq& post, const TokenSeq& pos, const TokenSeq& response) const override;
  std::pair<std::size_t, std::size_t> token_hits(const TokenSeq& post, const TokenSeq& pos,
                                                 const TokenSeq& response) const override;
  Generation decode(const TokenSeq& post, const TokenSeq& pos, const DecodeOptions& opts) const override;

  const ConcatTransformerConfig& cfg() const { return cfg_; }

 private:
  Vocabulary vocab_;
  PosTagSet tags_;
  ConcatTransformerConfig cfg_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
};

struct GeneratorExample {
  TokenSeq post;
  TokenSeq latent;
  TokenSeq response;
};

/// Teacher-forced pretraining; accuracy is teacher-forced token accuracy.
std::vector<EpochStats> pretrain_generator(DialogueGenerator& model, const std::vector<GeneratorExample>& examples,
                                           const PretrainOptions& opts);

double teacher_forced_accuracy(const DialogueGenerator& model, const std::vector<GeneratorExample>& examples);

void save_generator(const DialogueGenerator& model, const std::filesystem::path& path,
                    const nlohmann::json& state = nlohmann::json::object());
std::unique_ptr<DialogueGenerator> load_generator(const std::filesystem::path& path, nlohmann::json* state = nullptr);
std::unique_ptr<DialogueGenerator> make_generator(const nlohmann::json& config);

}  // namespace latgen
