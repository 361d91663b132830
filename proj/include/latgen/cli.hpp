#pragma once

// Command-line driver. A run is described by a JSON config (plus --set
// overrides) and works inside one directory:
//
//   vocab.txt, tags.txt, *_candidates.jsonl, *_labels.tsv   prepare
//   predictor.ckpt.json, generator.ckpt.json, *_curve.csv     pretrain
//   joint/                                                    train-joint
//   generations.tsv                                           generate
//   report.json, curves/                                      evaluate

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/corpus.hpp"
#include "latgen/eval.hpp"
#include "latgen/generator.hpp"
#include "latgen/nn/optim.hpp"
#include "latgen/nn/transformer.hpp"
#include "latgen/predictor.hpp"
#include "latgen/rl.hpp"

namespace latgen::cli {

struct TrainSection {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  nn::LrSchedule schedule;
  double clip_norm = 5.0;
  double stop_at_accuracy = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  JointVariant variant = JointVariant::LatentSentence;
  std::filesystem::path corpus;
  std::filesystem::path work_dir;

  TokenizeScheme scheme = TokenizeScheme::Whitespace;
  std::size_t vocab_max_size = 50000;
  std::size_t vocab_min_freq = 1;

  std::size_t clusters = 0;             // C, sentence variant
  std::size_t sentence_candidates = 0;  // K_s
  std::size_t pos_candidates = 0;       // K_p, POS variants
  std::size_t kmeans_iters = 100;
  std::size_t workers = 1;

  // Predictor
  std::size_t pred_embed_dim = 64;
  std::size_t pred_hidden = 64;
  std::size_t pred_mlp_hidden = 64;
  nn::TransformerConfig pred_encoder;
  nn::TransformerConfig pred_decoder;
  TrainSection predictor_train;

  // Generator
  PointerGeneratorConfig pointer;
  ConcatTransformerConfig concat;
  TrainSection generator_train;

  JointTrainConfig joint;

  // Inference
  DecodeOptions decode;
  ChooseMode choose = ChooseMode::Argmax;
  double temperature = 1.0;
  DecodeMode pos_mode = DecodeMode::Greedy;

  bool smoothing = false;

  nlohmann::json raw;  // the merged config as validated
};

/// Defaults for a variant; "seed" and "paths.corpus" are null and must be set.
nlohmann::json default_config(JointVariant variant);

/// Applies "a.b.c=value"; value is parsed as JSON, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Merges `user` over the variant defaults and validates. Unknown keys,
/// missing required fields and inconsistent latent-space sizes throw
/// ConfigError.
RunConfig parse_config(const nlohmann::json& user);

nlohmann::json read_config_file(const std::filesystem::path& path);

struct WorkPaths {
  explicit WorkPaths(const std::filesystem::path& root);
  std::filesystem::path root, vocab, tags;
  std::filesystem::path sentence_candidates, sentence_labels, pos_candidates, pos_labels;
  std::filesystem::path predictor, generator, predictor_curve, generator_curve;
  std::filesystem::path joint_dir, joint_predictor, joint_generator, joint_progress, joint_events, joint_edit_distance,
      joint_reward;
  std::filesystem::path generations, report, curves_dir;
};

void cmd_prepare(const RunConfig& cfg, std::ostream& out);

enum class PretrainTarget { Predictor, Generator, Both };
PretrainTarget parse_pretrain_target(const std::string& s);
void cmd_pretrain(const RunConfig& cfg, PretrainTarget which, std::ostream& out);

/// Fine-tunes from the pretrained checkpoints, or continues a previous joint
/// run when `resume` is set and its progress file exists.
std::vector<EpochSummary> cmd_train_joint(const RunConfig& cfg, bool resume, std::ostream& out);

enum class CheckpointSource { Auto, Pretrained, Joint };
CheckpointSource parse_checkpoint_source(const std::string& s);

struct GenerateArgs {
  std::optional<std::filesystem::path> input;   // defaults to the config corpus
  std::optional<std::filesystem::path> output;  // defaults to generations.tsv
  CheckpointSource checkpoints = CheckpointSource::Auto;
};
std::vector<GenerationRecord> cmd_generate(const RunConfig& cfg, const GenerateArgs& args, std::ostream& out);

struct EvaluateArgs {
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> dump;
  std::optional<std::filesystem::path> output;
  std::map<std::size_t, std::filesystem::path> sweep;  // K_p -> dump
};
EvalReport cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out);

/// Full command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace latgen::cli
