#pragma once

// Automatic metrics: corpus BLEU, n-gram overlap with a latent sentence, and
// length-normalized tag edit distance.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/corpus.hpp"
#include "latgen/latentspace.hpp"

namespace latgen {

/// Corpus-level BLEU over orders 1..n, as a percentage. Each hypothesis has a
/// bag of references; n-gram counts are clipped by the per-reference maximum
/// and the brevity penalty uses the closest reference length (shorter wins
/// ties). With `smoothing`, orders above 1 use add-one counts.
double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<std::vector<TokenSeq>>& references,
            int n, bool smoothing = false);

/// Percentage of distinct n-grams of `response` that also occur in `latent`.
/// Throws Undefined when the response is shorter than n.
double ngram_overlap(const TokenSeq& response, const TokenSeq& latent, int n);

std::size_t levenshtein(const TokenSeq& a, const TokenSeq& b);

/// levenshtein(response_pos, selected_pos) / len(selected_pos).
double normalized_edit_distance(const TokenSeq& response_pos, const TokenSeq& selected_pos);

struct GenerationRecord {
  std::size_t pair_id = 0;
  DecisionKind kind = DecisionKind::Sentence;
  TokenSeq latent;
  TokenSeq response;
};

// TSV: pair_id \t kind \t latent \t response, sequences space-joined.
void save_generations(const std::vector<GenerationRecord>& records, const std::filesystem::path& path);
std::vector<GenerationRecord> load_generations(const std::filesystem::path& path);

struct EvalReport {
  std::array<double, 4> bleu{};
  std::optional<std::array<double, 4>> overlap;  // sentence latents only
  std::optional<double> edit_distance;           // POS latents only
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  bool smoothing = false;
  const PosTagger* tagger = nullptr;  // tags generated responses; defaults to the corpus lexicon
};

/// Scores every record against the reference bag of its pair. Throws
/// AlignmentError for unknown or repeated pair ids.
EvalReport evaluate(const Corpus& corpus, const std::vector<GenerationRecord>& records, const EvalOptions& opts = {});

void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

/// CSV with header "epoch,mean_edit_distance".
void save_edit_distance_curve(const std::vector<double>& per_epoch, const std::filesystem::path& path);

}  // namespace latgen
