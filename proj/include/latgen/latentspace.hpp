#pragma once

// Candidate latent spaces and the labels used to pretrain the predictors.
//
// Sentence candidates: k-means over sentence encodings, then the entries
// nearest each centroid. POS candidates: the most frequent exact tag
// sequences. Each (post, response) is labeled with its nearest candidate:
// Euclidean distance for sentences, length-normalized global alignment score
// for POS sequences. All ties resolve to the lowest index.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "latgen/corpus.hpp"

namespace latgen {

using Encoding = std::vector<double>;

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual Encoding encode(const TokenSeq& tokens) const = 0;
};

/// L2-normalized bag-of-words counts over a vocabulary (OOV counted as UNK).
class BagOfWordsEncoder final : public SentenceEncoder {
 public:
  explicit BagOfWordsEncoder(const Vocabulary& vocab) : vocab_(&vocab) {}
  std::size_t dim() const override { return vocab_->size(); }
  Encoding encode(const TokenSeq& tokens) const override;

 private:
  const Vocabulary* vocab_;
};

double squared_distance(const Encoding& a, const Encoding& b);

struct KMeansResult {
  std::vector<Encoding> centroids;
  std::vector<std::size_t> assignment;
  std::vector<double> sse_history;  // within-cluster SSE after each assignment step
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Throws InsufficientPoints when k
/// exceeds the number of distinct points.
KMeansResult kmeans(const std::vector<Encoding>& points, std::size_t k, std::size_t max_iters,
                    std::uint64_t seed);

struct SentenceCandidateSet {
  std::vector<TokenSeq> entries;
  std::vector<Encoding> encodings;
  std::vector<std::size_t> cluster_of;

  std::size_t size() const { return entries.size(); }
};

/// Clusters the distinct responses into `clusters` groups and keeps the
/// `count / clusters` responses nearest each centroid (remainder from the
/// largest clusters). Output is ordered by cluster id, then distance.
SentenceCandidateSet build_sentence_candidates(const std::vector<TokenSeq>& responses,
                                               const SentenceEncoder& encoder, std::size_t clusters,
                                               std::size_t count, std::uint64_t seed,
                                               std::size_t max_iters = 100);

std::size_t nearest_sentence_label(const TokenSeq& response, const SentenceCandidateSet& cands,
                                   const SentenceEncoder& encoder);

struct AlignmentScoring {
  double match = 1.0;
  double mismatch = 0.0;
  double gap = 0.0;
};

/// Needleman-Wunsch global alignment score.
double align_score(const TokenSeq& a, const TokenSeq& b, const AlignmentScoring& scoring = {});

struct PosCandidateSet {
  std::vector<TokenSeq> entries;
  std::vector<std::size_t> frequency;

  std::size_t size() const { return entries.size(); }
};

/// The `count` most frequent response tag sequences; ties by first occurrence.
PosCandidateSet build_pos_candidates(const Corpus& corpus, std::size_t count);

/// argmax over candidates of align_score / max(len(pos), len(candidate)).
std::size_t nearest_pos_label(const TokenSeq& pos, const PosCandidateSet& cands,
                              const AlignmentScoring& scoring = {});

enum class DecisionKind { Sentence, PosSampled, PosGenerated };
std::string to_string(DecisionKind k);
/// "sentence", "pos-sampled", "pos-generated".
DecisionKind parse_decision_kind(const std::string& s);

struct LabeledExample {
  std::size_t pair = 0;
  std::size_t response = 0;
  std::size_t label = 0;
};

std::vector<LabeledExample> label_sentences(const Corpus& corpus, const SentenceCandidateSet& cands,
                                            const SentenceEncoder& encoder, std::size_t workers = 1);
std::vector<LabeledExample> label_pos(const Corpus& corpus, const PosCandidateSet& cands,
                                      std::size_t workers = 1);

// Files: candidate sets as JSONL {"idx", "tokens"} / {"idx", "pos"} (plus
// "cluster" or "freq"), labels as TSV pair_id \t response_idx \t label.
void save_sentence_candidates(const SentenceCandidateSet& cands, const std::filesystem::path& path);
/// Encodings are recomputed with `encoder`.
SentenceCandidateSet load_sentence_candidates(const std::filesystem::path& path, const SentenceEncoder& encoder);
void save_pos_candidates(const PosCandidateSet& cands, const std::filesystem::path& path);
PosCandidateSet load_pos_candidates(const std::filesystem::path& path);
void save_labels(const std::vector<LabeledExample>& labels, const std::filesystem::path& path);
std::vector<LabeledExample> load_labels(const std::filesystem::path& path);

}  // namespace latgen
