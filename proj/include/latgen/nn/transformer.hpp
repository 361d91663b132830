#pragma once

// Token-level Transformer encoder and decoder stacks built from the layers in
// layers.hpp. Inputs are single sequences (no batching); padding can still be
// masked through `pad` flags.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latgen/nn/layers.hpp"

namespace latgen::nn {

struct TransformerConfig {
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ff = 64;
};

void to_json(nlohmann::json& j, const TransformerConfig& c);
void from_json(const nlohmann::json& j, TransformerConfig& c);

/// Embedding table scaled so that sqrt(dim) * row has unit variance.
Embedding transformer_embedding(ParameterSet& ps, const std::string& name, std::size_t vocab, std::size_t dim,
                                Rng& rng);

/// sqrt(dim) * embedding + sinusoidal position.
Tensor embed_positions(const Embedding& emb, std::span<const int> ids);

struct TransformerEncoder {
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet& ps, const std::string& name, std::size_t vocab, const TransformerConfig& cfg,
                     Rng& rng);
  /// L x dim hidden states.
  Tensor operator()(std::span<const int> ids, std::span<const bool> pad = {}) const;

  Embedding embed;
  std::vector<TransformerEncoderLayer> layers;
};

struct TransformerDecoder {
  TransformerDecoder() = default;
  TransformerDecoder(ParameterSet& ps, const std::string& name, std::size_t vocab, const TransformerConfig& cfg,
                     Rng& rng);
  /// Logits (T x vocab) for every prefix position under a causal mask.
  Tensor operator()(const Tensor& memory, std::span<const int> prefix, std::span<const bool> memory_pad = {}) const;

  Embedding embed;
  std::vector<TransformerDecoderLayer> layers;
  Linear out;
};

}  // namespace latgen::nn
