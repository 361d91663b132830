#include "latgen/nn/transformer.hpp"

#include <cmath>

#include "latgen/error.hpp"

namespace latgen::nn {

void to_json(nlohmann::json& j, const TransformerConfig& c) {
  j = {{"dim", c.dim}, {"heads", c.heads}, {"layers", c.layers}, {"ff", c.ff}};
}

void from_json(const nlohmann::json& j, TransformerConfig& c) {
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.ff = j.value("ff", c.ff);
}

Embedding transformer_embedding(ParameterSet& ps, const std::string& name, std::size_t vocab, std::size_t dim,
                                Rng& rng) {
  Embedding e(ps, name, vocab, dim, Init::ScaledNormal, rng);
  // ScaledNormal draws with std 1/sqrt(vocab); rescale to 1/sqrt(dim).
  const double s = std::sqrt(static_cast<double>(vocab) / static_cast<double>(dim));
  for (double& x : e.table.mutable_values()) x *= s;
  return e;
}

Tensor embed_positions(const Embedding& emb, std::span<const int> ids) {
  const double s = std::sqrt(static_cast<double>(emb.dim()));
  return add(scale(emb(ids), s), positional_encoding(ids.size(), emb.dim()));
}

TransformerEncoder::TransformerEncoder(ParameterSet& ps, const std::string& name, std::size_t vocab,
                                       const TransformerConfig& cfg, Rng& rng)
    : embed(transformer_embedding(ps, name + ".embed", vocab, cfg.dim, rng)) {
  for (std::size_t l = 0; l < cfg.layers; ++l)
    layers.emplace_back(ps, name + ".layer" + std::to_string(l), cfg.dim, cfg.heads, cfg.ff, rng);
}

Tensor TransformerEncoder::operator()(std::span<const int> ids, std::span<const bool> pad) const {
  if (ids.empty()) throw EmptyInput("empty encoder input");
  Tensor h = embed_positions(embed, ids);
  const Tensor mask = attention_mask(ids.size(), ids.size(), false, pad);
  for (const auto& layer : layers) h = layer(h, mask);
  return h;
}

TransformerDecoder::TransformerDecoder(ParameterSet& ps, const std::string& name, std::size_t vocab,
                                       const TransformerConfig& cfg, Rng& rng)
    : embed(transformer_embedding(ps, name + ".embed", vocab, cfg.dim, rng)) {
  for (std::size_t l = 0; l < cfg.layers; ++l)
    layers.emplace_back(ps, name + ".layer" + std::to_string(l), cfg.dim, cfg.heads, cfg.ff, rng);
  out = Linear(ps, name + ".out", cfg.dim, vocab, Init::ScaledNormal, rng);
}

Tensor TransformerDecoder::operator()(const Tensor& memory, std::span<const int> prefix,
                                      std::span<const bool> memory_pad) const {
  if (prefix.empty()) throw EmptyInput("empty decoder prefix");
  Tensor h = embed_positions(embed, prefix);
  const Tensor self_mask = attention_mask(prefix.size(), prefix.size(), true);
  const Tensor mem_mask = memory_pad.empty() ? Tensor() : attention_mask(prefix.size(), memory.rows(), false, memory_pad);
  for (const auto& layer : layers) h = layer(h, memory, self_mask, mem_mask);
  return out(h);
}

}  // namespace latgen::nn
