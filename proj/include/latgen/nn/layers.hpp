#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latgen/nn/tensor.hpp"

namespace latgen::nn {

using Rng = std::mt19937_64;

enum class Init {
  Uniform,       // U(-0.08, 0.08), recurrent nets
  ScaledNormal,  // N(0, 1/fan_in), Transformer
  Zeros,
  Ones,
};

/// Named, ordered collection of learnable tensors.
class ParameterSet {
 public:
  Tensor create(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng);
  void add(const std::string& name, Tensor t);  // throws on duplicate names

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return params_; }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad() const;
  double grad_norm() const;
  /// Rescales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
  double clip_grad_norm(double max_norm) const;

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

struct Linear {
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Init init, Rng& rng,
         bool bias = true);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // in x out
  Tensor bias;    // 1 x out, may be undefined
};

struct Embedding {
  Embedding() = default;
  Embedding(ParameterSet& ps, const std::string& name, std::size_t vocab, std::size_t dim, Init init, Rng& rng);
  Tensor operator()(std::span<const int> ids) const { return embedding(table, ids); }
  std::size_t dim() const { return table.cols(); }

  Tensor table;
};

/// Gated recurrent unit with reset gate applied to the recurrent candidate term:
///   z = s(x Wz + h Uz + b), r = s(x Wr + h Ur + b), n = tanh(x Wn + b + r*(h Un + b')),
///   h' = (1 - z) * n + z * h.
struct GRUCell {
  GRUCell() = default;
  GRUCell(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Init init, Rng& rng);

  Tensor step(const Tensor& x, const Tensor& h) const;
  /// Step with a precomputed input projection x W_ih + b_ih (1 x 3h).
  Tensor step_projected(const Tensor& xproj, const Tensor& h) const;
  /// Runs over the rows of xs; returns the hidden state after each row.
  std::vector<Tensor> run(const Tensor& xs, const Tensor& h0, bool reverse = false) const;

  std::size_t hidden() const { return w_hh.rows(); }
  std::size_t input() const { return w_ih.rows(); }

  Tensor w_ih, w_hh, b_ih, b_hh;
};

struct BiGRUOutput {
  Tensor states;  // L x 2h, row t = [fwd_t, bwd_t]
  Tensor final;   // 1 x 2h, [fwd_{L}, bwd_{1}]: each direction's last step
};

struct BiGRU {
  BiGRU() = default;
  BiGRU(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Init init, Rng& rng);
  BiGRUOutput operator()(const Tensor& xs) const;
  std::size_t output_dim() const { return 2 * fwd.hidden(); }

  GRUCell fwd, bwd;
};

/// Fully connected stack with tanh between layers and no activation on the last.
struct MLP {
  MLP() = default;
  MLP(ParameterSet& ps, const std::string& name, std::vector<std::size_t> sizes, Init init, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  std::vector<Linear> layers;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  Tensor gain, bias;
};

/// Additive attention mask: 0 where attention is allowed, a large negative
/// value otherwise. `key_pad[j]` masks key j for every query; `causal` masks
/// keys j > i.
Tensor attention_mask(std::size_t queries, std::size_t keys, bool causal,
                      std::span<const bool> key_pad = {});

struct AttentionOutput {
  Tensor out;
  std::vector<Tensor> weights;  // per head, queries x keys
};

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
  AttentionOutput operator()(const Tensor& query, const Tensor& memory, const Tensor& mask = {}) const;

  std::size_t heads = 1;
  Linear q, k, v, o;
};

struct TransformerEncoderLayer {
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                          std::size_t ff, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& mask = {}) const;

  MultiHeadAttention self_attn;
  LayerNorm norm1, norm2;
  Linear ff1, ff2;
};

struct TransformerDecoderLayer {
  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                          std::size_t ff, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory, const Tensor& self_mask,
                    const Tensor& memory_mask = {}) const;

  MultiHeadAttention self_attn, cross_attn;
  LayerNorm norm1, norm2, norm3;
  Linear ff1, ff2;
};

/// Sinusoidal position encodings, rows = positions.
Tensor positional_encoding(std::size_t length, std::size_t dim);

}  // namespace latgen::nn
