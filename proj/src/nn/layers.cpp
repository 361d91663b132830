#include "latgen/nn/layers.hpp"

#include <cmath>

#include "latgen/error.hpp"

namespace latgen::nn {

// ---------------------------------------------------------------------------
// ParameterSet

Tensor ParameterSet::create(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng) {
  std::vector<double> v(rows * cols, 0.0);
  switch (init) {
    case Init::Uniform: {
      std::uniform_real_distribution<double> d(-0.08, 0.08);
      for (double& x : v) x = d(rng);
      break;
    }
    case Init::ScaledNormal: {
      std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
      for (double& x : v) x = d(rng);
      break;
    }
    case Init::Zeros:
      break;
    case Init::Ones:
      std::fill(v.begin(), v.end(), 1.0);
      break;
  }
  Tensor t = Tensor::from(rows, cols, std::move(v), true);
  add(name, t);
  return t;
}

void ParameterSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
  params_.emplace_back(name, std::move(t));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ConfigError("no parameter named '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return true;
  return false;
}

void ParameterSet::zero_grad() const {
  for (const auto& [n, t] : params_) t.zero_grad();
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& [n, t] : params_)
    for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

double ParameterSet::clip_grad_norm(double max_norm) const {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto [n, t] : params_)
      for (double& g : t.mutable_grad()) g *= f;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Basic layers

Linear::Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Init init, Rng& rng,
               bool with_bias) {
  weight = ps.create(name + ".weight", in, out, init, rng);
  if (with_bias) bias = ps.create(name + ".bias", 1, out, Init::Zeros, rng);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

Embedding::Embedding(ParameterSet& ps, const std::string& name, std::size_t vocab, std::size_t dim, Init init,
                     Rng& rng) {
  table = ps.create(name + ".table", vocab, dim, init, rng);
}

MLP::MLP(ParameterSet& ps, const std::string& name, std::vector<std::size_t> sizes, Init init, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("MLP needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    layers.emplace_back(ps, name + ".l" + std::to_string(i), sizes[i], sizes[i + 1], init, rng);
}

Tensor MLP::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = tanh(h);
  }
  return h;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, std::size_t dim, Rng& rng) {
  gain = ps.create(name + ".gain", 1, dim, Init::Ones, rng);
  bias = ps.create(name + ".bias", 1, dim, Init::Zeros, rng);
}

// ---------------------------------------------------------------------------
// Recurrent

GRUCell::GRUCell(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Init init,
                 Rng& rng) {
  w_ih = ps.create(name + ".w_ih", in, 3 * hidden, init, rng);
  w_hh = ps.create(name + ".w_hh", hidden, 3 * hidden, init, rng);
  b_ih = ps.create(name + ".b_ih", 1, 3 * hidden, init, rng);
  b_hh = ps.create(name + ".b_hh", 1, 3 * hidden, init, rng);
}

Tensor GRUCell::step(const Tensor& x, const Tensor& h) const {
  if (x.rows() != 1 || x.cols() != input()) throw ShapeError("GRU input must be 1x" + std::to_string(input()));
  return step_projected(add_row(matmul(x, w_ih), b_ih), h);
}

Tensor GRUCell::step_projected(const Tensor& xproj, const Tensor& h) const {
  const std::size_t hd = hidden();
  if (h.rows() != 1 || h.cols() != hd) throw ShapeError("GRU state must be 1x" + std::to_string(hd));
  Tensor hproj = add_row(matmul(h, w_hh), b_hh);
  Tensor z = sigmoid(add(slice_cols(xproj, 0, hd), slice_cols(hproj, 0, hd)));
  Tensor r = sigmoid(add(slice_cols(xproj, hd, hd), slice_cols(hproj, hd, hd)));
  Tensor n = tanh(add(slice_cols(xproj, 2 * hd, hd), mul(r, slice_cols(hproj, 2 * hd, hd))));
  return add(mul(one_minus(z), n), mul(z, h));
}

std::vector<Tensor> GRUCell::run(const Tensor& xs, const Tensor& h0, bool reverse) const {
  if (xs.cols() != input()) throw ShapeError("GRU input width " + std::to_string(xs.cols()) + " != " + std::to_string(input()));
  const std::size_t len = xs.rows();
  Tensor proj = add_row(matmul(xs, w_ih), b_ih);
  std::vector<Tensor> states(len);
  Tensor h = h0;
  for (std::size_t s = 0; s < len; ++s) {
    const std::size_t t = reverse ? len - 1 - s : s;
    h = step_projected(slice_rows(proj, t, 1), h);
    states[t] = h;
  }
  return states;
}

BiGRU::BiGRU(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Init init, Rng& rng)
    : fwd(ps, name + ".fwd", in, hidden, init, rng), bwd(ps, name + ".bwd", in, hidden, init, rng) {}

BiGRUOutput BiGRU::operator()(const Tensor& xs) const {
  if (xs.rows() == 0) throw ShapeError("BiGRU over an empty sequence");
  const Tensor h0 = Tensor::zeros(1, fwd.hidden());
  auto f = fwd.run(xs, h0, false);
  auto b = bwd.run(xs, h0, true);
  std::vector<Tensor> rows;
  rows.reserve(f.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    const Tensor pair[] = {f[t], b[t]};
    rows.push_back(concat_cols(pair));
  }
  BiGRUOutput out;
  out.states = concat_rows(rows);
  const Tensor fin[] = {f.back(), b.front()};
  out.final = concat_cols(fin);
  return out;
}

// ---------------------------------------------------------------------------
// Attention and Transformer blocks

Tensor attention_mask(std::size_t queries, std::size_t keys, bool causal, std::span<const bool> key_pad) {
  constexpr double kBlocked = -1e9;
  std::vector<double> m(queries * keys, 0.0);
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = 0; j < keys; ++j) {
      const bool pad = j < key_pad.size() && key_pad[j];
      if (pad || (causal && j > i)) m[i * keys + j] = kBlocked;
    }
  return Tensor::from(queries, keys, std::move(m));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t dim,
                                       std::size_t num_heads, Rng& rng)
    : heads(num_heads),
      q(ps, name + ".q", dim, dim, Init::ScaledNormal, rng),
      k(ps, name + ".k", dim, dim, Init::ScaledNormal, rng),
      v(ps, name + ".v", dim, dim, Init::ScaledNormal, rng),
      o(ps, name + ".o", dim, dim, Init::ScaledNormal, rng) {
  if (num_heads == 0 || dim % num_heads != 0) throw ConfigError("model dim must be divisible by head count");
}

AttentionOutput MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, const Tensor& mask) const {
  const std::size_t dim = q.weight.rows();
  if (query.cols() != dim || memory.cols() != dim) throw ShapeError("attention input width != model dim");
  if (mask.defined() && (mask.rows() != query.rows() || mask.cols() != memory.rows()))
    throw ShapeError("attention mask shape mismatch");
  const std::size_t dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor qq = q(query), kk = k(memory), vv = v(memory);
  AttentionOutput res;
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qq, h * dh, dh);
    Tensor kh = slice_cols(kk, h * dh, dh);
    Tensor vh = slice_cols(vv, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask.defined()) scores = add(scores, mask);
    Tensor w = softmax(scores);
    outs.push_back(matmul(w, vh));
    res.weights.push_back(w);
  }
  res.out = o(concat_cols(outs));
  return res;
}

TransformerEncoderLayer::TransformerEncoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim,
                                                 std::size_t heads, std::size_t ff, Rng& rng)
    : self_attn(ps, name + ".self_attn", dim, heads, rng),
      norm1(ps, name + ".norm1", dim, rng),
      norm2(ps, name + ".norm2", dim, rng),
      ff1(ps, name + ".ff1", dim, ff, Init::ScaledNormal, rng),
      ff2(ps, name + ".ff2", ff, dim, Init::ScaledNormal, rng) {}

Tensor TransformerEncoderLayer::operator()(const Tensor& x, const Tensor& mask) const {
  Tensor h = norm1(add(x, self_attn(x, x, mask).out));
  return norm2(add(h, ff2(relu(ff1(h)))));
}

TransformerDecoderLayer::TransformerDecoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim,
                                                 std::size_t heads, std::size_t ff, Rng& rng)
    : self_attn(ps, name + ".self_attn", dim, heads, rng),
      cross_attn(ps, name + ".cross_attn", dim, heads, rng),
      norm1(ps, name + ".norm1", dim, rng),
      norm2(ps, name + ".norm2", dim, rng),
      norm3(ps, name + ".norm3", dim, rng),
      ff1(ps, name + ".ff1", dim, ff, Init::ScaledNormal, rng),
      ff2(ps, name + ".ff2", ff, dim, Init::ScaledNormal, rng) {}

Tensor TransformerDecoderLayer::operator()(const Tensor& x, const Tensor& memory, const Tensor& self_mask,
                                           const Tensor& memory_mask) const {
  Tensor h = norm1(add(x, self_attn(x, x, self_mask).out));
  h = norm2(add(h, cross_attn(h, memory, memory_mask).out));
  return norm3(add(h, ff2(relu(ff1(h)))));
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  std::vector<double> pe(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(pos) * freq;
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  return Tensor::from(length, dim, std::move(pe));
}

}  // namespace latgen::nn
