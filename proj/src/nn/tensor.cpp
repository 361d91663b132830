#include "latgen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "latgen/error.hpp"

namespace latgen::nn {

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalFault(std::string(op) + " produced a non-finite value");
}

}  // namespace

// Creates op results and wires their backward closures.
struct OpBuilder {
  static std::shared_ptr<Node> node(const Tensor& t) { return t.node_; }

  // `backward` receives (out_grad, out_node) and adds into parent grads.
  template <class Backward>
  static Tensor make(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                     std::initializer_list<const Tensor*> inputs, Backward backward) {
    check_finite(op, value);
    auto out = std::make_shared<Node>();
    out->rows = rows;
    out->cols = cols;
    out->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled)
      for (const Tensor* in : inputs) needs = needs || in->requires_grad();
    if (needs) {
      out->requires_grad = true;
      for (const Tensor* in : inputs) out->parents.push_back(in->node_);
      Node* self = out.get();
      out->backward_fn = [self, backward]() { backward(*self); };
    }
    return Tensor(out);
  }

  template <class Backward>
  static Tensor make_n(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                       std::span<const Tensor> inputs, Backward backward) {
    check_finite(op, value);
    auto out = std::make_shared<Node>();
    out->rows = rows;
    out->cols = cols;
    out->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled)
      for (const Tensor& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      out->requires_grad = true;
      for (const Tensor& in : inputs) out->parents.push_back(in.node_);
      Node* self = out.get();
      out->backward_fn = [self, backward]() { backward(*self); };
    }
    return Tensor(out);
  }

  static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != rows * cols) throw ShapeError("value count does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), 0.0);
    return Tensor(n);
  }

  static void run_backward(const Tensor& root) {
    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node_.get(), 0);
    seen.insert(root.node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (Node* n : order)
      if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
    root.node_->ensure_grad();
    root.node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn();
  }
};

namespace {

// Parent grad accessor; null when that parent does not need a gradient.
double* pgrad(Node& out, std::size_t i) {
  Node& p = *out.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const std::vector<double>& pval(Node& out, std::size_t i) { return out.parents[i]->value; }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return OpBuilder::leaf(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}
Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  return OpBuilder::leaf(rows, cols, std::vector<double>(rows * cols, value), requires_grad);
}
Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  return OpBuilder::leaf(rows, cols, std::move(values), requires_grad);
}
Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return OpBuilder::leaf(1, n, std::move(values), requires_grad);
}
Tensor Tensor::scalar(double value, bool requires_grad) {
  return OpBuilder::leaf(1, 1, {value}, requires_grad);
}

std::size_t Tensor::rows() const { return node_ ? node_->rows : 0; }
std::size_t Tensor::cols() const { return node_ ? node_->cols : 0; }
const std::vector<double>& Tensor::values() const { return node_->value; }
std::vector<double>& Tensor::mutable_values() { return node_->value; }
const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}
std::vector<double>& Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on " + shape_str(*this));
  return node_->value[0];
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(*this));
  if (!requires_grad()) return;
  OpBuilder::run_backward(*this);
}

void Tensor::zero_grad() const {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return OpBuilder::leaf(rows(), cols(), values(), false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return OpBuilder::make("matmul", m, n, std::move(out), {&a, &b}, [m, k, n](Node& o) {
    const auto& av = pval(o, 0);
    const auto& bv = pval(o, 1);
    if (double* ga = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += o.grad[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    if (double* gb = pgrad(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * o.grad[i * n + j];
        }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  return OpBuilder::make("transpose", n, m, std::move(out), {&a}, [m, n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  return OpBuilder::make("add", a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = pgrad(o, k))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  return OpBuilder::make("sub", a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = pgrad(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  return OpBuilder::make("mul", a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& o) {
    const auto& av = pval(o, 0);
    const auto& bv = pval(o, 1);
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bv[i];
    if (double* g = pgrad(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * av[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: " + shape_str(a) + " + " + shape_str(row));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.values()[j];
  return OpBuilder::make("add_row", m, n, std::move(out), {&a, &row}, [m, n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = pgrad(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= s;
  return OpBuilder::make("scale", a.rows(), a.cols(), std::move(out), {&a}, [s](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += s * o.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& x : out) x += s;
  return OpBuilder::make("add_scalar", a.rows(), a.cols(), std::move(out), {&a}, [](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor one_minus(const Tensor& a) { return add_scalar(scale(a, -1.0), 1.0); }

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar: scale must be 1x1, got " + shape_str(s));
  const double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (double& x : out) x *= sv;
  return OpBuilder::make("mul_scalar", a.rows(), a.cols(), std::move(out), {&a, &s}, [](Node& o) {
    const auto& av = pval(o, 0);
    const double sv = pval(o, 1)[0];
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += sv * o.grad[i];
    if (double* g = pgrad(o, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += av[i] * o.grad[i];
      g[0] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise

namespace {

// f computes the output; df computes d out / d in from (in, out).
template <class F, class DF>
Tensor pointwise(const char* op, const Tensor& a, F f, DF df) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
  return OpBuilder::make(op, a.rows(), a.cols(), std::move(out), {&a}, [df](Node& o) {
    if (double* g = pgrad(o, 0)) {
      const auto& in = pval(o, 0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * df(in[i], o.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return pointwise("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}
Tensor tanh(const Tensor& a) {
  return pointwise("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}
Tensor relu(const Tensor& a) {
  return pointwise("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
Tensor exp(const Tensor& a) {
  return pointwise("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
Tensor log(const Tensor& a) {
  return pointwise("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Row-wise normalizers

Tensor softmax(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &a.values()[i * n];
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return OpBuilder::make("softmax", m, n, std::move(out), {&a}, [m, n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
      }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &a.values()[i * n];
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j] - lz;
  }
  return OpBuilder::make("log_softmax", m, n, std::move(out), {&a}, [m, n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) gs += o.grad[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          g[i * n + j] += o.grad[i * n + j] - std::exp(o.value[i * n + j]) * gs;
      }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
  std::vector<double> out(m * n);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &a.values()[i * n];
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x[j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gamma.values()[j] + beta.values()[j];
    }
  }
  return OpBuilder::make("layer_norm", m, n, std::move(out), {&a, &gamma, &beta}, [m, n, xhat, inv_std](Node& o) {
    const auto& gv = pval(o, 1);
    if (double* ga = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = o.grad[i * n + j] * gv[j];
          s1 += dh;
          s2 += dh * (*xhat)[i * n + j];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = o.grad[i * n + j] * gv[j];
          ga[i * n + j] += (*inv_std)[i] * (dh - inv_n * s1 - (*xhat)[i * n + j] * inv_n * s2);
        }
      }
    if (double* gg = pgrad(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += o.grad[i * n + j] * (*xhat)[i * n + j];
    if (double* gb = pgrad(o, 2))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += o.grad[i * n + j];
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0]) + " vs " + shape_str(p));
    offsets.push_back(n);
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&parts[k].values()[i * c], c, &out[i * n + offsets[k]]);
  }
  return OpBuilder::make_n("concat_cols", m, n, std::move(out), parts, [m, n, offsets](Node& o) {
    for (std::size_t k = 0; k < o.parents.size(); ++k)
      if (double* g = pgrad(o, k)) {
        const std::size_t c = o.parents[k]->cols;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i * n + offsets[k] + j];
      }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0]) + " vs " + shape_str(p));
    offsets.push_back(m * n);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return OpBuilder::make_n("concat_rows", m, n, std::move(out), parts, [offsets](Node& o) {
    for (std::size_t k = 0; k < o.parents.size(); ++k)
      if (double* g = pgrad(o, k)) {
        const std::size_t sz = o.parents[k]->value.size();
        for (std::size_t i = 0; i < sz; ++i) g[i] += o.grad[offsets[k] + i];
      }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows() || count == 0)
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + shape_str(a));
  const std::size_t n = a.cols();
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          a.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  return OpBuilder::make("slice_rows", count, n, std::move(out), {&a}, [begin, n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * n + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols() || count == 0)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + shape_str(a));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&a.values()[i * n + begin], count, &out[i * count]);
  return OpBuilder::make("slice_cols", m, count, std::move(out), {&a}, [m, n, begin, count](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += o.grad[i * count + j];
  });
}

Tensor pad_cols(const Tensor& a, std::size_t extra) {
  const std::size_t m = a.rows(), n = a.cols(), w = n + extra;
  std::vector<double> out(m * w, 0.0);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&a.values()[i * n], n, &out[i * w]);
  return OpBuilder::make("pad_cols", m, w, std::move(out), {&a}, [m, n, w](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[i * w + j];
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const std::size_t d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= table.rows())
      throw ShapeError("embedding: id " + std::to_string(idx[i]) + " outside table of " + std::to_string(table.rows()));
    std::copy_n(&table.values()[static_cast<std::size_t>(idx[i]) * d], d, &out[i * d]);
  }
  const std::size_t len = idx.size();
  return OpBuilder::make("embedding", len, d, std::move(out), {&table}, [idx = std::move(idx), d](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idx[i]) * d + j] += o.grad[i * d + j];
  });
}

Tensor scatter_add_cols(const Tensor& a, std::span<const int> index, std::size_t width) {
  if (a.rows() != 1 || a.cols() != index.size())
    throw ShapeError("scatter_add_cols: " + shape_str(a) + " with " + std::to_string(index.size()) + " indices");
  std::vector<int> idx(index.begin(), index.end());
  std::vector<double> out(width, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= width) throw ShapeError("scatter_add_cols: index out of range");
    out[static_cast<std::size_t>(idx[i])] += a.values()[i];
  }
  return OpBuilder::make("scatter_add_cols", 1, width, std::move(out), {&a}, [idx = std::move(idx)](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < idx.size(); ++i) g[i] += o.grad[static_cast<std::size_t>(idx[i])];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return OpBuilder::make("sum", 1, 1, {s}, {&a}, [](Node& o) {
    if (double* g = pgrad(o, 0)) {
      const std::size_t n = o.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor pick(const Tensor& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) throw ShapeError("pick: (" + std::to_string(r) + "," + std::to_string(c) + ") of " + shape_str(a));
  const std::size_t k = r * a.cols() + c;
  return OpBuilder::make("pick", 1, 1, {a.values()[k]}, {&a}, [k](Node& o) {
    if (double* g = pgrad(o, 0)) g[k] += o.grad[0];
  });
}

Tensor nll(const Tensor& log_probs, std::span<const int> targets) {
  if (targets.size() != log_probs.rows())
    throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for " + shape_str(log_probs));
  const std::size_t n = log_probs.cols();
  std::vector<int> t(targets.begin(), targets.end());
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0 || static_cast<std::size_t>(t[i]) >= n) throw LabelError("target " + std::to_string(t[i]) + " outside " + std::to_string(n) + " classes");
    s -= log_probs.values()[i * n + static_cast<std::size_t>(t[i])];
  }
  return OpBuilder::make("nll", 1, 1, {s}, {&log_probs}, [t = std::move(t), n](Node& o) {
    if (double* g = pgrad(o, 0))
      for (std::size_t i = 0; i < t.size(); ++i) g[i * n + static_cast<std::size_t>(t[i])] -= o.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  return scale(nll(log_softmax(logits), targets), 1.0 / static_cast<double>(targets.size()));
}

std::vector<std::size_t> argmax_rows(const Tensor& a) {
  std::vector<std::size_t> out(a.rows());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* x = &a.values()[i * n];
    out[i] = static_cast<std::size_t>(std::max_element(x, x + n) - x);  // first max
  }
  return out;
}

}  // namespace latgen::nn
