#include "rescap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "rescap/error.hpp"

namespace rescap::ad {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, op + ": " + detail);
}

void check_finite(const std::string& op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValueInGraph, op + " produced a non-finite value");
}

// Creates the result node; records parents and the backward closure only when some
// parent needs a gradient and recording is enabled.
Tensor make_result(const std::string& op, Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> backward_fn) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const auto& p) { return p && p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void expect_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* name) {
  if (!t.defined()) shape_error(op, std::string(name) + " is undefined");
  if (t.rank() != rank)
    shape_error(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) shape_error("tensor", "zero-sized dimension in " + shape_string(shape));
  if (values.size() != shape_size(shape))
    shape_error("tensor", std::to_string(values.size()) + " values for shape " + shape_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) shape_error("item", "tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) shape_error("at", "index rank mismatch");
  std::size_t flat = 0, k = 0;
  for (auto i : index) {
    if (i >= s[k]) shape_error("at", "index out of range");
    flat = flat * s[k++] + i;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
  if (size() != 1) shape_error("backward", "loss must be a scalar, got " + shape_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative DFS producing a topological order; a node met while still open is a cycle.
  enum : std::uint8_t { kOpen = 1, kDone = 2 };
  std::unordered_map<Node*, std::uint8_t> state;
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  state[node_.get()] = kOpen;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      auto& s = state[parent];
      if (s == kOpen) throw Error(ErrorCode::GraphCycle, "cycle in recorded graph");
      if (s == 0) {
        s = kOpen;
        stack.emplace_back(parent, 0);
      }
    } else {
      state[node] = kDone;
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->parents.empty()) continue;
    for (double g : n->grad)
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient on a leaf tensor");
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= s;
  return make_result("mul_scalar", a.shape(), std::move(out), {a.node_ptr()}, [s](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

namespace {

// Unary op whose derivative is expressed through the input x and output y.
template <typename F, typename D>
Tensor unary(const std::string& name, const Tensor& a, F f, D df) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result(name, a.shape(), std::move(out), {a.node_ptr()}, [df](Node& self) {
    Node& x = *self.parents[0];
    auto& g = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(x.value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// ---------------------------------------------------------------------------
// Reductions and layout

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result("sum", {1}, {total}, {a.node_ptr()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    shape_error("reshape", shape_string(a.shape()) + " -> " + shape_string(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node_ptr()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index) {
  if (shape_size(shape) != index.size()) shape_error("gather", "index count does not match output shape");
  std::vector<double> out(index.size());
  auto av = a.values();
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= av.size()) shape_error("gather", "index out of range");
    out[k] = av[index[k]];
  }
  return make_result("gather", std::move(shape), std::move(out), {a.node_ptr()},
                     [index = std::move(index)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t k = 0; k < index.size(); ++k) g[index[k]] += self.grad[k];
                     });
}

Tensor global_avg_pool(const Tensor& a) {
  expect_rank("global_avg_pool", a, 3, "input");
  const std::size_t B = a.dim(0), C = a.dim(1), L = a.dim(2);
  std::vector<double> out(B * C, 0.0);
  auto av = a.values();
  for (std::size_t r = 0; r < B * C; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < L; ++t) s += av[r * L + t];
    out[r] = s / static_cast<double>(L);
  }
  return make_result("global_avg_pool", {B, C}, std::move(out), {a.node_ptr()}, [L](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(L);
    for (std::size_t r = 0; r < self.grad.size(); ++r)
      for (std::size_t t = 0; t < L; ++t) g[r * L + t] += self.grad[r] * inv;
  });
}

// ---------------------------------------------------------------------------
// Convolution

std::size_t conv1d_output_length(std::size_t length, std::size_t k, const Conv1dOptions& opts) {
  const std::size_t span = (k - 1) * opts.dilation + 1;
  const std::size_t padded = length + (opts.padding == Padding::Causal ? span - 1 : 0);
  if (padded < span) return 0;
  return (padded - span) / opts.stride + 1;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv1dOptions& opts) {
  expect_rank("conv1d", input, 3, "input");
  expect_rank("conv1d", kernel, 3, "kernel");
  expect_rank("conv1d", bias, 1, "bias");
  if (opts.dilation == 0 || opts.stride == 0) shape_error("conv1d", "dilation and stride must be >= 1");
  const std::size_t B = input.dim(0), Cin = input.dim(1), L = input.dim(2);
  const std::size_t Cout = kernel.dim(0), K = kernel.dim(2);
  if (kernel.dim(1) != Cin)
    shape_error("conv1d", "kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                              std::to_string(Cin));
  if (bias.dim(0) != Cout) shape_error("conv1d", "bias length does not match output channels");
  const std::size_t Lout = conv1d_output_length(L, K, opts);
  if (Lout == 0) shape_error("conv1d", "input length " + std::to_string(L) + " shorter than kernel span");

  const std::size_t d = opts.dilation, stride = opts.stride;
  const long pad = opts.padding == Padding::Causal ? static_cast<long>((K - 1) * d) : 0;

  // For tap j, output t reads input position t*stride + j*d - pad; returns the valid t range.
  auto tap_range = [=](std::size_t j) {
    const long off = static_cast<long>(j * d) - pad;
    long lo = off >= 0 ? 0 : (-off + static_cast<long>(stride) - 1) / static_cast<long>(stride);
    long hi_pos = static_cast<long>(L) - 1 - off;  // t*stride <= hi_pos
    long hi = hi_pos < 0 ? -1 : std::min<long>(static_cast<long>(Lout) - 1, hi_pos / static_cast<long>(stride));
    return std::tuple<long, long, long>{off, lo, hi};
  };

  std::vector<double> out(B * Cout * Lout);
  auto in = input.values(), w = kernel.values(), bv = bias.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      double* orow = &out[(b * Cout + o) * Lout];
      std::fill(orow, orow + Lout, bv[o]);
      for (std::size_t c = 0; c < Cin; ++c) {
        const double* irow = &in[(b * Cin + c) * L];
        for (std::size_t j = 0; j < K; ++j) {
          const double wv = w[(o * Cin + c) * K + j];
          auto [off, lo, hi] = tap_range(j);
          if (stride == 1) {
            const double* src = irow + off;
            for (long t = lo; t <= hi; ++t) orow[t] += wv * src[t];
          } else {
            for (long t = lo; t <= hi; ++t) orow[t] += wv * irow[t * static_cast<long>(stride) + off];
          }
        }
      }
    }
  }

  return make_result(
      "conv1d", {B, Cout, Lout}, std::move(out), {input.node_ptr(), kernel.node_ptr(), bias.node_ptr()},
      [=](Node& self) {
        Node& x = *self.parents[0];
        Node& k = *self.parents[1];
        Node& bb = *self.parents[2];
        const auto& gout = self.grad;
        if (bb.requires_grad) {
          auto& gb = bb.ensure_grad();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Cout; ++o) {
              const double* g = &gout[(b * Cout + o) * Lout];
              double s = 0.0;
              for (std::size_t t = 0; t < Lout; ++t) s += g[t];
              gb[o] += s;
            }
        }
        double* gx = x.requires_grad ? x.ensure_grad().data() : nullptr;
        double* gk = k.requires_grad ? k.ensure_grad().data() : nullptr;
        if (!gx && !gk) return;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < Cout; ++o) {
            const double* g = &gout[(b * Cout + o) * Lout];
            for (std::size_t c = 0; c < Cin; ++c) {
              const double* irow = &x.value[(b * Cin + c) * L];
              double* girow = gx ? gx + (b * Cin + c) * L : nullptr;
              for (std::size_t j = 0; j < K; ++j) {
                const std::size_t widx = (o * Cin + c) * K + j;
                auto [off, lo, hi] = tap_range(j);
                const long st = static_cast<long>(stride);
                if (gk) {
                  double s = 0.0;
                  for (long t = lo; t <= hi; ++t) s += g[t] * irow[t * st + off];
                  gk[widx] += s;
                }
                if (girow) {
                  const double wv = k.value[widx];
                  for (long t = lo; t <= hi; ++t) girow[t * st + off] += wv * g[t];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalisation

Tensor batch_norm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, Mode mode, const BatchNormOptions& opts) {
  expect_rank("batch_norm1d", input, 3, "input");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var})
    if (t->rank() != 1 || t->dim(0) != C) shape_error("batch_norm1d", "per-channel tensors must have length C");
  const std::size_t n = B * L;
  auto x = input.values(), gm = gamma.values(), bt = beta.values();

  std::vector<double> mu(C), inv_std(C);
  if (mode == Mode::Train) {
    auto rm = running_mean.mutable_values(), rv = running_var.mutable_values();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) s += x[(b * C + c) * L + t];
      const double m = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
          const double dlt = x[(b * C + c) * L + t] - m;
          ss += dlt * dlt;
        }
      const double var = ss / static_cast<double>(n);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
      const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      rm[c] = opts.momentum * rm[c] + (1.0 - opts.momentum) * m;
      rv[c] = opts.momentum * rv[c] + (1.0 - opts.momentum) * unbiased;
    }
  } else {
    auto rm = running_mean.values(), rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + opts.eps);
    }
  }

  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (b * C + c) * L + t;
        xhat[i] = (x[i] - mu[c]) * inv_std[c];
        out[i] = gm[c] * xhat[i] + bt[c];
      }

  const bool batch_stats = mode == Mode::Train;
  return make_result(
      "batch_norm1d", input.shape(), std::move(out), {input.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& xn = *self.parents[0];
        Node& g = *self.parents[1];
        Node& be = *self.parents[2];
        const auto& dy = self.grad;
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              sum_dy[c] += dy[i];
              sum_dy_xhat[c] += dy[i] * xhat[i];
            }
        if (g.requires_grad) {
          auto& gg = g.ensure_grad();
          for (std::size_t c = 0; c < C; ++c) gg[c] += sum_dy_xhat[c];
        }
        if (be.requires_grad) {
          auto& gb = be.ensure_grad();
          for (std::size_t c = 0; c < C; ++c) gb[c] += sum_dy[c];
        }
        if (!xn.requires_grad) return;
        auto& gx = xn.ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const double scale = g.value[c] * inv_std[c];
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              if (batch_stats) {
                gx[i] += scale * (dy[i] - inv_n * sum_dy[c] - xhat[i] * inv_n * sum_dy_xhat[c]);
              } else {
                gx[i] += scale * dy[i];
              }
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Dense

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  expect_rank("dense", input, 2, "input");
  expect_rank("dense", weight, 2, "weight");
  expect_rank("dense", bias, 1, "bias");
  const std::size_t B = input.dim(0), F = input.dim(1), O = weight.dim(0);
  if (weight.dim(1) != F) shape_error("dense", "weight expects " + std::to_string(weight.dim(1)) + " inputs, got " + std::to_string(F));
  if (bias.dim(0) != O) shape_error("dense", "bias length does not match outputs");
  std::vector<double> out(B * O);
  auto x = input.values(), w = weight.values(), bv = bias.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      double s = bv[o];
      for (std::size_t f = 0; f < F; ++f) s += w[o * F + f] * x[b * F + f];
      out[b * O + o] = s;
    }
  return make_result("dense", {B, O}, std::move(out), {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
                     [=](Node& self) {
                       Node& xn = *self.parents[0];
                       Node& wn = *self.parents[1];
                       Node& bn = *self.parents[2];
                       const auto& dy = self.grad;
                       if (bn.requires_grad) {
                         auto& gb = bn.ensure_grad();
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t o = 0; o < O; ++o) gb[o] += dy[b * O + o];
                       }
                       if (wn.requires_grad) {
                         auto& gw = wn.ensure_grad();
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t o = 0; o < O; ++o)
                             for (std::size_t f = 0; f < F; ++f) gw[o * F + f] += dy[b * O + o] * xn.value[b * F + f];
                       }
                       if (xn.requires_grad) {
                         auto& gx = xn.ensure_grad();
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t o = 0; o < O; ++o)
                             for (std::size_t f = 0; f < F; ++f) gx[b * F + f] += dy[b * O + o] * wn.value[o * F + f];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Softmax / squash

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto& s = a.shape();
  if (axis >= s.size()) shape_error("softmax", "axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) z += (out[base + k * inner] = std::exp(x[base + k * inner] - mx));
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  return make_result("softmax", s, std::move(out), {a.node_ptr()}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += dy[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = base + k * inner;
          g[i] += y[i] * (dy[i] - dot);
        }
      }
  });
}

Tensor squash(const Tensor& s) {
  if (s.rank() == 0) shape_error("squash", "needs at least one axis");
  const std::size_t d = s.shape().back();
  const std::size_t rows = s.size() / d;
  auto x = s.values();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) n2 += x[r * d + k] * x[r * d + k];
    if (n2 == 0.0) continue;
    const double factor = std::sqrt(n2) / (1.0 + n2);
    for (std::size_t k = 0; k < d; ++k) out[r * d + k] = factor * x[r * d + k];
  }
  return make_result("squash", s.shape(), std::move(out), {s.node_ptr()}, [=](Node& self) {
    Node& xn = *self.parents[0];
    auto& g = xn.ensure_grad();
    const auto& xv = xn.value;
    const auto& dy = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double n2 = 0.0, dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        n2 += xv[r * d + k] * xv[r * d + k];
        dot += dy[r * d + k] * xv[r * d + k];
      }
      if (n2 == 0.0) continue;
      const double norm = std::sqrt(n2);
      const double f = norm / (1.0 + n2);
      // d/ds [f(|s|) s] = f I + (f'(|s|) / |s|) s s^T with f'(n) = (1 - n^2) / (1 + n^2)^2.
      const double h = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2) * norm);
      for (std::size_t k = 0; k < d; ++k) g[r * d + k] += f * dy[r * d + k] + h * xv[r * d + k] * dot;
    }
  });
}

// ---------------------------------------------------------------------------
// Loss

Tensor bce_loss(const Tensor& prob, const Tensor& target) {
  expect_rank("bce_loss", prob, 2, "prob");
  if (prob.shape() != target.shape() || prob.dim(1) != 1)
    shape_error("bce_loss", "prob and target must both be [B, 1]");
  const std::size_t B = prob.dim(0);
  auto p = prob.values(), y = target.values();
  for (double t : y)
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::TargetOutOfRange, "target " + std::to_string(t));
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double pc = std::clamp(p[b], kBceEps, 1.0 - kBceEps);
    total -= y[b] * std::log(pc) + (1.0 - y[b]) * std::log(1.0 - pc);
  }
  return make_result("bce_loss", {1}, {total / static_cast<double>(B)}, {prob.node_ptr(), target.node_ptr()},
                     [B](Node& self) {
                       Node& pn = *self.parents[0];
                       Node& yn = *self.parents[1];
                       const double scale = self.grad[0] / static_cast<double>(B);
                       if (pn.requires_grad) {
                         auto& g = pn.ensure_grad();
                         for (std::size_t b = 0; b < B; ++b) {
                           const double pv = pn.value[b];
                           if (pv < kBceEps || pv > 1.0 - kBceEps) continue;  // clamped: flat
                           const double yv = yn.value[b];
                           g[b] += scale * (-(yv / pv) + (1.0 - yv) / (1.0 - pv));
                         }
                       }
                       if (yn.requires_grad) {
                         auto& g = yn.ensure_grad();
                         for (std::size_t b = 0; b < B; ++b) {
                           const double pc = std::clamp(pn.value[b], kBceEps, 1.0 - kBceEps);
                           g[b] += scale * (std::log(1.0 - pc) - std::log(pc));
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Capsules

Tensor capsule_predict(const Tensor& u, const Tensor& weight) {
  expect_rank("capsule_predict", u, 3, "u");
  expect_rank("capsule_predict", weight, 4, "weight");
  const std::size_t B = u.dim(0), N = u.dim(1), Din = u.dim(2);
  const std::size_t J = weight.dim(1), Dout = weight.dim(2);
  if (weight.dim(0) != N || weight.dim(3) != Din)
    shape_error("capsule_predict", "weight " + shape_string(weight.shape()) + " incompatible with u " + shape_string(u.shape()));
  std::vector<double> out(B * N * J * Dout, 0.0);
  auto uv = u.values(), w = weight.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < N; ++i) {
      const double* ui = &uv[(b * N + i) * Din];
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < Dout; ++k) {
          const double* wr = &w[((i * J + j) * Dout + k) * Din];
          double s = 0.0;
          for (std::size_t l = 0; l < Din; ++l) s += wr[l] * ui[l];
          out[((b * N + i) * J + j) * Dout + k] = s;
        }
    }
  return make_result("capsule_predict", {B, N, J, Dout}, std::move(out), {u.node_ptr(), weight.node_ptr()},
                     [=](Node& self) {
                       Node& un = *self.parents[0];
                       Node& wn = *self.parents[1];
                       double* gu = un.requires_grad ? un.ensure_grad().data() : nullptr;
                       double* gw = wn.requires_grad ? wn.ensure_grad().data() : nullptr;
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t i = 0; i < N; ++i) {
                           const double* ui = &un.value[(b * N + i) * Din];
                           for (std::size_t j = 0; j < J; ++j)
                             for (std::size_t k = 0; k < Dout; ++k) {
                               const double dy = self.grad[((b * N + i) * J + j) * Dout + k];
                               const std::size_t wbase = ((i * J + j) * Dout + k) * Din;
                               for (std::size_t l = 0; l < Din; ++l) {
                                 if (gw) gw[wbase + l] += dy * ui[l];
                                 if (gu) gu[(b * N + i) * Din + l] += dy * wn.value[wbase + l];
                               }
                             }
                         }
                     });
}

Tensor routing_combine(const Tensor& c, const Tensor& u_hat) {
  expect_rank("routing_combine", c, 3, "c");
  expect_rank("routing_combine", u_hat, 4, "u_hat");
  const std::size_t B = u_hat.dim(0), N = u_hat.dim(1), J = u_hat.dim(2), D = u_hat.dim(3);
  if (c.dim(0) != B || c.dim(1) != N || c.dim(2) != J) shape_error("routing_combine", "c does not match u_hat");
  std::vector<double> out(B * J * D, 0.0);
  auto cv = c.values(), uv = u_hat.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < J; ++j) {
        const double cij = cv[(b * N + i) * J + j];
        const double* u = &uv[((b * N + i) * J + j) * D];
        double* s = &out[(b * J + j) * D];
        for (std::size_t k = 0; k < D; ++k) s[k] += cij * u[k];
      }
  return make_result("routing_combine", {B, J, D}, std::move(out), {c.node_ptr(), u_hat.node_ptr()},
                     [=](Node& self) {
                       Node& cn = *self.parents[0];
                       Node& un = *self.parents[1];
                       double* gc = cn.requires_grad ? cn.ensure_grad().data() : nullptr;
                       double* gu = un.requires_grad ? un.ensure_grad().data() : nullptr;
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t i = 0; i < N; ++i)
                           for (std::size_t j = 0; j < J; ++j) {
                             const std::size_t ci = (b * N + i) * J + j;
                             const double* ds = &self.grad[(b * J + j) * D];
                             const double* u = &un.value[ci * D];
                             if (gc) {
                               double dot = 0.0;
                               for (std::size_t k = 0; k < D; ++k) dot += ds[k] * u[k];
                               gc[ci] += dot;
                             }
                             if (gu)
                               for (std::size_t k = 0; k < D; ++k) gu[ci * D + k] += cn.value[ci] * ds[k];
                           }
                     });
}

Tensor routing_agreement(const Tensor& u_hat, const Tensor& v) {
  expect_rank("routing_agreement", u_hat, 4, "u_hat");
  expect_rank("routing_agreement", v, 3, "v");
  const std::size_t B = u_hat.dim(0), N = u_hat.dim(1), J = u_hat.dim(2), D = u_hat.dim(3);
  if (v.dim(0) != B || v.dim(1) != J || v.dim(2) != D) shape_error("routing_agreement", "v does not match u_hat");
  std::vector<double> out(B * N * J);
  auto uv = u_hat.values(), vv = v.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < J; ++j) {
        const double* u = &uv[((b * N + i) * J + j) * D];
        const double* vj = &vv[(b * J + j) * D];
        double dot = 0.0;
        for (std::size_t k = 0; k < D; ++k) dot += u[k] * vj[k];
        out[(b * N + i) * J + j] = dot;
      }
  return make_result("routing_agreement", {B, N, J}, std::move(out), {u_hat.node_ptr(), v.node_ptr()},
                     [=](Node& self) {
                       Node& un = *self.parents[0];
                       Node& vn = *self.parents[1];
                       double* gu = un.requires_grad ? un.ensure_grad().data() : nullptr;
                       double* gv = vn.requires_grad ? vn.ensure_grad().data() : nullptr;
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t i = 0; i < N; ++i)
                           for (std::size_t j = 0; j < J; ++j) {
                             const std::size_t ai = (b * N + i) * J + j;
                             const double da = self.grad[ai];
                             const std::size_t vb = (b * J + j) * D;
                             for (std::size_t k = 0; k < D; ++k) {
                               if (gu) gu[ai * D + k] += da * vn.value[vb + k];
                               if (gv) gv[vb + k] += da * un.value[ai * D + k];
                             }
                           }
                     });
}

// ---------------------------------------------------------------------------
// Optimisation

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error(ErrorCode::NonFiniteGradient, "gradient norm is not finite");
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= scale;
  }
  return norm;
}

void Adam::step(std::span<Tensor> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorCode::InvalidArgument, "Adam parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(g[i])) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in optimizer step");
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      w[i] -= opts_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps);
    }
  }
}

}  // namespace rescap::ad
