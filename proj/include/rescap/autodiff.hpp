#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rescap::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

/// Handle to a dense row-major float64 array that can take part in reverse-mode
/// differentiation. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> values() const;
  /// Direct write access, for parameter updates and test perturbations.
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient of the last backward pass (empty when none has reached this tensor).
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut off from the graph.
  Tensor detach() const;

  /// Reverse pass from a scalar. Populates grad() on every requires_grad tensor reachable
  /// from this one; gradients accumulate across calls until zero_grad().
  void backward() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  std::string op;  // empty for leaves
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// Reductions and layout
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// out[k] = a[index[k]]; backward scatter-adds.
Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index);
/// [B, C, L] -> [B, C], mean over L.
Tensor global_avg_pool(const Tensor& a);

enum class Padding {
  Causal,  // left-pad by (k-1)*dilation, output length == input length (stride 1)
  Valid,   // no padding
};

struct Conv1dOptions {
  std::size_t dilation = 1;
  std::size_t stride = 1;
  Padding padding = Padding::Causal;
};

/// input [B, C_in, L], kernel [C_out, C_in, k], bias [C_out] -> [B, C_out, L_out].
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv1dOptions& opts = {});
std::size_t conv1d_output_length(std::size_t length, std::size_t k, const Conv1dOptions& opts);

enum class Mode { Train, Infer };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.9;
};

/// input [B, C, L]; per-channel statistics over batch and length. In Train mode the
/// running statistics are updated in place; Infer mode normalizes with them.
Tensor batch_norm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, Mode mode, const BatchNormOptions& opts = {});

/// input [B, F_in], weight [F_out, F_in], bias [F_out] -> [B, F_out].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& a, std::size_t axis);
/// v = (|s|^2 / (1 + |s|^2)) * s / |s| over the last axis; v = 0 (and zero gradient) at s = 0.
Tensor squash(const Tensor& s);

inline constexpr double kBceEps = 1e-7;
/// Mean binary cross-entropy; prob and target are [B, 1], prob clamped to [eps, 1 - eps].
Tensor bce_loss(const Tensor& prob, const Tensor& target);

// Capsule routing primitives.
/// u [B, N, d_in], W [N, J, d_out, d_in] -> u_hat [B, N, J, d_out], u_hat[b,i,j] = W[i,j] u[b,i].
Tensor capsule_predict(const Tensor& u, const Tensor& weight);
/// c [B, N, J], u_hat [B, N, J, d] -> s [B, J, d], s[b,j] = sum_i c[b,i,j] u_hat[b,i,j].
Tensor routing_combine(const Tensor& c, const Tensor& u_hat);
/// u_hat [B, N, J, d], v [B, J, d] -> [B, N, J], dot products u_hat[b,i,j] . v[b,j].
Tensor routing_agreement(const Tensor& u_hat, const Tensor& v);

// Optimisation
/// Scales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

/// Bias-corrected Adam. Moment buffers are keyed by parameter position.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void step(std::span<Tensor> params);
  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace rescap::ad
