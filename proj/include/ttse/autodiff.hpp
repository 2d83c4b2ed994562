#pragma once

// Reverse-mode automatic differentiation over Eigen double matrices.
// Tensors are [feature x time] throughout the project; per-phoneme scalar
// sequences are [1 x N] rows. Graphs are built per forward pass and freed
// when the last Tensor handle drops.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ttse/common.hpp"

namespace ttse::ad {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Mat value;
  Mat grad;  // materialized lazily during backward
  bool requires_grad = false;
  bool is_leaf = false;
  std::uint32_t leaf_id = 0;  // unique per leaf, for optimizer state
  std::string name;           // set on leaves (parameters)
  std::vector<NodePtr> parents;
  // Receives the accumulated grad of this node; pushes into parents.
  std::function<void(Node&)> backfn;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat::Zero(value.rows(), value.cols());
  }
};

// Thread-local switch: with grads disabled, ops produce detached nodes.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor constant(Mat v);
  static Tensor scalar(double v);
  // A trainable leaf; gets a process-unique leaf_id.
  static Tensor leaf(Mat v, std::string name);

  bool defined() const { return static_cast<bool>(n_); }
  const Mat& value() const { return n_->value; }
  Mat& value() { return n_->value; }
  const Mat& grad() const { return n_->grad; }
  void zero_grad() { n_->grad = Mat::Zero(n_->value.rows(), n_->value.cols()); }
  bool requires_grad() const { return n_->requires_grad; }
  std::uint32_t leaf_id() const { return n_->leaf_id; }
  const std::string& name() const { return n_->name; }
  Index rows() const { return n_->value.rows(); }
  Index cols() const { return n_->value.cols(); }
  double item() const;
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

// Runs reverse-mode accumulation from a 1x1 root. Leaf grads accumulate
// into Node::grad (call zero_grad between independent uses).
void backward(const Tensor& root);

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor log1p(const Tensor& a);
Tensor expm1(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);

// ---- structural ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor rows(const Tensor& a, Index r0, Index nrows);
Tensor vcat(const std::vector<Tensor>& parts);
// a [D x T] + b [D x 1] broadcast across columns
Tensor add_colvec(const Tensor& a, const Tensor& b);
// a [D x T] * s [D x 1] broadcast across columns
Tensor mul_colvec(const Tensor& a, const Tensor& s);
Tensor sum(const Tensor& a);   // -> 1x1
Tensor mean(const Tensor& a);  // -> 1x1

// ---- neural primitives ----
// Row-wise softmax (each row sums to 1); used over attention scores.
Tensor softmax_rows(const Tensor& a);
// Normalizes each column over features; gamma/beta [D x 1] or undefined
// for a plain (non-affine) layer norm.
Tensor layer_norm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
// Inverted dropout; identity when !training.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);
// Zero-padded patch extraction for 1-D convolution along time.
// x [C x T] -> [(C*k) x T], kernel centered (k odd).
Tensor im2col(const Tensor& x, int k);
// weight [D x V], ids select columns -> [D x N]
Tensor embedding(const Tensor& weight, const std::vector<int>& ids);

// Mean cross-entropy of per-column softmax over masked columns.
// logits [V x T], labels[t] in [0, V), mask picks the columns scored.
Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<bool>& mask);

// 1 - mean SSIM over the masked columns of pred/target (gaussian window).
// Masked columns are gathered into a sub-image; windows slide fully inside
// it, so values outside the mask never affect the result.
Tensor ssim_loss_masked(const Tensor& pred, const Tensor& target,
                        const std::vector<bool>& mask_cols, int window,
                        double sigma, double c1, double c2);

}  // namespace ttse::ad
