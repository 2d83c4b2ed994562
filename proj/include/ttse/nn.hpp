#pragma once

// Neural building blocks used by the model: linear / conv / norm layers,
// feed-forward transformer blocks, adaLN-zero DiT blocks, and Adam.

#include <string>
#include <vector>

#include "ttse/autodiff.hpp"

namespace ttse::nn {

using ad::Mat;
using ad::Tensor;

// Forward-pass context: training mode plus the RNG driving dropout.
struct RunCtx {
  bool training = false;
  Rng* rng = nullptr;
};

using ParamList = std::vector<Tensor*>;

// Seeded init helpers.
Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std_dev, Rng& rng);

struct Linear {
  Tensor w;  // [out x in]
  Tensor b;  // [out x 1]
  void init(Eigen::Index in, Eigen::Index out, Rng& rng, const std::string& name,
            bool zero = false);
  Tensor operator()(const Tensor& x) const;  // x [in x T] -> [out x T]
  void collect(ParamList& out);
};

struct Conv1d {
  Tensor w;  // [out x (in*k)]
  Tensor b;  // [out x 1]
  int k = 1;
  void init(Eigen::Index in, Eigen::Index out, int kernel, Rng& rng, const std::string& name);
  Tensor operator()(const Tensor& x) const;  // same-length conv along time
  void collect(ParamList& out);
};

struct LayerNorm {
  Tensor gamma, beta;  // [D x 1]
  void init(Eigen::Index d, const std::string& name);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out);
};

struct MultiHeadAttention {
  Tensor wqkv, bqkv;  // [3D x D], [3D x 1]
  Tensor wo, bo;      // [D x D], [D x 1]
  int heads = 1;
  Eigen::Index dim = 0;
  void init(Eigen::Index d, int n_heads, Rng& rng, const std::string& name);
  Tensor operator()(const Tensor& x, double attn_dropout, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

// FastSpeech-style feed-forward transformer block: post-LN self-attention
// followed by a two-layer 1-D conv feed-forward.
struct FFTBlock {
  MultiHeadAttention attn;
  LayerNorm ln1, ln2;
  Conv1d conv1, conv2;
  double dropout_p = 0.0;
  void init(Eigen::Index d, int heads, int kernel, Eigen::Index filter, double dropout,
            Rng& rng, const std::string& name);
  Tensor operator()(const Tensor& x, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

// DiT block with zero-initialized adaptive layer norm: the conditioning
// vector produces shift/scale/gate for both residual branches; gates start
// at zero so a fresh block is an identity map.
struct DiTBlock {
  Tensor wmod, bmod;  // [6D x C], [6D x 1], zero-initialized
  MultiHeadAttention attn;
  Linear mlp1, mlp2;
  double dropout_p = 0.0;
  Eigen::Index dim = 0;
  void init(Eigen::Index d, Eigen::Index cond_dim, int heads, Eigen::Index mlp_hidden,
            double dropout, Rng& rng, const std::string& name);
  // x [D x T], cond [C x 1]
  Tensor operator()(const Tensor& x, const Tensor& cond, const RunCtx& ctx) const;
  void collect(ParamList& out);
};

// Standard sinusoidal position table [d x t].
Mat sinusoidal_positions(Eigen::Index d, Eigen::Index t);
// Sinusoidal embedding of a scalar step (diffusion timestep), [d x 1].
Mat sinusoidal_step_embedding(Eigen::Index d, double step);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from accumulated grads, then zeroes them.
  void step(const ParamList& params);
  void reset();

  double lr() const { return lr_; }

  // Serialization hooks for checkpoint resume.
  struct Slot {
    Mat m, v;
  };
  std::int64_t t() const { return t_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void restore(std::int64_t t, std::vector<Slot> slots);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;  // parallel to the param list order
};

}  // namespace ttse::nn
