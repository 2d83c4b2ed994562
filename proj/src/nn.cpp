#include "ttse/nn.hpp"

#include <cmath>

namespace ttse::nn {

using ad::Index;

Mat xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

Mat normal_init(Index rows, Index cols, double std_dev, Rng& rng) {
  std::normal_distribution<double> g(0.0, std_dev);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

void Linear::init(Index in, Index out, Rng& rng, const std::string& name, bool zero) {
  Mat wv = zero ? Mat::Zero(out, in) : xavier_uniform(out, in, rng);
  w = Tensor::leaf(std::move(wv), name + ".w");
  b = Tensor::leaf(Mat::Zero(out, 1), name + ".b");
}

Tensor Linear::operator()(const Tensor& x) const {
  return ad::add_colvec(ad::matmul(w, x), b);
}

void Linear::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

void Conv1d::init(Index in, Index out, int kernel, Rng& rng, const std::string& name) {
  k = kernel;
  w = Tensor::leaf(xavier_uniform(out, in * kernel, rng), name + ".w");
  b = Tensor::leaf(Mat::Zero(out, 1), name + ".b");
}

Tensor Conv1d::operator()(const Tensor& x) const {
  return ad::add_colvec(ad::matmul(w, ad::im2col(x, k)), b);
}

void Conv1d::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

void LayerNorm::init(Index d, const std::string& name) {
  gamma = Tensor::leaf(Mat::Ones(d, 1), name + ".gamma");
  beta = Tensor::leaf(Mat::Zero(d, 1), name + ".beta");
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ad::layer_norm_cols(x, gamma, beta);
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void MultiHeadAttention::init(Index d, int n_heads, Rng& rng, const std::string& name) {
  require(d % n_heads == 0, Error::Kind::validation,
          "attention: hidden size not divisible by head count");
  heads = n_heads;
  dim = d;
  wqkv = Tensor::leaf(xavier_uniform(3 * d, d, rng), name + ".wqkv");
  bqkv = Tensor::leaf(Mat::Zero(3 * d, 1), name + ".bqkv");
  wo = Tensor::leaf(xavier_uniform(d, d, rng), name + ".wo");
  bo = Tensor::leaf(Mat::Zero(d, 1), name + ".bo");
}

Tensor MultiHeadAttention::operator()(const Tensor& x, double attn_dropout,
                                      const RunCtx& ctx) const {
  const Index dh = dim / heads;
  Tensor qkv = ad::add_colvec(ad::matmul(wqkv, x), bqkv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Tensor q = ad::rows(qkv, h * dh, dh);
    Tensor k = ad::rows(qkv, dim + h * dh, dh);
    Tensor v = ad::rows(qkv, 2 * dim + h * dh, dh);
    Tensor scores = ad::mul_scalar(ad::matmul(ad::transpose(q), k), scale);  // [T x T]
    Tensor probs = ad::softmax_rows(scores);
    if (attn_dropout > 0 && ctx.training)
      probs = ad::dropout(probs, attn_dropout, *ctx.rng, true);
    head_outs.push_back(ad::matmul(v, ad::transpose(probs)));  // [dh x T]
  }
  Tensor o = heads == 1 ? head_outs[0] : ad::vcat(head_outs);
  return ad::add_colvec(ad::matmul(wo, o), bo);
}

void MultiHeadAttention::collect(ParamList& out) {
  out.push_back(&wqkv);
  out.push_back(&bqkv);
  out.push_back(&wo);
  out.push_back(&bo);
}

void FFTBlock::init(Index d, int heads, int kernel, Index filter, double dropout, Rng& rng,
                    const std::string& name) {
  dropout_p = dropout;
  attn.init(d, heads, rng, name + ".attn");
  ln1.init(d, name + ".ln1");
  ln2.init(d, name + ".ln2");
  conv1.init(d, filter, kernel, rng, name + ".conv1");
  conv2.init(filter, d, kernel, rng, name + ".conv2");
}

Tensor FFTBlock::operator()(const Tensor& x, const RunCtx& ctx) const {
  Tensor a = attn(x, dropout_p, ctx);
  if (dropout_p > 0) a = ad::dropout(a, dropout_p, *ctx.rng, ctx.training);
  Tensor h = ln1(ad::add(x, a));
  Tensor f = conv2(ad::relu(conv1(h)));
  if (dropout_p > 0) f = ad::dropout(f, dropout_p, *ctx.rng, ctx.training);
  return ln2(ad::add(h, f));
}

void FFTBlock::collect(ParamList& out) {
  attn.collect(out);
  ln1.collect(out);
  ln2.collect(out);
  conv1.collect(out);
  conv2.collect(out);
}

void DiTBlock::init(Index d, Index cond_dim, int heads, Index mlp_hidden, double dropout,
                    Rng& rng, const std::string& name) {
  dim = d;
  dropout_p = dropout;
  wmod = Tensor::leaf(Mat::Zero(6 * d, cond_dim), name + ".wmod");
  bmod = Tensor::leaf(Mat::Zero(6 * d, 1), name + ".bmod");
  attn.init(d, heads, rng, name + ".attn");
  mlp1.init(d, mlp_hidden, rng, name + ".mlp1");
  mlp2.init(mlp_hidden, d, rng, name + ".mlp2");
}

Tensor DiTBlock::operator()(const Tensor& x, const Tensor& cond, const RunCtx& ctx) const {
  Tensor mod = ad::add_colvec(ad::matmul(wmod, ad::silu(cond)), bmod);  // [6D x 1]
  Tensor shift1 = ad::rows(mod, 0, dim);
  Tensor scale1 = ad::rows(mod, dim, dim);
  Tensor gate1 = ad::rows(mod, 2 * dim, dim);
  Tensor shift2 = ad::rows(mod, 3 * dim, dim);
  Tensor scale2 = ad::rows(mod, 4 * dim, dim);
  Tensor gate2 = ad::rows(mod, 5 * dim, dim);

  Tensor ln_x = ad::layer_norm_cols(x, Tensor(), Tensor());
  Tensor h1 = ad::add_colvec(ad::mul_colvec(ln_x, ad::add_scalar(scale1, 1.0)), shift1);
  Tensor a = attn(h1, dropout_p, ctx);
  if (dropout_p > 0) a = ad::dropout(a, dropout_p, *ctx.rng, ctx.training);
  Tensor x1 = ad::add(x, ad::mul_colvec(a, gate1));

  Tensor ln_x1 = ad::layer_norm_cols(x1, Tensor(), Tensor());
  Tensor h2 = ad::add_colvec(ad::mul_colvec(ln_x1, ad::add_scalar(scale2, 1.0)), shift2);
  Tensor f = mlp2(ad::gelu(mlp1(h2)));
  if (dropout_p > 0) f = ad::dropout(f, dropout_p, *ctx.rng, ctx.training);
  return ad::add(x1, ad::mul_colvec(f, gate2));
}

void DiTBlock::collect(ParamList& out) {
  out.push_back(&wmod);
  out.push_back(&bmod);
  attn.collect(out);
  mlp1.collect(out);
  mlp2.collect(out);
}

Mat sinusoidal_positions(Index d, Index t) {
  Mat pe(d, t);
  for (Index pos = 0; pos < t; ++pos) {
    for (Index i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe(i, pos) = std::sin(pos * freq);
      if (i + 1 < d) pe(i + 1, pos) = std::cos(pos * freq);
    }
  }
  return pe;
}

Mat sinusoidal_step_embedding(Index d, double step) {
  Mat e(d, 1);
  for (Index i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    e(i, 0) = std::sin(step * freq);
    if (i + 1 < d) e(i + 1, 0) = std::cos(step * freq);
  }
  return e;
}

void Adam::step(const ParamList& params) {
  if (slots_.size() != params.size()) {
    slots_.clear();
    slots_.reserve(params.size());
    for (Tensor* p : params)
      slots_.push_back({Mat::Zero(p->rows(), p->cols()), Mat::Zero(p->rows(), p->cols())});
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor* p = params[i];
    if (p->grad().size() == 0) {
      p->zero_grad();
      continue;
    }
    Slot& s = slots_[i];
    s.m = beta1_ * s.m + (1.0 - beta1_) * p->grad();
    s.v = beta2_ * s.v + (1.0 - beta2_) * p->grad().cwiseProduct(p->grad());
    Mat mhat = s.m / bc1;
    Mat vhat = s.v / bc2;
    Mat denom = vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(), eps_);
    p->value() -= lr_ * mhat.cwiseQuotient(denom);
    p->zero_grad();
  }
}

void Adam::reset() {
  t_ = 0;
  slots_.clear();
}

void Adam::restore(std::int64_t t, std::vector<Slot> slots) {
  t_ = t;
  slots_ = std::move(slots);
}

}  // namespace ttse::nn
