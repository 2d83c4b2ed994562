#include "ttse/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace ttse::ad {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint32_t> g_next_leaf_id{1};

NodePtr make_node(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

bool any_requires(const std::vector<NodePtr>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

// Builds an op node. backfn is dropped when grads are off or no parent needs them.
Tensor op(Mat v, std::vector<NodePtr> parents, std::function<void(Node&)> backfn) {
  auto n = make_node(std::move(v));
  if (grad_enabled() && any_requires(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return Tensor(n);
}

void accum(const NodePtr& p, const Mat& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  p->grad += g;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Error::Kind::validation,
          std::string(what) + ": shape mismatch");
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::constant(Mat v) { return Tensor(make_node(std::move(v))); }

Tensor Tensor::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::leaf(Mat v, std::string name) {
  auto n = make_node(std::move(v));
  n->requires_grad = true;
  n->is_leaf = true;
  n->leaf_id = g_next_leaf_id.fetch_add(1);
  n->name = std::move(name);
  return Tensor(n);
}

double Tensor::item() const {
  require(rows() == 1 && cols() == 1, Error::Kind::validation, "item(): tensor is not 1x1");
  return n_->value(0, 0);
}

void backward(const Tensor& root) {
  require(root.rows() == 1 && root.cols() == 1, Error::Kind::validation,
          "backward(): root must be a 1x1 scalar");
  // Iterative topological order over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i].get();
      ++i;
      if (p->requires_grad && !p->is_leaf && seen.insert(p).second)
        stack.push_back({p, 0});
      else
        seen.insert(p);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // order is parents-before-children; walk it in reverse.
  root.node()->ensure_grad();
  root.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backfn) {
      n->ensure_grad();
      n->backfn(*n);
    }
  }
  // Free intermediate grads (leaves keep theirs for the optimizer).
  for (Node* n : order)
    if (!n->is_leaf) n->grad.resize(0, 0);
}

// ---- elementwise / arithmetic ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return op(a.value() + b.value(), {pa, pb}, [pa, pb](Node& n) {
    accum(pa, n.grad);
    accum(pb, n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return op(a.value() - b.value(), {pa, pb}, [pa, pb](Node& n) {
    accum(pa, n.grad);
    accum(pb, -n.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return op(a.value().cwiseProduct(b.value()), {pa, pb}, [pa, pb](Node& n) {
    accum(pa, n.grad.cwiseProduct(pb->value));
    accum(pb, n.grad.cwiseProduct(pa->value));
  });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
  auto pa = a.node();
  return op(a.value().array() + s, {pa}, [pa](Node& n) { accum(pa, n.grad); });
}

Tensor mul_scalar(const Tensor& a, double s) {
  auto pa = a.node();
  return op(a.value() * s, {pa}, [pa, s](Node& n) { accum(pa, n.grad * s); });
}

Tensor square(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().cwiseProduct(a.value()), {pa}, [pa](Node& n) {
    accum(pa, (2.0 * n.grad).cwiseProduct(pa->value));
  });
}

Tensor abs(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().cwiseAbs(), {pa}, [pa](Node& n) {
    Mat sgn = pa->value.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    accum(pa, n.grad.cwiseProduct(sgn));
  });
}

Tensor exp(const Tensor& a) {
  auto pa = a.node();
  Mat v = a.value().array().exp();
  return op(v, {pa}, [pa, v](Node& n) { accum(pa, n.grad.cwiseProduct(v)); });
}

Tensor log(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().array().log(), {pa}, [pa](Node& n) {
    accum(pa, n.grad.cwiseQuotient(pa->value));
  });
}

Tensor log1p(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().unaryExpr([](double x) { return std::log1p(x); }), {pa}, [pa](Node& n) {
    accum(pa, n.grad.cwiseQuotient(Mat(pa->value.array() + 1.0)));
  });
}

Tensor expm1(const Tensor& a) {
  auto pa = a.node();
  Mat v = a.value().unaryExpr([](double x) { return std::expm1(x); });
  return op(v, {pa}, [pa, v](Node& n) {
    accum(pa, n.grad.cwiseProduct(Mat(v.array() + 1.0)));
  });
}

Tensor relu(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().cwiseMax(0.0), {pa}, [pa](Node& n) {
    Mat m = pa->value.unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; });
    accum(pa, n.grad.cwiseProduct(m));
  });
}

Tensor gelu(const Tensor& a) {
  auto pa = a.node();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  Mat v = a.value().unaryExpr(
      [&](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return op(v, {pa}, [pa](Node& n) {
    Mat d = pa->value.unaryExpr([&](double x) {
      double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    });
    accum(pa, n.grad.cwiseProduct(d));
  });
}

Tensor silu(const Tensor& a) {
  auto pa = a.node();
  Mat v = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return op(v, {pa}, [pa](Node& n) {
    Mat d = pa->value.unaryExpr([](double x) {
      double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    });
    accum(pa, n.grad.cwiseProduct(d));
  });
}

Tensor tanh(const Tensor& a) {
  auto pa = a.node();
  Mat v = a.value().array().tanh();
  return op(v, {pa}, [pa, v](Node& n) {
    accum(pa, n.grad.cwiseProduct(Mat(1.0 - v.array().square())));
  });
}

// ---- structural ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), Error::Kind::validation, "matmul: inner dims differ");
  auto pa = a.node(), pb = b.node();
  return op(a.value() * b.value(), {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) accum(pa, n.grad * pb->value.transpose());
    if (pb->requires_grad) accum(pb, pa->value.transpose() * n.grad);
  });
}

Tensor transpose(const Tensor& a) {
  auto pa = a.node();
  return op(a.value().transpose(), {pa}, [pa](Node& n) {
    accum(pa, n.grad.transpose());
  });
}

Tensor rows(const Tensor& a, Index r0, Index nrows) {
  require(r0 >= 0 && r0 + nrows <= a.rows(), Error::Kind::validation, "rows: out of range");
  auto pa = a.node();
  return op(a.value().middleRows(r0, nrows), {pa}, [pa, r0, nrows](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad.middleRows(r0, nrows) += n.grad;
  });
}

Tensor vcat(const std::vector<Tensor>& parts) {
  require(!parts.empty(), Error::Kind::validation, "vcat: empty");
  Index total = 0;
  const Index c = parts[0].cols();
  for (const auto& p : parts) {
    require(p.cols() == c, Error::Kind::validation, "vcat: column mismatch");
    total += p.rows();
  }
  Mat v(total, c);
  Index r = 0;
  std::vector<NodePtr> parents;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    parents.push_back(p.node());
    offsets.push_back(r);
    r += p.rows();
  }
  return op(std::move(v), parents, [parents, offsets](Node& n) {
    for (size_t i = 0; i < parents.size(); ++i)
      accum(parents[i], n.grad.middleRows(offsets[i], parents[i]->value.rows()));
  });
}

Tensor add_colvec(const Tensor& a, const Tensor& b) {
  require(b.cols() == 1 && b.rows() == a.rows(), Error::Kind::validation,
          "add_colvec: b must be [rows(a) x 1]");
  auto pa = a.node(), pb = b.node();
  return op(a.value().colwise() + Eigen::VectorXd(b.value().col(0)), {pa, pb},
            [pa, pb](Node& n) {
              accum(pa, n.grad);
              accum(pb, n.grad.rowwise().sum());
            });
}

Tensor mul_colvec(const Tensor& a, const Tensor& s) {
  require(s.cols() == 1 && s.rows() == a.rows(), Error::Kind::validation,
          "mul_colvec: s must be [rows(a) x 1]");
  auto pa = a.node(), ps = s.node();
  Mat v = a.value().array().colwise() * s.value().col(0).array();
  return op(std::move(v), {pa, ps}, [pa, ps](Node& n) {
    if (pa->requires_grad)
      accum(pa, Mat(n.grad.array().colwise() * ps->value.col(0).array()));
    if (ps->requires_grad)
      accum(ps, n.grad.cwiseProduct(pa->value).rowwise().sum());
  });
}

Tensor sum(const Tensor& a) {
  auto pa = a.node();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return op(std::move(v), {pa}, [pa](Node& n) {
    accum(pa, Mat::Constant(pa->value.rows(), pa->value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.rows() * a.cols()));
}

// ---- neural primitives ----

Tensor softmax_rows(const Tensor& a) {
  auto pa = a.node();
  Mat v = a.value();
  for (Index i = 0; i < v.rows(); ++i) {
    double mx = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - mx).exp();
    v.row(i) /= v.row(i).sum();
  }
  return op(v, {pa}, [pa, v](Node& n) {
    Mat g(v.rows(), v.cols());
    for (Index i = 0; i < v.rows(); ++i) {
      double dot = n.grad.row(i).dot(v.row(i));
      g.row(i) = (v.row(i).array() * (n.grad.row(i).array() - dot)).matrix();
    }
    accum(pa, g);
  });
}

Tensor layer_norm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  auto px = x.node();
  const Index d = x.rows(), t = x.cols();
  const bool affine = gamma.defined();
  if (affine) {
    require(gamma.rows() == d && gamma.cols() == 1 && beta.rows() == d && beta.cols() == 1,
            Error::Kind::validation, "layer_norm: gamma/beta must be [D x 1]");
  }
  Mat xhat(d, t);
  Eigen::VectorXd inv_std(t);
  for (Index j = 0; j < t; ++j) {
    double mu = x.value().col(j).mean();
    double var = (x.value().col(j).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(j) = is;
    xhat.col(j) = (x.value().col(j).array() - mu) * is;
  }
  Mat out = xhat;
  std::vector<NodePtr> parents{px};
  NodePtr pg, pb;
  if (affine) {
    pg = gamma.node();
    pb = beta.node();
    out = (xhat.array().colwise() * gamma.value().col(0).array()).colwise() +
          beta.value().col(0).array();
    parents.push_back(pg);
    parents.push_back(pb);
  }
  return op(std::move(out), parents, [px, pg, pb, xhat, inv_std, affine, d](Node& n) {
    // ghat = dL/dxhat
    Mat ghat = n.grad;
    if (affine) {
      ghat = n.grad.array().colwise() * pg->value.col(0).array();
      if (pg->requires_grad) accum(pg, n.grad.cwiseProduct(xhat).rowwise().sum());
      if (pb->requires_grad) accum(pb, n.grad.rowwise().sum());
    }
    if (px->requires_grad) {
      Mat gx(xhat.rows(), xhat.cols());
      const double dd = static_cast<double>(d);
      for (Index j = 0; j < xhat.cols(); ++j) {
        double m1 = ghat.col(j).mean();
        double m2 = ghat.col(j).cwiseProduct(xhat.col(j)).mean();
        gx.col(j) = inv_std(j) * (ghat.col(j).array() - m1 - xhat.col(j).array() * m2);
        (void)dd;
      }
      accum(px, gx);
    }
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  require(p < 1.0, Error::Kind::validation, "dropout: p must be < 1");
  auto px = x.node();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat keep(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - p);
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) keep(i, j) = u(rng) >= p ? scale : 0.0;
  return op(x.value().cwiseProduct(keep), {px}, [px, keep](Node& n) {
    accum(px, n.grad.cwiseProduct(keep));
  });
}

Tensor im2col(const Tensor& x, int k) {
  require(k >= 1 && k % 2 == 1, Error::Kind::validation, "im2col: kernel must be odd");
  auto px = x.node();
  const Index c = x.rows(), t = x.cols();
  const int pad = k / 2;
  Mat v = Mat::Zero(c * k, t);
  for (int kk = 0; kk < k; ++kk) {
    for (Index j = 0; j < t; ++j) {
      Index src = j + kk - pad;
      if (src >= 0 && src < t) v.block(kk * c, j, c, 1) = x.value().col(src);
    }
  }
  return op(std::move(v), {px}, [px, c, t, k, pad](Node& n) {
    if (!px->requires_grad) return;
    Mat g = Mat::Zero(c, t);
    for (int kk = 0; kk < k; ++kk)
      for (Index j = 0; j < t; ++j) {
        Index src = j + kk - pad;
        if (src >= 0 && src < t) g.col(src) += n.grad.block(kk * c, j, c, 1);
      }
    accum(px, g);
  });
}

Tensor embedding(const Tensor& weight, const std::vector<int>& ids) {
  auto pw = weight.node();
  const Index d = weight.rows(), v_size = weight.cols();
  Mat v(d, static_cast<Index>(ids.size()));
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < v_size, Error::Kind::validation,
            "embedding: id out of range: " + std::to_string(ids[i]));
    v.col(static_cast<Index>(i)) = weight.value().col(ids[i]);
  }
  return op(std::move(v), {pw}, [pw, ids](Node& n) {
    if (!pw->requires_grad) return;
    pw->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      pw->grad.col(ids[i]) += n.grad.col(static_cast<Index>(i));
  });
}

Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<bool>& mask) {
  const Index v_size = logits.rows(), t = logits.cols();
  require(static_cast<Index>(labels.size()) == t, Error::Kind::validation,
          "cross_entropy: labels length != columns");
  require(static_cast<Index>(mask.size()) == t, Error::Kind::validation,
          "cross_entropy: mask length != columns");
  Index cnt = 0;
  for (Index j = 0; j < t; ++j) {
    if (!mask[j]) continue;
    require(labels[j] >= 0 && labels[j] < v_size, Error::Kind::validation,
            "cross_entropy: label out of inventory");
    ++cnt;
  }
  require(cnt > 0, Error::Kind::validation, "cross_entropy: empty mask");
  auto pl = logits.node();
  // Column-stable log-softmax; keep probs for backward.
  Mat probs(v_size, t);
  double loss = 0.0;
  for (Index j = 0; j < t; ++j) {
    if (!mask[j]) continue;
    double mx = logits.value().col(j).maxCoeff();
    Eigen::VectorXd e = (logits.value().col(j).array() - mx).exp();
    double z = e.sum();
    probs.col(j) = e / z;
    loss -= logits.value()(labels[j], j) - mx - std::log(z);
  }
  loss /= static_cast<double>(cnt);
  Mat v(1, 1);
  v(0, 0) = loss;
  return op(std::move(v), {pl}, [pl, probs, labels, mask, cnt, t](Node& n) {
    if (!pl->requires_grad) return;
    Mat g = Mat::Zero(pl->value.rows(), pl->value.cols());
    const double w = n.grad(0, 0) / static_cast<double>(cnt);
    for (Index j = 0; j < t; ++j) {
      if (!mask[j]) continue;
      g.col(j) = probs.col(j) * w;
      g(labels[j], j) -= w;
    }
    accum(pl, g);
  });
}

namespace {
// Gaussian window, normalized to sum 1, row-major [win x win].
Mat gaussian_window(int win, double sigma) {
  Eigen::VectorXd g1(win);
  const int c = win / 2;
  for (int i = 0; i < win; ++i)
    g1(i) = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  g1 /= g1.sum();
  return g1 * g1.transpose();
}
}  // namespace

Tensor ssim_loss_masked(const Tensor& pred, const Tensor& target,
                        const std::vector<bool>& mask_cols, int window,
                        double sigma, double c1, double c2) {
  check_same_shape(pred, target, "ssim");
  require(static_cast<Index>(mask_cols.size()) == pred.cols(), Error::Kind::validation,
          "ssim: mask length != columns");
  std::vector<Index> idx;
  for (Index j = 0; j < pred.cols(); ++j)
    if (mask_cols[j]) idx.push_back(j);
  require(!idx.empty(), Error::Kind::validation, "ssim: empty mask");
  const Index h = pred.rows(), w = static_cast<Index>(idx.size());
  require(h >= window && w >= window, Error::Kind::validation,
          "ssim: masked region smaller than window");

  Mat a(h, w), b(h, w);
  for (Index j = 0; j < w; ++j) {
    a.col(j) = pred.value().col(idx[j]);
    b.col(j) = target.value().col(idx[j]);
  }
  const Mat gw = gaussian_window(window, sigma);
  const Index nh = h - window + 1, nw = w - window + 1;
  const double n_win = static_cast<double>(nh * nw);

  double ssim_sum = 0.0;
  // Per-window stats kept for the backward pass.
  Mat mu_a(nh, nw), mu_b(nh, nw), var_a(nh, nw), var_b(nh, nw), cov(nh, nw), smap(nh, nw);
  for (Index wi = 0; wi < nh; ++wi) {
    for (Index wj = 0; wj < nw; ++wj) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int u = 0; u < window; ++u)
        for (int v2 = 0; v2 < window; ++v2) {
          const double wgt = gw(u, v2);
          const double xa = a(wi + u, wj + v2), xb = b(wi + u, wj + v2);
          ma += wgt * xa;
          mb += wgt * xb;
          saa += wgt * xa * xa;
          sbb += wgt * xb * xb;
          sab += wgt * xa * xb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cab = sab - ma * mb;
      const double a1 = 2 * ma * mb + c1, a2 = 2 * cab + c2;
      const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
      const double s = (a1 * a2) / (b1 * b2);
      mu_a(wi, wj) = ma;
      mu_b(wi, wj) = mb;
      var_a(wi, wj) = va;
      var_b(wi, wj) = vb;
      cov(wi, wj) = cab;
      smap(wi, wj) = s;
      ssim_sum += s;
    }
  }
  Mat v(1, 1);
  v(0, 0) = 1.0 - ssim_sum / n_win;

  auto pp = pred.node(), pt = target.node();
  return op(std::move(v), {pp, pt},
            [pp, pt, a, b, gw, idx, mu_a, mu_b, var_a, var_b, cov, smap, window, c1, c2,
             n_win, nh, nw](Node& n) {
    const double gout = -n.grad(0, 0) / n_win;  // d(loss)/d(ssim per window)
    Mat ga = Mat::Zero(a.rows(), a.cols());
    Mat gb = Mat::Zero(a.rows(), a.cols());
    for (Index wi = 0; wi < nh; ++wi) {
      for (Index wj = 0; wj < nw; ++wj) {
        const double ma = mu_a(wi, wj), mb = mu_b(wi, wj);
        const double va = var_a(wi, wj), vb = var_b(wi, wj), cab = cov(wi, wj);
        const double a1 = 2 * ma * mb + c1, a2 = 2 * cab + c2;
        const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
        const double s = smap(wi, wj);
        const double inv = 1.0 / (b1 * b2);
        for (int u = 0; u < window; ++u) {
          for (int v2 = 0; v2 < window; ++v2) {
            const double wgt = gw(u, v2);
            const double xa = a(wi + u, wj + v2), xb = b(wi + u, wj + v2);
            // dA1/dxa = 2 mb wgt; dA2/dxa = 2 wgt (xb - mb)
            // dB1/dxa = 2 ma wgt; dB2/dxa = 2 wgt (xa - ma)
            const double ds_da = inv * (2 * mb * wgt * a2 + a1 * 2 * wgt * (xb - mb)) -
                                 s * (2 * ma * wgt / b1 + 2 * wgt * (xa - ma) / b2);
            const double ds_db = inv * (2 * ma * wgt * a2 + a1 * 2 * wgt * (xa - ma)) -
                                 s * (2 * mb * wgt / b1 + 2 * wgt * (xb - mb) / b2);
            ga(wi + u, wj + v2) += gout * ds_da;
            gb(wi + u, wj + v2) += gout * ds_db;
          }
        }
      }
    }
    auto scatter = [&](const NodePtr& p, const Mat& g) {
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (Index j = 0; j < static_cast<Index>(idx.size()); ++j)
        p->grad.col(idx[j]) += g.col(j);
    };
    scatter(pp, ga);
    scatter(pt, gb);
  });
}

}  // namespace ttse::ad
