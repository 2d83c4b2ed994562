#include "ttse/losses.hpp"

#include <cmath>
#include <sstream>

namespace ttse {

namespace {

using ad::Mat;

int count_true(const std::vector<bool>& m) {
  int n = 0;
  for (bool b : m) n += b ? 1 : 0;
  return n;
}

// [1 x T] row selecting masked columns.
Mat mask_row(const std::vector<bool>& m) {
  Mat r(1, static_cast<Eigen::Index>(m.size()));
  for (size_t i = 0; i < m.size(); ++i) r(0, static_cast<Eigen::Index>(i)) = m[i] ? 1.0 : 0.0;
  return r;
}

// Broadcast a column mask over all rows of an [R x T] tensor.
Tensor mask_matrix(Eigen::Index rows, const std::vector<bool>& m) {
  return Tensor::constant(Mat::Ones(rows, 1) * mask_row(m));
}

void check_pair(const Tensor& a, const Tensor& b, const std::vector<bool>& mask,
                const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Error::Kind::validation,
          std::string(what) + ": shape mismatch");
  require(static_cast<Eigen::Index>(mask.size()) == a.cols(), Error::Kind::validation,
          std::string(what) + ": mask length != columns");
  require(count_true(mask) > 0, Error::Kind::validation,
          std::string(what) + ": empty mask");
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_dur, lambda_pitch, lambda_diff, lambda_ssim, lambda_ce, lambda_p,
                   lambda_m, lambda_s})
    require(v >= 0.0, Error::Kind::validation, "loss weights must be nonnegative");
}

double LossReport::term(const std::string& name) const {
  for (const auto& [k, v] : terms)
    if (k == name) return v;
  throw Error(Error::Kind::validation, "no loss term named " + name);
}

std::string LossReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{";
  for (const auto& [k, v] : terms) os << "\"" << k << "\":" << v << ",";
  os << "\"total\":" << total << "}";
  return os.str();
}

Tensor masked_l2(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask) {
  check_pair(pred, target, mask, "masked_l2");
  const int cnt = count_true(mask);
  Tensor diff = ad::mul(ad::sub(pred, target), mask_matrix(pred.rows(), mask));
  return ad::mul_scalar(ad::sum(ad::square(diff)),
                        1.0 / (static_cast<double>(cnt) * pred.rows()));
}

Tensor l1_mel(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask) {
  check_pair(pred, target, mask, "l1_mel");
  const int cnt = count_true(mask);
  Tensor diff = ad::mul(ad::sub(pred, target), mask_matrix(pred.rows(), mask));
  return ad::mul_scalar(ad::sum(ad::abs(diff)),
                        1.0 / (static_cast<double>(cnt) * pred.rows()));
}

Tensor ssim_loss(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask) {
  check_pair(pred, target, mask, "ssim_loss");
  const double c1 = std::pow(0.01 * kSsimDynamicRange, 2);
  const double c2 = std::pow(0.03 * kSsimDynamicRange, 2);
  return ad::ssim_loss_masked(pred, target, mask, kSsimWindow, kSsimSigma, c1, c2);
}

Tensor framewise_ce(const Tensor& logits, const std::vector<int>& labels,
                    const std::vector<bool>& mask) {
  return ad::cross_entropy_cols(logits, labels, mask);
}

namespace {
WeightedLoss combine(std::vector<std::pair<std::string, Tensor>> named,
                     std::vector<std::pair<std::string, double>> lambdas) {
  WeightedLoss out;
  Tensor total;
  double plain = 0.0;
  for (size_t i = 0; i < named.size(); ++i) {
    const double lam = lambdas[i].second;
    const double raw = named[i].second.item();
    out.report.terms.push_back({named[i].first, raw});
    plain += lam * raw;
    Tensor weighted = ad::mul_scalar(named[i].second, lam);
    total = total.defined() ? ad::add(total, weighted) : weighted;
  }
  out.report.lambdas = std::move(lambdas);
  out.report.total = plain;
  out.total = total;
  return out;
}
}  // namespace

WeightedLoss train_loss(const Tensor& l_dur, const Tensor& l_pitch, const Tensor& l_diff,
                        const Tensor& l_ssim, const LossWeights& w) {
  w.validate();
  return combine({{"dur", l_dur}, {"pitch", l_pitch}, {"diff", l_diff}, {"ssim", l_ssim}},
                 {{"lambda_dur", w.lambda_dur},
                  {"lambda_pitch", w.lambda_pitch},
                  {"lambda_diff", w.lambda_diff},
                  {"lambda_ssim", w.lambda_ssim}});
}

WeightedLoss ttt_dp_loss(const Tensor& pred_log_d, const std::vector<double>& target_frames,
                         const std::vector<bool>& ttt_mask,
                         const std::vector<bool>& edit_mask, double edit_target_frames,
                         double sentence_target_frames, const LossWeights& w,
                         bool phoneme_loss_log_domain) {
  w.validate();
  const auto n = pred_log_d.cols();
  require(pred_log_d.rows() == 1, Error::Kind::validation, "ttt_dp_loss: pred must be [1 x N]");
  require(static_cast<Eigen::Index>(target_frames.size()) == n &&
              static_cast<Eigen::Index>(ttt_mask.size()) == n &&
              static_cast<Eigen::Index>(edit_mask.size()) == n,
          Error::Kind::validation, "ttt_dp_loss: length mismatch");
  require(count_true(edit_mask) > 0, Error::Kind::validation, "ttt_dp_loss: empty edit region");
  require(edit_target_frames > 0, Error::Kind::validation, "ttt_dp_loss: M must be positive");
  for (size_t i = 0; i < ttt_mask.size(); ++i)
    require(!(ttt_mask[i] && edit_mask[i]), Error::Kind::validation,
            "ttt_dp_loss: TTT mask overlaps edit region");

  Mat tgt(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = target_frames[static_cast<size_t>(i)];
    tgt(0, i) = phoneme_loss_log_domain ? std::log1p(std::max(0.0, f)) : f;
  }
  Tensor pred_linear = ad::expm1(pred_log_d);
  Tensor phoneme_term =
      phoneme_loss_log_domain
          ? masked_l2(pred_log_d, Tensor::constant(tgt), ttt_mask)
          : masked_l2(pred_linear, Tensor::constant(tgt), ttt_mask);

  Tensor edit_sum =
      ad::sum(ad::mul(pred_linear, Tensor::constant(mask_row(edit_mask))));
  Tensor mask_term = ad::square(ad::add_scalar(edit_sum, -edit_target_frames));

  Tensor sent_sum = ad::sum(pred_linear);
  Tensor sent_term = ad::square(ad::add_scalar(sent_sum, -sentence_target_frames));

  return combine({{"dur_p", phoneme_term}, {"dur_m", mask_term}, {"dur_s", sent_term}},
                 {{"lambda_p", w.lambda_p},
                  {"lambda_m", w.lambda_m},
                  {"lambda_s", w.lambda_s}});
}

WeightedLoss ttt_sd_loss(const Tensor& pred, const Tensor& target,
                         const std::vector<bool>& mask_new,
                         const std::vector<bool>& mask_edit, const Tensor& logits,
                         const std::vector<int>& aligned_phonemes, const LossWeights& w) {
  w.validate();
  require(mask_new.size() == mask_edit.size(), Error::Kind::validation,
          "ttt_sd_loss: mask length mismatch");
  for (size_t i = 0; i < mask_new.size(); ++i)
    require(!(mask_new[i] && mask_edit[i]), Error::Kind::validation,
            "ttt_sd_loss: newly-masked region overlaps the edit region");
  Tensor l1 = l1_mel(pred, target, mask_new);
  Tensor ss = ssim_loss(pred, target, mask_new);
  Tensor ce = framewise_ce(logits, aligned_phonemes, mask_edit);
  return combine({{"diff_n", l1}, {"ssim_n", ss}, {"ce_m", ce}},
                 {{"lambda_diff", w.lambda_diff},
                  {"lambda_ssim", w.lambda_ssim},
                  {"lambda_ce", w.lambda_ce}});
}

}  // namespace ttse
