#pragma once

// Training and test-time-training objectives: masked L2/L1, SSIM,
// framewise cross-entropy, and the weighted composites.

#include <utility>

#include "ttse/autodiff.hpp"

namespace ttse {

using ad::Tensor;

struct LossWeights {
  // train-time (Eq. 5 weights)
  double lambda_dur = 1.0;
  double lambda_pitch = 1.0;
  double lambda_diff = 0.5;
  double lambda_ssim = 0.5;
  double lambda_ce = 1.0;
  // duration-predictor TTT (Eq. 6 weights)
  double lambda_p = 1.0;
  double lambda_m = 1.0;
  double lambda_s = 1.0;

  void validate() const;
};

struct LossReport {
  std::vector<std::pair<std::string, double>> terms;    // raw (unweighted) values
  std::vector<std::pair<std::string, double>> lambdas;  // matching weights
  double total = 0.0;

  double term(const std::string& name) const;
  std::string to_json() const;
};

// A differentiable weighted total plus its plain-value report.
struct WeightedLoss {
  Tensor total;
  LossReport report;
};

// SSIM parameters, frozen: 11x11 gaussian window, sigma 1.5, stabilizers
// from the [-1, 1] dynamic range of normalized mels (L = 2).
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimDynamicRange = 2.0;

// Mean squared error over masked columns (all rows). Empty mask is an error.
Tensor masked_l2(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask);

// Mean absolute error over masked columns, all rows.
Tensor l1_mel(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask);

// 1 - mean SSIM over the masked frames (gathered sub-image).
Tensor ssim_loss(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask);

// Mean NLL of the true class over masked frames. logits [V x T].
Tensor framewise_ce(const Tensor& logits, const std::vector<int>& labels,
                    const std::vector<bool>& mask);

// Eq. 5: lambda_dur L_dur + lambda_pitch L_pitch + lambda_diff L_diff + lambda_ssim L_ssim.
WeightedLoss train_loss(const Tensor& l_dur, const Tensor& l_pitch, const Tensor& l_diff,
                        const Tensor& l_ssim, const LossWeights& w);

// Eq. 6: phoneme-level duration loss on TTT-masked unedited phonemes plus
// mask-level and sentence-level squared frame-sum errors. `pred_log_d` is
// the predictor output in log(1+frames); sums use expm1(pred).
// `target_frames` are linear frame counts.
WeightedLoss ttt_dp_loss(const Tensor& pred_log_d, const std::vector<double>& target_frames,
                         const std::vector<bool>& ttt_mask,
                         const std::vector<bool>& edit_mask, double edit_target_frames,
                         double sentence_target_frames, const LossWeights& w,
                         bool phoneme_loss_log_domain = true);

// Eq. 7: reconstruction (L1 + SSIM) on newly masked unedited frames plus
// cross-entropy on the edit-region frames. The two masks must be disjoint.
WeightedLoss ttt_sd_loss(const Tensor& pred, const Tensor& target,
                         const std::vector<bool>& mask_new,
                         const std::vector<bool>& mask_edit, const Tensor& logits,
                         const std::vector<int>& aligned_phonemes, const LossWeights& w);

}  // namespace ttse
