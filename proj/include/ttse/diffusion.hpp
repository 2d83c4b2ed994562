#pragma once

// Forward corruption and generator-based reverse sampling: the denoiser
// predicts clean x0 at each step; sampling alternates x0 prediction and
// re-corruption to the next lower noise level.

#include <functional>
#include <optional>

#include "ttse/features.hpp"

namespace ttse {

struct DiffusionSchedule {
  int t_diff = 8;
  std::vector<double> betas;       // [t_diff], index t-1
  std::vector<double> alphas_bar;  // cumulative products, strictly decreasing

  static DiffusionSchedule make(int t_steps = 8, double beta_min = 1e-4,
                                double beta_max = 0.06);
  void validate() const;
};

// Affine map between log-mel and the [-1, 1] range the diffusion runs in.
struct MelNorm {
  double mel_min = kLogMelFloor;
  double mel_max = 2.0;
  Mat normalize(const Mat& log_mel) const;
  Mat denormalize(const Mat& x) const;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise; t in [1, t_diff].
Mat forward_diffuse(const Mat& x0, int t, const Mat& noise, const DiffusionSchedule& s);

Mat gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng);

using DenoiseFn = std::function<Mat(const Mat& x_t, int t)>;

// Frames whose clean values are known (inpainting): at every step the known
// columns of x_t are overwritten with a fresh corruption of the known x0.
struct InpaintContext {
  std::vector<bool> known;  // per frame
  Mat known_x0;             // same shape as the sampled tensor
};

// Reverse loop from pure noise at t = t_diff down to 1; returns the final
// x0 estimate. Deterministic given the seed. Invokes f exactly t_diff times.
Mat sample(const DenoiseFn& f, Eigen::Index rows, Eigen::Index cols,
           const DiffusionSchedule& s, std::uint64_t rng_seed,
           const InpaintContext* inpaint = nullptr);

}  // namespace ttse
