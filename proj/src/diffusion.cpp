#include "ttse/diffusion.hpp"

#include <cmath>

namespace ttse {

DiffusionSchedule DiffusionSchedule::make(int t_steps, double beta_min, double beta_max) {
  require(t_steps >= 1, Error::Kind::validation, "schedule: t_steps must be >= 1");
  require(beta_min > 0 && beta_max < 1 && beta_min <= beta_max, Error::Kind::validation,
          "schedule: need 0 < beta_min <= beta_max < 1");
  DiffusionSchedule s;
  s.t_diff = t_steps;
  s.betas.resize(static_cast<size_t>(t_steps));
  s.alphas_bar.resize(static_cast<size_t>(t_steps));
  double prod = 1.0;
  for (int i = 0; i < t_steps; ++i) {
    double b = t_steps == 1 ? beta_min
                            : beta_min + (beta_max - beta_min) * i / (t_steps - 1);
    s.betas[static_cast<size_t>(i)] = b;
    prod *= (1.0 - b);
    s.alphas_bar[static_cast<size_t>(i)] = prod;
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  require(t_diff >= 1 && betas.size() == static_cast<size_t>(t_diff) &&
              alphas_bar.size() == static_cast<size_t>(t_diff),
          Error::Kind::validation, "schedule: inconsistent sizes");
  double prev = 1.0;
  for (int i = 0; i < t_diff; ++i) {
    const double b = betas[static_cast<size_t>(i)];
    require(b > 0 && b < 1, Error::Kind::validation, "schedule: beta out of (0,1)");
    require(alphas_bar[static_cast<size_t>(i)] < prev, Error::Kind::validation,
            "schedule: alphas_bar not strictly decreasing");
    prev = alphas_bar[static_cast<size_t>(i)];
  }
}

Mat MelNorm::normalize(const Mat& log_mel) const {
  require(mel_max > mel_min, Error::Kind::validation, "mel norm: empty range");
  return ((log_mel.array() - mel_min) / (mel_max - mel_min) * 2.0 - 1.0).matrix();
}

Mat MelNorm::denormalize(const Mat& x) const {
  require(mel_max > mel_min, Error::Kind::validation, "mel norm: empty range");
  return ((x.array() + 1.0) / 2.0 * (mel_max - mel_min) + mel_min).matrix();
}

Mat forward_diffuse(const Mat& x0, int t, const Mat& noise, const DiffusionSchedule& s) {
  s.validate();
  require(t >= 1 && t <= s.t_diff, Error::Kind::validation,
          "forward_diffuse: t out of range: " + std::to_string(t));
  require(noise.rows() == x0.rows() && noise.cols() == x0.cols(), Error::Kind::validation,
          "forward_diffuse: noise shape mismatch");
  const double ab = s.alphas_bar[static_cast<size_t>(t - 1)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Mat gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

Mat sample(const DenoiseFn& f, Eigen::Index rows, Eigen::Index cols,
           const DiffusionSchedule& s, std::uint64_t rng_seed,
           const InpaintContext* inpaint) {
  s.validate();
  if (inpaint) {
    require(static_cast<Eigen::Index>(inpaint->known.size()) == cols,
            Error::Kind::validation, "sample: inpaint mask length != cols");
    require(inpaint->known_x0.rows() == rows && inpaint->known_x0.cols() == cols,
            Error::Kind::validation, "sample: inpaint x0 shape mismatch");
  }
  Rng rng(rng_seed);
  Mat x_t = gaussian_noise(rows, cols, rng);
  Mat x0_hat;
  for (int t = s.t_diff; t >= 1; --t) {
    if (inpaint) {
      // Keep known frames consistent with the current noise level.
      Mat known_t = forward_diffuse(inpaint->known_x0, t, gaussian_noise(rows, cols, rng), s);
      for (Eigen::Index j = 0; j < cols; ++j)
        if (inpaint->known[static_cast<size_t>(j)]) x_t.col(j) = known_t.col(j);
    }
    x0_hat = f(x_t, t);
    require(x0_hat.rows() == rows && x0_hat.cols() == cols, Error::Kind::validation,
            "sample: denoiser output shape mismatch");
    require(x0_hat.allFinite(), Error::Kind::numeric,
            "sample: denoiser produced non-finite values at t=" + std::to_string(t));
    if (t > 1) x_t = forward_diffuse(x0_hat, t - 1, gaussian_noise(rows, cols, rng), s);
  }
  if (inpaint) {
    for (Eigen::Index j = 0; j < cols; ++j)
      if (inpaint->known[static_cast<size_t>(j)]) x0_hat.col(j) = inpaint->known_x0.col(j);
  }
  return x0_hat;
}

}  // namespace ttse
