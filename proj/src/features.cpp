#include "ttse/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "ttse/phoneme.hpp"

namespace ttse {

namespace {

std::mutex g_fftw_mutex;  // FFTW planning is not thread-safe

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void check_waveform(const std::vector<double>& w, const StftConfig& cfg) {
  cfg.validate();
  require(static_cast<int>(w.size()) >= cfg.win, Error::Kind::validation,
          "waveform too short: " + std::to_string(w.size()) + " samples < window " +
              std::to_string(cfg.win));
  for (double s : w)
    require(std::isfinite(s), Error::Kind::validation, "waveform contains NaN/Inf");
}

// Periodic Hann window.
std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

// Reflect-padded sample access for centered framing.
double sample_at(const std::vector<double>& w, long idx) {
  const long n = static_cast<long>(w.size());
  if (idx < 0) idx = -idx;
  if (idx >= n) idx = 2 * (n - 1) - idx;
  if (idx < 0 || idx >= n) return 0.0;  // degenerate tiny inputs
  return w[static_cast<size_t>(idx)];
}

}  // namespace

void StftConfig::validate() const {
  require(hop >= 1 && win >= hop && n_fft >= win, Error::Kind::validation,
          "stft config: need hop <= win <= n_fft");
  require(fmax <= sample_rate / 2.0 + 1e-9, Error::Kind::validation,
          "stft config: fmax above Nyquist");
  require(n_mels >= 1, Error::Kind::validation, "stft config: n_mels must be >= 1");
  require(fmin >= 0 && fmin < fmax, Error::Kind::validation, "stft config: bad fmin/fmax");
}

int DurationSequence::total() const { return std::accumulate(d.begin(), d.end(), 0); }

Mat mel_filterbank(const StftConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  Mat fb = Mat::Zero(cfg.n_mels, n_bins);
  const double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double v = 0.0;
      if (f > lo && f < mid)
        v = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        v = (hi - f) / (hi - mid);
      fb(m, k) = v;
    }
  }
  return fb;
}

Mat stft_magnitude(const std::vector<double>& waveform, const StftConfig& cfg) {
  check_waveform(waveform, cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  const long t_frames = static_cast<long>(waveform.size() / cfg.hop) + 1;
  const std::vector<double> win = hann(cfg.win);
  const int pad = cfg.n_fft / 2;  // centered frames

  Mat mag(n_bins, t_frames);
  std::lock_guard<std::mutex> lock(g_fftw_mutex);
  std::vector<double> in(cfg.n_fft);
  std::vector<fftw_complex> out(static_cast<size_t>(n_bins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(cfg.n_fft, in.data(), out.data(), FFTW_ESTIMATE);
  const int win_off = (cfg.n_fft - cfg.win) / 2;
  for (long t = 0; t < t_frames; ++t) {
    const long frame_center = t * cfg.hop;
    std::fill(in.begin(), in.end(), 0.0);
    for (int i = 0; i < cfg.win; ++i) {
      long idx = frame_center - pad + win_off + i;
      in[static_cast<size_t>(win_off + i)] = sample_at(waveform, idx) * win[i];
    }
    fftw_execute(plan);
    for (int k = 0; k < n_bins; ++k)
      mag(k, t) = std::hypot(out[static_cast<size_t>(k)][0], out[static_cast<size_t>(k)][1]);
  }
  fftw_destroy_plan(plan);
  return mag;
}

MelSpectrogram compute_mel(const std::vector<double>& waveform, const StftConfig& cfg) {
  Mat mag = stft_magnitude(waveform, cfg);
  Mat mel = mel_filterbank(cfg) * mag;
  MelSpectrogram out;
  out.frames = mel.unaryExpr([](double v) { return std::log(std::max(v, kMelFloor)); });
  return out;
}

PitchContour extract_pitch(const std::vector<double>& waveform, const StftConfig& cfg) {
  check_waveform(waveform, cfg);
  const long t_frames = static_cast<long>(waveform.size() / cfg.hop) + 1;
  const int lag_min = static_cast<int>(cfg.sample_rate / 500.0);
  const int lag_max = static_cast<int>(cfg.sample_rate / 60.0);
  const int win = cfg.win;
  const int pad = win / 2;
  constexpr double kVoicingThreshold = 0.3;

  PitchContour pc;
  pc.f0.assign(static_cast<size_t>(t_frames), 0.0);
  pc.voiced.assign(static_cast<size_t>(t_frames), false);

  std::vector<double> frame(static_cast<size_t>(win + lag_max));
  for (long t = 0; t < t_frames; ++t) {
    const long center = t * cfg.hop;
    for (int i = 0; i < win + lag_max; ++i)
      frame[static_cast<size_t>(i)] = sample_at(waveform, center - pad + i);
    double r0 = 0.0;
    for (int i = 0; i < win; ++i) r0 += frame[static_cast<size_t>(i)] * frame[static_cast<size_t>(i)];
    if (r0 < 1e-10) continue;  // silence
    double best = 0.0;
    std::vector<double> r_at(static_cast<size_t>(lag_max + 1), 0.0);
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double r = 0.0;
      for (int i = 0; i < win; ++i)
        r += frame[static_cast<size_t>(i)] * frame[static_cast<size_t>(i + lag)];
      r_at[static_cast<size_t>(lag)] = r;
      best = std::max(best, r);
    }
    // Smallest lag within 10% of the peak, to avoid octave-down errors.
    int best_lag = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r_at[static_cast<size_t>(lag)] >= 0.9 * best) {
        best_lag = lag;
        best = r_at[static_cast<size_t>(lag)];
        break;
      }
    }
    if (best_lag > 0 && best / r0 > kVoicingThreshold) {
      pc.voiced[static_cast<size_t>(t)] = true;
      pc.f0[static_cast<size_t>(t)] = static_cast<double>(cfg.sample_rate) / best_lag;
    }
  }
  return pc;
}

PhonemeAlignment load_alignment(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Error::Kind::io, "cannot open alignment: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), Error::Kind::format,
          "alignment file empty: " + path);
  require(line == "phoneme\tstart_sec\tend_sec", Error::Kind::format,
          "alignment header mismatch in " + path);

  const auto& inv = PhonemeInventory::instance();
  PhonemeAlignment a;
  int row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string sym, s_start, s_end;
    if (!(std::getline(iss, sym, '\t') && std::getline(iss, s_start, '\t') &&
          std::getline(iss, s_end)))
      throw Error(Error::Kind::format, "malformed alignment row " + std::to_string(row));
    double start, end;
    try {
      size_t p1, p2;
      start = std::stod(s_start, &p1);
      end = std::stod(s_end, &p2);
      require(p1 == s_start.size() && p2 == s_end.size(), Error::Kind::format, "trailing junk");
    } catch (const Error&) {
      throw Error(Error::Kind::format, "malformed alignment row " + std::to_string(row) +
                                            ": bad number");
    } catch (const std::exception&) {
      throw Error(Error::Kind::format, "malformed alignment row " + std::to_string(row) +
                                            ": bad number");
    }
    require(inv.contains(sym), Error::Kind::validation,
            "alignment row " + std::to_string(row) + ": unknown phoneme symbol '" + sym + "'");
    require(start < end, Error::Kind::validation,
            "alignment row " + std::to_string(row) + ": interval end <= start");
    if (!a.phonemes.empty())
      require(start >= a.phonemes.back().end - 1e-9, Error::Kind::validation,
              "alignment row " + std::to_string(row) + ": overlapping interval");
    a.phonemes.push_back({inv.id_of(sym), start, end});
  }
  require(!a.phonemes.empty(), Error::Kind::format, "alignment has no rows: " + path);
  return a;
}

DurationSequence durations_from_alignment(const PhonemeAlignment& a, const StftConfig& cfg,
                                          int t_frames) {
  require(!a.phonemes.empty(), Error::Kind::validation, "empty alignment");
  require(t_frames >= 1, Error::Kind::validation, "t_frames must be >= 1");
  const double frames_per_sec = static_cast<double>(cfg.sample_rate) / cfg.hop;
  const double audio_sec = static_cast<double>(t_frames) * cfg.hop / cfg.sample_rate;
  require(a.phonemes.back().end <= audio_sec + 2.0 * cfg.hop / cfg.sample_rate,
          Error::Kind::validation, "alignment extends beyond audio length");

  const size_t n = a.phonemes.size();
  std::vector<double> real_frames(n);
  for (size_t i = 0; i < n; ++i)
    real_frames[i] = (a.phonemes[i].end - a.phonemes[i].start) * frames_per_sec;

  DurationSequence out;
  out.d.resize(n);
  std::vector<double> remainder(n);
  int assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    out.d[i] = static_cast<int>(std::floor(real_frames[i]));
    remainder[i] = real_frames[i] - out.d[i];
    assigned += out.d[i];
  }
  int leftover = t_frames - assigned;
  require(leftover >= 0, Error::Kind::validation,
          "alignment longer than audio by " + std::to_string(-leftover) + " frames");
  // Largest remainder first; ties broken by position. Repeat rounds if the
  // slack exceeds the phoneme count.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return remainder[x] > remainder[y]; });
  size_t k = 0;
  while (leftover > 0) {
    out.d[order[k % n]] += 1;
    ++k;
    --leftover;
  }
  return out;
}

std::vector<bool> expand_mask_to_frames(const std::vector<bool>& mask_p,
                                        const DurationSequence& d) {
  require(mask_p.size() == d.d.size(), Error::Kind::validation,
          "mask/duration length mismatch");
  std::vector<bool> out;
  out.reserve(static_cast<size_t>(d.total()));
  for (size_t i = 0; i < mask_p.size(); ++i)
    for (int j = 0; j < d.d[i]; ++j) out.push_back(mask_p[i]);
  return out;
}

std::vector<int> expand_labels_to_frames(const std::vector<int>& phoneme_ids,
                                         const DurationSequence& d) {
  require(phoneme_ids.size() == d.d.size(), Error::Kind::validation,
          "label/duration length mismatch");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(d.total()));
  for (size_t i = 0; i < phoneme_ids.size(); ++i)
    for (int j = 0; j < d.d[i]; ++j) out.push_back(phoneme_ids[i]);
  return out;
}

std::vector<double> normalize_pitch(const PitchContour& p, bool log_domain) {
  std::vector<double> out(p.f0.size(), 0.0);
  for (size_t i = 0; i < p.f0.size(); ++i) {
    require(p.f0[i] >= 0.0, Error::Kind::validation, "negative f0");
    if (p.voiced[i] && p.f0[i] > 0.0) out[i] = log_domain ? std::log(p.f0[i]) : p.f0[i];
  }
  return out;
}

std::vector<int> quantize_pitch(const std::vector<double>& norm_pitch, int n_bins) {
  const double lo = std::log(60.0), hi = std::log(500.0);
  std::vector<int> bins(norm_pitch.size(), 0);
  for (size_t i = 0; i < norm_pitch.size(); ++i) {
    if (norm_pitch[i] <= 0.0) continue;  // unvoiced
    double u = (norm_pitch[i] - lo) / (hi - lo);
    int b = 1 + static_cast<int>(std::clamp(u, 0.0, 1.0 - 1e-12) * (n_bins - 1));
    bins[i] = std::clamp(b, 1, n_bins - 1);
  }
  return bins;
}

}  // namespace ttse
