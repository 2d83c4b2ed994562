#pragma once

// Feature extraction: log-mel spectrograms, autocorrelation F0, forced
// alignment ingestion, and frame-duration assignment.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "ttse/common.hpp"

namespace ttse {

using Mat = Eigen::MatrixXd;

struct StftConfig {
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  int sample_rate = 22050;

  void validate() const;
};

// Natural-log floor applied to mel magnitudes.
inline constexpr double kMelFloor = 1e-5;
inline const double kLogMelFloor = std::log(kMelFloor);

struct MelSpectrogram {
  Mat frames;  // [n_mels x T]
  Eigen::Index n_mels() const { return frames.rows(); }
  Eigen::Index t_frames() const { return frames.cols(); }
};

struct PitchContour {
  std::vector<double> f0;  // Hz, 0 when unvoiced
  std::vector<bool> voiced;
};

struct AlignedPhoneme {
  int symbol = 0;       // phoneme id
  double start = 0.0;   // seconds
  double end = 0.0;
};

struct PhonemeAlignment {
  std::vector<AlignedPhoneme> phonemes;
};

struct DurationSequence {
  std::vector<int> d;  // frames per phoneme
  int total() const;
};

// Triangular mel filterbank [n_mels x (n_fft/2 + 1)], HTK mel scale.
Mat mel_filterbank(const StftConfig& cfg);

// Magnitude STFT with centered reflect padding; [n_fft/2+1 x T] where
// T = floor(len/hop) + 1.
Mat stft_magnitude(const std::vector<double>& waveform, const StftConfig& cfg);

MelSpectrogram compute_mel(const std::vector<double>& waveform, const StftConfig& cfg);

// Frame-synchronous autocorrelation F0, one value per mel frame.
// Search range 60-500 Hz; voicing by normalized peak threshold 0.3.
PitchContour extract_pitch(const std::vector<double>& waveform, const StftConfig& cfg);

// TSV with header `phoneme\tstart_sec\tend_sec`. Rejects malformed rows,
// overlapping or reversed intervals, and unknown symbols.
PhonemeAlignment load_alignment(const std::string& path);

// Integer frame counts per phoneme summing exactly to t_frames
// (largest-remainder correction).
DurationSequence durations_from_alignment(const PhonemeAlignment& a, const StftConfig& cfg,
                                          int t_frames);

// Expands a per-phoneme mask to frames under the given durations.
std::vector<bool> expand_mask_to_frames(const std::vector<bool>& mask_p,
                                        const DurationSequence& d);

// Per-frame phoneme labels under the given durations.
std::vector<int> expand_labels_to_frames(const std::vector<int>& phoneme_ids,
                                         const DurationSequence& d);

// Pitch normalization: log-F0 on voiced frames, 0 elsewhere (the default),
// or raw Hz when `log_domain` is off.
std::vector<double> normalize_pitch(const PitchContour& p, bool log_domain = true);

// Quantizes normalized pitch into embedding bins: bin 0 is unvoiced, bins
// 1..n span log(60)..log(500).
std::vector<int> quantize_pitch(const std::vector<double>& norm_pitch, int n_bins);

}  // namespace ttse
