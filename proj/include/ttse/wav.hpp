#pragma once

#include <string>
#include <vector>

namespace ttse {

// 16-bit PCM mono WAV. Samples are mapped to [-1, 1) via /32768.
struct WavData {
  std::vector<double> samples;
  int sample_rate = 0;
};

WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate);

}  // namespace ttse
