#include "ttse/wav.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ttse/common.hpp"

namespace ttse {

namespace {
std::uint32_t rd_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
std::uint16_t rd_u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}
}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Error::Kind::io, "cannot open wav file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 44, Error::Kind::format, "wav too small: " + path);
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          Error::Kind::format, "not a RIFF/WAVE file: " + path);

  WavData out;
  size_t pos = 12;
  int channels = 0, bits = 0;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    std::uint32_t sz = rd_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + sz > bytes.size()) sz = static_cast<std::uint32_t>(bytes.size() - pos);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      require(sz >= 16, Error::Kind::format, "wav fmt chunk too small");
      std::uint16_t fmt = rd_u16(bytes.data() + pos);
      channels = rd_u16(bytes.data() + pos + 2);
      out.sample_rate = static_cast<int>(rd_u32(bytes.data() + pos + 4));
      bits = rd_u16(bytes.data() + pos + 14);
      require(fmt == 1, Error::Kind::format, "wav: only PCM supported");
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      require(got_fmt, Error::Kind::format, "wav: data before fmt");
      require(channels == 1, Error::Kind::validation, "wav: mono required, got " +
                                                         std::to_string(channels) + " channels");
      require(bits == 16, Error::Kind::validation, "wav: 16-bit PCM required");
      const size_t n = sz / 2;
      out.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        std::int16_t s;
        std::memcpy(&s, bytes.data() + pos + 2 * i, 2);
        out.samples[i] = static_cast<double>(s) / 32768.0;
      }
      got_data = true;
    }
    pos += sz + (sz & 1);
  }
  require(got_data, Error::Kind::format, "wav: missing data chunk: " + path);
  return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Error::Kind::io, "cannot write wav file: " + path);
  const std::uint32_t data_sz = static_cast<std::uint32_t>(samples.size() * 2);
  auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto w16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  f.write("RIFF", 4);
  w32(36 + data_sz);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  w32(16);
  w16(1);
  w16(1);
  w32(static_cast<std::uint32_t>(sample_rate));
  w32(static_cast<std::uint32_t>(sample_rate * 2));
  w16(2);
  w16(16);
  f.write("data", 4);
  w32(data_sz);
  for (double s : samples) {
    double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    std::int16_t v = static_cast<std::int16_t>(std::lround(c * 32768.0));
    f.write(reinterpret_cast<const char*>(&v), 2);
  }
  require(f.good(), Error::Kind::io, "wav write failed: " + path);
}

}  // namespace ttse
