#include "cogest/audio/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cogest/core/error.hpp"

namespace cogest::audio {
namespace {

std::uint32_t u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::ofstream& o, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ofstream& o, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(name + " is not a RIFF/WAVE file");
  }
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw DataError(name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(name + ": short fmt chunk");
      const std::uint16_t format = u16(chunk + 8), channels = u16(chunk + 10), bits = u16(chunk + 22);
      if (format != 1 || channels != 1 || bits != 16) throw DataError(name + ": only 16-bit PCM mono is supported");
      w.sample_rate = static_cast<int>(u32(chunk + 12));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw DataError(name + ": data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] = static_cast<float>(static_cast<std::int16_t>(u16(chunk + 8 + 2 * i))) / 32768.0f;
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw DataError(name + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  o.write("RIFF", 4);
  put32(o, 36 + data_bytes);
  o.write("WAVEfmt ", 8);
  put32(o, 16);
  put16(o, 1);
  put16(o, 1);
  put32(o, static_cast<std::uint32_t>(w.sample_rate));
  put32(o, static_cast<std::uint32_t>(w.sample_rate * 2));
  put16(o, 2);
  put16(o, 16);
  o.write("data", 4);
  put32(o, data_bytes);
  for (float s : w.samples) {
    const long q = std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f);
    put16(o, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
}

}  // namespace cogest::audio
