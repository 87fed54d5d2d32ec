#ifndef COGEST_AUDIO_WAV_HPP_
#define COGEST_AUDIO_WAV_HPP_

#include <filesystem>
#include <vector>

namespace cogest::audio {

/// Mono samples in [-1, 1].
struct Waveform {
  int sample_rate = 16000;
  std::vector<float> samples;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// 16-bit PCM mono only; anything else is a DataError.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace cogest::audio

#endif  // COGEST_AUDIO_WAV_HPP_
