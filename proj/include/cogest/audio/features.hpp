#ifndef COGEST_AUDIO_FEATURES_HPP_
#define COGEST_AUDIO_FEATURES_HPP_

#include <string>

#include "cogest/audio/wav.hpp"
#include "cogest/core/types.hpp"

namespace cogest::audio {

/// Frame-level audio features. Implementations may wrap a learned speech
/// model; the default is a log-mel spectrogram.
class AudioFeatureProvider {
 public:
  virtual ~AudioFeatureProvider() = default;
  virtual int dim() const = 0;
  /// frames x dim
  virtual MatrixXf features(const Waveform& w) const = 0;
  virtual std::string id() const = 0;
};

struct LogMelConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop = 800;  // 20 frames per second at 16 kHz
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
};

class LogMelProvider : public AudioFeatureProvider {
 public:
  explicit LogMelProvider(const LogMelConfig& cfg = {});
  int dim() const override { return cfg_.n_mels; }
  /// Centered frames: floor(samples / hop) + 1 rows.
  MatrixXf features(const Waveform& w) const override;
  std::string id() const override;

  const MatrixXf& filterbank() const { return bank_; }  // (n_fft/2+1) x n_mels

 private:
  LogMelConfig cfg_;
  MatrixXf bank_;
  std::vector<float> window_;
};

/// Linear resampling along time to exactly `frames` rows; the first and last
/// rows are preserved.
MatrixXf interpolate_frames(const MatrixXf& x, int frames);

}  // namespace cogest::audio

#endif  // COGEST_AUDIO_FEATURES_HPP_
