#include "cogest/audio/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "cogest/core/error.hpp"

namespace cogest::audio {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

LogMelProvider::LogMelProvider(const LogMelConfig& cfg) : cfg_(cfg) {
  if (cfg.n_fft < 2 || cfg.hop < 1 || cfg.n_mels < 1 || !(cfg.fmax > cfg.fmin)) throw UsageError("invalid log-mel configuration");
  const int bins = cfg.n_fft / 2 + 1;
  bank_ = MatrixXf::Zero(bins, cfg.n_mels);
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (cfg.n_mels + 1));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double l = edges[static_cast<std::size_t>(m)], c = edges[static_cast<std::size_t>(m) + 1], r = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < bins; ++b) {
      const double hz = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      double v = 0;
      if (hz > l && hz <= c) v = (hz - l) / (c - l);
      if (hz > c && hz < r) v = (r - hz) / (r - c);
      bank_(b, m) = static_cast<float>(v);
    }
  }
  window_.resize(static_cast<std::size_t>(cfg.n_fft));
  for (int i = 0; i < cfg.n_fft; ++i) {
    window_[static_cast<std::size_t>(i)] = static_cast<float>(0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / cfg.n_fft));
  }
}

MatrixXf LogMelProvider::features(const Waveform& w) const {
  if (w.sample_rate != cfg_.sample_rate) {
    throw DataError("audio at " + std::to_string(w.sample_rate) + " Hz, expected " + std::to_string(cfg_.sample_rate));
  }
  const int n = static_cast<int>(w.samples.size());
  const int frames = n / cfg_.hop + 1;
  const int half = cfg_.n_fft / 2;
  Eigen::FFT<float> fft;
  std::vector<float> buf(static_cast<std::size_t>(cfg_.n_fft));
  std::vector<std::complex<float>> spec;
  RowVector<float> power(half + 1);
  MatrixXf out(frames, cfg_.n_mels);
  for (int f = 0; f < frames; ++f) {
    const int center = f * cfg_.hop;
    for (int i = 0; i < cfg_.n_fft; ++i) {
      const int idx = center - half + i;
      // zero padding outside the signal
      const float s = (idx >= 0 && idx < n) ? w.samples[static_cast<std::size_t>(idx)] : 0.0f;
      buf[static_cast<std::size_t>(i)] = s * window_[static_cast<std::size_t>(i)];
    }
    fft.fwd(spec, buf);
    for (int b = 0; b <= half; ++b) power(b) = std::norm(spec[static_cast<std::size_t>(b)]);
    out.row(f) = ((power * bank_).array() + 1e-6f).log();
  }
  return out;
}

std::string LogMelProvider::id() const {
  return "logmel-sr" + std::to_string(cfg_.sample_rate) + "-fft" + std::to_string(cfg_.n_fft) + "-hop" + std::to_string(cfg_.hop) +
         "-mel" + std::to_string(cfg_.n_mels);
}

MatrixXf interpolate_frames(const MatrixXf& x, int frames) {
  if (x.rows() < 1 || frames < 1) throw ShapeError("cannot interpolate an empty feature sequence");
  MatrixXf out(frames, x.cols());
  if (frames == 1 || x.rows() == 1) {
    for (int i = 0; i < frames; ++i) out.row(i) = x.row(0);
    return out;
  }
  const double scale = static_cast<double>(x.rows() - 1) / (frames - 1);
  for (int i = 0; i < frames; ++i) {
    const double p = i * scale;
    const Eigen::Index lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(p)), x.rows() - 1);
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, x.rows() - 1);
    const float a = static_cast<float>(p - static_cast<double>(lo));
    out.row(i) = (1.0f - a) * x.row(lo) + a * x.row(hi);
  }
  out.row(frames - 1) = x.row(x.rows() - 1);
  return out;
}

}  // namespace cogest::audio
