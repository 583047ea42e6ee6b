#include <cmath>

#include "voxpipe/error.hpp"
#include "voxpipe/features.hpp"

namespace voxpipe::features {

std::vector<double> yin_cmndf(std::span<const float> x, std::size_t start, std::size_t window,
                              std::size_t max_lag) {
  if (start + window + max_lag > x.size()) throw BoundsError("YIN frame exceeds the signal");
  std::vector<double> d(max_lag + 1, 0.0);
  const float* base = x.data() + start;
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    double acc = 0.0;
    for (std::size_t j = 0; j < window; ++j) {
      const double diff = static_cast<double>(base[j]) - base[j + tau];
      acc += diff * diff;
    }
    d[tau] = acc;
  }
  std::vector<double> out(max_lag + 1, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    running += d[tau];
    out[tau] = running > 0.0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
  }
  return out;
}

std::vector<std::optional<double>> f0_yin(const audio::AudioBuffer& buffer, const YinParams& params) {
  if (buffer.channels != 1) throw ParameterError("YIN expects mono audio");
  const double sr = buffer.sample_rate;
  if (!(params.fmin > 0.0) || !(params.fmin < params.fmax) || !(params.fmax < sr / 2.0)) {
    throw ParameterError("YIN requires 0 < fmin < fmax < sample_rate / 2");
  }
  const auto window = static_cast<std::size_t>(std::lround(params.frame_s * sr));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(params.hop_s * sr)));
  const auto min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / params.fmax)));
  const auto max_lag = static_cast<std::size_t>(std::ceil(sr / params.fmin));
  const std::size_t span = window + max_lag;
  const auto& x = buffer.samples;
  if (window == 0 || x.size() < span + 1) return {};

  const std::size_t frames = 1 + (x.size() - span - 1) / hop;
  std::vector<std::optional<double>> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto d = yin_cmndf(x, f * hop, window, max_lag + 1);
    std::size_t tau = min_lag;
    for (; tau <= max_lag; ++tau) {
      if (d[tau] < params.threshold) break;
    }
    if (tau > max_lag) continue;
    while (tau + 1 <= max_lag && d[tau + 1] < d[tau]) ++tau;

    double refined = static_cast<double>(tau);
    const double a = d[tau - 1], b = d[tau], c = d[tau + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) {
      const double shift = 0.5 * (a - c) / denom;
      if (std::abs(shift) < 1.0) refined += shift;
    }
    out[f] = sr / refined;
  }
  return out;
}

}  // namespace voxpipe::features
