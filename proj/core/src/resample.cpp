#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "voxpipe/audio_io.hpp"
#include "voxpipe/error.hpp"

namespace voxpipe::audio {

namespace {

// Tables above this many phases are not cached; taps are evaluated per sample.
constexpr long kMaxCachedPhases = 4096;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

class SincKernel {
 public:
  SincKernel(int source_rate, int target_rate, const ResamplerOptions& opt) {
    const double ratio = static_cast<double>(source_rate) / target_rate;
    // Half-width in input samples; stretched when decimating so the filter
    // keeps taps_per_phase taps at the output rate.
    half_width_ = 0.5 * opt.taps_per_phase * std::max(1.0, ratio);
    reach_ = static_cast<long>(std::ceil(half_width_));
    const double cutoff_hz = opt.cutoff_fraction * std::min(source_rate, target_rate);
    cycles_per_sample_ = cutoff_hz / source_rate;
    beta_ = opt.kaiser_beta;
    i0_beta_ = std::cyl_bessel_i(0.0, beta_);
  }

  long reach() const { return reach_; }

  double operator()(double t) const {
    if (std::abs(t) >= half_width_) return 0.0;
    const double r = t / half_width_;
    const double window = std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - r * r)) / i0_beta_;
    return 2.0 * cycles_per_sample_ * sinc(2.0 * cycles_per_sample_ * t) * window;
  }

  // Taps for input offsets j in [-reach+1, reach], output sitting `frac`
  // input samples past the base index. Normalized to unit DC gain.
  std::vector<double> taps(double frac) const {
    std::vector<double> h(static_cast<std::size_t>(2 * reach_));
    double sum = 0.0;
    for (long j = -reach_ + 1; j <= reach_; ++j) {
      const double v = (*this)(frac - static_cast<double>(j));
      h[static_cast<std::size_t>(j + reach_ - 1)] = v;
      sum += v;
    }
    if (sum != 0.0) {
      for (auto& v : h) v /= sum;
    }
    return h;
  }

 private:
  double half_width_ = 0.0;
  long reach_ = 0;
  double cycles_per_sample_ = 0.0;
  double beta_ = 0.0;
  double i0_beta_ = 1.0;
};

}  // namespace

AudioBuffer resample(const AudioBuffer& buffer, int target_rate, const ResamplerOptions& options) {
  if (buffer.sample_rate <= 0 || target_rate <= 0) {
    throw ParameterError("sample rates must be positive");
  }
  if (options.taps_per_phase < 2 || options.cutoff_fraction <= 0.0 || options.cutoff_fraction > 0.5) {
    throw ParameterError("invalid resampler options");
  }
  if (buffer.sample_rate == target_rate) return buffer;

  const long g = std::gcd(static_cast<long>(buffer.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = buffer.sample_rate / g;
  const long in_frames = static_cast<long>(buffer.frames());
  // round(in * target / source), half away from zero, in integer arithmetic.
  const long out_frames = (2 * in_frames * up + down) / (2 * down);

  const SincKernel kernel(buffer.sample_rate, target_rate, options);
  const long reach = kernel.reach();

  std::vector<std::vector<double>> table;
  const bool cached = up <= kMaxCachedPhases;
  if (cached) {
    table.reserve(static_cast<std::size_t>(up));
    for (long p = 0; p < up; ++p) table.push_back(kernel.taps(static_cast<double>(p) / up));
  }

  const auto ch = static_cast<std::size_t>(buffer.channels);
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channels = buffer.channels;
  out.samples.assign(static_cast<std::size_t>(out_frames) * ch, 0.0f);

  std::vector<double> scratch;
  for (long n = 0; n < out_frames; ++n) {
    const long num = n * down;
    const long base = num / up;
    const long phase = num % up;
    const std::vector<double>* h;
    if (cached) {
      h = &table[static_cast<std::size_t>(phase)];
    } else {
      scratch = kernel.taps(static_cast<double>(phase) / up);
      h = &scratch;
    }
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (long j = -reach + 1; j <= reach; ++j) {
        const long k = base + j;
        if (k < 0 || k >= in_frames) continue;
        acc += (*h)[static_cast<std::size_t>(j + reach - 1)] *
               buffer.samples[static_cast<std::size_t>(k) * ch + c];
      }
      out.samples[static_cast<std::size_t>(n) * ch + c] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace voxpipe::audio
