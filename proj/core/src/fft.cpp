#include "voxpipe/fft.hpp"

#include <cmath>
#include <numbers>

#include "voxpipe/error.hpp"

namespace voxpipe::dsp {

RealFft::RealFft(std::size_t n) : n_(n) {
  if (!is_power_of_two(n) || n < 2) {
    throw ParameterError("FFT size must be a power of two >= 2, got " + std::to_string(n));
  }
  twiddles_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> out) const {
  if (input.size() != n_ || out.size() != bins()) {
    throw ShapeError("FFT buffer size mismatch");
  }
  std::vector<std::complex<double>> a(n_);
  for (std::size_t i = 0; i < n_; ++i) a[bitrev_[i]] = input[i];
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto t = twiddles_[k * step] * a[start + k + half];
        a[start + k + half] = a[start + k] - t;
        a[start + k] += t;
      }
    }
  }
  for (std::size_t k = 0; k < bins(); ++k) out[k] = a[k];
}

}  // namespace voxpipe::dsp
