#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace voxpipe::dsp {

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 DFT for real input. Twiddles and the bit-reversal
// permutation are computed once; forward() is const and thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // `input` must hold exactly size() samples; `out` receives bins() values.
  void forward(std::span<const double> input, std::span<std::complex<double>> out) const;

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::size_t> bitrev_;
};

}  // namespace voxpipe::dsp
