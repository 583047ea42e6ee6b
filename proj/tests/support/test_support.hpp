#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "voxpipe/audio_io.hpp"

namespace voxpipe::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vp");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

audio::AudioBuffer sine(double hz, double seconds, int sr = 16000, double amp = 0.5, double phase = 0.0);
// Naive ramp in [-amp, amp) with exactly the given period.
audio::AudioBuffer sawtooth(double hz, double seconds, int sr = 16000, double amp = 0.5);
audio::AudioBuffer silence(double seconds, int sr = 16000);
audio::AudioBuffer white_noise(double seconds, std::uint64_t seed, int sr = 16000, double amp = 0.1);
audio::AudioBuffer concat(const std::vector<audio::AudioBuffer>& parts);
audio::AudioBuffer scaled(audio::AudioBuffer b, double gain);

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0);
// Two isotropic Gaussian blobs; labels "a" for the first center, "b" for the second.
void blobs(int n, const Eigen::Vector2d& c0, const Eigen::Vector2d& c1, double sigma, std::uint64_t seed,
           Eigen::MatrixXd& x, std::vector<std::string>& labels);

// Central-difference relative error max_i |g_i - fd_i| / max(1, |g|_inf, |fd|_inf).
template <class F>
double gradient_error(F&& f, const Eigen::VectorXd& theta, double h = 1e-5) {
  Eigen::VectorXd grad;
  f(theta, &grad);
  Eigen::VectorXd fd(theta.size());
  Eigen::VectorXd t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    t(i) = theta(i) + h;
    const double up = f(t, nullptr);
    t(i) = theta(i) - h;
    const double down = f(t, nullptr);
    t(i) = theta(i);
    fd(i) = (up - down) / (2 * h);
  }
  const double denom = std::max({1e-8, grad.lpNorm<Eigen::Infinity>(), fd.lpNorm<Eigen::Infinity>()});
  return (grad - fd).lpNorm<Eigen::Infinity>() / denom;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args);

// Value after "key=" on the first line starting with `prefix`, NaN when absent.
double report_value(const std::string& text, const std::string& prefix, const std::string& key);

}  // namespace voxpipe::test
