#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxpipe/audio_io.hpp"

namespace voxpipe::features {

// Framing shared by every frame-level feature: 25 ms Hann frames every 10 ms,
// zero-padded to n_fft.
struct StftParams {
  std::size_t n_fft = 512;
  double frame_s = 0.025;
  double hop_s = 0.010;
};

// frames x dims, row-major.
struct FrameMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> values;
  double hop_s = 0.0;
  double frame_s = 0.0;
  std::vector<std::string> dim_labels;
  // Set on spectrograms only: bin k sits at k * sample_rate / n_fft Hz.
  int sample_rate = 0;
  std::size_t n_fft = 0;

  FrameMatrix() = default;
  FrameMatrix(std::size_t frames, std::size_t dims, std::vector<std::string> labels = {});

  double& at(std::size_t f, std::size_t d) { return values[f * dims + d]; }
  double at(std::size_t f, std::size_t d) const { return values[f * dims + d]; }
  std::span<const double> row(std::size_t f) const { return {values.data() + f * dims, dims}; }
  std::span<double> row(std::size_t f) { return {values.data() + f * dims, dims}; }
  double bin_hz(std::size_t k) const;
};

struct Framing {
  std::size_t frame_len = 0;
  std::size_t hop_len = 0;
  std::size_t count = 0;  // always >= 1; short signals get one padded frame
};

Framing frame_layout(std::size_t n_samples, int sample_rate, double frame_s, double hop_s);

std::vector<double> hann_window(std::size_t n);  // periodic

FrameMatrix stft_magnitude(const audio::AudioBuffer& buffer, const StftParams& params = {});

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters with unit peak, centers equally spaced on the mel
// scale between fmin and fmax.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;  // n_mels x n_bins
  std::vector<double> edges_hz;  // n_mels + 2 points; filter m peaks at edges_hz[m + 1]

  static MelFilterbank build(int sample_rate, std::size_t n_fft, std::size_t n_mels = 26,
                             double fmin = 0.0, double fmax = -1.0);
  double weight(std::size_t m, std::size_t k) const { return weights[m * n_bins + k]; }
};

// Orthonormal DCT-II basis, rows 0..n_out-1 over n_in inputs (row-major).
std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in);

inline constexpr double kLogFloor = 1e-10;

FrameMatrix log_mel_energies(const FrameMatrix& spectrogram, const MelFilterbank& bank);
FrameMatrix cepstrum(const FrameMatrix& log_mel, std::size_t n_mfcc);
FrameMatrix mfcc(const audio::AudioBuffer& buffer, const StftParams& params = {},
                 std::size_t n_mfcc = 13, std::size_t n_mels = 26);

// Local regression slope over a centered window of `width` frames, with the
// first and last frames replicated past the edges.
FrameMatrix delta(const FrameMatrix& matrix, int width = 9);

std::vector<double> zcr(const audio::AudioBuffer& buffer, double frame_s = 0.025, double hop_s = 0.010);

std::vector<double> spectral_centroid(const FrameMatrix& spectrogram);
std::vector<double> spectral_bandwidth(const FrameMatrix& spectrogram);
std::vector<double> spectral_flatness(const FrameMatrix& spectrogram);
// Octave bands [0, fmin), [fmin, 2 fmin), ... with the last band running to
// Nyquist: n_bands + 1 dims.
FrameMatrix spectral_contrast(const FrameMatrix& spectrogram, std::size_t n_bands = 6,
                              double fmin = 200.0, double quantile = 0.02);

// Pitch class 0 is C; A is 9.
FrameMatrix chroma(const FrameMatrix& spectrogram, double tuning_hz = 440.0);
FrameMatrix tonnetz(const FrameMatrix& chroma);

struct YinParams {
  double fmin = 50.0;
  double fmax = 500.0;
  double threshold = 0.1;
  double frame_s = 0.025;  // integration window
  double hop_s = 0.010;
};

// Cumulative-mean-normalized difference d'(tau) for tau in [0, max_lag] over
// x[start, start + window + max_lag).
std::vector<double> yin_cmndf(std::span<const float> x, std::size_t start, std::size_t window,
                              std::size_t max_lag);

// One estimate per frame; nullopt where no lag dips under the threshold.
std::vector<std::optional<double>> f0_yin(const audio::AudioBuffer& buffer, const YinParams& params = {});

std::vector<double> aggregate_mean(const FrameMatrix& matrix);
double aggregate_mean(std::span<const double> series);

struct VoicedMean {
  double mean = 0.0;
  std::size_t voiced_frames = 0;
  bool unvoiced() const { return voiced_frames == 0; }
};
VoicedMean aggregate_voiced(std::span<const std::optional<double>> series);

enum class Feature { kMfcc, kDeltaMfcc, kZcr, kCentroid, kBandwidth, kFlatness, kF0, kContrast, kTonnetz };

struct FeatureSpec {
  std::vector<Feature> include;
  std::size_t n_mfcc = 13;
  std::size_t n_mels = 26;
  int delta_width = 9;
  StftParams stft;
  YinParams yin;

  // mfcc, delta-mfcc, zcr, centroid, bandwidth, flatness, f0: 31 dims.
  static FeatureSpec canonical();
  // canonical plus spectral contrast (7) and tonnetz (6).
  static FeatureSpec extended();
  std::vector<std::string> labels() const;
};

struct FeatureVector {
  std::vector<std::string> labels;
  std::vector<double> values;
  bool short_clip = false;  // shorter than one frame; zero-padded
  bool unvoiced = false;    // no voiced F0 frame; f0_mean reported as 0
};

FeatureVector extract_feature_vector(const audio::AudioBuffer& buffer,
                                     const FeatureSpec& spec = FeatureSpec::canonical());

}  // namespace voxpipe::features
