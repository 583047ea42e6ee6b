#include "voxpipe/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "voxpipe/error.hpp"
#include "voxpipe/fft.hpp"

namespace voxpipe::features {

using audio::AudioBuffer;

FrameMatrix::FrameMatrix(std::size_t f, std::size_t d, std::vector<std::string> labels)
    : frames(f), dims(d), values(f * d, 0.0), dim_labels(std::move(labels)) {
  if (!dim_labels.empty() && dim_labels.size() != dims) {
    throw ShapeError("frame matrix has " + std::to_string(dims) + " dims but " +
                     std::to_string(dim_labels.size()) + " labels");
  }
}

double FrameMatrix::bin_hz(std::size_t k) const {
  if (n_fft == 0) throw ParameterError("matrix is not a spectrogram");
  return static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
}

Framing frame_layout(std::size_t n_samples, int sample_rate, double frame_s, double hop_s) {
  if (!(hop_s > 0.0) || !(frame_s >= hop_s)) throw ParameterError("framing requires frame_s >= hop_s > 0");
  Framing f;
  f.frame_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frame_s * sample_rate)));
  f.hop_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(hop_s * sample_rate)));
  f.count = n_samples < f.frame_len ? 1 : 1 + (n_samples - f.frame_len) / f.hop_len;
  return f;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

namespace {

void require_mono(const AudioBuffer& buffer) {
  if (buffer.channels != 1) throw ParameterError("feature extraction expects mono audio");
  if (buffer.sample_rate <= 0) throw ParameterError("sample rate must be positive");
}

void require_spectrogram(const FrameMatrix& s) {
  if (s.n_fft == 0 || s.sample_rate <= 0 || s.dims != s.n_fft / 2 + 1) {
    throw ParameterError("expected a magnitude spectrogram");
  }
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

FrameMatrix stft_magnitude(const AudioBuffer& buffer, const StftParams& params) {
  require_mono(buffer);
  const auto layout = frame_layout(buffer.samples.size(), buffer.sample_rate, params.frame_s, params.hop_s);
  if (params.n_fft < layout.frame_len) {
    throw ParameterError("n_fft (" + std::to_string(params.n_fft) + ") is shorter than the frame (" +
                         std::to_string(layout.frame_len) + " samples)");
  }
  const dsp::RealFft fft(params.n_fft);
  const auto window = hann_window(layout.frame_len);

  FrameMatrix out(layout.count, fft.bins());
  out.hop_s = static_cast<double>(layout.hop_len) / buffer.sample_rate;
  out.frame_s = static_cast<double>(layout.frame_len) / buffer.sample_rate;
  out.sample_rate = buffer.sample_rate;
  out.n_fft = params.n_fft;

  std::vector<double> frame(params.n_fft);
  std::vector<std::complex<double>> spectrum(fft.bins());
  for (std::size_t f = 0; f < layout.count; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const std::size_t begin = f * layout.hop_len;
    for (std::size_t i = 0; i < layout.frame_len && begin + i < buffer.samples.size(); ++i) {
      frame[i] = window[i] * buffer.samples[begin + i];
    }
    fft.forward(frame, spectrum);
    auto row = out.row(f);
    for (std::size_t k = 0; k < spectrum.size(); ++k) row[k] = std::abs(spectrum[k]);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank MelFilterbank::build(int sample_rate, std::size_t n_fft, std::size_t n_mels,
                                   double fmin, double fmax) {
  if (fmax < 0.0) fmax = sample_rate / 2.0;
  if (n_mels == 0 || !(fmin >= 0.0) || !(fmax > fmin)) throw ParameterError("invalid mel filterbank range");
  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.n_bins = n_fft / 2 + 1;
  bank.weights.assign(n_mels * bank.n_bins, 0.0);
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  bank.edges_hz.resize(n_mels + 2);
  for (std::size_t i = 0; i < n_mels + 2; ++i) {
    bank.edges_hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = bank.edges_hz[m];
    const double center = bank.edges_hz[m + 1];
    const double right = bank.edges_hz[m + 2];
    for (std::size_t k = 0; k < bank.n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      bank.weights[m * bank.n_bins + k] = w;
    }
  }
  return bank;
}

std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in) {
  if (n_out > n_in) throw ParameterError("DCT cannot produce more outputs than inputs");
  std::vector<double> d(n_out * n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      d[k * n_in + i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                         (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return d;
}

FrameMatrix log_mel_energies(const FrameMatrix& spectrogram, const MelFilterbank& bank) {
  require_spectrogram(spectrogram);
  if (bank.n_bins != spectrogram.dims) throw ShapeError("filterbank does not match spectrogram bins");
  FrameMatrix out(spectrogram.frames, bank.n_mels);
  out.hop_s = spectrogram.hop_s;
  out.frame_s = spectrogram.frame_s;
  for (std::size_t f = 0; f < spectrogram.frames; ++f) {
    const auto s = spectrogram.row(f);
    for (std::size_t m = 0; m < bank.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bank.n_bins; ++k) e += bank.weight(m, k) * s[k] * s[k];
      out.at(f, m) = std::log(e + kLogFloor);
    }
  }
  return out;
}

FrameMatrix cepstrum(const FrameMatrix& log_mel, std::size_t n_mfcc) {
  const auto d = dct_matrix(n_mfcc, log_mel.dims);
  FrameMatrix out(log_mel.frames, n_mfcc, numbered("mfcc_", n_mfcc));
  out.hop_s = log_mel.hop_s;
  out.frame_s = log_mel.frame_s;
  for (std::size_t f = 0; f < log_mel.frames; ++f) {
    const auto x = log_mel.row(f);
    for (std::size_t k = 0; k < n_mfcc; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < log_mel.dims; ++i) acc += d[k * log_mel.dims + i] * x[i];
      out.at(f, k) = acc;
    }
  }
  return out;
}

FrameMatrix mfcc(const AudioBuffer& buffer, const StftParams& params, std::size_t n_mfcc, std::size_t n_mels) {
  const auto spec = stft_magnitude(buffer, params);
  const auto bank = MelFilterbank::build(buffer.sample_rate, params.n_fft, n_mels);
  return cepstrum(log_mel_energies(spec, bank), n_mfcc);
}

FrameMatrix delta(const FrameMatrix& matrix, int width) {
  if (width < 3 || width % 2 == 0) {
    throw ParameterError("delta width must be odd and >= 3, got " + std::to_string(width));
  }
  const long half = width / 2;
  double denom = 0.0;
  for (long n = 1; n <= half; ++n) denom += 2.0 * static_cast<double>(n * n);

  FrameMatrix out(matrix.frames, matrix.dims);
  out.hop_s = matrix.hop_s;
  out.frame_s = matrix.frame_s;
  for (const auto& l : matrix.dim_labels) out.dim_labels.push_back("d_" + l);
  if (matrix.frames == 0) return out;
  const long last = static_cast<long>(matrix.frames) - 1;
  for (long t = 0; t <= last; ++t) {
    for (std::size_t d = 0; d < matrix.dims; ++d) {
      double acc = 0.0;
      for (long n = 1; n <= half; ++n) {
        const auto ahead = static_cast<std::size_t>(std::min(last, t + n));
        const auto behind = static_cast<std::size_t>(std::max(0L, t - n));
        acc += static_cast<double>(n) * (matrix.at(ahead, d) - matrix.at(behind, d));
      }
      out.at(static_cast<std::size_t>(t), d) = acc / denom;
    }
  }
  return out;
}

std::vector<double> zcr(const AudioBuffer& buffer, double frame_s, double hop_s) {
  require_mono(buffer);
  if (buffer.samples.empty()) throw ParameterError("ZCR of an empty buffer");
  const auto layout = frame_layout(buffer.samples.size(), buffer.sample_rate, frame_s, hop_s);
  const auto& x = buffer.samples;
  std::vector<double> out(layout.count);
  for (std::size_t f = 0; f < layout.count; ++f) {
    const std::size_t begin = f * layout.hop_len;
    const std::size_t end = std::min(x.size(), begin + layout.frame_len);
    if (end - begin < 2) {
      out[f] = 0.0;
      continue;
    }
    std::size_t crossings = 0;
    for (std::size_t i = begin + 1; i < end; ++i) {
      if ((x[i - 1] > 0.0f && x[i] < 0.0f) || (x[i - 1] < 0.0f && x[i] > 0.0f)) ++crossings;
    }
    out[f] = static_cast<double>(crossings) / static_cast<double>(end - begin - 1);
  }
  return out;
}

std::vector<double> spectral_centroid(const FrameMatrix& s) {
  require_spectrogram(s);
  std::vector<double> out(s.frames, 0.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = s.row(f);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < s.dims; ++k) {
      num += s.bin_hz(k) * row[k];
      den += row[k];
    }
    out[f] = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

std::vector<double> spectral_bandwidth(const FrameMatrix& s) {
  const auto centroid = spectral_centroid(s);
  std::vector<double> out(s.frames, 0.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = s.row(f);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < s.dims; ++k) {
      const double dev = s.bin_hz(k) - centroid[f];
      num += dev * dev * row[k];
      den += row[k];
    }
    out[f] = den > 0.0 ? std::sqrt(num / den) : 0.0;
  }
  return out;
}

std::vector<double> spectral_flatness(const FrameMatrix& s) {
  require_spectrogram(s);
  std::vector<double> out(s.frames, 1.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = s.row(f);
    // GM == AM for a flat row; skip the exp/log rounding
    if (std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; })) continue;
    double log_sum = 0.0, sum = 0.0;
    for (double v : row) {
      log_sum += std::log(v + kLogFloor);
      sum += v + kLogFloor;
    }
    const double n = static_cast<double>(s.dims);
    out[f] = std::min(1.0, std::exp(log_sum / n) / (sum / n));
  }
  return out;
}

FrameMatrix spectral_contrast(const FrameMatrix& s, std::size_t n_bands, double fmin, double quantile) {
  require_spectrogram(s);
  if (n_bands == 0 || !(fmin > 0.0) || !(quantile > 0.0 && quantile < 0.5)) {
    throw ParameterError("invalid spectral contrast parameters");
  }
  const double nyquist = s.sample_rate / 2.0;
  std::vector<double> edges{0.0};
  for (std::size_t b = 0; b < n_bands; ++b) edges.push_back(fmin * std::pow(2.0, static_cast<double>(b)));
  edges.push_back(std::numeric_limits<double>::infinity());

  std::vector<std::vector<std::size_t>> band_bins(n_bands + 1);
  for (std::size_t k = 0; k < s.dims; ++k) {
    const double f = s.bin_hz(k);
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
      if (f >= edges[b] && (f < edges[b + 1] || (b == n_bands && f <= nyquist))) {
        band_bins[b].push_back(k);
        break;
      }
    }
  }

  FrameMatrix out(s.frames, n_bands + 1, numbered("contrast_", n_bands + 1));
  out.hop_s = s.hop_s;
  out.frame_s = s.frame_s;
  std::vector<double> mags;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = s.row(f);
    for (std::size_t b = 0; b <= n_bands; ++b) {
      const auto& bins = band_bins[b];
      if (bins.empty()) continue;
      mags.clear();
      for (auto k : bins) mags.push_back(row[k]);
      std::sort(mags.begin(), mags.end());
      const std::size_t q = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(quantile * static_cast<double>(mags.size()))));
      const double valley = std::accumulate(mags.begin(), mags.begin() + static_cast<long>(q), 0.0) / q;
      const double peak = std::accumulate(mags.end() - static_cast<long>(q), mags.end(), 0.0) / q;
      out.at(f, b) = std::log(peak + kLogFloor) - std::log(valley + kLogFloor);
    }
  }
  return out;
}

FrameMatrix chroma(const FrameMatrix& s, double tuning_hz) {
  require_spectrogram(s);
  static const std::vector<std::string> kNames = {"C", "C#", "D", "D#", "E", "F",
                                                  "F#", "G", "G#", "A", "A#", "B"};
  std::vector<int> pitch_class(s.dims, -1);
  for (std::size_t k = 1; k < s.dims; ++k) {
    const double midi = 69.0 + 12.0 * std::log2(s.bin_hz(k) / tuning_hz);
    const long nearest = std::lround(midi);
    pitch_class[k] = static_cast<int>(((nearest % 12) + 12) % 12);
  }
  FrameMatrix out(s.frames, 12, kNames);
  out.hop_s = s.hop_s;
  out.frame_s = s.frame_s;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto row = s.row(f);
    auto c = out.row(f);
    for (std::size_t k = 1; k < s.dims; ++k) c[pitch_class[k]] += row[k] * row[k];
    double norm = 0.0;
    for (double v : c) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : c) v /= norm;
    }
  }
  return out;
}

FrameMatrix tonnetz(const FrameMatrix& chroma_matrix) {
  if (chroma_matrix.dims != 12) throw ShapeError("tonnetz expects 12 chroma dims");
  // Rows: fifths (sin, cos), minor thirds, major thirds with radii 1, 1, 0.5.
  constexpr double kScale[6] = {7.0 / 6, 7.0 / 6, 3.0 / 2, 3.0 / 2, 2.0 / 3, 2.0 / 3};
  constexpr double kRadius[6] = {1.0, 1.0, 1.0, 1.0, 0.5, 0.5};
  double phi[6][12];
  for (int r = 0; r < 6; ++r) {
    for (int n = 0; n < 12; ++n) {
      const double angle = std::numbers::pi * kScale[r] * n;
      phi[r][n] = kRadius[r] * (r % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  FrameMatrix out(chroma_matrix.frames, 6,
                  {"fifth_x", "fifth_y", "minor3_x", "minor3_y", "major3_x", "major3_y"});
  out.hop_s = chroma_matrix.hop_s;
  out.frame_s = chroma_matrix.frame_s;
  for (std::size_t f = 0; f < chroma_matrix.frames; ++f) {
    const auto c = chroma_matrix.row(f);
    double l1 = 0.0;
    for (double v : c) l1 += std::abs(v);
    if (l1 <= 0.0) continue;
    for (int r = 0; r < 6; ++r) {
      double acc = 0.0;
      for (int n = 0; n < 12; ++n) acc += phi[r][n] * c[n] / l1;
      out.at(f, r) = acc;
    }
  }
  return out;
}

std::vector<double> aggregate_mean(const FrameMatrix& m) {
  if (m.frames == 0) throw ParameterError("cannot aggregate an empty matrix");
  std::vector<double> out(m.dims, 0.0);
  for (std::size_t f = 0; f < m.frames; ++f) {
    for (std::size_t d = 0; d < m.dims; ++d) out[d] += m.at(f, d);
  }
  for (double& v : out) v /= static_cast<double>(m.frames);
  return out;
}

double aggregate_mean(std::span<const double> series) {
  if (series.empty()) throw ParameterError("cannot aggregate an empty series");
  return std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
}

VoicedMean aggregate_voiced(std::span<const std::optional<double>> series) {
  VoicedMean out;
  double sum = 0.0;
  for (const auto& v : series) {
    if (!v) continue;
    sum += *v;
    ++out.voiced_frames;
  }
  if (out.voiced_frames > 0) out.mean = sum / static_cast<double>(out.voiced_frames);
  return out;
}

FeatureSpec FeatureSpec::canonical() {
  FeatureSpec spec;
  spec.include = {Feature::kMfcc, Feature::kDeltaMfcc, Feature::kZcr, Feature::kCentroid,
                  Feature::kBandwidth, Feature::kFlatness, Feature::kF0};
  return spec;
}

FeatureSpec FeatureSpec::extended() {
  FeatureSpec spec = canonical();
  spec.include.push_back(Feature::kContrast);
  spec.include.push_back(Feature::kTonnetz);
  return spec;
}

std::vector<std::string> FeatureSpec::labels() const {
  std::vector<std::string> out;
  for (Feature f : include) {
    switch (f) {
      case Feature::kMfcc:
        for (std::size_t i = 0; i < n_mfcc; ++i) out.push_back("mfcc_mean_" + std::to_string(i));
        break;
      case Feature::kDeltaMfcc:
        for (std::size_t i = 0; i < n_mfcc; ++i) out.push_back("d_mfcc_mean_" + std::to_string(i));
        break;
      case Feature::kZcr: out.push_back("zcr_mean"); break;
      case Feature::kCentroid: out.push_back("sc_mean"); break;
      case Feature::kBandwidth: out.push_back("sb_mean"); break;
      case Feature::kFlatness: out.push_back("sf_mean"); break;
      case Feature::kF0: out.push_back("f0_mean"); break;
      case Feature::kContrast:
        for (std::size_t i = 0; i < 7; ++i) out.push_back("contrast_mean_" + std::to_string(i));
        break;
      case Feature::kTonnetz:
        for (std::size_t i = 0; i < 6; ++i) out.push_back("tonnetz_mean_" + std::to_string(i));
        break;
    }
  }
  return out;
}

FeatureVector extract_feature_vector(const AudioBuffer& input, const FeatureSpec& spec) {
  require_mono(input);
  FeatureVector out;
  out.labels = spec.labels();

  const auto layout = frame_layout(input.samples.size(), input.sample_rate, spec.stft.frame_s, spec.stft.hop_s);
  AudioBuffer padded;
  const AudioBuffer* buffer = &input;
  if (input.samples.size() < layout.frame_len) {
    out.short_clip = true;
    padded = input;
    padded.samples.resize(layout.frame_len, 0.0f);
    buffer = &padded;
  }

  const auto spec_mag = stft_magnitude(*buffer, spec.stft);
  auto append = [&](std::span<const double> v) { out.values.insert(out.values.end(), v.begin(), v.end()); };

  FrameMatrix cepstra;
  auto need_cepstra = [&]() -> const FrameMatrix& {
    if (cepstra.frames == 0) {
      const auto bank = MelFilterbank::build(buffer->sample_rate, spec.stft.n_fft, spec.n_mels);
      cepstra = cepstrum(log_mel_energies(spec_mag, bank), spec.n_mfcc);
    }
    return cepstra;
  };

  for (Feature f : spec.include) {
    switch (f) {
      case Feature::kMfcc: append(aggregate_mean(need_cepstra())); break;
      case Feature::kDeltaMfcc: append(aggregate_mean(delta(need_cepstra(), spec.delta_width))); break;
      case Feature::kZcr: {
        const auto z = zcr(*buffer, spec.stft.frame_s, spec.stft.hop_s);
        out.values.push_back(aggregate_mean(z));
        break;
      }
      case Feature::kCentroid: out.values.push_back(aggregate_mean(spectral_centroid(spec_mag))); break;
      case Feature::kBandwidth: out.values.push_back(aggregate_mean(spectral_bandwidth(spec_mag))); break;
      case Feature::kFlatness: out.values.push_back(aggregate_mean(spectral_flatness(spec_mag))); break;
      case Feature::kF0: {
        const auto f0 = f0_yin(*buffer, spec.yin);
        const auto agg = aggregate_voiced(f0);
        out.unvoiced = agg.unvoiced();
        out.values.push_back(agg.mean);
        break;
      }
      case Feature::kContrast: append(aggregate_mean(spectral_contrast(spec_mag))); break;
      case Feature::kTonnetz: append(aggregate_mean(tonnetz(chroma(spec_mag)))); break;
    }
  }
  if (out.values.size() != out.labels.size()) throw ShapeError("feature vector length mismatch");
  return out;
}

}  // namespace voxpipe::features
