#include "voxpipe/vad.hpp"

#include <algorithm>
#include <cmath>

#include "voxpipe/error.hpp"

namespace voxpipe::vad {

using audio::AudioBuffer;
using audio::VoiceSegment;

void VadParams::validate() const {
  if (!(hop_s > 0.0) || !(frame_s >= hop_s)) {
    throw ParameterError("VAD framing requires frame_s >= hop_s > 0");
  }
  if (!(min_segment_s > 0.0)) throw ParameterError("VAD min_segment_s must be positive");
  if (merge_gap_s < 0.0) throw ParameterError("VAD merge_gap_s must be non-negative");
  if (hangover_frames < 0) throw ParameterError("VAD hangover_frames must be non-negative");
}

namespace {

std::size_t samples_for(double seconds, int rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(seconds * rate)));
}

double to_dbfs(double sum_sq, std::size_t n) {
  if (n == 0 || sum_sq <= 0.0) return kEnergyFloorDb;
  const double rms = std::sqrt(sum_sq / static_cast<double>(n));
  return std::max(kEnergyFloorDb, 20.0 * std::log10(rms));
}

}  // namespace

std::vector<double> frame_energies(const AudioBuffer& buffer, double frame_s, double hop_s) {
  if (buffer.channels != 1) throw ParameterError("VAD expects mono audio");
  if (buffer.samples.empty()) throw ParameterError("VAD input is empty");
  const std::size_t frame = samples_for(frame_s, buffer.sample_rate);
  const std::size_t hop = samples_for(hop_s, buffer.sample_rate);
  const auto& x = buffer.samples;

  auto energy = [&](std::size_t begin, std::size_t len) {
    double sum = 0.0;
    for (std::size_t i = begin; i < begin + len; ++i) sum += static_cast<double>(x[i]) * x[i];
    return to_dbfs(sum, len);
  };

  if (x.size() < frame) return {energy(0, x.size())};
  const std::size_t count = 1 + (x.size() - frame) / hop;
  std::vector<double> out(count);
  for (std::size_t f = 0; f < count; ++f) out[f] = energy(f * hop, frame);
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ParameterError("percentile of empty series");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<VoiceSegment> detect_segments(const AudioBuffer& buffer, const VadParams& params) {
  params.validate();
  if (buffer.samples.empty()) return {};
  const auto energies = frame_energies(buffer, params.frame_s, params.hop_s);
  const double duration = buffer.duration_s();
  const double hop = static_cast<double>(samples_for(params.hop_s, buffer.sample_rate)) / buffer.sample_rate;
  const double frame = static_cast<double>(samples_for(params.frame_s, buffer.sample_rate)) / buffer.sample_rate;

  double threshold = percentile(energies, 5.0) + params.margin_db;
  if (params.mode == ThresholdMode::kAdaptiveWithFloor) threshold = std::max(threshold, params.floor_dbfs);

  // Runs of energy-active frames. A run stays open across up to
  // hangover_frames inactive frames; its boundaries come from the first and
  // last frame that actually crossed the threshold.
  std::vector<VoiceSegment> segments;
  const std::size_t n = energies.size();
  std::size_t f = 0;
  while (f < n) {
    if (!(energies[f] > threshold)) {
      ++f;
      continue;
    }
    const std::size_t first = f;
    std::size_t last = f;
    std::size_t quiet = 0;
    for (++f; f < n; ++f) {
      if (energies[f] > threshold) {
        last = f;
        quiet = 0;
      } else if (++quiet > static_cast<std::size_t>(params.hangover_frames)) {
        break;
      }
    }
    const double start = static_cast<double>(first) * hop;
    const double end = std::min(duration, static_cast<double>(last) * hop + frame);
    segments.push_back({start, end});
    f = last + 1;
  }

  std::vector<VoiceSegment> merged;
  for (const auto& s : segments) {
    if (!merged.empty() && s.start_s - merged.back().end_s < params.merge_gap_s) {
      merged.back().end_s = std::max(merged.back().end_s, s.end_s);
    } else {
      merged.push_back(s);
    }
  }
  std::erase_if(merged, [&](const VoiceSegment& s) { return s.length_s() < params.min_segment_s; });
  return merged;
}

std::optional<VoiceSegment> first_segment(const AudioBuffer& buffer, const VadParams& params,
                                          double min_s) {
  for (const auto& s : detect_segments(buffer, params)) {
    if (s.length_s() >= min_s) return s;
  }
  return std::nullopt;
}

}  // namespace voxpipe::vad
