#pragma once

#include <optional>
#include <vector>

#include "voxpipe/audio_io.hpp"

namespace voxpipe::vad {

enum class ThresholdMode { kAdaptiveOnly, kAdaptiveWithFloor };

// Energy detector settings. The threshold is the 5th percentile of frame
// energies plus margin_db, optionally raised to floor_dbfs.
struct VadParams {
  double frame_s = 0.025;
  double hop_s = 0.010;
  ThresholdMode mode = ThresholdMode::kAdaptiveWithFloor;
  double floor_dbfs = -40.0;
  double margin_db = 6.0;
  double min_segment_s = 0.25;
  double merge_gap_s = 0.10;
  int hangover_frames = 5;

  void validate() const;
};

inline constexpr double kEnergyFloorDb = -120.0;

// Per-frame RMS in dBFS, floored at -120 dB. A buffer shorter than one frame
// yields a single whole-signal frame.
std::vector<double> frame_energies(const audio::AudioBuffer& buffer, double frame_s, double hop_s);

// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

std::vector<audio::VoiceSegment> detect_segments(const audio::AudioBuffer& buffer,
                                                 const VadParams& params);

// Earliest detected segment lasting at least min_s.
std::optional<audio::VoiceSegment> first_segment(const audio::AudioBuffer& buffer,
                                                 const VadParams& params, double min_s);

}  // namespace voxpipe::vad
