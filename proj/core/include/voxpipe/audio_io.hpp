#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace voxpipe::audio {

// Floating-point samples in [-1, 1]. Multi-channel data is interleaved and
// only appears between read_wav() and downmix().
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 16000;
  int channels = 1;

  std::size_t frames() const { return channels > 0 ? samples.size() / channels : 0; }
  double duration_s() const { return static_cast<double>(frames()) / sample_rate; }

  bool operator==(const AudioBuffer&) const = default;
};

struct VoiceSegment {
  double start_s = 0.0;
  double end_s = 0.0;

  double length_s() const { return end_s - start_s; }
  bool operator==(const VoiceSegment&) const = default;
};

enum class WavEncoding { kPcm16, kFloat32 };

struct WavWriteReport {
  std::size_t clipped_samples = 0;
  bool clipped() const { return clipped_samples > 0; }
};

// RIFF/WAVE, little-endian, PCM 16-bit (format 1) or IEEE float 32-bit
// (format 3, or WAVE_FORMAT_EXTENSIBLE carrying either).
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");
AudioBuffer read_wav(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, WavEncoding encoding,
                                     WavWriteReport* report = nullptr);
// Samples outside [-1, 1] are clipped and counted in the report.
WavWriteReport write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                         WavEncoding encoding = WavEncoding::kPcm16);

// Per-sample arithmetic mean over channels.
AudioBuffer downmix(const AudioBuffer& buffer);

struct ResamplerOptions {
  int taps_per_phase = 64;     // measured at the lower of the two rates
  double kaiser_beta = 8.6;
  double cutoff_fraction = 0.45;  // of the lower sample rate
};

// Kaiser-windowed sinc polyphase interpolation. Output length is
// round(frames * target / source); equal rates return the input unchanged.
AudioBuffer resample(const AudioBuffer& buffer, int target_rate,
                     const ResamplerOptions& options = {});

// Samples [floor(start * sr), floor(end * sr)). Throws BoundsError unless
// 0 <= start < end <= duration.
AudioBuffer cut_segment(const AudioBuffer& buffer, const VoiceSegment& segment);

// Target format of the converter component: mono, 16 kHz, PCM16.
struct NormalizePreset {
  int sample_rate = 16000;
  WavEncoding encoding = WavEncoding::kPcm16;
};

AudioBuffer normalize(const AudioBuffer& buffer, const NormalizePreset& preset = {});

}  // namespace voxpipe::audio
