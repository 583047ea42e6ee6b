#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "voxpipe/audio_io.hpp"

namespace voxpipe::synth {

struct ClassSpec {
  std::string label;
  double f0_lo = 100.0;
  double f0_hi = 120.0;
  std::array<double, 2> formants{600.0, 1200.0};
  double amplitude = 0.3;  // peak of the clean voiced section
  double duration_lo = 1.0;
  double duration_hi = 1.5;
  double snr_db = 20.0;

  void validate() const;
};

// "low": F0 90-130 Hz, "high": F0 190-260 Hz.
ClassSpec preset(std::string_view name);

struct CorpusSpec {
  int n = 10;
  std::uint64_t seed = 1;
  int sample_rate = 16000;
  double pad_s = 0.3;  // silence (plus noise) on both sides of the voiced part
  std::vector<ClassSpec> classes;

  void validate() const;
};

// Two classes, "low" and "high".
CorpusSpec default_corpus(int n, std::uint64_t seed);
// JSON: {"n", "seed", "sample_rate", "pad_s", "classes": [{"label", "f0": [lo, hi],
// "formants": [f1, f2], "amplitude", "duration": [lo, hi], "snr_db"}]}; omitted keys keep defaults.
CorpusSpec parse_corpus_spec(std::string_view json_text);

struct Clip {
  audio::AudioBuffer noisy;
  audio::AudioBuffer clean;
  double f0 = 0.0;
  double voiced_start_s = 0.0;
  double voiced_end_s = 0.0;
};

// 8 harmonics with 1/k amplitude shaped by two formant resonances, random
// phases, padded with silence, then white Gaussian noise over the whole clip
// at snr_db relative to the voiced power.
Clip synthesize_clip(const ClassSpec& spec, double f0, double duration_s, int sample_rate, double pad_s,
                     std::uint64_t seed);

struct ManifestRow {
  std::string path;  // relative to the corpus directory
  std::string label;
  double f0_true = 0.0;
  double target = 0.0;
};

// Writes clip_0000.wav... plus manifest.csv (path,label,f0_true,target) to
// out_dir. Clip i belongs to class i mod classes.
std::vector<ManifestRow> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

inline constexpr std::string_view kManifestName = "manifest.csv";

}  // namespace voxpipe::synth
