#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/vad.hpp"

using namespace voxpipe;
using namespace voxpipe::vad;
using audio::AudioBuffer;
using audio::VoiceSegment;

namespace {

constexpr double kTwoHops = 0.02 + 1e-9;

// Bursts of 300 Hz tone at the given [start, end) times over low noise.
AudioBuffer bursts(const std::vector<VoiceSegment>& where, double total_s, double amp = 0.5,
                   double noise = 0.0, std::uint64_t seed = 1) {
  AudioBuffer b = noise > 0 ? test::white_noise(total_s, seed, 16000, noise) : test::silence(total_s);
  for (const auto& s : where) {
    const auto from = static_cast<std::size_t>(std::llround(s.start_s * 16000));
    const auto to = static_cast<std::size_t>(std::llround(s.end_s * 16000));
    for (std::size_t i = from; i < to && i < b.samples.size(); ++i) {
      b.samples[i] += static_cast<float>(amp * std::sin(2 * M_PI * 300 * double(i) / 16000));
    }
  }
  return b;
}

}  // namespace

TEST(Vad, FrameEnergiesClosedForms) {
  AudioBuffer square;
  for (int i = 0; i < 16000; ++i) square.samples.push_back((i / 20) % 2 ? 1.0f : -1.0f);
  for (double e : frame_energies(square, 0.025, 0.010)) EXPECT_NEAR(e, 0.0, 1e-9);

  for (double e : frame_energies(test::silence(0.5), 0.025, 0.010)) EXPECT_EQ(e, kEnergyFloorDb);

  // 400 Hz completes exactly 10 cycles per 25 ms frame, so every frame holds whole periods
  const double expected = 20 * std::log10(0.5 / std::sqrt(2.0));
  for (double e : frame_energies(test::sine(400, 1.0, 16000, 0.5), 0.025, 0.010)) EXPECT_NEAR(e, expected, 1e-3);
}

TEST(Vad, FrameCountFormula) {
  for (std::size_t len : {400u, 401u, 559u, 560u, 16000u}) {
    AudioBuffer b;
    b.samples.assign(len, 0.1f);
    EXPECT_EQ(frame_energies(b, 0.025, 0.010).size(), 1 + (len - 400) / 160) << len;
  }
  AudioBuffer tiny;
  tiny.samples.assign(100, 0.5f);
  const auto e = frame_energies(tiny, 0.025, 0.010);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_NEAR(e[0], 20 * std::log10(0.5), 1e-6);
}

TEST(Vad, Percentile) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 5), 0.5);
}

TEST(Vad, SingleToneBetweenSilences) {
  const AudioBuffer b = bursts({{0.5, 1.5}}, 2.0);
  const auto segs = detect_segments(b, VadParams{});
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NEAR(segs[0].start_s, 0.5, kTwoHops);
  EXPECT_NEAR(segs[0].end_s, 1.5, kTwoHops);
}

TEST(Vad, SilenceYieldsNothing) {
  EXPECT_TRUE(detect_segments(test::silence(1.0), VadParams{}).empty());
  EXPECT_FALSE(first_segment(test::silence(1.0), VadParams{}, 0.5).has_value());
}

TEST(Vad, ShortGapIsMerged) {
  const AudioBuffer b = bursts({{0.3, 0.8}, {0.85, 1.4}}, 2.0);
  VadParams p;
  p.merge_gap_s = 0.10;
  p.hangover_frames = 0;
  const auto segs = detect_segments(b, p);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NEAR(segs[0].start_s, 0.3, kTwoHops);
  EXPECT_NEAR(segs[0].end_s, 1.4, kTwoHops);
}

TEST(Vad, LongGapSplits) {
  const auto segs = detect_segments(bursts({{0.3, 0.8}, {1.2, 1.7}}, 2.0), VadParams{});
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_NEAR(segs[1].start_s, 1.2, kTwoHops);
}

TEST(Vad, FirstSegmentPicksEarliestLongEnough) {
  const AudioBuffer b = bursts({{0.5, 1.5}, {2.0, 4.0}}, 4.5);
  const auto s = first_segment(b, VadParams{}, 0.8);
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(s->start_s, 0.5, kTwoHops);
  EXPECT_NEAR(s->end_s, 1.5, kTwoHops);

  const auto later = first_segment(b, VadParams{}, 1.5);
  ASSERT_TRUE(later.has_value());
  EXPECT_NEAR(later->start_s, 2.0, kTwoHops);

  EXPECT_FALSE(first_segment(bursts({{0.1, 0.3}}, 1.0), VadParams{}, 0.5).has_value());
}

TEST(Vad, FloorModeIgnoresQuietNoise) {
  // noise around -46 dBFS never crosses the -40 dB floor
  const AudioBuffer b = test::white_noise(1.0, 3, 16000, 0.005);
  EXPECT_TRUE(detect_segments(b, VadParams{}).empty());
}

TEST(Vad, InvalidParams) {
  VadParams p;
  p.hop_s = 0.05;
  EXPECT_THROW(detect_segments(test::silence(1.0), p), ParameterError);
  p = VadParams{};
  p.min_segment_s = 0.0;
  EXPECT_THROW(detect_segments(test::silence(1.0), p), ParameterError);
}

// Property: over random burst layouts, segments are sorted, disjoint,
// inside the clip, long enough, and separated by at least the merge gap.
TEST(Vad, StructuralInvariants) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const double total = 1.0 + 3.0 * u(rng);
    std::vector<VoiceSegment> where;
    double t = u(rng) * 0.3;
    while (t < total) {
      const double len = 0.02 + 0.6 * u(rng);
      where.push_back({t, std::min(total, t + len)});
      t += len + 0.01 + 0.5 * u(rng);
    }
    VadParams p;
    p.mode = trial % 2 ? ThresholdMode::kAdaptiveOnly : ThresholdMode::kAdaptiveWithFloor;
    p.hangover_frames = static_cast<int>(rng() % 8);
    p.merge_gap_s = 0.02 + 0.2 * u(rng);
    p.min_segment_s = 0.05 + 0.3 * u(rng);
    const AudioBuffer b = bursts(where, total, 0.1 + 0.8 * u(rng), 0.001, trial);
    const auto segs = detect_segments(b, p);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      EXPECT_GE(segs[i].start_s, 0.0);
      EXPECT_LE(segs[i].end_s, b.duration_s() + 1e-12);
      EXPECT_GE(segs[i].length_s(), p.min_segment_s);
      if (i) EXPECT_GE(segs[i].start_s - segs[i - 1].end_s, p.merge_gap_s);
    }
  }
}

// Property: adaptive-only boundaries do not move under gain changes.
TEST(Vad, AdaptiveOnlyIsGainInvariant) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VadParams p;
  p.mode = ThresholdMode::kAdaptiveOnly;
  for (int trial = 0; trial < 30; ++trial) {
    const double a = 0.3 * u(rng);
    const AudioBuffer b = bursts({{0.2 + a, 0.9 + a}, {1.3, 1.6 + a}}, 2.5, 0.4, 0.002, trial);
    const auto base = detect_segments(b, p);
    ASSERT_FALSE(base.empty());
    for (double g : {0.25, 0.5, 0.1 + 0.9 * u(rng)}) {
      EXPECT_EQ(detect_segments(test::scaled(b, g), p), base) << "gain " << g;
    }
  }
}
