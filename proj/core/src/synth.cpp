#include "voxpipe/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>

#include "voxpipe/csv.hpp"
#include "voxpipe/error.hpp"

namespace voxpipe::synth {

namespace {

constexpr int kHarmonics = 8;
constexpr double kFormantBandwidthHz = 120.0;
constexpr double kRampS = 0.01;

double resonance(double f, double formant) {
  const double a = formant * formant - f * f;
  const double b = kFormantBandwidthHz * f;
  return formant * formant / std::sqrt(a * a + b * b);
}

}  // namespace

void ClassSpec::validate() const {
  if (!(f0_lo > 0 && f0_lo <= f0_hi)) throw ParameterError("class '" + label + "': invalid F0 range");
  if (!(formants[0] > 0 && formants[1] > 0)) throw ParameterError("class '" + label + "': formants must be positive");
  if (!(amplitude > 0 && amplitude < 1)) throw ParameterError("class '" + label + "': amplitude must lie in (0, 1)");
  if (!(duration_lo > 0 && duration_lo <= duration_hi)) {
    throw ParameterError("class '" + label + "': invalid duration range");
  }
  if (!std::isfinite(snr_db)) throw ParameterError("class '" + label + "': SNR must be finite");
}

ClassSpec preset(std::string_view name) {
  ClassSpec c;
  c.label = std::string(name);
  if (name == "low") {
    c.f0_lo = 90.0;
    c.f0_hi = 130.0;
    c.formants = {600.0, 1200.0};
  } else if (name == "high") {
    c.f0_lo = 190.0;
    c.f0_hi = 260.0;
    c.formants = {800.0, 1500.0};
  } else {
    throw ParameterError("unknown class preset '" + std::string(name) + "' (have: low, high)");
  }
  return c;
}

void CorpusSpec::validate() const {
  if (n < 1) throw ParameterError("corpus needs n >= 1");
  if (sample_rate < 8000) throw ParameterError("sample rate must be at least 8000");
  if (!(pad_s >= 0)) throw ParameterError("padding must be nonnegative");
  if (classes.empty()) throw ParameterError("corpus needs at least one class");
  for (const auto& c : classes) {
    c.validate();
    // Harmonics above Nyquist are dropped; the fundamental itself must fit.
    if (c.f0_hi >= sample_rate / 2.0) throw ParameterError("class '" + c.label + "': F0 above Nyquist");
  }
}

CorpusSpec default_corpus(int n, std::uint64_t seed) {
  CorpusSpec s;
  s.n = n;
  s.seed = seed;
  s.classes = {preset("low"), preset("high")};
  return s;
}

CorpusSpec parse_corpus_spec(std::string_view json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec is not valid JSON: ") + e.what());
  }
  try {
    CorpusSpec s = default_corpus(j.value("n", 10), j.value("seed", std::uint64_t{1}));
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.pad_s = j.value("pad_s", s.pad_s);
    if (j.contains("classes")) {
      s.classes.clear();
      for (const auto& cj : j.at("classes")) {
        ClassSpec c;
        if (cj.is_string()) {
          c = preset(cj.get<std::string>());
        } else {
          if (cj.contains("preset")) c = preset(cj.at("preset").get<std::string>());
          c.label = cj.value("label", c.label);
          if (cj.contains("f0")) {
            c.f0_lo = cj.at("f0").at(0).get<double>();
            c.f0_hi = cj.at("f0").at(1).get<double>();
          }
          if (cj.contains("formants")) {
            c.formants = {cj.at("formants").at(0).get<double>(), cj.at("formants").at(1).get<double>()};
          }
          c.amplitude = cj.value("amplitude", c.amplitude);
          if (cj.contains("duration")) {
            c.duration_lo = cj.at("duration").at(0).get<double>();
            c.duration_hi = cj.at("duration").at(1).get<double>();
          }
          c.snr_db = cj.value("snr_db", c.snr_db);
        }
        if (c.label.empty()) throw ConfigError("every class needs a label");
        s.classes.push_back(std::move(c));
      }
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec has a malformed field: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

Clip synthesize_clip(const ClassSpec& spec, double f0, double duration_s, int sample_rate, double pad_s,
                     std::uint64_t seed) {
  spec.validate();
  if (!(f0 > 0 && f0 < sample_rate / 2.0)) throw ParameterError("F0 must lie in (0, Nyquist)");
  if (!(duration_s > 0)) throw ParameterError("duration must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto pad = static_cast<std::size_t>(std::lround(pad_s * sample_rate));
  const auto voiced = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  const std::size_t total = 2 * pad + voiced;
  std::vector<double> clean(total, 0.0);

  std::array<double, kHarmonics> amp{};
  std::array<double, kHarmonics> phase{};
  for (int k = 1; k <= kHarmonics; ++k) {
    const double f = k * f0;
    phase[static_cast<std::size_t>(k - 1)] = phase_dist(rng);
    if (f >= sample_rate / 2.0) continue;
    amp[static_cast<std::size_t>(k - 1)] = (1.0 / k) * resonance(f, spec.formants[0]) * resonance(f, spec.formants[1]);
  }
  const auto ramp = std::min(voiced / 2, static_cast<std::size_t>(kRampS * sample_rate));
  double peak = 0.0;
  for (std::size_t i = 0; i < voiced; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 0.0;
    for (int k = 1; k <= kHarmonics; ++k) {
      const auto kk = static_cast<std::size_t>(k - 1);
      if (amp[kk] != 0.0) v += amp[kk] * std::sin(2.0 * std::numbers::pi * k * f0 * t + phase[kk]);
    }
    double env = 1.0;
    if (ramp > 0 && i < ramp) env = static_cast<double>(i) / ramp;
    if (ramp > 0 && voiced - 1 - i < ramp) env = std::min(env, static_cast<double>(voiced - 1 - i) / ramp);
    clean[pad + i] = v * env;
    peak = std::max(peak, std::abs(clean[pad + i]));
  }
  double power = 0.0;
  const double gain = peak > 0 ? spec.amplitude / peak : 0.0;
  for (std::size_t i = pad; i < pad + voiced; ++i) {
    clean[i] *= gain;
    power += clean[i] * clean[i];
  }
  power /= static_cast<double>(voiced);
  const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));

  Clip clip;
  clip.f0 = f0;
  clip.voiced_start_s = static_cast<double>(pad) / sample_rate;
  clip.voiced_end_s = static_cast<double>(pad + voiced) / sample_rate;
  clip.clean.sample_rate = clip.noisy.sample_rate = sample_rate;
  clip.clean.samples.resize(total);
  clip.noisy.samples.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    clip.clean.samples[i] = static_cast<float>(clean[i]);
    clip.noisy.samples[i] = static_cast<float>(std::clamp(clean[i] + sigma * gauss(rng), -1.0, 1.0));
  }
  return clip;
}

std::vector<ManifestRow> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  std::vector<ManifestRow> rows;
  std::string manifest = "path,label,f0_true,target\n";
  for (int i = 0; i < spec.n; ++i) {
    const ClassSpec& c = spec.classes[static_cast<std::size_t>(i) % spec.classes.size()];
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double f0 = c.f0_lo + (c.f0_hi - c.f0_lo) * unit(rng);
    const double dur = c.duration_lo + (c.duration_hi - c.duration_lo) * unit(rng);
    const Clip clip = synthesize_clip(c, f0, dur, spec.sample_rate, spec.pad_s, rng());
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04d.wav", i);
    audio::write_wav(clip.noisy, out_dir / name);
    ManifestRow row{name, c.label, f0, f0};
    csv::append_field(manifest, row.path, true);
    manifest += ',';
    csv::append_field(manifest, row.label, true);
    manifest += ',' + csv::format_double(row.f0_true) + ',' + csv::format_double(row.target) + '\n';
    rows.push_back(std::move(row));
  }
  std::ofstream out(out_dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in '" + out_dir.string() + "'");
  out << manifest;
  if (!out.flush()) throw IoError("failed writing manifest in '" + out_dir.string() + "'");
  return rows;
}

}  // namespace voxpipe::synth
