#include "voxpipe/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "voxpipe/error.hpp"

namespace voxpipe::audio {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes, std::string_view source) {
  const std::string src(source);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(src + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;

  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::string tag(reinterpret_cast<const char*>(hdr), 4);
    const std::uint32_t size = u32(hdr + 4);
    const std::size_t body = pos + 8;

    if (tag == "fmt ") {
      if (size < 16 || body + size > bytes.size()) {
        throw FormatError(src + ": 'fmt ' chunk is truncated");
      }
      const std::uint8_t* f = bytes.data() + body;
      format = u16(f);
      channels = u16(f + 2);
      rate = u32(f + 4);
      block_align = u16(f + 12);
      bits = u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError(src + ": 'fmt ' extensible chunk is truncated");
        format = u16(f + 24);
      }
      if (format != kFormatPcm && format != kFormatFloat) {
        throw FormatError(src + ": 'fmt ' chunk: unsupported codec " + std::to_string(format));
      }
      if ((format == kFormatPcm && bits != 16) || (format == kFormatFloat && bits != 32)) {
        throw FormatError(src + ": 'fmt ' chunk: unsupported bit depth " + std::to_string(bits));
      }
      if (channels == 0 || rate == 0 || block_align != channels * (bits / 8)) {
        throw FormatError(src + ": 'fmt ' chunk: inconsistent channel/rate/alignment fields");
      }
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw FormatError(src + ": 'data' chunk precedes 'fmt ' chunk");
      if (body + size > bytes.size()) throw IoError(src + ": 'data' chunk is truncated");
      if (size % block_align != 0) {
        throw FormatError(src + ": 'data' chunk size is not a whole number of frames");
      }
      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      out.channels = channels;
      const std::uint8_t* d = bytes.data() + body;
      const std::size_t count = size / (bits / 8);
      out.samples.resize(count);
      if (format == kFormatPcm) {
        for (std::size_t i = 0; i < count; ++i) {
          const auto s = static_cast<std::int16_t>(u16(d + 2 * i));
          out.samples[i] = static_cast<float>(s) / 32768.0f;
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) {
          out.samples[i] = std::bit_cast<float>(u32(d + 4 * i));
        }
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError(src + ": no 'fmt ' chunk");
  throw IoError(src + ": no 'data' chunk (file truncated?)");
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, WavEncoding encoding,
                                     WavWriteReport* report) {
  if (buffer.channels < 1 || buffer.sample_rate < 1) {
    throw ParameterError("cannot encode buffer with " + std::to_string(buffer.channels) +
                         " channels at " + std::to_string(buffer.sample_rate) + " Hz");
  }
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(buffer.channels * bits / 8);
  const std::uint32_t data_size = static_cast<std::uint32_t>(buffer.samples.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put16(out, static_cast<std::uint16_t>(buffer.channels));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate) * block);
  put16(out, block);
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_size);

  std::size_t clipped = 0;
  for (float x : buffer.samples) {
    if (std::isnan(x)) {
      x = 0.0f;
      ++clipped;
    } else if (x > 1.0f || x < -1.0f) {
      x = std::clamp(x, -1.0f, 1.0f);
      ++clipped;
    }
    if (encoding == WavEncoding::kPcm16) {
      const long q = std::clamp(std::lround(static_cast<double>(x) * 32768.0), -32768L, 32767L);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      put32(out, std::bit_cast<std::uint32_t>(x));
    }
  }
  if (report) report->clipped_samples = clipped;
  return out;
}

WavWriteReport write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                         WavEncoding encoding) {
  WavWriteReport report;
  const auto bytes = encode_wav(buffer, encoding, &report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
  return report;
}

AudioBuffer downmix(const AudioBuffer& buffer) {
  if (buffer.channels <= 1) return buffer;
  AudioBuffer out;
  out.sample_rate = buffer.sample_rate;
  out.channels = 1;
  const std::size_t frames = buffer.frames();
  const auto ch = static_cast<std::size_t>(buffer.channels);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < ch; ++c) sum += buffer.samples[i * ch + c];
    out.samples[i] = static_cast<float>(sum / static_cast<double>(ch));
  }
  return out;
}

AudioBuffer cut_segment(const AudioBuffer& buffer, const VoiceSegment& segment) {
  constexpr double kSlack = 1e-9;
  const double duration = buffer.duration_s();
  if (!(segment.start_s >= 0.0) || !(segment.start_s < segment.end_s) ||
      segment.end_s > duration + kSlack) {
    throw BoundsError("segment [" + std::to_string(segment.start_s) + ", " +
                      std::to_string(segment.end_s) + "] outside [0, " + std::to_string(duration) + "]");
  }
  const auto sr = static_cast<double>(buffer.sample_rate);
  const std::size_t frames = buffer.frames();
  const auto begin = std::min(frames, static_cast<std::size_t>(std::floor(segment.start_s * sr + 1e-6)));
  const auto end = std::min(frames, static_cast<std::size_t>(std::floor(segment.end_s * sr + 1e-6)));
  const auto ch = static_cast<std::size_t>(buffer.channels);
  AudioBuffer out;
  out.sample_rate = buffer.sample_rate;
  out.channels = buffer.channels;
  out.samples.assign(buffer.samples.begin() + static_cast<std::ptrdiff_t>(begin * ch),
                     buffer.samples.begin() + static_cast<std::ptrdiff_t>(end * ch));
  return out;
}

AudioBuffer normalize(const AudioBuffer& buffer, const NormalizePreset& preset) {
  return resample(downmix(buffer), preset.sample_rate);
}

}  // namespace voxpipe::audio
