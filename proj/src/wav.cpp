#include "pipmn/wav.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pipmn/error.hpp"

namespace pipmn {

namespace {

std::uint32_t u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16_le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void append_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open audio file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

std::string wav_header(std::uint32_t sample_rate, std::uint16_t channels, std::uint16_t bits,
                       std::uint16_t format, std::uint32_t data_size) {
  std::string out = "RIFF";
  append_u32_le(out, 36 + data_size);
  out += "WAVEfmt ";
  append_u32_le(out, 16);
  append_u16_le(out, format);
  append_u16_le(out, channels);
  append_u32_le(out, sample_rate);
  const std::uint32_t block_align = channels * (bits / 8u);
  append_u32_le(out, sample_rate * block_align);
  append_u16_le(out, static_cast<std::uint16_t>(block_align));
  append_u16_le(out, bits);
  out += "data";
  append_u32_le(out, data_size);
  return out;
}

}  // namespace

Waveform load_wav(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw ParseError("not a RIFF/WAVE file (bad 'RIFF' chunk): " + path);

  FmtChunk fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    char id[5] = {0};
    std::memcpy(id, p + pos, 4);
    const std::uint32_t size = u32_le(p + pos + 4);
    pos += 8;
    if (pos + size > n)
      throw ParseError(std::string("truncated '") + id + "' chunk: " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("short 'fmt ' chunk: " + path);
      fmt.format = u16_le(p + pos);
      fmt.channels = u16_le(p + pos + 2);
      fmt.sample_rate = u32_le(p + pos + 4);
      fmt.bits = u16_le(p + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + pos;
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw ParseError("missing 'fmt ' chunk: " + path);
  if (data == nullptr) throw ParseError("missing 'data' chunk: " + path);
  if (fmt.channels < 1 || fmt.channels > 2)
    throw ParseError("'fmt ' chunk declares " + std::to_string(fmt.channels) +
                     " channels (supported: 1 or 2): " + path);
  if (fmt.sample_rate == 0) throw ParseError("'fmt ' chunk declares zero sample rate: " + path);

  const bool pcm16 = fmt.format == 1 && fmt.bits == 16;
  const bool float32 = fmt.format == 3 && fmt.bits == 32;
  if (!pcm16 && !float32)
    throw ParseError("unsupported codec in 'fmt ' chunk (format " + std::to_string(fmt.format) +
                     ", " + std::to_string(fmt.bits) + " bits): " + path);

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data_size / frame_bytes;

  Waveform w;
  w.sample_rate = static_cast<int>(fmt.sample_rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    float acc = 0.0f;
    for (std::uint16_t c = 0; c < fmt.channels; ++c) {
      const unsigned char* s = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(u16_le(s));
        acc += static_cast<float>(v) / 32768.0f;
      } else {
        acc += std::bit_cast<float>(u32_le(s));
      }
    }
    w.samples[i] = acc / static_cast<float>(fmt.channels);
    if (!std::isfinite(w.samples[i]))
      throw ParseError("'data' chunk contains non-finite samples: " + path);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w, int bits_per_sample) {
  if (bits_per_sample != 16 && bits_per_sample != 32)
    throw ValueError("write_wav supports 16 (PCM) or 32 (float) bits");
  std::string data;
  data.reserve(w.samples.size() * (bits_per_sample / 8));
  if (bits_per_sample == 16) {
    for (float v : w.samples) {
      const double scaled = std::lround(static_cast<double>(v) * 32768.0);
      const auto s = static_cast<std::int16_t>(std::min(32767.0, std::max(-32768.0, scaled)));
      append_u16_le(data, static_cast<std::uint16_t>(s));
    }
  } else {
    for (float v : w.samples) append_u32_le(data, std::bit_cast<std::uint32_t>(v));
  }
  const std::string header =
      wav_header(static_cast<std::uint32_t>(w.sample_rate), 1,
                 static_cast<std::uint16_t>(bits_per_sample),
                 bits_per_sample == 16 ? 1 : 3, static_cast<std::uint32_t>(data.size()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open wav for writing: " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("failed writing wav: " + path);
}

void write_wav_stereo(const std::string& path, const std::vector<float>& left,
                      const std::vector<float>& right, int sample_rate) {
  if (left.size() != right.size()) throw ValueError("stereo channels must have equal length");
  std::string data;
  data.reserve(left.size() * 4);
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (float v : {left[i], right[i]}) {
      const double scaled = std::lround(static_cast<double>(v) * 32768.0);
      const auto s = static_cast<std::int16_t>(std::min(32767.0, std::max(-32768.0, scaled)));
      append_u16_le(data, static_cast<std::uint16_t>(s));
    }
  }
  const std::string header = wav_header(static_cast<std::uint32_t>(sample_rate), 2, 16, 1,
                                        static_cast<std::uint32_t>(data.size()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open wav for writing: " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("failed writing wav: " + path);
}

Waveform resample(const Waveform& w, int target_hz) {
  if (target_hz <= 0) throw ValueError("resample target rate must be positive");
  if (w.samples.empty()) throw ValueError("resample got an empty waveform");
  if (w.sample_rate == target_hz) return w;
  const std::size_t src_len = w.samples.size();
  const auto out_len = static_cast<std::size_t>(std::llround(
      static_cast<double>(src_len) * target_hz / w.sample_rate));
  Waveform out;
  out.sample_rate = target_hz;
  out.samples.resize(std::max<std::size_t>(out_len, 1));
  const double step = static_cast<double>(w.sample_rate) / target_hz;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = i * step;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= src_len - 1) {
      out.samples[i] = w.samples[src_len - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = static_cast<float>((1.0 - frac) * w.samples[lo] + frac * w.samples[lo + 1]);
  }
  return out;
}

std::vector<Waveform> segment_clip(const Waveform& w, double seconds) {
  if (!(seconds > 0.0)) throw ValueError("segment length must be positive");
  const auto window = static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  if (window == 0) throw ValueError("segment length rounds to zero samples");
  const std::size_t n = w.samples.size();
  std::size_t count = n / window;
  if (n % window > window / 2 || count == 0) ++count;
  std::vector<Waveform> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Waveform seg;
    seg.sample_rate = w.sample_rate;
    seg.samples.assign(window, 0.0f);
    const std::size_t start = s * window;
    const std::size_t take = start < n ? std::min(window, n - start) : 0;
    for (std::size_t i = 0; i < take; ++i) seg.samples[i] = w.samples[start + i];
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace pipmn
