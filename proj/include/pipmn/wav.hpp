#pragma once

#include <string>
#include <vector>

namespace pipmn {

struct Waveform {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a RIFF/WAVE file. Accepts PCM 16-bit (scaled by 1/32768) and IEEE
// float 32-bit; stereo is averaged down to mono. Malformed or unsupported
// files raise ParseError naming the offending chunk.
Waveform load_wav(const std::string& path);

// Writes mono PCM 16-bit (default) or IEEE float 32-bit.
void write_wav(const std::string& path, const Waveform& w, int bits_per_sample = 16);

// Writes a two-channel PCM 16-bit file; used to build test fixtures.
void write_wav_stereo(const std::string& path, const std::vector<float>& left,
                      const std::vector<float>& right, int sample_rate);

// Linear-interpolation resampling; output length = round(len * target / source).
Waveform resample(const Waveform& w, int target_hz);

// Cuts non-overlapping windows of `seconds` starting at sample 0. A trailing
// partial window is kept (zero-padded) only when it is more than half full;
// clips shorter than one window always yield a single padded segment.
std::vector<Waveform> segment_clip(const Waveform& w, double seconds);

}  // namespace pipmn
