#pragma once

#include <string>
#include <vector>

#include "pipmn/wav.hpp"

namespace pipmn {

// Row-major float matrix; the shape carried by feature caches.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;

  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
};

// Short-time power spectrum, double precision.
struct Spectrogram {
  int frames = 0;
  int bins = 0;  // fft/2 + 1
  std::vector<double> power;
};

struct StftConfig {
  double window_s = 0.025;
  double hop_s = 0.01;
  int fft_size = 1024;
};

// Hamming-windowed one-sided |FFT|^2. Window/hop lengths are floor(sec*rate);
// at 22050 Hz that is 551/220, so a 4 s clip yields exactly 399 frames.
Spectrogram stft_power(const Waveform& w, const StftConfig& cfg = {});

enum class FilterFamily { kMel, kLinear, kBark, kGammatone, kGammachirp };

struct FilterbankSpec {
  FilterFamily family = FilterFamily::kMel;
  int n_filters = 40;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means Nyquist
  int fft_size = 1024;
};

struct Filterbank {
  int n_filters = 0;
  int bins = 0;
  std::vector<double> weights;  // [n_filters, bins]

  double at(int f, int b) const { return weights[static_cast<std::size_t>(f) * bins + b]; }
};

// Frequency warps used by the banks.
double hz_to_mel(double f);
double mel_to_hz(double m);
double hz_to_bark(double f);  // Traunmueller
double bark_to_hz(double z);
double erb_bandwidth(double f);
double hz_to_erb_rate(double f);
double erb_rate_to_hz(double e);

// Triangle weight of a filter with support (lo, hi) peaking at `center`.
double triangle_weight(double f, double lo, double center, double hi);

Filterbank build_filterbank(const FilterbankSpec& spec, int sample_rate);

// log(filterbank energies + 1e-10) followed by an orthonormal DCT-II over the
// filters, keeping coefficients 0..n_coeff-1.
FeatureMatrix cepstra(const Spectrogram& power, const Filterbank& fb, int n_coeff = 20);

// log(filterbank energies + 1e-10) with no DCT (spectrogram-style input).
FeatureMatrix log_filterbank_energies(const Spectrogram& power, const Filterbank& fb);

enum class Frontend { kStack5, kMfcc50, kMel100 };

std::string frontend_name(Frontend f);
Frontend frontend_from_name(const std::string& name);
int frontend_dims(Frontend f);

// The stacked input: [NGCC | MFCC | GFCC | LFCC | BFCC], 40 filters and 20
// coefficients per family, (399,100) for a 4 s clip at 22050 Hz.
FeatureMatrix extract_stack(const Waveform& clip);

// Ablation inputs: 50 mel cepstral coefficients, or 100 log-mel bins.
FeatureMatrix extract_mfcc50(const Waveform& clip);
FeatureMatrix extract_mel100(const Waveform& clip);

FeatureMatrix extract_features(const Waveform& clip, Frontend frontend);

// Feature cache files: "PIPF" | u32 version=1 | u32 frames | u32 dims |
// frames*dims little-endian f32, row-major. Bit-exact across runs.
void write_pipf(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_pipf(const std::string& path);

inline constexpr int kPipelineSampleRate = 22050;
inline constexpr double kSegmentSeconds = 4.0;

}  // namespace pipmn
