#include "pipmn/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "pipmn/error.hpp"

namespace pipmn {

namespace {

constexpr double kLogFloor = 1e-10;

// Iterative radix-2 FFT, decimation in time. Sizes are small fixed powers of
// two (1024 for the pipeline), so a plain hand-rolled transform keeps the
// cache files bit-exact with zero dependencies.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if ((n & (n - 1)) != 0) throw ValueError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> hamming_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i)
    w[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (length - 1));
  return w;
}

void append_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Filter energies for every frame: e[t, j] = sum_k fb[j,k] * power[t,k].
std::vector<double> filter_energies(const Spectrogram& sp, const Filterbank& fb) {
  if (fb.bins != sp.bins)
    throw ShapeError("filterbank has " + std::to_string(fb.bins) + " bins, spectrogram " +
                     std::to_string(sp.bins));
  std::vector<double> e(static_cast<std::size_t>(sp.frames) * fb.n_filters, 0.0);
  for (int t = 0; t < sp.frames; ++t) {
    const double* pw = sp.power.data() + static_cast<std::size_t>(t) * sp.bins;
    double* et = e.data() + static_cast<std::size_t>(t) * fb.n_filters;
    for (int j = 0; j < fb.n_filters; ++j) {
      const double* w = fb.weights.data() + static_cast<std::size_t>(j) * fb.bins;
      double acc = 0.0;
      for (int k = 0; k < fb.bins; ++k) acc += w[k] * pw[k];
      et[j] = acc;
    }
  }
  return e;
}

FeatureMatrix hstack(const std::vector<FeatureMatrix>& parts) {
  FeatureMatrix out;
  out.rows = parts.front().rows;
  for (const auto& p : parts) {
    if (p.rows != out.rows) throw ShapeError("feature stack frame-count mismatch");
    out.cols += p.cols;
  }
  out.values.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (int r = 0; r < out.rows; ++r) {
    int off = 0;
    for (const auto& p : parts) {
      std::memcpy(out.values.data() + static_cast<std::size_t>(r) * out.cols + off,
                  p.values.data() + static_cast<std::size_t>(r) * p.cols,
                  sizeof(float) * static_cast<std::size_t>(p.cols));
      off += p.cols;
    }
  }
  return out;
}

}  // namespace

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

double hz_to_bark(double f) { return 26.81 * f / (1960.0 + f) - 0.53; }
double bark_to_hz(double z) {
  const double y = z + 0.53;
  return 1960.0 * y / (26.81 - y);
}

double erb_bandwidth(double f) { return 24.7 * (4.37 * f / 1000.0 + 1.0); }
double hz_to_erb_rate(double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); }
double erb_rate_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }

double triangle_weight(double f, double lo, double center, double hi) {
  if (f <= lo || f >= hi) return 0.0;
  return f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
}

Spectrogram stft_power(const Waveform& w, const StftConfig& cfg) {
  const int window = static_cast<int>(std::floor(cfg.window_s * w.sample_rate));
  const int hop = static_cast<int>(std::floor(cfg.hop_s * w.sample_rate));
  if (window < 2 || hop < 1) throw ValueError("stft window/hop too small for this sample rate");
  if (window > cfg.fft_size)
    throw ValueError("stft window exceeds fft size " + std::to_string(cfg.fft_size));
  const auto n = static_cast<long>(w.samples.size());
  if (n < window)
    throw ValueError("clip of " + std::to_string(n) + " samples is shorter than one window (" +
                     std::to_string(window) + ")");

  Spectrogram sp;
  sp.frames = static_cast<int>(1 + (n - window) / hop);
  sp.bins = cfg.fft_size / 2 + 1;
  sp.power.resize(static_cast<std::size_t>(sp.frames) * sp.bins);

  const std::vector<double> win = hamming_window(window);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int t = 0; t < sp.frames; ++t) {
    const long start = static_cast<long>(t) * hop;
    for (int i = 0; i < window; ++i)
      buf[static_cast<std::size_t>(i)] = {w.samples[static_cast<std::size_t>(start + i)] *
                                              win[static_cast<std::size_t>(i)],
                                          0.0};
    for (int i = window; i < cfg.fft_size; ++i) buf[static_cast<std::size_t>(i)] = {0.0, 0.0};
    fft_inplace(buf);
    double* row = sp.power.data() + static_cast<std::size_t>(t) * sp.bins;
    for (int k = 0; k < sp.bins; ++k) row[k] = std::norm(buf[static_cast<std::size_t>(k)]);
  }
  return sp;
}

Filterbank build_filterbank(const FilterbankSpec& spec, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const double fmax = spec.fmax > 0.0 ? spec.fmax : nyquist;
  if (!(spec.fmin >= 0.0) || !(spec.fmin < fmax) || fmax > nyquist + 1e-9)
    throw ValueError("invalid filterbank frequency range [" + std::to_string(spec.fmin) + ", " +
                     std::to_string(fmax) + "] at rate " + std::to_string(sample_rate));
  if (spec.n_filters < 1) throw ValueError("filterbank needs at least one filter");

  Filterbank fb;
  fb.n_filters = spec.n_filters;
  fb.bins = spec.fft_size / 2 + 1;
  fb.weights.assign(static_cast<std::size_t>(fb.n_filters) * fb.bins, 0.0);

  std::vector<double> bin_hz(static_cast<std::size_t>(fb.bins));
  for (int k = 0; k < fb.bins; ++k)
    bin_hz[static_cast<std::size_t>(k)] =
        static_cast<double>(k) * sample_rate / spec.fft_size;

  // n_filters + 2 anchor points equally spaced on the warped axis; triangular
  // banks peak at the interior points, the gammatone pair centers there too.
  double (*warp)(double) = nullptr;
  double (*unwarp)(double) = nullptr;
  switch (spec.family) {
    case FilterFamily::kMel:
      warp = hz_to_mel;
      unwarp = mel_to_hz;
      break;
    case FilterFamily::kLinear:
      warp = [](double f) { return f; };
      unwarp = [](double f) { return f; };
      break;
    case FilterFamily::kBark:
      warp = hz_to_bark;
      unwarp = bark_to_hz;
      break;
    case FilterFamily::kGammatone:
    case FilterFamily::kGammachirp:
      warp = hz_to_erb_rate;
      unwarp = erb_rate_to_hz;
      break;
  }
  const double wlo = warp(spec.fmin), whi = warp(fmax);
  std::vector<double> anchors(static_cast<std::size_t>(spec.n_filters) + 2);
  for (std::size_t i = 0; i < anchors.size(); ++i)
    anchors[i] = unwarp(wlo + (whi - wlo) * static_cast<double>(i) /
                                  static_cast<double>(spec.n_filters + 1));

  const bool triangular = spec.family == FilterFamily::kMel ||
                          spec.family == FilterFamily::kLinear ||
                          spec.family == FilterFamily::kBark;
  for (int j = 0; j < fb.n_filters; ++j) {
    double* row = fb.weights.data() + static_cast<std::size_t>(j) * fb.bins;
    const double center = anchors[static_cast<std::size_t>(j) + 1];
    if (triangular) {
      const double lo = anchors[static_cast<std::size_t>(j)];
      const double hi = anchors[static_cast<std::size_t>(j) + 2];
      for (int k = 0; k < fb.bins; ++k)
        row[k] = triangle_weight(bin_hz[static_cast<std::size_t>(k)], lo, center, hi);
    } else {
      // 4th-order gammatone magnitude sampled in frequency:
      //   |H(f)| = (1 + ((f - fc)/b)^2)^(-2),  b = 1.019 * ERB(fc).
      // The gammachirp variant multiplies in the asymmetric factor
      // exp(c * atan((f - fc)/b)) with a fixed chirp c = -2.
      const double b = 1.019 * erb_bandwidth(center);
      const bool chirped = spec.family == FilterFamily::kGammachirp;
      double peak = 0.0;
      for (int k = 0; k < fb.bins; ++k) {
        const double u = (bin_hz[static_cast<std::size_t>(k)] - center) / b;
        double v = std::pow(1.0 + u * u, -2.0);
        if (chirped) v *= std::exp(-2.0 * std::atan(u));
        row[k] = v;
        peak = std::max(peak, v);
      }
      for (int k = 0; k < fb.bins; ++k) row[k] /= peak;
    }
    double rowsum = 0.0;
    for (int k = 0; k < fb.bins; ++k) rowsum += row[k];
    if (!(rowsum > 0.0) || !std::isfinite(rowsum))
      throw ValueError("filter " + std::to_string(j) + " has empty or non-finite support");
  }
  return fb;
}

FeatureMatrix cepstra(const Spectrogram& power, const Filterbank& fb, int n_coeff) {
  if (n_coeff < 1 || n_coeff > fb.n_filters)
    throw ValueError("cepstra keeps 1..n_filters coefficients, asked for " +
                     std::to_string(n_coeff));
  const std::vector<double> energies = filter_energies(power, fb);
  const int nf = fb.n_filters;

  // Orthonormal DCT-II matrix [n_coeff, nf].
  std::vector<double> dct(static_cast<std::size_t>(n_coeff) * nf);
  const double s0 = std::sqrt(1.0 / nf), sk = std::sqrt(2.0 / nf);
  for (int k = 0; k < n_coeff; ++k)
    for (int j = 0; j < nf; ++j)
      dct[static_cast<std::size_t>(k) * nf + j] =
          (k == 0 ? s0 : sk) * std::cos(std::numbers::pi * (2 * j + 1) * k / (2.0 * nf));

  FeatureMatrix out;
  out.rows = power.frames;
  out.cols = n_coeff;
  out.values.resize(static_cast<std::size_t>(out.rows) * out.cols);
  std::vector<double> logs(static_cast<std::size_t>(nf));
  for (int t = 0; t < power.frames; ++t) {
    const double* e = energies.data() + static_cast<std::size_t>(t) * nf;
    for (int j = 0; j < nf; ++j) logs[static_cast<std::size_t>(j)] = std::log(e[j] + kLogFloor);
    for (int k = 0; k < n_coeff; ++k) {
      const double* row = dct.data() + static_cast<std::size_t>(k) * nf;
      double acc = 0.0;
      for (int j = 0; j < nf; ++j) acc += row[j] * logs[static_cast<std::size_t>(j)];
      out.at(t, k) = static_cast<float>(acc);
    }
  }
  return out;
}

FeatureMatrix log_filterbank_energies(const Spectrogram& power, const Filterbank& fb) {
  const std::vector<double> energies = filter_energies(power, fb);
  FeatureMatrix out;
  out.rows = power.frames;
  out.cols = fb.n_filters;
  out.values.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = static_cast<float>(std::log(energies[i] + kLogFloor));
  return out;
}

std::string frontend_name(Frontend f) {
  switch (f) {
    case Frontend::kStack5: return "stack5";
    case Frontend::kMfcc50: return "mfcc50";
    case Frontend::kMel100: return "mel100";
  }
  return "stack5";
}

Frontend frontend_from_name(const std::string& name) {
  if (name == "stack5") return Frontend::kStack5;
  if (name == "mfcc50") return Frontend::kMfcc50;
  if (name == "mel100") return Frontend::kMel100;
  throw ValueError("unknown frontend '" + name + "' (expected stack5|mfcc50|mel100)");
}

int frontend_dims(Frontend f) { return f == Frontend::kMfcc50 ? 50 : 100; }

FeatureMatrix extract_stack(const Waveform& clip) {
  const Spectrogram sp = stft_power(clip);
  const FilterFamily order[5] = {FilterFamily::kGammachirp, FilterFamily::kMel,
                                 FilterFamily::kGammatone, FilterFamily::kLinear,
                                 FilterFamily::kBark};  // NGCC MFCC GFCC LFCC BFCC
  std::vector<FeatureMatrix> parts;
  parts.reserve(5);
  for (FilterFamily fam : order) {
    FilterbankSpec spec;
    spec.family = fam;
    const Filterbank fb = build_filterbank(spec, clip.sample_rate);
    parts.push_back(cepstra(sp, fb, 20));
  }
  return hstack(parts);
}

FeatureMatrix extract_mfcc50(const Waveform& clip) {
  const Spectrogram sp = stft_power(clip);
  FilterbankSpec spec;
  spec.family = FilterFamily::kMel;
  spec.n_filters = 100;
  return cepstra(sp, build_filterbank(spec, clip.sample_rate), 50);
}

FeatureMatrix extract_mel100(const Waveform& clip) {
  const Spectrogram sp = stft_power(clip);
  FilterbankSpec spec;
  spec.family = FilterFamily::kMel;
  spec.n_filters = 100;
  return log_filterbank_energies(sp, build_filterbank(spec, clip.sample_rate));
}

FeatureMatrix extract_features(const Waveform& clip, Frontend frontend) {
  switch (frontend) {
    case Frontend::kStack5: return extract_stack(clip);
    case Frontend::kMfcc50: return extract_mfcc50(clip);
    case Frontend::kMel100: return extract_mel100(clip);
  }
  throw ValueError("unknown frontend");
}

void write_pipf(const std::string& path, const FeatureMatrix& m) {
  std::string out = "PIPF";
  append_u32_le(out, 1);
  append_u32_le(out, static_cast<std::uint32_t>(m.rows));
  append_u32_le(out, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) append_u32_le(out, std::bit_cast<std::uint32_t>(v));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open feature cache for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing feature cache: " + path);
}

FeatureMatrix read_pipf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open feature cache: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, "PIPF", 4) != 0)
    throw ParseError("feature cache magic mismatch (expected PIPF): " + path);
  if (u32_le(p + 4) != 1)
    throw ParseError("feature cache version mismatch: " + path);
  FeatureMatrix m;
  m.rows = static_cast<int>(u32_le(p + 8));
  m.cols = static_cast<int>(u32_le(p + 12));
  const std::size_t count = static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols);
  if (bytes.size() != 16 + 4 * count)
    throw ParseError("feature cache length mismatch: " + path);
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    m.values[i] = std::bit_cast<float>(u32_le(p + 16 + 4 * i));
  return m;
}

}  // namespace pipmn
