#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipmn/dataset.hpp"
#include "pipmn/features.hpp"
#include "pipmn/manifest.hpp"
#include "pipmn/rng.hpp"
#include "pipmn/wav.hpp"

namespace testutil {

// Self-deleting scratch directory under the system temp path.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    pipmn::Rng rng(static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() /
            ("pipmn-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++) + "-" + std::to_string(rng.next_u64() & 0xffffff));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline pipmn::Waveform sine_wave(double seconds, double freq, int rate, double amplitude = 0.4,
                                 std::uint64_t noise_seed = 0, double noise = 0.0) {
  pipmn::Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  pipmn::Rng rng(noise_seed + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double v = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate);
    if (noise > 0.0) v += noise * rng.uniform(-1.0, 1.0);
    w.samples[i] = static_cast<float>(v);
  }
  return w;
}

// Writes n_clips WAV files (one sine per class, class-dependent frequency)
// and a manifest; returns the manifest path.
inline std::string make_audio_manifest(const TempDir& dir, int n_clips, int n_classes,
                                       double seconds, int rate = 22050) {
  std::ofstream csv(dir.file("manifest.csv"));
  csv << "clip_id,file_path,labels\n";
  for (int i = 0; i < n_clips; ++i) {
    const int cls = i % n_classes;
    const std::string wav = dir.file("clip" + std::to_string(i) + ".wav");
    pipmn::write_wav(wav, sine_wave(seconds, 220.0 * (cls + 1), rate, 0.4,
                                    static_cast<std::uint64_t>(i), 0.02));
    csv << "clip" << i << "," << wav << ",class" << cls << "\n";
  }
  csv.close();
  return dir.file("manifest.csv");
}

// Synthetic feature-space dataset: per-class Gaussian mean vectors, per-frame
// Gaussian noise. Written as a PIPF cache + index so the normal training
// pipeline consumes it. Returns the cache root (index under <root>/stack5/).
inline std::string make_synthetic_dataset(const TempDir& dir, int n_samples, int n_classes,
                                          int in_dim, int frames, std::uint64_t seed) {
  const std::string cache = dir.file("cache");
  const std::string sub = cache + "/stack5";
  std::filesystem::create_directories(sub);

  pipmn::Rng rng(pipmn::Rng::mix(seed, 0x73796e74ULL));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(n_classes),
                                         std::vector<double>(static_cast<std::size_t>(in_dim)));
  for (auto& m : means)
    for (double& v : m) v = rng.normal() * 1.5;

  // Clip-level split via the real splitter so the pipeline is exercised
  // end to end.
  pipmn::Manifest manifest;
  for (int i = 0; i < n_samples; ++i) {
    pipmn::ManifestRow row;
    row.clip_id = "syn" + std::to_string(i);
    row.file_path = "synthetic";
    row.labels = {"class" + std::to_string(i % n_classes)};
    manifest.rows.push_back(row);
  }
  const pipmn::SplitAssignment split = pipmn::make_split(manifest, seed);

  std::ofstream index(sub + "/index.jsonl");
  for (int i = 0; i < n_samples; ++i) {
    const int cls = i % n_classes;
    pipmn::FeatureMatrix f;
    f.rows = frames;
    f.cols = in_dim;
    f.values.resize(static_cast<std::size_t>(frames) * in_dim);
    for (int r = 0; r < frames; ++r)
      for (int c = 0; c < in_dim; ++c)
        f.at(r, c) = static_cast<float>(means[static_cast<std::size_t>(cls)]
                                             [static_cast<std::size_t>(c)] +
                                        0.5 * rng.normal());
    const std::string name = "syn" + std::to_string(i) + "_s0.pipf";
    pipmn::write_pipf(sub + "/" + name, f);
    index << nlohmann::json{{"segment_path", name},
                            {"clip_id", "syn" + std::to_string(i)},
                            {"split", pipmn::split_name(split.of("syn" + std::to_string(i)))},
                            {"labels", {"class" + std::to_string(cls)}}}
                 .dump()
          << "\n";
  }
  return cache;
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout+stderr interleaved
};

inline CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
#ifdef PIPMN_CLI_PATH
  const std::string binary = PIPMN_CLI_PATH;
#else
  const std::string binary = "pipmn";
#endif
  const std::string cmd =
      (env_prefix.empty() ? "" : env_prefix + " ") + binary + " " + args + " 2>&1";
  CliResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return res;
  std::array<char, 4096> buf;
  while (std::size_t got = fread(buf.data(), 1, buf.size(), pipe)) res.output.append(buf.data(), got);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
