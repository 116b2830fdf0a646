#include "pipmn/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pipmn/error.hpp"
#include "pipmn/rng.hpp"

namespace fs = std::filesystem;

namespace pipmn {

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out;
  out.reserve(id.size());
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
  return out;
}

std::string segment_file_name(const std::string& clip_id, int seg) {
  return sanitize_id(clip_id) + "_s" + std::to_string(seg) + ".pipf";
}

void write_index(const std::string& dir, const std::vector<SegmentRecord>& segments) {
  std::ofstream f(dir + "/index.jsonl", std::ios::trunc);
  if (!f) throw IoError("cannot write index: " + dir + "/index.jsonl");
  for (const auto& s : segments) {
    nlohmann::json j{{"segment_path", s.segment_path},
                     {"clip_id", s.clip_id},
                     {"split", split_name(s.split)},
                     {"labels", s.labels}};
    f << j.dump() << '\n';
  }
}

// Previous run's segment files per clip, if an index is already present.
std::map<std::string, std::vector<std::string>> previous_segments(const std::string& dir) {
  std::map<std::string, std::vector<std::string>> out;
  std::ifstream f(dir + "/index.jsonl");
  if (!f) return out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("clip_id").get<std::string>()].push_back(j.at("segment_path").get<std::string>());
    } catch (const nlohmann::json::exception&) {
      return {};  // stale or corrupt index: rebuild everything
    }
  }
  return out;
}

}  // namespace

std::string frontend_cache_dir(const std::string& cache_dir, Frontend frontend) {
  return cache_dir + "/" + frontend_name(frontend);
}

MaterializeStats materialize_features(const Manifest& m, const SplitAssignment& split,
                                      const std::string& cache_dir, Frontend frontend) {
  const std::string dir = frontend_cache_dir(cache_dir, frontend);
  fs::create_directories(dir);
  const auto prev = previous_segments(dir);

  MaterializeStats stats;
  std::vector<SegmentRecord> segments;
  for (const ManifestRow& row : m.rows) {
    const Split clip_split = split.of(row.clip_id);
    const auto it = prev.find(row.clip_id);
    if (it != prev.end()) {
      const bool intact = std::all_of(it->second.begin(), it->second.end(),
                                      [&](const std::string& p) { return fs::exists(dir + "/" + p); });
      if (intact) {
        for (const std::string& p : it->second)
          segments.push_back({p, row.clip_id, clip_split, row.labels});
        stats.cached += static_cast<int>(it->second.size());
        continue;
      }
    }
    try {
      Waveform w = load_wav(row.file_path);
      w = resample(w, kPipelineSampleRate);
      const std::vector<Waveform> clips = segment_clip(w, kSegmentSeconds);
      for (std::size_t s = 0; s < clips.size(); ++s) {
        const FeatureMatrix feat = extract_features(clips[s], frontend);
        const std::string name = segment_file_name(row.clip_id, static_cast<int>(s));
        write_pipf(dir + "/" + name, feat);
        segments.push_back({name, row.clip_id, clip_split, row.labels});
      }
      stats.extracted += static_cast<int>(clips.size());
    } catch (const std::exception& e) {
      ++stats.failed;
      stats.failures.emplace_back(row.file_path, e.what());
    }
  }
  write_index(dir, segments);
  return stats;
}

FeatureIndex load_index(const std::string& cache_dir, Frontend frontend) {
  FeatureIndex index;
  index.dir = frontend_cache_dir(cache_dir, frontend);
  std::ifstream f(index.dir + "/index.jsonl");
  if (!f) throw IoError("cannot open index: " + index.dir + "/index.jsonl");
  std::string line;
  int line_no = 0;
  std::set<std::string> labels;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("index line " + std::to_string(line_no) + ": " + e.what());
    }
    SegmentRecord s;
    s.segment_path = j.at("segment_path").get<std::string>();
    s.clip_id = j.at("clip_id").get<std::string>();
    s.split = split_from_name(j.at("split").get<std::string>());
    s.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& l : s.labels) labels.insert(l);
    index.segments.push_back(std::move(s));
  }
  index.vocabulary.assign(labels.begin(), labels.end());
  return index;
}

LoadedDataset load_dataset(const FeatureIndex& index) {
  LoadedDataset data;
  data.vocabulary = index.vocabulary;
  std::map<std::string, int> label_id;
  for (std::size_t i = 0; i < data.vocabulary.size(); ++i)
    label_id[data.vocabulary[i]] = static_cast<int>(i);

  for (const SegmentRecord& s : index.segments) {
    FeatureMatrix feat = read_pipf(index.resolve(s));
    if (data.frames == 0) {
      data.frames = feat.rows;
      data.dims = feat.cols;
    } else if (feat.rows != data.frames || feat.cols != data.dims) {
      throw ParseError("segment '" + s.segment_path + "' has shape (" +
                       std::to_string(feat.rows) + "," + std::to_string(feat.cols) +
                       "), expected (" + std::to_string(data.frames) + "," +
                       std::to_string(data.dims) + ")");
    }
    LoadedSplit& split = data.splits[static_cast<int>(s.split)];
    split.features.push_back(std::move(feat));
    std::vector<int> ids;
    for (const auto& l : s.labels) ids.push_back(label_id.at(l));
    std::sort(ids.begin(), ids.end());
    split.label_ids.push_back(std::move(ids));
    split.clip_ids.push_back(s.clip_id);
  }
  return data;
}

BatchStream::BatchStream(const LoadedSplit& split, int batch_size, std::uint64_t seed)
    : split_(&split), batch_size_(batch_size), seed_(seed) {
  if (split.features.empty()) throw ValueError("batch stream over an empty split");
  if (batch_size < 1) throw ValueError("batch size must be >= 1");
  order_.resize(split.features.size());
  std::iota(order_.begin(), order_.end(), 0);
}

void BatchStream::start_epoch(long epoch) {
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(Rng::mix(seed_, static_cast<std::uint64_t>(epoch) + 0x62617463ULL));
  rng.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
}

bool BatchStream::next(std::vector<int>& indices) {
  if (cursor_ >= static_cast<long>(order_.size())) return false;
  const long end = std::min<long>(cursor_ + batch_size_, static_cast<long>(order_.size()));
  indices.assign(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return true;
}

int BatchStream::num_batches() const {
  return static_cast<int>((order_.size() + batch_size_ - 1) / batch_size_);
}

}  // namespace pipmn
