#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipmn/features.hpp"
#include "pipmn/manifest.hpp"

namespace pipmn {

// One cached 4 s segment: a PIPF file next to the index, plus provenance.
struct SegmentRecord {
  std::string segment_path;  // file name relative to the index directory
  std::string clip_id;
  Split split = Split::kTrain;
  std::vector<std::string> labels;
};

struct FeatureIndex {
  std::string dir;  // directory holding index.jsonl and the PIPF files
  std::vector<SegmentRecord> segments;
  std::vector<std::string> vocabulary;  // sorted distinct labels

  std::string resolve(const SegmentRecord& s) const { return dir + "/" + s.segment_path; }
};

struct MaterializeStats {
  int extracted = 0;  // segments written in this run
  int cached = 0;     // segments reused from an earlier run
  int failed = 0;     // clips whose audio could not be processed
  std::vector<std::pair<std::string, std::string>> failures;  // (file, reason)
};

// Segment every clip, extract features, and write one PIPF file per segment
// plus index.jsonl under <cache_dir>/<frontend>/. Clips already covered by an
// existing index with intact files are not re-extracted. Unreadable audio is
// recorded as a failure and the run continues.
MaterializeStats materialize_features(const Manifest& m, const SplitAssignment& split,
                                      const std::string& cache_dir, Frontend frontend);

FeatureIndex load_index(const std::string& cache_dir, Frontend frontend);

std::string frontend_cache_dir(const std::string& cache_dir, Frontend frontend);

// All segments of one split loaded into memory.
struct LoadedSplit {
  std::vector<FeatureMatrix> features;
  std::vector<std::vector<int>> label_ids;  // per segment, indices into the vocabulary
  std::vector<std::string> clip_ids;
};

struct LoadedDataset {
  LoadedSplit splits[3];
  std::vector<std::string> vocabulary;
  int frames = 0;
  int dims = 0;

  const LoadedSplit& of(Split s) const { return splits[static_cast<int>(s)]; }
};

LoadedDataset load_dataset(const FeatureIndex& index);

// Seeded per-epoch shuffling over one split; the final short batch is emitted
// as-is. Construction fails on an empty split.
class BatchStream {
 public:
  BatchStream(const LoadedSplit& split, int batch_size, std::uint64_t seed);

  void start_epoch(long epoch);
  // Fills `indices` with the next batch's segment indices; false at epoch end.
  bool next(std::vector<int>& indices);

  long num_segments() const { return static_cast<long>(order_.size()); }
  int num_batches() const;

 private:
  const LoadedSplit* split_;
  int batch_size_;
  std::uint64_t seed_;
  std::vector<int> order_;
  long cursor_ = 0;
};

}  // namespace pipmn
