#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pipmn {

struct ManifestRow {
  std::string clip_id;
  std::string file_path;
  std::vector<std::string> labels;
  std::optional<double> duration_s;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> vocabulary;  // sorted distinct labels
};

// Parses the manifest CSV (header clip_id,file_path,labels[,duration_s];
// labels ';'-separated). Duplicate ids, unknown columns and empty labels
// raise ParseError with the offending line number.
Manifest read_manifest(const std::string& path);

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// Clip-level 80/10/10 assignment: seeded shuffle, floor-sized val/test,
// remainder to train. All segments of a clip inherit its split.
struct SplitAssignment {
  std::unordered_map<std::string, Split> by_clip;
  std::uint64_t seed = 0;

  Split of(const std::string& clip_id) const;
};

SplitAssignment make_split(const Manifest& m, std::uint64_t seed);

}  // namespace pipmn
