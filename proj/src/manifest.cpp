#include "pipmn/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pipmn/error.hpp"
#include "pipmn/rng.hpp"

namespace pipmn {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);

  std::string line;
  if (!std::getline(f, line)) throw ParseError("manifest is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_on(line, ',');
  const std::vector<std::string> base{"clip_id", "file_path", "labels"};
  bool has_duration = false;
  if (header.size() == 4 && header[3] == "duration_s")
    has_duration = true;
  else if (header.size() != 3)
    throw ParseError("manifest line 1: expected header clip_id,file_path,labels[,duration_s]");
  for (std::size_t i = 0; i < 3; ++i)
    if (header[i] != base[i])
      throw ParseError("manifest line 1: unknown column '" + header[i] + "' (expected '" +
                       base[i] + "')");

  Manifest m;
  std::set<std::string> seen_ids;
  std::set<std::string> labels;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_on(line, ',');
    if (fields.size() != header.size())
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    ManifestRow row;
    row.clip_id = fields[0];
    row.file_path = fields[1];
    if (row.clip_id.empty())
      throw ParseError("manifest line " + std::to_string(line_no) + ": empty clip_id");
    if (!seen_ids.insert(row.clip_id).second)
      throw ParseError("manifest line " + std::to_string(line_no) + ": duplicate clip_id '" +
                       row.clip_id + "'");
    for (const std::string& lab : split_on(fields[2], ';')) {
      if (lab.empty())
        throw ParseError("manifest line " + std::to_string(line_no) + ": empty label");
      row.labels.push_back(lab);
      labels.insert(lab);
    }
    if (has_duration && !fields[3].empty()) {
      try {
        row.duration_s = std::stod(fields[3]);
      } catch (const std::exception&) {
        throw ParseError("manifest line " + std::to_string(line_no) + ": bad duration_s '" +
                         fields[3] + "'");
      }
    }
    m.rows.push_back(std::move(row));
  }
  if (m.rows.empty()) throw ParseError("manifest has no data rows: " + path);
  m.vocabulary.assign(labels.begin(), labels.end());
  if (m.vocabulary.size() < 2)
    throw ParseError("manifest needs at least 2 distinct labels, found " +
                     std::to_string(m.vocabulary.size()));
  return m;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ValueError("unknown split '" + name + "' (expected train|val|test)");
}

Split SplitAssignment::of(const std::string& clip_id) const {
  auto it = by_clip.find(clip_id);
  if (it == by_clip.end()) throw ValueError("clip '" + clip_id + "' has no split assignment");
  return it->second;
}

SplitAssignment make_split(const Manifest& m, std::uint64_t seed) {
  const auto n = static_cast<long>(m.rows.size());
  if (n < 10) throw ValueError("split needs at least 10 clips, got " + std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(m.rows.size());
  for (const auto& row : m.rows) ids.push_back(row.clip_id);
  Rng rng(Rng::mix(seed, 0x73706c74ULL));
  rng.shuffle(ids.begin(), ids.end());

  const long n_val = n / 10, n_test = n / 10;
  const long n_train = n - n_val - n_test;
  SplitAssignment a;
  a.seed = seed;
  for (long i = 0; i < n; ++i) {
    Split s = Split::kTrain;
    if (i >= n_train + n_val)
      s = Split::kTest;
    else if (i >= n_train)
      s = Split::kVal;
    a.by_clip.emplace(ids[static_cast<std::size_t>(i)], s);
  }
  return a;
}

}  // namespace pipmn
