#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipmn/model.hpp"
#include "pipmn/trainer.hpp"

namespace pipmn {

// Flat JSON run configuration: the architecture fields plus dataset paths,
// seeds, optimizer settings and the task mode. Unknown keys are rejected with
// the offending field name; command-line flags override file values.
struct RunConfig {
  PipConfig arch;
  std::string manifest;
  std::string cache_dir;
  std::string frontend = "stack5";
  std::string task = "multiclass";  // multiclass | multilabel
  std::string precision = "f32";    // f32 | f64
  std::uint64_t seed = 42;
  int epochs = 3500;
  int batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double threshold = 0.5;
  int patience = 20;
  double min_delta = 1e-4;
  std::vector<std::string> variants;  // ablate rows; empty means the full grid

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;

  // FNV-1a of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;

  TrainOptions train_options() const;
  void validate() const;
};

// The seven ablation rows mirroring the published grid.
const std::vector<std::string>& ablation_variant_names();

// Applies one named variant to a base configuration, returning the adjusted
// RunConfig (architecture flags, structure or frontend changes).
RunConfig apply_variant(const RunConfig& base, const std::string& variant);

}  // namespace pipmn
