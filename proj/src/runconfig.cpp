#include "pipmn/runconfig.hpp"

#include <fstream>
#include <set>

#include "pipmn/error.hpp"

namespace pipmn {

namespace {

const std::set<std::string> kKnownKeys = {
    "n",          "kappas",       "time_length",       "in_dim",
    "alpha",      "num_classes",  "long_range_skip",   "positional_modeling",
    "linear_skip", "structure",   "eps1_init",         "eps2_init",
    "rho_init",   "manifest",     "cache_dir",         "frontend",
    "task",       "precision",    "seed",              "epochs",
    "batch_size", "lr",           "weight_decay",      "beta1",
    "beta2",      "adam_eps",     "label_smoothing",   "threshold",
    "patience",   "min_delta",    "variants"};

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValueError("config field '" + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("config must be a JSON object");
  for (const auto& item : j.items())
    if (!kKnownKeys.count(item.key()))
      throw ValueError("unknown config field '" + item.key() + "'");

  RunConfig c;
  c.arch.n = field(j, "n", c.arch.n);
  c.arch.kappas = field(j, "kappas", c.arch.kappas);
  c.arch.time_length = field(j, "time_length", c.arch.time_length);
  c.arch.in_dim = field(j, "in_dim", c.arch.in_dim);
  c.arch.alpha = field(j, "alpha", c.arch.alpha);
  c.arch.num_classes = field(j, "num_classes", c.arch.num_classes);
  c.arch.long_range_skip = field(j, "long_range_skip", c.arch.long_range_skip);
  c.arch.positional_modeling = field(j, "positional_modeling", c.arch.positional_modeling);
  c.arch.linear_skip = field(j, "linear_skip", c.arch.linear_skip);
  c.arch.structure = structure_from_name(field(j, "structure", std::string("pip")));
  c.arch.eps1_init = field(j, "eps1_init", c.arch.eps1_init);
  c.arch.eps2_init = field(j, "eps2_init", c.arch.eps2_init);
  c.arch.rho_init = field(j, "rho_init", c.arch.rho_init);
  c.manifest = field(j, "manifest", c.manifest);
  c.cache_dir = field(j, "cache_dir", c.cache_dir);
  c.frontend = field(j, "frontend", c.frontend);
  c.task = field(j, "task", c.task);
  c.precision = field(j, "precision", c.precision);
  c.seed = field(j, "seed", c.seed);
  c.epochs = field(j, "epochs", c.epochs);
  c.batch_size = field(j, "batch_size", c.batch_size);
  c.lr = field(j, "lr", c.lr);
  c.weight_decay = field(j, "weight_decay", c.weight_decay);
  c.beta1 = field(j, "beta1", c.beta1);
  c.beta2 = field(j, "beta2", c.beta2);
  c.adam_eps = field(j, "adam_eps", c.adam_eps);
  c.label_smoothing = field(j, "label_smoothing", c.label_smoothing);
  c.threshold = field(j, "threshold", c.threshold);
  c.patience = field(j, "patience", c.patience);
  c.min_delta = field(j, "min_delta", c.min_delta);
  c.variants = field(j, "variants", c.variants);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

void RunConfig::validate() const {
  arch.validate();
  frontend_from_name(frontend);
  if (task != "multiclass" && task != "multilabel")
    throw ValueError("config field 'task' must be multiclass or multilabel");
  if (precision != "f32" && precision != "f64")
    throw ValueError("config field 'precision' must be f32 or f64");
  if (epochs < 0) throw ValueError("config field 'epochs' must be >= 0");
  if (batch_size < 1) throw ValueError("config field 'batch_size' must be >= 1");
  if (!(lr > 0.0)) throw ValueError("config field 'lr' must be positive");
  if (weight_decay < 0.0) throw ValueError("config field 'weight_decay' must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValueError("config fields 'beta1'/'beta2' must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ValueError("config field 'adam_eps' must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ValueError("config field 'label_smoothing' must be in [0, 1)");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValueError("config field 'threshold' must be in (0, 1)");
  if (patience < 1) throw ValueError("config field 'patience' must be >= 1");
  if (min_delta < 0.0) throw ValueError("config field 'min_delta' must be >= 0");
  for (const std::string& v : variants) {
    const auto& known = ablation_variant_names();
    if (std::find(known.begin(), known.end(), v) == known.end())
      throw ValueError("config field 'variants' names unknown variant '" + v + "'");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = arch.to_json();
  j["manifest"] = manifest;
  j["cache_dir"] = cache_dir;
  j["frontend"] = frontend;
  j["task"] = task;
  j["precision"] = precision;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["label_smoothing"] = label_smoothing;
  j["threshold"] = threshold;
  j["patience"] = patience;
  j["min_delta"] = min_delta;
  if (!variants.empty()) j["variants"] = variants;
  return j;
}

std::string RunConfig::hash() const {
  const std::string dump = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.adam_eps = adam_eps;
  t.label_smoothing = label_smoothing;
  t.threshold = threshold;
  t.patience = patience;
  t.min_delta = min_delta;
  t.multilabel = task == "multilabel";
  t.config_hash = hash();
  return t;
}

const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {
      "base",          "no_long_range_skip", "no_positional_modeling",
      "no_linear_skip", "oms",               "mfcc50",
      "mel100"};
  return names;
}

RunConfig apply_variant(const RunConfig& base, const std::string& variant) {
  RunConfig c = base;
  if (variant == "base") return c;
  if (variant == "no_long_range_skip") {
    c.arch.long_range_skip = false;
    return c;
  }
  if (variant == "no_positional_modeling") {
    c.arch.positional_modeling = false;
    return c;
  }
  if (variant == "no_linear_skip") {
    c.arch.linear_skip = false;
    return c;
  }
  if (variant == "oms") {
    // The flat comparison structure with monotone widths and no long skips.
    c.arch.structure = Structure::kOms;
    c.arch.long_range_skip = false;
    c.arch.kappas = {4, 8, 16};
    c.arch.n = 3;
    return c;
  }
  if (variant == "mfcc50") {
    c.frontend = "mfcc50";
    c.arch.in_dim = 50;
    return c;
  }
  if (variant == "mel100") {
    c.frontend = "mel100";
    c.arch.in_dim = 100;
    return c;
  }
  throw ValueError("unknown ablation variant '" + variant + "'");
}

}  // namespace pipmn
