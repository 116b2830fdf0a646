#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pipmn/checkpoint.hpp"
#include "pipmn/dataset.hpp"
#include "pipmn/gradcheck_suite.hpp"
#include "pipmn/losses.hpp"
#include "pipmn/manifest.hpp"
#include "pipmn/metrics.hpp"
#include "pipmn/model.hpp"
#include "pipmn/runconfig.hpp"
#include "pipmn/trainer.hpp"
#include "pipmn/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_cache_dir() {
  const char* v = std::getenv("PIPMN_CACHE_DIR");
  return v ? std::string(v) : std::string();
}

struct Overrides {
  std::string manifest, cache_dir, frontend, precision;
  std::int64_t seed = -1;
  int epochs = -1, batch_size = -1;
};

pipmn::RunConfig load_config(const std::string& path, const Overrides& ov) {
  pipmn::RunConfig cfg = pipmn::RunConfig::from_file(path);
  if (!ov.manifest.empty()) cfg.manifest = ov.manifest;
  if (!ov.cache_dir.empty()) cfg.cache_dir = ov.cache_dir;
  if (!ov.frontend.empty()) cfg.frontend = ov.frontend;
  if (!ov.precision.empty()) cfg.precision = ov.precision;
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.epochs >= 0) cfg.epochs = ov.epochs;
  if (ov.batch_size >= 1) cfg.batch_size = ov.batch_size;
  if (cfg.cache_dir.empty()) cfg.cache_dir = env_cache_dir();
  cfg.validate();
  return cfg;
}

void print_multiclass_table(const pipmn::MulticlassReport& r) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "  accuracy        " << r.accuracy << "\n"
            << "  macro precision " << r.macro_precision << "\n"
            << "  macro f1        " << r.macro_f1 << "\n"
            << "  micro f1        " << r.micro_f1 << "\n";
  std::cout.unsetf(std::ios::fixed);
}

void print_multilabel_table(const pipmn::MultilabelReport& r) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "  example accuracy (Jaccard) " << r.example_accuracy << "\n"
            << "  label macro accuracy       " << r.label_macro_accuracy << "\n"
            << "  label micro f1             " << r.label_micro_f1 << "\n";
  std::cout << "  (EA = per-example Jaccard; LMaA = mean per-label accuracy; "
               "LMiF1 = pooled F1)\n";
  std::cout.unsetf(std::ios::fixed);
}

json metrics_json(const pipmn::EvalResult& res, bool multilabel,
                  const std::vector<std::string>& vocab, int num_classes) {
  json out;
  if (multilabel) {
    const pipmn::MultilabelReport r = pipmn::multilabel_metrics(res.truths01, res.predictions01);
    out = r.to_json(vocab);
  } else {
    const pipmn::MulticlassReport r =
        pipmn::multiclass_metrics(res.truths, res.predictions, num_classes);
    out = r.to_json(vocab);
  }
  out["loss"] = res.loss;
  return out;
}

// Shared by train and ablate: fit, persist and report one configuration.
template <typename T>
json run_training(const pipmn::RunConfig& cfg, const std::string& out_dir, bool quiet) {
  const pipmn::Frontend fe = pipmn::frontend_from_name(cfg.frontend);
  const pipmn::FeatureIndex index = pipmn::load_index(cfg.cache_dir, fe);
  const pipmn::LoadedDataset data = pipmn::load_dataset(index);
  if (data.dims != cfg.arch.in_dim)
    throw pipmn::ValueError("cache features have " + std::to_string(data.dims) +
                            " dims but config in_dim is " + std::to_string(cfg.arch.in_dim));
  if (cfg.task == "multiclass" &&
      static_cast<int>(data.vocabulary.size()) != cfg.arch.num_classes)
    throw pipmn::ValueError("cache has " + std::to_string(data.vocabulary.size()) +
                            " classes but config num_classes is " +
                            std::to_string(cfg.arch.num_classes));

  pipmn::PipmnModel<T> model(cfg.arch, cfg.seed);
  model.frontend = cfg.frontend;
  model.task = cfg.task;
  model.vocabulary = data.vocabulary;

  const pipmn::TrainOptions opt = cfg.train_options();
  const pipmn::RunLog log = pipmn::train_model(model, data, opt);

  fs::create_directories(out_dir);
  pipmn::save_checkpoint(model, out_dir + "/checkpoint.pipc");
  pipmn::write_runlog(out_dir + "/runlog.jsonl", log);

  const pipmn::LoadedSplit& val = data.of(pipmn::Split::kVal);
  json metrics{{"schema_version", 1}, {"config", cfg.to_json()}, {"split", "val"}};
  if (!quiet) {
    std::cout << "trained " << log.epochs.size() << " epochs (stop rule "
              << (log.stop_rule_fired ? "fired" : "not fired") << ", wall clock "
              << std::setprecision(3) << log.wall_clock_s << " s)\n";
    if (!log.epochs.empty()) {
      const auto& last = log.epochs.back();
      std::cout << "final train loss " << last.train_loss << ", train accuracy "
                << last.train_accuracy << "\n";
    }
  }
  if (!val.features.empty()) {
    const pipmn::EvalResult res = pipmn::eval_pass(model, val, data.frames, data.dims, opt);
    metrics["metrics"] = metrics_json(res, opt.multilabel, data.vocabulary,
                                      cfg.arch.num_classes);
    if (!quiet) {
      std::cout << "validation metrics (best epoch " << log.best_epoch << "):\n";
      if (opt.multilabel)
        print_multilabel_table(pipmn::multilabel_metrics(res.truths01, res.predictions01));
      else
        print_multiclass_table(
            pipmn::multiclass_metrics(res.truths, res.predictions, cfg.arch.num_classes));
    }
  }
  {
    std::ofstream mf(out_dir + "/metrics.json");
    mf << metrics.dump(2) << '\n';
  }
  return metrics;
}

int cmd_features(const std::string& manifest_path, std::string cache_dir,
                 const std::string& frontend, std::uint64_t seed) {
  if (cache_dir.empty()) cache_dir = env_cache_dir();
  if (cache_dir.empty()) {
    std::cerr << "error: no --cache-dir given and PIPMN_CACHE_DIR is unset\n";
    return 1;
  }
  const pipmn::Manifest m = pipmn::read_manifest(manifest_path);
  pipmn::SplitAssignment split;
  if (m.rows.size() >= 10) {
    split = pipmn::make_split(m, seed);
  } else {
    // too few clips for an 80/10/10 split; cache everything as train
    split.seed = seed;
    for (const auto& row : m.rows) split.by_clip.emplace(row.clip_id, pipmn::Split::kTrain);
    std::cout << "note: " << m.rows.size() << " clips (<10), all assigned to train\n";
  }
  const pipmn::MaterializeStats stats =
      pipmn::materialize_features(m, split, cache_dir, pipmn::frontend_from_name(frontend));
  std::cout << stats.extracted << " extracted, " << stats.cached << " cached, " << stats.failed
            << " failed\n";
  for (const auto& [file, reason] : stats.failures)
    std::cerr << "failed: " << file << ": " << reason << "\n";
  return stats.failed == 0 ? 0 : 2;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const Overrides& ov) {
  const pipmn::RunConfig cfg = load_config(config_path, ov);
  if (cfg.precision == "f64")
    run_training<double>(cfg, out_dir, false);
  else
    run_training<float>(cfg, out_dir, false);
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& split_name,
             std::string cache_dir) {
  const pipmn::PipmnModel<float> model = pipmn::load_checkpoint<float>(checkpoint_path);
  if (cache_dir.empty()) cache_dir = env_cache_dir();
  const pipmn::FeatureIndex index =
      pipmn::load_index(cache_dir, pipmn::frontend_from_name(model.frontend));
  const pipmn::LoadedDataset data = pipmn::load_dataset(index);
  const pipmn::LoadedSplit& split = data.of(pipmn::split_from_name(split_name));
  if (split.features.empty()) {
    std::cerr << "error: split '" << split_name << "' is empty\n";
    return 1;
  }
  pipmn::TrainOptions opt;
  opt.multilabel = model.task == "multilabel";
  const pipmn::EvalResult res = pipmn::eval_pass(model, split, data.frames, data.dims, opt);
  const json out =
      metrics_json(res, opt.multilabel, data.vocabulary, model.config().num_classes);
  std::cout << out.dump(2) << "\n";
  if (opt.multilabel)
    print_multilabel_table(pipmn::multilabel_metrics(res.truths01, res.predictions01));
  else
    print_multiclass_table(
        pipmn::multiclass_metrics(res.truths, res.predictions, model.config().num_classes));
  return 0;
}

int cmd_params(const std::string& config_path, const Overrides& ov) {
  const pipmn::RunConfig cfg = load_config(config_path, ov);
  const pipmn::PipmnModel<float> model(cfg.arch, cfg.seed);
  json breakdown = json::array();
  std::cout << "parameter breakdown:\n";
  for (const auto& [name, count] : model.param_breakdown()) {
    std::cout << "  " << std::left << std::setw(20) << name << std::right << std::setw(12)
              << count << "\n";
    breakdown.push_back({{"component", name}, {"params", count}});
  }
  const long total = model.param_count();
  std::cout << "  " << std::left << std::setw(20) << "total" << std::right << std::setw(12)
            << total << "\n";
  std::cout << json{{"total_params", total}, {"breakdown", breakdown}}.dump() << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir, const Overrides& ov) {
  const pipmn::RunConfig base = load_config(config_path, ov);
  if (base.task != "multiclass")
    throw pipmn::ValueError("the ablation grid is defined for the multiclass task");
  if (base.manifest.empty())
    throw pipmn::ValueError("config field 'manifest' is required for the ablation sweep");
  std::vector<std::string> variants =
      base.variants.empty() ? pipmn::ablation_variant_names() : base.variants;

  const pipmn::Manifest m = pipmn::read_manifest(base.manifest);
  const pipmn::SplitAssignment split = pipmn::make_split(m, base.seed);

  fs::create_directories(out_dir);
  std::ofstream csv(out_dir + "/ablation.csv", std::ios::trunc);
  csv << "variant,accuracy,macro_precision,macro_f1,micro_f1,params\n";
  int failures = 0;
  for (const std::string& name : variants) {
    try {
      pipmn::RunConfig cfg = pipmn::apply_variant(base, name);
      const pipmn::Frontend fe = pipmn::frontend_from_name(cfg.frontend);
      // Each frontend keeps its own cache; build it on first use.
      bool have_index = false;
      try {
        pipmn::load_index(cfg.cache_dir, fe);
        have_index = true;
      } catch (const pipmn::IoError&) {
      }
      if (!have_index) {
        const pipmn::MaterializeStats st =
            pipmn::materialize_features(m, split, cfg.cache_dir, fe);
        if (st.failed > 0)
          throw pipmn::IoError("feature extraction failed for " + std::to_string(st.failed) +
                               " clips");
      }
      const std::string vdir = out_dir + "/" + name;
      const json metrics = run_training<float>(cfg, vdir, true);

      const pipmn::PipmnModel<float> model(cfg.arch, cfg.seed);
      const json& mm = metrics.at("metrics");
      csv << name << ',' << mm.at("accuracy").get<double>() << ','
          << mm.at("macro_precision").get<double>() << ',' << mm.at("macro_f1").get<double>()
          << ',' << mm.at("micro_f1").get<double>() << ',' << model.param_count() << "\n";
      csv.flush();
      std::cout << "variant " << name << ": ok\n";
    } catch (const std::exception& e) {
      ++failures;
      csv << name << ",,,,," << "\n";
      csv.flush();
      std::cerr << "variant " << name << ": failed: " << e.what() << "\n";
    }
  }
  std::cout << (static_cast<int>(variants.size()) - failures) << "/" << variants.size()
            << " variants succeeded; results in " << out_dir << "/ablation.csv\n";
  return failures == 0 ? 0 : 2;
}

int cmd_gradcheck(const std::string& size, std::uint64_t seed) {
  if (size != "tiny") throw pipmn::ValueError("only --size tiny is supported");
  const auto results = pipmn::run_gradcheck_suite(seed);
  std::cout << std::scientific << std::setprecision(3);
  for (const auto& r : results) {
    std::cout << std::left << std::setw(24) << r.op << " max rel err " << r.report.max_rel_err
              << "  (worst: " << r.report.worst.param << "[" << r.report.worst.index
              << "] analytic " << r.report.worst.analytic << " vs numeric "
              << r.report.worst.numeric << ")\n";
  }
  const double worst = pipmn::suite_max_rel_err(results);
  const bool pass = worst < pipmn::kGradCheckTolerance;
  std::cout << "max relative error " << worst << " over " << results.size()
            << " checks: " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 1;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& wav_path) {
  const pipmn::PipmnModel<float> model = pipmn::load_checkpoint<float>(checkpoint_path);
  pipmn::Waveform w = pipmn::load_wav(wav_path);
  w = pipmn::resample(w, pipmn::kPipelineSampleRate);
  const std::vector<pipmn::Waveform> segments = pipmn::segment_clip(w, pipmn::kSegmentSeconds);
  const pipmn::Frontend fe = pipmn::frontend_from_name(model.frontend);
  const int classes = model.config().num_classes;

  json out{{"file", wav_path}, {"segments", json::array()}};
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const pipmn::FeatureMatrix feat = pipmn::extract_features(segments[s], fe);
    pipmn::Tensor<float> x({1, feat.rows, feat.cols},
                           std::vector<float>(feat.values.begin(), feat.values.end()));
    const pipmn::Tensor<float> logits = model.forward(nullptr, x);
    json seg{{"index", s}};
    if (model.task == "multilabel") {
      json probs = json::object();
      json labels = json::array();
      for (int c = 0; c < classes; ++c) {
        const double p = pipmn::sigmoid(static_cast<double>(logits.data()[c]));
        const std::string name =
            c < static_cast<int>(model.vocabulary.size()) ? model.vocabulary[c]
                                                          : std::to_string(c);
        probs[name] = p;
        if (p >= 0.5) labels.push_back(name);
      }
      seg["probabilities"] = probs;
      seg["labels"] = labels;
    } else {
      const std::vector<double> probs = pipmn::softmax_rows(logits);
      json pj = json::object();
      int best = 0;
      for (int c = 0; c < classes; ++c) {
        const std::string name =
            c < static_cast<int>(model.vocabulary.size()) ? model.vocabulary[c]
                                                          : std::to_string(c);
        pj[name] = probs[static_cast<std::size_t>(c)];
        if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
      }
      seg["probabilities"] = pj;
      seg["label"] = best < static_cast<int>(model.vocabulary.size()) ? model.vocabulary[best]
                                                                      : std::to_string(best);
    }
    out["segments"].push_back(seg);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIPMN audio classification pipeline"};
  app.require_subcommand(1);

  std::string manifest, cache_dir, frontend = "stack5", config_path, out_dir, checkpoint_path,
              split_name = "val", wav_path, size = "tiny";
  std::uint64_t seed = 42;
  Overrides ov;

  auto* features = app.add_subcommand("features", "extract and cache cepstral features");
  features->add_option("--manifest", manifest, "manifest CSV")->required();
  features->add_option("--cache-dir", cache_dir, "cache directory (default $PIPMN_CACHE_DIR)");
  features->add_option("--frontend", frontend, "stack5|mfcc50|mel100");
  features->add_option("--seed", seed, "split seed");

  auto* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", ov.seed, "override seed");
  train->add_option("--epochs", ov.epochs, "override epochs");
  train->add_option("--batch-size", ov.batch_size, "override batch size");
  train->add_option("--cache-dir", ov.cache_dir, "override cache dir");
  train->add_option("--manifest", ov.manifest, "override manifest");
  train->add_option("--frontend", ov.frontend, "override frontend");
  train->add_option("--precision", ov.precision, "f32|f64");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--split", split_name, "train|val|test");
  eval->add_option("--cache-dir", cache_dir, "cache directory (default $PIPMN_CACHE_DIR)");

  auto* params = app.add_subcommand("params", "print the parameter budget");
  params->add_option("--config", config_path, "run config JSON")->required();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation grid");
  ablate->add_option("--config", config_path, "run config JSON")->required();
  ablate->add_option("--out-dir", out_dir, "output directory")->required();
  ablate->add_option("--seed", ov.seed, "override seed");
  ablate->add_option("--epochs", ov.epochs, "override epochs");
  ablate->add_option("--batch-size", ov.batch_size, "override batch size");
  ablate->add_option("--cache-dir", ov.cache_dir, "override cache dir");
  ablate->add_option("--manifest", ov.manifest, "override manifest");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--size", size, "suite size (tiny)");
  gradcheck->add_option("--seed", seed, "randomization seed");

  auto* predict = app.add_subcommand("predict", "per-segment predictions for a WAV file");
  predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  predict->add_option("--wav", wav_path, "audio file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (features->parsed()) return cmd_features(manifest, cache_dir, frontend, seed);
    if (train->parsed()) return cmd_train(config_path, out_dir, ov);
    if (eval->parsed()) return cmd_eval(checkpoint_path, split_name, cache_dir);
    if (params->parsed()) return cmd_params(config_path, ov);
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir, ov);
    if (gradcheck->parsed()) return cmd_gradcheck(size, seed);
    if (predict->parsed()) return cmd_predict(checkpoint_path, wav_path);
  } catch (const pipmn::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pipmn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return (eval->parsed() || predict->parsed()) ? 2 : 1;
  } catch (const pipmn::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return (eval->parsed() || predict->parsed()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
