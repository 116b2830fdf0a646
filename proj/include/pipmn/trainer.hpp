#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipmn/checkpoint.hpp"
#include "pipmn/dataset.hpp"
#include "pipmn/losses.hpp"
#include "pipmn/metrics.hpp"
#include "pipmn/model.hpp"
#include "pipmn/optimizer.hpp"

namespace pipmn {

struct TrainOptions {
  int epochs = 3500;
  int batch_size = 128;
  std::uint64_t seed = 42;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double threshold = 0.5;  // multilabel decision threshold
  int patience = 20;
  double min_delta = 1e-4;
  bool multilabel = false;
  std::string config_hash;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0, train_accuracy = 0.0;
  double val_loss = 0.0, val_accuracy = 0.0;
};

struct RunLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  bool stop_rule_fired = false;
  double wall_clock_s = 0.0;  // printed, never serialized: log files stay byte-reproducible
};

// Line-delimited JSON: a header line, one line per epoch, a summary line.
inline void write_runlog(const std::string& path, const RunLog& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write run log: " + path);
  f << nlohmann::json{{"schema_version", 1},
                      {"type", "header"},
                      {"seed", log.seed},
                      {"config_hash", log.config_hash}}
           .dump()
    << '\n';
  for (const EpochRecord& e : log.epochs)
    f << nlohmann::json{{"type", "epoch"},
                        {"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy}}
             .dump()
      << '\n';
  f << nlohmann::json{{"type", "summary"},
                      {"epochs", log.epochs.size()},
                      {"best_epoch", log.best_epoch},
                      {"best_val_accuracy", log.best_val_accuracy},
                      {"stop_rule_fired", log.stop_rule_fired}}
           .dump()
    << '\n';
}

// Stacks the selected segments into a [B, frames, dims] tensor.
template <typename T>
Tensor<T> assemble_batch(const LoadedSplit& split, const std::vector<int>& indices, int frames,
                         int dims) {
  Tensor<T> x({static_cast<int>(indices.size()), frames, dims});
  T* out = x.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const FeatureMatrix& f = split.features[static_cast<std::size_t>(indices[b])];
    for (std::size_t i = 0; i < f.values.size(); ++i)
      out[b * f.values.size() + i] = static_cast<T>(f.values[i]);
  }
  return x;
}

inline std::vector<int> single_label_targets(const LoadedSplit& split,
                                             const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) {
    const auto& ids = split.label_ids[static_cast<std::size_t>(i)];
    if (ids.size() != 1)
      throw ValueError("multiclass training needs exactly one label per clip, got " +
                       std::to_string(ids.size()));
    out.push_back(ids.front());
  }
  return out;
}

template <typename T>
Tensor<T> multilabel_targets(const LoadedSplit& split, const std::vector<int>& indices,
                             int num_classes) {
  Tensor<T> t({static_cast<int>(indices.size()), num_classes});
  for (std::size_t b = 0; b < indices.size(); ++b)
    for (int id : split.label_ids[static_cast<std::size_t>(indices[b])])
      t.data()[b * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(id)] = T(1);
  return t;
}

// Per-coefficient mean/stddev over the training split (population stddev,
// floored at 1 for constant coefficients).
template <typename T>
void fit_feature_stats(PipmnModel<T>& model, const LoadedSplit& train) {
  const int dims = model.config().in_dim;
  std::vector<double> sum(static_cast<std::size_t>(dims), 0.0);
  std::vector<double> sumsq(static_cast<std::size_t>(dims), 0.0);
  long rows = 0;
  for (const FeatureMatrix& f : train.features) {
    if (f.cols != dims) throw ShapeError("feature dims do not match the model's in_dim");
    for (int r = 0; r < f.rows; ++r)
      for (int c = 0; c < dims; ++c) {
        const double v = f.at(r, c);
        sum[static_cast<std::size_t>(c)] += v;
        sumsq[static_cast<std::size_t>(c)] += v * v;
      }
    rows += f.rows;
  }
  std::vector<T> mean(static_cast<std::size_t>(dims)), stddev(static_cast<std::size_t>(dims));
  for (int c = 0; c < dims; ++c) {
    const double mu = sum[static_cast<std::size_t>(c)] / static_cast<double>(rows);
    const double var = sumsq[static_cast<std::size_t>(c)] / static_cast<double>(rows) - mu * mu;
    const double sd = std::sqrt(std::max(var, 0.0));
    mean[static_cast<std::size_t>(c)] = static_cast<T>(mu);
    stddev[static_cast<std::size_t>(c)] = static_cast<T>(sd > 1e-8 ? sd : 1.0);
  }
  model.set_feature_stats(std::move(mean), std::move(stddev));
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // argmax accuracy, or exact-set match for multilabel
  std::vector<int> predictions;                // multiclass argmax
  std::vector<std::vector<int>> predictions01; // multilabel thresholded sets
  std::vector<int> truths;
  std::vector<std::vector<int>> truths01;
};

// Evaluation always batches by this fixed size so the accumulated loss is
// bit-reproducible no matter what batch size training used.
inline constexpr int kEvalBatchSize = 128;

// Ordered forward pass over one split; no gradients recorded.
template <typename T>
EvalResult eval_pass(const PipmnModel<T>& model, const LoadedSplit& split, int frames, int dims,
                     const TrainOptions& opt) {
  if (split.features.empty()) throw ValueError("evaluation over an empty split");
  EvalResult res;
  const int classes = model.config().num_classes;
  double loss_sum = 0.0;
  long correct = 0;
  std::vector<int> indices;
  for (long start = 0; start < static_cast<long>(split.features.size());
       start += kEvalBatchSize) {
    const long end =
        std::min<long>(start + kEvalBatchSize, static_cast<long>(split.features.size()));
    indices.resize(static_cast<std::size_t>(end - start));
    std::iota(indices.begin(), indices.end(), static_cast<int>(start));
    Tensor<T> x = assemble_batch<T>(split, indices, frames, dims);
    Tensor<T> logits = model.forward(nullptr, x);
    if (opt.multilabel) {
      Tensor<T> targets = multilabel_targets<T>(split, indices, classes);
      loss_sum += static_cast<double>(bce_multilabel<T>(nullptr, logits, targets).item()) *
                  static_cast<double>(indices.size());
      for (std::size_t b = 0; b < indices.size(); ++b) {
        std::vector<int> pred(static_cast<std::size_t>(classes), 0);
        std::vector<int> truth(static_cast<std::size_t>(classes), 0);
        bool exact = true;
        for (int c = 0; c < classes; ++c) {
          const double p =
              sigmoid(static_cast<double>(logits.data()[b * static_cast<std::size_t>(classes) +
                                                        static_cast<std::size_t>(c)]));
          pred[static_cast<std::size_t>(c)] = p >= opt.threshold ? 1 : 0;
          truth[static_cast<std::size_t>(c)] =
              targets.data()[b * static_cast<std::size_t>(classes) + static_cast<std::size_t>(c)] >
                      T(0.5)
                  ? 1
                  : 0;
          exact = exact && pred[static_cast<std::size_t>(c)] == truth[static_cast<std::size_t>(c)];
        }
        if (exact) ++correct;
        res.predictions01.push_back(std::move(pred));
        res.truths01.push_back(std::move(truth));
      }
    } else {
      const std::vector<int> targets = single_label_targets(split, indices);
      loss_sum +=
          static_cast<double>(
              cross_entropy_smoothed<T>(nullptr, logits, targets, opt.label_smoothing).item()) *
          static_cast<double>(indices.size());
      const std::vector<int> pred = argmax_rows(logits);
      for (std::size_t b = 0; b < pred.size(); ++b) {
        if (pred[b] == targets[b]) ++correct;
        res.predictions.push_back(pred[b]);
        res.truths.push_back(targets[b]);
      }
    }
  }
  res.loss = loss_sum / static_cast<double>(split.features.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(split.features.size());
  return res;
}

// Full training loop. Runs at most opt.epochs epochs with seeded per-epoch
// shuffles; stops early once training accuracy hits 100% and the train loss
// has not improved by more than min_delta for `patience` consecutive epochs.
// The model is left at the weights of the best validation-accuracy epoch.
template <typename T>
RunLog train_model(PipmnModel<T>& model, const LoadedDataset& data, const TrainOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedSplit& train = data.of(Split::kTrain);
  const LoadedSplit& val = data.of(Split::kVal);
  if (train.features.empty()) throw ValueError("training split is empty");

  fit_feature_stats(model, train);

  typename AdamW<T>::Options adam;
  adam.lr = opt.lr;
  adam.weight_decay = opt.weight_decay;
  adam.beta1 = opt.beta1;
  adam.beta2 = opt.beta2;
  adam.eps = opt.adam_eps;
  AdamW<T> optimizer(model.parameters(), adam);

  const int classes = model.config().num_classes;
  const double loss_floor =
      opt.multilabel ? 0.0 : smoothed_ce_floor(opt.label_smoothing, classes);

  RunLog log;
  log.seed = opt.seed;
  log.config_hash = opt.config_hash;

  BatchStream stream(train, opt.batch_size, opt.seed);
  std::vector<std::vector<T>> best_params;
  double best_train_loss = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;

  std::vector<int> indices;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    stream.start_epoch(epoch);
    double loss_sum = 0.0;
    long correct = 0;
    while (stream.next(indices)) {
      model.zero_grads();
      Tape<T> tape;
      Tensor<T> x = assemble_batch<T>(train, indices, data.frames, data.dims);
      Tensor<T> logits = model.forward(&tape, x);
      Tensor<T> loss;
      if (opt.multilabel) {
        Tensor<T> targets = multilabel_targets<T>(train, indices, classes);
        loss = bce_multilabel(&tape, logits, targets);
        for (std::size_t b = 0; b < indices.size(); ++b) {
          bool exact = true;
          for (int c = 0; c < classes; ++c) {
            const std::size_t at = b * static_cast<std::size_t>(classes) + static_cast<std::size_t>(c);
            const bool on = sigmoid(static_cast<double>(logits.data()[at])) >= opt.threshold;
            if (on != (targets.data()[at] > T(0.5))) exact = false;
          }
          if (exact) ++correct;
        }
      } else {
        const std::vector<int> targets = single_label_targets(train, indices);
        loss = cross_entropy_smoothed(&tape, logits, targets, opt.label_smoothing);
        const std::vector<int> pred = argmax_rows(logits);
        for (std::size_t b = 0; b < pred.size(); ++b)
          if (pred[b] == targets[b]) ++correct;
      }
      const double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      if (loss_val < loss_floor - 1e-9)
        throw NumericError("loss " + std::to_string(loss_val) +
                           " fell below the label-smoothing floor " + std::to_string(loss_floor));
      loss_sum += loss_val * static_cast<double>(indices.size());
      tape.backward(loss);
      optimizer.step();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.features.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.features.size());

    if (!val.features.empty()) {
      const EvalResult v = eval_pass(model, val, data.frames, data.dims, opt);
      rec.val_loss = v.loss;
      rec.val_accuracy = v.accuracy;
      if (log.best_epoch < 0 || v.accuracy > log.best_val_accuracy) {
        log.best_epoch = epoch;
        log.best_val_accuracy = v.accuracy;
        best_params.clear();
        for (const Parameter<T>* p : model.parameters()) best_params.push_back(p->value.values());
      }
    }
    log.epochs.push_back(rec);

    if (best_train_loss - rec.train_loss > opt.min_delta) {
      best_train_loss = rec.train_loss;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
    }
    if (rec.train_accuracy >= 1.0 && epochs_without_improvement >= opt.patience) {
      log.stop_rule_fired = true;
      break;
    }
  }

  if (!best_params.empty()) {
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.values() = best_params[i];
  }
  log.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

}  // namespace pipmn
