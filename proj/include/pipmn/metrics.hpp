#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace pipmn {

struct ClassStats {
  long support = 0, tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MulticlassReport {
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][pred]
  std::vector<ClassStats> per_class;

  nlohmann::json to_json(const std::vector<std::string>& labels = {}) const;
};

// Argmax predictions against integer truths. 0/0 ratios are defined as 0;
// macro metrics are unweighted class means, micro from pooled counts. For
// single-label data micro-F1 is identical to accuracy, which is asserted.
MulticlassReport multiclass_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                    int num_classes);

struct LabelStats {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0, f1 = 0.0;
};

struct MultilabelReport {
  // These definitions are this artifact's choices (the source tables never
  // define them): EA is the per-example Jaccard overlap (1 when both label
  // sets are empty), LMaA the unweighted mean of per-label accuracies, LMiF1
  // the F1 over pooled per-label counts.
  double example_accuracy = 0.0;
  double label_macro_accuracy = 0.0;
  double label_micro_f1 = 0.0;
  std::vector<LabelStats> per_label;

  nlohmann::json to_json(const std::vector<std::string>& labels = {}) const;
};

MultilabelReport multilabel_metrics(const std::vector<std::vector<int>>& truth01,
                                    const std::vector<std::vector<int>>& pred01);

}  // namespace pipmn
