#include "pipmn/metrics.hpp"

#include "pipmn/error.hpp"

namespace pipmn {

namespace {

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

}  // namespace

MulticlassReport multiclass_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                    int num_classes) {
  if (truth.size() != pred.size())
    throw ValueError("metrics: truth and prediction counts differ");
  if (truth.empty()) throw ValueError("metrics over an empty split");

  MulticlassReport r;
  r.confusion.assign(static_cast<std::size_t>(num_classes),
                     std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw ValueError("metrics: class index out of range");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    if (t == p) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  long pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  r.per_class.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    ClassStats& s = r.per_class[static_cast<std::size_t>(c)];
    for (int j = 0; j < num_classes; ++j) {
      const long v = r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      s.support += v;
      if (j == c)
        s.tp += v;
      else
        s.fn += v;
      const long w = r.confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      if (j != c) s.fp += w;
    }
    s.precision = ratio(s.tp, s.tp + s.fp);
    s.recall = ratio(s.tp, s.tp + s.fn);
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    r.macro_precision += s.precision;
    r.macro_recall += s.recall;
    r.macro_f1 += s.f1;
    pooled_tp += s.tp;
    pooled_fp += s.fp;
    pooled_fn += s.fn;
  }
  r.macro_precision /= num_classes;
  r.macro_recall /= num_classes;
  r.macro_f1 /= num_classes;
  r.micro_f1 = ratio(2 * pooled_tp, 2 * pooled_tp + pooled_fp + pooled_fn);

  // Single-label pooling makes every miss one FP and one FN, so micro-F1
  // collapses to accuracy; anything else indicates a counting bug.
  if (r.micro_f1 != r.accuracy)
    throw Error("metrics invariant violated: micro-F1 != accuracy on single-label data");
  return r;
}

nlohmann::json MulticlassReport::to_json(const std::vector<std::string>& labels) const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const ClassStats& s = per_class[c];
    per.push_back({{"label", c < labels.size() ? labels[c] : std::to_string(c)},
                   {"support", s.support},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1}});
  }
  return nlohmann::json{{"schema_version", 1},
                        {"task", "multiclass"},
                        {"accuracy", accuracy},
                        {"macro_precision", macro_precision},
                        {"macro_recall", macro_recall},
                        {"macro_f1", macro_f1},
                        {"micro_f1", micro_f1},
                        {"confusion", confusion},
                        {"per_class", per}};
}

MultilabelReport multilabel_metrics(const std::vector<std::vector<int>>& truth01,
                                    const std::vector<std::vector<int>>& pred01) {
  if (truth01.size() != pred01.size() || truth01.empty())
    throw ValueError("multilabel metrics need matching non-empty example sets");
  const std::size_t labels = truth01.front().size();

  MultilabelReport r;
  r.per_label.resize(labels);
  double jaccard_sum = 0.0;
  for (std::size_t i = 0; i < truth01.size(); ++i) {
    if (truth01[i].size() != labels || pred01[i].size() != labels)
      throw ValueError("multilabel metrics: ragged label vectors");
    long inter = 0, uni = 0;
    for (std::size_t l = 0; l < labels; ++l) {
      const int t = truth01[i][l], p = pred01[i][l];
      if (t != 0 && t != 1) throw ValueError("multilabel truth must be 0/1");
      if (p != 0 && p != 1) throw ValueError("multilabel predictions must be 0/1");
      if (t == 1 && p == 1) ++inter;
      if (t == 1 || p == 1) ++uni;
      LabelStats& s = r.per_label[l];
      if (t == 1 && p == 1) ++s.tp;
      if (t == 0 && p == 1) ++s.fp;
      if (t == 1 && p == 0) ++s.fn;
      if (t == 0 && p == 0) ++s.tn;
    }
    jaccard_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;  // both empty: exact match
  }
  r.example_accuracy = jaccard_sum / static_cast<double>(truth01.size());

  long pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  for (LabelStats& s : r.per_label) {
    s.accuracy = ratio(s.tp + s.tn, s.tp + s.tn + s.fp + s.fn);
    s.f1 = ratio(2 * s.tp, 2 * s.tp + s.fp + s.fn);
    r.label_macro_accuracy += s.accuracy;
    pooled_tp += s.tp;
    pooled_fp += s.fp;
    pooled_fn += s.fn;
  }
  r.label_macro_accuracy /= static_cast<double>(labels);
  r.label_micro_f1 = ratio(2 * pooled_tp, 2 * pooled_tp + pooled_fp + pooled_fn);
  return r;
}

nlohmann::json MultilabelReport::to_json(const std::vector<std::string>& labels) const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t l = 0; l < per_label.size(); ++l) {
    const LabelStats& s = per_label[l];
    per.push_back({{"label", l < labels.size() ? labels[l] : std::to_string(l)},
                   {"tp", s.tp},
                   {"fp", s.fp},
                   {"fn", s.fn},
                   {"tn", s.tn},
                   {"accuracy", s.accuracy},
                   {"f1", s.f1}});
  }
  return nlohmann::json{
      {"schema_version", 1},
      {"task", "multilabel"},
      {"metric_definitions",
       "EA = mean per-example Jaccard overlap (1 when both sets empty); "
       "LMaA = unweighted mean of per-label accuracies; "
       "LMiF1 = F1 over pooled per-label counts"},
      {"example_accuracy", example_accuracy},
      {"label_macro_accuracy", label_macro_accuracy},
      {"label_micro_f1", label_micro_f1},
      {"per_label", per}};
}

}  // namespace pipmn
