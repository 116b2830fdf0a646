#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "pipmn/ops.hpp"
#include "pipmn/tensor.hpp"

namespace pipmn {

// Label-smoothed softmax cross entropy, mean over the batch.
// Target distribution q_i = (1 - eps) * 1[i == y] + eps / C.
template <typename T>
Tensor<T> cross_entropy_smoothed(Tape<T>* tape, const Tensor<T>& logits,
                                 const std::vector<int>& targets, double eps = 0.1) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy_smoothed expects logits rank 2, got " +
                     shape_str(logits.shape()));
  const int batch = logits.extent(0), classes = logits.extent(1);
  if (classes < 2) throw ValueError("cross_entropy_smoothed needs at least 2 classes");
  if (static_cast<int>(targets.size()) != batch)
    throw ShapeError("cross_entropy_smoothed: " + std::to_string(targets.size()) +
                     " targets for batch " + std::to_string(batch));
  for (int t : targets)
    if (t < 0 || t >= classes)
      throw ValueError("target " + std::to_string(t) + " out of range [0, " +
                       std::to_string(classes) + ")");
  if (eps < 0.0 || eps >= 1.0) throw ValueError("label smoothing must be in [0, 1)");

  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch) * classes);
  double total = 0.0;
  const double off = eps / classes;
  const double on = 1.0 - eps + off;
  {
    const T* zp = logits.data();
    for (int b = 0; b < batch; ++b) {
      const T* zr = zp + static_cast<long>(b) * classes;
      double zmax = static_cast<double>(zr[0]);
      for (int c = 1; c < classes; ++c) zmax = std::max(zmax, static_cast<double>(zr[c]));
      double denom = 0.0;
      for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(zr[c]) - zmax);
      const double lse = zmax + std::log(denom);
      double row_loss = 0.0;
      for (int c = 0; c < classes; ++c) {
        const double logp = static_cast<double>(zr[c]) - lse;
        (*probs)[static_cast<std::size_t>(b) * classes + c] = std::exp(logp);
        row_loss -= (c == targets[b] ? on : off) * logp;
      }
      total += row_loss;
    }
  }
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(total / batch),
                                     ops::detail::track(tape, {logits.requires_grad()}));
  ops::detail::check_finite(loss, "cross_entropy_smoothed");
  if (loss.requires_grad()) {
    tape->record([logits, loss, probs, targets, batch, classes, on, off]() mutable {
      const T g = loss.grad()[0];
      T* gz = logits.grad();
      const double inv_b = 1.0 / batch;
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < classes; ++c) {
          const double q = (c == targets[b] ? on : off);
          const double p = (*probs)[static_cast<std::size_t>(b) * classes + c];
          gz[static_cast<long>(b) * classes + c] += g * static_cast<T>((p - q) * inv_b);
        }
    });
  }
  return loss;
}

// Smallest value the smoothed cross entropy can take (softmax equal to the
// smoothed target distribution); the training loop asserts losses never fall
// below it.
inline double smoothed_ce_floor(double eps, int classes) {
  const double off = eps / classes;
  const double on = 1.0 - eps + off;
  double h = -on * std::log(on);
  if (off > 0.0) h -= (classes - 1) * off * std::log(off);
  return h;
}

// Mean elementwise sigmoid binary cross entropy over a {0,1} target matrix,
// computed in the numerically stable max(z,0) - z*t + log(1+exp(-|z|)) form.
template <typename T>
Tensor<T> bce_multilabel(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || targets.shape() != logits.shape())
    throw ShapeError("bce_multilabel expects matching rank-2 logits/targets; got " +
                     shape_str(logits.shape()) + " vs " + shape_str(targets.shape()));
  const long n = logits.size();
  for (long i = 0; i < n; ++i) {
    const T t = targets.data()[i];
    if (t != T(0) && t != T(1))
      throw ValueError("bce_multilabel targets must be exactly 0 or 1");
  }
  double total = 0.0;
  {
    const T* zp = logits.data();
    const T* tp = targets.data();
    for (long i = 0; i < n; ++i) {
      const double z = static_cast<double>(zp[i]);
      const double t = static_cast<double>(tp[i]);
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  }
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(total / n),
                                     ops::detail::track(tape, {logits.requires_grad()}));
  ops::detail::check_finite(loss, "bce_multilabel");
  if (loss.requires_grad()) {
    tape->record([logits, targets, loss, n]() mutable {
      const T g = loss.grad()[0];
      T* gz = logits.grad();
      const T* zp = logits.data();
      const T* tp = targets.data();
      const double inv_n = 1.0 / n;
      for (long i = 0; i < n; ++i) {
        const double z = static_cast<double>(zp[i]);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        gz[i] += g * static_cast<T>((sig - static_cast<double>(tp[i])) * inv_n);
      }
    });
  }
  return loss;
}

// Row argmax of a rank-2 logits tensor (first maximum wins).
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2)
    throw ShapeError("argmax_rows expects rank 2, got " + shape_str(logits.shape()));
  const int batch = logits.extent(0), classes = logits.extent(1);
  std::vector<int> out(batch);
  for (int b = 0; b < batch; ++b) {
    const T* row = logits.data() + static_cast<long>(b) * classes;
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    out[b] = best;
  }
  return out;
}

// Row-wise softmax probabilities (no tape; inference only).
template <typename T>
std::vector<double> softmax_rows(const Tensor<T>& logits) {
  const int batch = logits.extent(0), classes = logits.extent(1);
  std::vector<double> out(static_cast<std::size_t>(batch) * classes);
  for (int b = 0; b < batch; ++b) {
    const T* row = logits.data() + static_cast<long>(b) * classes;
    double zmax = static_cast<double>(row[0]);
    for (int c = 1; c < classes; ++c) zmax = std::max(zmax, static_cast<double>(row[c]));
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) {
      const double e = std::exp(static_cast<double>(row[c]) - zmax);
      out[static_cast<std::size_t>(b) * classes + c] = e;
      denom += e;
    }
    for (int c = 0; c < classes; ++c) out[static_cast<std::size_t>(b) * classes + c] /= denom;
  }
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace pipmn
