#pragma once

#include <cmath>
#include <vector>

#include "pipmn/tensor.hpp"

namespace pipmn {

// AdamW with decoupled weight decay:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
// step() consumes the accumulated gradients and zeroes them afterwards.
template <typename T>
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit AdamW(std::vector<Parameter<T>*> params, Options opt = {})
      : params_(std::move(params)), opt_(opt) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter<T>* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void step() {
    for (const Parameter<T>* p : params_)
      if (p->trainable && !p->value.requires_grad())
        throw Error("adamw: parameter '" + p->name + "' has no gradient buffer");
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>& p = *params_[k];
      if (!p.trainable) continue;
      T* theta = p.value.data();
      T* grad = p.value.grad();
      double* m = m_[k].data();
      double* v = v_[k].data();
      const long n = p.value.size();
      for (long i = 0; i < n; ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double th = static_cast<double>(theta[i]);
        theta[i] = static_cast<T>(th - opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps) -
                                  opt_.lr * opt_.weight_decay * th);
      }
      p.value.zero_grad();
    }
  }

  long steps() const { return step_; }
  const Options& options() const { return opt_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  Options opt_;
  long step_ = 0;
};

}  // namespace pipmn
