#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pipmn/ops.hpp"
#include "pipmn/rng.hpp"
#include "pipmn/tensor.hpp"

namespace pipmn {

enum class Structure { kPip, kOms };

inline std::string structure_name(Structure s) {
  return s == Structure::kPip ? "pip" : "oms";
}

inline Structure structure_from_name(const std::string& s) {
  if (s == "pip") return Structure::kPip;
  if (s == "oms") return Structure::kOms;
  throw ValueError("unknown structure '" + s + "' (expected pip|oms)");
}

// Architecture hyperparameters. The paired structure expands the kappas into
// the palindromic stage list [k1..kn..k1]; the flat comparison structure (oms)
// uses them verbatim with no long-range skips.
struct PipConfig {
  int n = 2;
  std::vector<int> kappas{4, 8};
  int time_length = 5;
  int in_dim = 100;
  int alpha = 3;
  int num_classes = 10;
  bool long_range_skip = true;
  bool positional_modeling = true;
  bool linear_skip = true;
  Structure structure = Structure::kPip;
  double eps1_init = 0.1;
  double eps2_init = 1.0;
  double rho_init = 0.1;

  void validate() const {
    if (n < 1) throw ValueError("config field 'n' must be >= 1");
    if (static_cast<int>(kappas.size()) != n)
      throw ValueError("config field 'kappas' must list exactly n expansion rates");
    for (int k : kappas)
      if (k < 1) throw ValueError("config field 'kappas' entries must be >= 1");
    if (time_length < 1) throw ValueError("config field 'time_length' must be >= 1");
    if (in_dim < 1) throw ValueError("config field 'in_dim' must be >= 1");
    if (alpha < 1) throw ValueError("config field 'alpha' must be >= 1");
    if (num_classes < 2) throw ValueError("config field 'num_classes' must be >= 2");
    if (structure == Structure::kOms && long_range_skip)
      throw ValueError("config: 'long_range_skip' cannot be combined with the oms structure");
  }

  // The per-stage expansion list; palindromic of length 2n-1 for pip.
  std::vector<int> stage_expansion() const {
    if (structure == Structure::kOms) return kappas;
    std::vector<int> e = kappas;
    for (int i = n - 2; i >= 0; --i) e.push_back(kappas[static_cast<std::size_t>(i)]);
    return e;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"n", n},
                          {"kappas", kappas},
                          {"time_length", time_length},
                          {"in_dim", in_dim},
                          {"alpha", alpha},
                          {"num_classes", num_classes},
                          {"long_range_skip", long_range_skip},
                          {"positional_modeling", positional_modeling},
                          {"linear_skip", linear_skip},
                          {"structure", structure_name(structure)},
                          {"eps1_init", eps1_init},
                          {"eps2_init", eps2_init},
                          {"rho_init", rho_init}};
  }

  static PipConfig from_json(const nlohmann::json& j) {
    PipConfig c;
    c.n = j.at("n").get<int>();
    c.kappas = j.at("kappas").get<std::vector<int>>();
    c.time_length = j.at("time_length").get<int>();
    c.in_dim = j.at("in_dim").get<int>();
    c.alpha = j.at("alpha").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.long_range_skip = j.value("long_range_skip", true);
    c.positional_modeling = j.value("positional_modeling", true);
    c.linear_skip = j.value("linear_skip", true);
    c.structure = structure_from_name(j.value("structure", std::string("pip")));
    c.eps1_init = j.value("eps1_init", 0.1);
    c.eps2_init = j.value("eps2_init", 1.0);
    c.rho_init = j.value("rho_init", 0.1);
    c.validate();
    return c;
  }
};

namespace detail {

// Fan-in uniform init for linear/conv weights and biases.
template <typename T>
Tensor<T> uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> constant_init(std::vector<int> shape, T value) {
  Tensor<T> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t.data()[i] = value;
  return t;
}

}  // namespace detail

// One stage of the network. The temporal half mixes along the time axis in
// [B,D,L] layout (norm -> expand L to alpha*L -> GELU -> back to L, plus a
// per-channel width-3 positional convolution, all merged by a 3L->L map); the
// depth half maps the channel axis Din -> Dout in [B,L,D] layout with a
// linear skip path. Two scalar layer scales gate the halves.
template <typename T>
struct DenseMlpBlock {
  int dim_in = 0, dim_out = 0, time_len = 0, alpha = 1;
  bool positional = true, linear_skip = true;

  Parameter<T> t_norm_gamma, t_norm_beta;
  Parameter<T> expand_w, expand_b;
  Parameter<T> shrink_w, shrink_b;
  Parameter<T> pos_kernel, pos_bias;
  Parameter<T> mix_w, mix_b;
  Parameter<T> d_norm_gamma, d_norm_beta;
  Parameter<T> depth_w, depth_b;
  Parameter<T> skip_w, skip_b;
  Parameter<T> eps1, eps2;

  static DenseMlpBlock build(const std::string& prefix, int time_len, int alpha, int dim_in,
                             int dim_out, bool positional, bool linear_skip, double eps1_init,
                             double eps2_init, Rng& rng) {
    DenseMlpBlock b;
    b.dim_in = dim_in;
    b.dim_out = dim_out;
    b.time_len = time_len;
    b.alpha = alpha;
    b.positional = positional;
    b.linear_skip = linear_skip;
    const int l = time_len, al = alpha * time_len;
    b.t_norm_gamma = {prefix + ".temporal.norm.gamma", detail::constant_init<T>({l}, T(1))};
    b.t_norm_beta = {prefix + ".temporal.norm.beta", detail::constant_init<T>({l}, T(0))};
    b.expand_w = {prefix + ".temporal.expand.w", detail::uniform_init<T>({l, al}, l, rng)};
    b.expand_b = {prefix + ".temporal.expand.b", detail::uniform_init<T>({al}, l, rng)};
    b.shrink_w = {prefix + ".temporal.shrink.w", detail::uniform_init<T>({al, l}, al, rng)};
    b.shrink_b = {prefix + ".temporal.shrink.b", detail::uniform_init<T>({l}, al, rng)};
    if (positional) {
      b.pos_kernel = {prefix + ".pos.kernel", detail::uniform_init<T>({dim_in, 3}, 3, rng)};
      b.pos_bias = {prefix + ".pos.bias", detail::uniform_init<T>({dim_in}, 3, rng)};
    }
    b.mix_w = {prefix + ".temporal.mix.w", detail::uniform_init<T>({3 * l, l}, 3 * l, rng)};
    b.mix_b = {prefix + ".temporal.mix.b", detail::uniform_init<T>({l}, 3 * l, rng)};
    b.d_norm_gamma = {prefix + ".depth.norm.gamma", detail::constant_init<T>({dim_in}, T(1))};
    b.d_norm_beta = {prefix + ".depth.norm.beta", detail::constant_init<T>({dim_in}, T(0))};
    b.depth_w = {prefix + ".depth.w", detail::uniform_init<T>({dim_in, dim_out}, dim_in, rng)};
    b.depth_b = {prefix + ".depth.b", detail::uniform_init<T>({dim_out}, dim_in, rng)};
    if (linear_skip) {
      b.skip_w = {prefix + ".depth.skip.w", detail::uniform_init<T>({dim_in, dim_out}, dim_in, rng)};
      b.skip_b = {prefix + ".depth.skip.b", detail::uniform_init<T>({dim_out}, dim_in, rng)};
    }
    b.eps1 = {prefix + ".eps1", Tensor<T>::scalar(static_cast<T>(eps1_init))};
    b.eps2 = {prefix + ".eps2", Tensor<T>::scalar(static_cast<T>(eps2_init))};
    return b;
  }

  // Per-channel width-3 convolution along the time axis of [B,D,L].
  Tensor<T> positional_modeling(Tape<T>* tape, const Tensor<T>& x) const {
    if (!positional)
      throw Error("positional modeling is disabled in this block");
    if (x.rank() != 3 || x.extent(1) != dim_in)
      throw ShapeError("positional modeling expects (B," + std::to_string(dim_in) +
                       ",L), got " + shape_str(x.shape()));
    return ops::depthwise_conv1d(tape, x, pos_kernel.value, pos_bias.value);
  }

  // norm -> L->alpha*L -> GELU -> alpha*L->L on [B,D,L].
  Tensor<T> temporal_mlp(Tape<T>* tape, const Tensor<T>& x) const {
    Tensor<T> h = ops::layer_norm(tape, x, t_norm_gamma.value, t_norm_beta.value);
    h = ops::linear(tape, h, expand_w.value, expand_b.value);
    h = ops::gelu(tape, h);
    return ops::linear(tape, h, shrink_w.value, shrink_b.value);
  }

  // concat([positional(x), x, temporal_mlp(x)]) merged back to length L.
  // With positional modeling ablated the first slot carries x itself.
  Tensor<T> temporal_feedforward(Tape<T>* tape, const Tensor<T>& x) const {
    std::vector<Tensor<T>> parts;
    parts.push_back(positional ? positional_modeling(tape, x) : x);
    parts.push_back(x);
    parts.push_back(temporal_mlp(tape, x));
    Tensor<T> cat = ops::concat_last(tape, parts);
    return ops::linear(tape, cat, mix_w.value, mix_b.value);
  }

  // GELU(norm(x) W) plus the linear skip path, [B,L,Din] -> [B,L,Dout].
  Tensor<T> depth_block(Tape<T>* tape, const Tensor<T>& x) const {
    if (x.rank() != 3 || x.extent(2) != dim_in)
      throw ShapeError("depth block expects (B,L," + std::to_string(dim_in) + "), got " +
                       shape_str(x.shape()));
    Tensor<T> h = ops::layer_norm(tape, x, d_norm_gamma.value, d_norm_beta.value);
    h = ops::gelu(tape, ops::linear(tape, h, depth_w.value, depth_b.value));
    if (!linear_skip) return h;
    return ops::add(tape, h, ops::linear(tape, x, skip_w.value, skip_b.value));
  }

  // Full stage on [B,L,Din]: eps2 * depth(eps1 * permute(ff(permute(x))) + x).
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    Tensor<T> t = ops::permute_last_two(tape, x);
    t = temporal_feedforward(tape, t);
    t = ops::permute_last_two(tape, t);
    Tensor<T> u = ops::scale_add(tape, t, eps1.value, x);
    return ops::scale(tape, depth_block(tape, u), eps2.value);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    for (Parameter<T>* p :
         {&t_norm_gamma, &t_norm_beta, &expand_w, &expand_b, &shrink_w, &shrink_b, &pos_kernel,
          &pos_bias, &mix_w, &mix_b, &d_norm_gamma, &d_norm_beta, &depth_w, &depth_b, &skip_w,
          &skip_b, &eps1, &eps2})
      if (p->defined()) out.push_back(p);
  }
};

// The whole network: adaptive time pooling, 2n-1 (or n for the flat variant)
// dense MLP stages, layer-scaled long-range skips between the paired stages,
// and a mean-pool + linear classifier head. Input standardization vectors are
// carried with the model and applied inside forward().
template <typename T>
class PipmnModel {
 public:
  PipmnModel() = default;

  PipmnModel(const PipConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::mix(seed, 0x7069706dULL));
    const std::vector<int> expansion = cfg_.stage_expansion();
    int din = cfg_.in_dim;
    for (std::size_t i = 0; i < expansion.size(); ++i) {
      const int dout = expansion[i] * cfg_.in_dim;
      stages_.push_back(DenseMlpBlock<T>::build(
          "stage" + std::to_string(i + 1), cfg_.time_length, cfg_.alpha, din, dout,
          cfg_.positional_modeling, cfg_.linear_skip, cfg_.eps1_init, cfg_.eps2_init, rng));
      din = dout;
    }
    if (cfg_.structure == Structure::kPip && cfg_.long_range_skip) {
      for (int j = 1; j <= cfg_.n - 1; ++j)
        skip_scales_.emplace_back("skip" + std::to_string(j) + ".rho",
                                  Tensor<T>::scalar(static_cast<T>(cfg_.rho_init)));
    }
    head_w_ = {"head.w", detail::uniform_init<T>({din, cfg_.num_classes}, din, rng)};
    head_b_ = {"head.b", detail::uniform_init<T>({cfg_.num_classes}, din, rng)};
    feat_mean_.assign(static_cast<std::size_t>(cfg_.in_dim), T(0));
    feat_std_.assign(static_cast<std::size_t>(cfg_.in_dim), T(1));
  }

  // [B,T,in_dim] -> [B,num_classes]; any T >= time_length is accepted.
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    if (x.rank() != 3 || x.extent(2) != cfg_.in_dim)
      throw ShapeError("model expects input (B,T," + std::to_string(cfg_.in_dim) +
                       ") with in_dim " + std::to_string(cfg_.in_dim) + ", got " +
                       shape_str(x.shape()));
    std::vector<T> inv_std(feat_std_.size()), shift(feat_std_.size());
    for (std::size_t i = 0; i < feat_std_.size(); ++i) {
      inv_std[i] = T(1) / feat_std_[i];
      shift[i] = -feat_mean_[i] * inv_std[i];
    }
    Tensor<T> h = ops::channel_affine(tape, x, inv_std, shift);
    h = ops::adaptive_avg_pool_time(tape, h, cfg_.time_length);

    const bool paired = cfg_.structure == Structure::kPip && cfg_.long_range_skip;
    std::vector<Tensor<T>> stage_out(stages_.size() + 1);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      h = stages_[i].forward(tape, h);
      const int s = static_cast<int>(i) + 1;
      if (paired && s > cfg_.n) {
        const int j = 2 * cfg_.n - s;  // partner stage with the same output depth
        h = ops::scale_add(tape, stage_out[static_cast<std::size_t>(j)],
                           skip_scales_[static_cast<std::size_t>(j - 1)].value, h);
      }
      stage_out[static_cast<std::size_t>(s)] = h;
    }
    h = ops::mean_over_time(tape, h);
    return ops::linear(tape, h, head_w_.value, head_b_.value);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& s : stages_) s.collect(out);
    for (auto& r : skip_scales_) out.push_back(&r);
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    auto* self = const_cast<PipmnModel*>(this);
    for (Parameter<T>* p : self->parameters()) out.push_back(p);
    return out;
  }

  long param_count() const {
    long total = 0;
    for (const Parameter<T>* p : parameters())
      if (p->trainable) total += p->value.size();
    return total;
  }

  // Totals per stage plus the skip scales and the head.
  std::vector<std::pair<std::string, long>> param_breakdown() const {
    std::vector<std::pair<std::string, long>> rows;
    auto* self = const_cast<PipmnModel*>(this);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      std::vector<Parameter<T>*> ps;
      self->stages_[i].collect(ps);
      long t = 0;
      for (auto* p : ps) t += p->value.size();
      rows.emplace_back("stage" + std::to_string(i + 1), t);
    }
    if (!skip_scales_.empty())
      rows.emplace_back("long_range_skips", static_cast<long>(skip_scales_.size()));
    rows.emplace_back("head", head_w_.value.size() + head_b_.value.size());
    return rows;
  }

  void zero_grads() {
    for (Parameter<T>* p : parameters()) p->value.zero_grad();
  }

  void set_feature_stats(std::vector<T> mean, std::vector<T> stddev) {
    if (static_cast<int>(mean.size()) != cfg_.in_dim ||
        static_cast<int>(stddev.size()) != cfg_.in_dim)
      throw ShapeError("feature statistics must have in_dim entries");
    for (T s : stddev)
      if (!(s > T(0))) throw ValueError("feature stddev entries must be positive");
    feat_mean_ = std::move(mean);
    feat_std_ = std::move(stddev);
  }

  const std::vector<T>& feature_mean() const { return feat_mean_; }
  const std::vector<T>& feature_std() const { return feat_std_; }
  const PipConfig& config() const { return cfg_; }
  const std::vector<DenseMlpBlock<T>>& stages() const { return stages_; }
  std::vector<DenseMlpBlock<T>>& stages() { return stages_; }
  std::vector<Parameter<T>>& skip_scales() { return skip_scales_; }
  const std::vector<Parameter<T>>& skip_scales() const { return skip_scales_; }

  // Provenance carried through checkpoints.
  std::string frontend = "stack5";
  std::string task = "multiclass";
  std::vector<std::string> vocabulary;

 private:
  PipConfig cfg_;
  std::vector<DenseMlpBlock<T>> stages_;
  std::vector<Parameter<T>> skip_scales_;
  Parameter<T> head_w_, head_b_;
  std::vector<T> feat_mean_, feat_std_;
};

// Builds the configured variant (paired structure or the flat comparison one).
template <typename T>
PipmnModel<T> build_variant(const PipConfig& cfg, std::uint64_t seed) {
  return PipmnModel<T>(cfg, seed);
}

}  // namespace pipmn
