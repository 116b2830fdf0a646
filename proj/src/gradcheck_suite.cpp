#include "pipmn/gradcheck_suite.hpp"

#include <algorithm>

#include "pipmn/losses.hpp"
#include "pipmn/model.hpp"
#include "pipmn/ops.hpp"

namespace pipmn {

namespace {

using D = double;
using Tens = Tensor<double>;
using Par = Parameter<double>;

Tens random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tens t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

// Wraps leaf tensors as named parameters so the checker can perturb inputs
// and weights alike.
Par leaf(const std::string& name, Tens t) { return Par(name, std::move(t)); }

std::vector<Par*> ptrs(std::vector<Par>& v) {
  std::vector<Par*> out;
  out.reserve(v.size());
  for (auto& p : v) out.push_back(&p);
  return out;
}

OpCheckResult check(const std::string& op, std::vector<Par>& params,
                    const std::function<Tensor<double>(Tape<double>*)>& fwd,
                    std::uint64_t seed) {
  return {op, grad_check(fwd, ptrs(params), seed)};
}

}  // namespace

std::vector<OpCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<OpCheckResult> results;
  Rng rng(Rng::mix(seed, 0x73756974ULL));

  {  // linear on a rank-3 input
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 3, 4}, rng)));
    ps.push_back(leaf("w", random_tensor({4, 5}, rng)));
    ps.push_back(leaf("b", random_tensor({5}, rng)));
    results.push_back(check("linear", ps, [&ps](Tape<D>* t) {
      Tens y = ops::linear(t, ps[0].value, ps[1].value, ps[2].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // layer_norm at a non-degenerate input
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 4, 6}, rng, 2.0)));
    ps.push_back(leaf("gamma", random_tensor({6}, rng)));
    ps.push_back(leaf("beta", random_tensor({6}, rng)));
    results.push_back(check("layer_norm", ps, [&ps](Tape<D>* t) {
      Tens y = ops::layer_norm(t, ps[0].value, ps[1].value, ps[2].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // gelu
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 3, 5}, rng, 2.0)));
    results.push_back(check("gelu", ps, [&ps](Tape<D>* t) {
      return ops::sum(t, ops::gelu(t, ps[0].value));
    }, seed));
  }
  {  // depthwise_conv1d
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 4, 6}, rng)));
    ps.push_back(leaf("k", random_tensor({4, 3}, rng)));
    ps.push_back(leaf("b", random_tensor({4}, rng)));
    results.push_back(check("depthwise_conv1d", ps, [&ps](Tape<D>* t) {
      Tens y = ops::depthwise_conv1d(t, ps[0].value, ps[1].value, ps[2].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // adaptive_avg_pool_time, non-divisible boundary
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 5, 4}, rng)));
    results.push_back(check("adaptive_avg_pool_time", ps, [&ps](Tape<D>* t) {
      Tens y = ops::adaptive_avg_pool_time(t, ps[0].value, 3);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // permute_last_two
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 3, 4}, rng)));
    results.push_back(check("permute_last_two", ps, [&ps](Tape<D>* t) {
      Tens y = ops::permute_last_two(t, ps[0].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // concat_last
    std::vector<Par> ps;
    ps.push_back(leaf("a", random_tensor({2, 3, 2}, rng)));
    ps.push_back(leaf("b", random_tensor({2, 3, 4}, rng)));
    ps.push_back(leaf("c", random_tensor({2, 3, 3}, rng)));
    results.push_back(check("concat_last", ps, [&ps](Tape<D>* t) {
      Tens y = ops::concat_last(t, {ps[0].value, ps[1].value, ps[2].value});
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // scale_add
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 3, 4}, rng)));
    ps.push_back(leaf("eps", Tens::scalar(rng.uniform(-1.0, 1.0))));
    ps.push_back(leaf("y", random_tensor({2, 3, 4}, rng)));
    results.push_back(check("scale_add", ps, [&ps](Tape<D>* t) {
      Tens y = ops::scale_add(t, ps[0].value, ps[1].value, ps[2].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // mean_over_time
    std::vector<Par> ps;
    ps.push_back(leaf("x", random_tensor({2, 4, 3}, rng)));
    results.push_back(check("mean_over_time", ps, [&ps](Tape<D>* t) {
      Tens y = ops::mean_over_time(t, ps[0].value);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, seed));
  }
  {  // label-smoothed cross entropy
    std::vector<Par> ps;
    ps.push_back(leaf("logits", random_tensor({3, 4}, rng, 2.0)));
    const std::vector<int> targets = {1, 0, 3};
    results.push_back(check("cross_entropy_smoothed", ps, [&ps, targets](Tape<D>* t) {
      return cross_entropy_smoothed(t, ps[0].value, targets, 0.1);
    }, seed));
  }
  {  // multilabel BCE
    std::vector<Par> ps;
    ps.push_back(leaf("logits", random_tensor({2, 4}, rng, 2.0)));
    Tens targets({2, 4});
    for (long i = 0; i < targets.size(); ++i)
      targets.data()[i] = rng.next_double() < 0.5 ? 0.0 : 1.0;
    results.push_back(check("bce_multilabel", ps, [&ps, targets](Tape<D>* t) {
      return bce_multilabel(t, ps[0].value, targets);
    }, seed));
  }

  // Block-level checks share one stage built exactly like the model builds it.
  {
    Rng brng(Rng::mix(seed, 0x626c6b00ULL));
    auto block = DenseMlpBlock<double>::build("blk", 3, 2, 4, 8, true, true, 0.1, 1.0, brng);
    std::vector<Par*> params;
    block.collect(params);
    const Tens x_dl = random_tensor({2, 4, 3}, rng);  // [B,D,L]
    const Tens x_ld = random_tensor({2, 3, 4}, rng);  // [B,L,D]
    results.push_back({"temporal_mlp", grad_check([&block, &x_dl](Tape<D>* t) {
      Tens y = block.temporal_mlp(t, x_dl);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, params, seed)});
    results.push_back({"temporal_feedforward", grad_check([&block, &x_dl](Tape<D>* t) {
      Tens y = block.temporal_feedforward(t, x_dl);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, params, seed)});
    results.push_back({"depth_block", grad_check([&block, &x_ld](Tape<D>* t) {
      Tens y = block.depth_block(t, x_ld);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, params, seed)});
    results.push_back({"dense_mlp", grad_check([&block, &x_ld](Tape<D>* t) {
      Tens y = block.forward(t, x_ld);
      return ops::sum(t, ops::hadamard(t, y, y));
    }, params, seed)});
  }

  // Tiny full model: every parameter coordinate against finite differences.
  {
    PipConfig cfg;
    cfg.n = 2;
    cfg.kappas = {2, 3};
    cfg.time_length = 3;
    cfg.in_dim = 6;
    cfg.alpha = 2;
    cfg.num_classes = 3;
    PipmnModel<double> model(cfg, Rng::mix(seed, 0x6d6f646cULL));
    const Tens x = random_tensor({2, 8, 6}, rng);
    const std::vector<int> targets = {1, 2};
    results.push_back({"full_model", grad_check([&model, &x, targets](Tape<D>* t) {
      return cross_entropy_smoothed(t, model.forward(t, x), targets, 0.1);
    }, model.parameters(), seed)});
  }
  return results;
}

double suite_max_rel_err(const std::vector<OpCheckResult>& results) {
  double worst = 0.0;
  for (const auto& r : results) worst = std::max(worst, r.report.max_rel_err);
  return worst;
}

}  // namespace pipmn
