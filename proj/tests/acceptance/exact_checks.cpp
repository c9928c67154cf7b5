// Checks that need double precision; this translation unit selects the f64 library.
#define AGGNET_DOUBLE 1

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "acceptance.hpp"
#include "aggnet/layers.hpp"
#include "aggnet/losses.hpp"
#include "aggnet/model.hpp"
#include "aggnet/ops.hpp"
#include "aggnet/rng.hpp"
#include "oracles.hpp"

using namespace aggnet;
using namespace aggnet::f64;

namespace acceptance {

namespace {

Tensor random_tensor(Shape s, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

void perturb(ParamStore& store, CounterRng& rng, double amount) {
  for (Param& p : store.entries()) {
    if (!p.trainable()) continue;
    for (double& v : p.value.data()) v += rng.uniform(-amount, amount);
  }
}

std::vector<Tensor> trainable(ParamStore& store) {
  std::vector<Tensor> out;
  for (Param& p : store.entries())
    if (p.trainable()) out.push_back(p.value);
  return out;
}

struct FdResult {
  double max_rel = 0;
  int checked = 0;
  int kinks = 0;
};

// Central differences against the autograd gradient of sum(f() * probe).
// Entries whose one-sided slopes disagree by more than the discrepancy sit on
// a kink, where neither estimate is a derivative; those are counted apart.
FdResult finite_differences(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                            CounterRng& rng) {
  for (Tensor& t : wrt) t.set_requires_grad(true);
  const Tensor probe = random_tensor(f().shape(), rng);
  auto scalar = [&] {
    const Tensor y = f();
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    g.backward(ops::sum(ops::mul(f(), probe)));
    for (const Tensor& t : wrt) {
      analytic.emplace_back(t.size(), 0.0);
      if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
      t.clear_grad();
    }
  }
  const double h = 1e-4;
  const double f0 = scalar();
  FdResult r;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto x = wrt[k].data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = x[i];
      x[i] = x0 + h;
      const double fp = scalar();
      x[i] = x0 - h;
      const double fm = scalar();
      x[i] = x0;
      const double numeric = (fp - fm) / (2 * h);
      const double diff = std::abs(analytic[k][i] - numeric);
      const double rel = diff / std::max({std::abs(analytic[k][i]), std::abs(numeric), 1e-6});
      if (rel > 1e-6 && std::abs((fp - f0) - (f0 - fm)) / h > diff) {
        ++r.kinks;
        continue;
      }
      r.max_rel = std::max(r.max_rel, rel);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace

Outcome gradient_correctness() {
  CounterRng rng(101);
  struct Case {
    std::string name;
    std::function<FdResult()> run;
  };
  std::vector<Case> cases;
  // Train-mode batch norm: the statistics depend on the input, so this is
  // the harder gradient.
  cases.push_back({"batch_norm", [&] {
    ParamStore s;
    BatchNorm bn(s, "bn", 4);
    perturb(s, rng, 0.5);
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    return finite_differences([&] { return bn.forward(x, Mode::Train); }, {x, bn.gamma, bn.beta}, rng);
  }});
  cases.push_back({"vconv", [&] {
    ParamStore s;
    Init init{rng};
    VConv v(s, "v", 4, 4, 3, 1, init);
    perturb(s, rng, 0.3);
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    auto wrt = trainable(s);
    wrt.push_back(x);
    return finite_differences([&] { return v.forward(x, Mode::Train); }, wrt, rng);
  }});
  cases.push_back({"gconv", [&] {
    ParamStore s;
    Init init{rng};
    GConv v(s, "g", 4, 4, 3, 2, init);
    perturb(s, rng, 0.3);
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    auto wrt = trainable(s);
    wrt.push_back(x);
    return finite_differences([&] { return v.forward(x, Mode::Train); }, wrt, rng);
  }});
  cases.push_back({"de_gconv", [&] {
    ParamStore s;
    Init init{rng};
    DeGConv v(s, "dg", 4, 2, 3, 2, init);
    perturb(s, rng, 0.3);
    Tensor x = random_tensor({2, 4, 4, 4}, rng);
    auto wrt = trainable(s);
    wrt.push_back(x);
    return finite_differences([&] { return v.forward(x, Mode::Train); }, wrt, rng);
  }});
  cases.push_back({"contextual_attention", [&] {
    ParamStore s;
    Init init{rng};
    ContextualAttention ca(s, "ca", CaConfig{16, 2}, init);
    perturb(s, rng, 0.3);
    Tensor x = random_tensor({2, 4, 4, 4}, rng);
    auto wrt = trainable(s);
    wrt.push_back(x);
    return finite_differences([&] { return ca.forward(x); }, wrt, rng);
  }});
  cases.push_back({"ag_gconv", [&] {
    ParamStore s;
    Init init{rng};
    AgGConv block(s, "agg", 3, 4, 3, 2, 4, 4, init);
    perturb(s, rng, 0.3);
    Tensor d = random_tensor({2, 3, 8, 8}, rng);
    Tensor c = random_tensor({2, 4, 4, 4}, rng);
    auto wrt = trainable(s);
    wrt.push_back(d);
    wrt.push_back(c);
    return finite_differences([&] { return block.forward(d, c, Mode::Train); }, wrt, rng);
  }});
  cases.push_back({"ag_sc", [&] {
    ParamStore s;
    Init init{rng};
    AgSc block(s, "sc", 4, 3, init);
    perturb(s, rng, 0.3);
    Tensor c = random_tensor({2, 4, 8, 8}, rng);
    Tensor d = random_tensor({2, 4, 8, 8}, rng);
    auto wrt = trainable(s);
    wrt.push_back(c);
    wrt.push_back(d);
    return finite_differences([&] { return block.forward(c, d, Mode::Train); }, wrt, rng);
  }});
  cases.push_back({"losses", [&] {
    Tensor p = random_tensor({2, 1, 8, 8}, rng, 0.0, 4.0);
    Tensor g = random_tensor({2, 1, 8, 8}, rng, 0.0, 4.0);
    return finite_differences([&] { return total_loss(p, g, LossWeights{0.7, 0.3, 1.0}); }, {p},
                              rng);
  }});

  Outcome out{true, ""};
  for (const Case& c : cases) {
    const FdResult r = c.run();
    // A handful of kinks is expected (ReLU, |.|); a block that is mostly kinks proves nothing.
    const bool ok = r.max_rel < 1e-4 && r.checked > 0 && r.kinks * 10 <= r.checked;
    out.pass = out.pass && ok;
    out.detail += c.name + "=" + fmt(r.max_rel) + (r.kinks ? "(" + std::to_string(r.kinks) + " kinks)" : "") + " ";
  }
  return out;
}

Outcome oracle_equivalence() {
  CounterRng rng(102);
  double worst = 0;
  auto track = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  };
  bool shapes_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.range(1, 2), c_in = rng.range(1, 4), c_out = rng.range(1, 4);
    const int k = 2 * rng.range(0, 2) + 1, s = rng.range(1, 2);
    const int h = rng.range(3, 9), w = rng.range(3, 9);
    Tensor x = random_tensor({n, c_in, h, w}, rng);
    Tensor wt = random_tensor({c_out, c_in, k, k}, rng);
    Tensor b = random_tensor({1, c_out, 1, 1}, rng);
    Tensor y = ops::conv2d(x, wt, b, s);
    oracle::Dims od;
    const auto ref = oracle::conv2d(values(x), {n, c_in, h, w}, values(wt), c_out, k, values(b), s, &od);
    shapes_ok = shapes_ok && y.shape() == Shape{od.n, od.c, od.h, od.w};
    for (std::size_t i = 0; i < ref.size() && i < y.size(); ++i) track(y[i], ref[i]);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.range(1, 2), c_in = rng.range(1, 4), c_out = rng.range(1, 4);
    const int s = rng.range(1, 2);
    const int k = s == 1 ? 2 * rng.range(0, 2) + 1 : rng.range(2, 5);
    const int h = rng.range(2, 6), w = rng.range(2, 6);
    Tensor x = random_tensor({n, c_in, h, w}, rng);
    Tensor wt = random_tensor({c_in, c_out, k, k}, rng);
    Tensor b = random_tensor({1, c_out, 1, 1}, rng);
    Tensor y = ops::deconv2d(x, wt, b, s);
    oracle::Dims od;
    const auto ref = oracle::deconv2d(values(x), {n, c_in, h, w}, values(wt), c_out, k, values(b), s, &od);
    shapes_ok = shapes_ok && y.shape() == Shape{od.n, od.c, od.h, od.w};
    for (std::size_t i = 0; i < ref.size() && i < y.size(); ++i) track(y[i], ref[i]);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = rng.range(1, 6), L = rng.range(1, 8), M = rng.range(1, 8);
    Tensor x = random_tensor({rows, L, 1, 1}, rng);
    Tensor wt = random_tensor({M, L, 1, 1}, rng);
    Tensor b = random_tensor({1, M, 1, 1}, rng);
    Tensor y = ops::fully_connected(x, wt, b);
    const auto ref = oracle::fully_connected(values(x), rows, L, values(wt), M, values(b));
    shapes_ok = shapes_ok && y.size() == ref.size();
    for (std::size_t i = 0; i < ref.size() && i < y.size(); ++i) track(y[i], ref[i]);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int h = rng.range(2, 9), w = rng.range(2, 9);
    Tensor p = random_tensor({1, 1, h, w}, rng, 0.1, 6.0);
    Tensor g = random_tensor({1, 1, h, w}, rng, 0.1, 6.0);
    g[0] = 1.0;  // at least one valid pixel
    for (std::size_t i = 1; i < g.size(); ++i)
      if (rng.bernoulli(0.2)) g[i] = 0.0;
    const MetricReport r = evaluate(p, g);
    const auto o = oracle::evaluate(values(p), values(g));
    shapes_ok = shapes_ok && r.pixels == o.pixels;
    track(r.rmse, o.rmse);
    track(r.rel, o.rel);
    for (int t = 0; t < 4; ++t) track(r.delta[t], o.delta[t]);
  }
  return {shapes_ok && worst <= 1e-10, "80 cases, max relative deviation " + fmt(worst)};
}

Outcome gating_invariants() {
  CounterRng rng(103);
  double lo = 1, hi = 0;
  auto scan = [&](const Tensor& g) {
    for (double v : g.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  for (int pass = 0; pass < 100; ++pass) {
    ParamStore s;
    Init init{rng};
    GConv g(s, "g", 3, 4, 3, 2, init);
    DeGConv dg(s, "dg", 4, 2, 3, 2, init);
    ContextualAttention ca(s, "ca", CaConfig{16, 4}, init);
    AgSc sc(s, "sc", 4, 3, init);
    AgGConv agg(s, "agg", 3, 4, 3, 4, 4, 4, init);
    perturb(s, rng, 0.3);
    const double spread = 1.0 + pass % 5;
    Tensor x = random_tensor({2, 3, 8, 8}, rng, -spread, spread);
    Tensor f = random_tensor({2, 4, 4, 4}, rng, -spread, spread);
    scan(g.gate_values(x));
    scan(dg.gate_values(f));
    scan(ca.forward(f));
    scan(sc.gate_values(f, random_tensor({2, 4, 4, 4}, rng), Mode::Train));
    scan(agg.trace(x, f, Mode::Train).gate);
  }
  const bool open_unit = lo > 0.0 && hi < 1.0;

  // Channel permutation: the CA network is shared across channels.
  bool equivariant = true;
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore s;
    Init init{rng};
    ContextualAttention ca(s, "ca", CaConfig{9, 4}, init);
    perturb(s, rng, 0.3);
    const int channels = 6;
    Tensor x = random_tensor({2, channels, 3, 3}, rng);
    std::vector<int> perm(channels);
    for (int c = 0; c < channels; ++c) perm[c] = c;
    for (int c = channels - 1; c > 0; --c) std::swap(perm[c], perm[rng.range(0, c)]);
    Tensor px(x.shape());
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < channels; ++c)
        for (int p = 0; p < 9; ++p) px.at(n, c, p / 3, p % 3) = x.at(n, perm[c], p / 3, p % 3);
    Tensor g = ca.forward(x), pg = ca.forward(px);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < channels; ++c)
        for (int p = 0; p < 9; ++p)
          equivariant = equivariant && pg.at(n, c, p / 3, p % 3) == g.at(n, perm[c], p / 3, p % 3);
  }

  // Zeroed CA parameters give sigmoid(0) = 0.5 everywhere.
  bool halved = true;
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore s;
    Init init{rng};
    AgGConv block(s, "agg", 3, 4, 3, 4, 4, 4, init);
    perturb(s, rng, 0.3);
    for (Tensor* t : {&block.attention.fc1_weight, &block.attention.fc1_bias,
                      &block.attention.fc2_weight, &block.attention.fc2_bias}) {
      for (double& v : t->data()) v = 0.0;
    }
    const auto t = block.trace(random_tensor({2, 3, 8, 8}, rng), random_tensor({2, 4, 4, 4}, rng),
                               Mode::Train);
    for (std::size_t i = 0; i < t.output.size(); ++i)
      halved = halved && t.output[i] == 0.5 * t.depth_features[i];
  }
  return {open_unit && equivariant && halved,
          "gate min " + fmt(lo) + ", 1 - max " + fmt(1.0 - hi) + ", permutation " +
              (equivariant ? "exact" : "BROKEN") + ", zero-CA " + (halved ? "exact 0.5" : "BROKEN")};
}

Outcome prefill_contract() {
  ModelConfig cfg;
  cfg.m = 2;
  cfg.c0 = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.prefill_channels = 4;
  AggNet net(cfg, 5);
  CounterRng rng(104);
  int preserved_fail = 0, zero_pixels = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const double hole_p = trial == 0 ? 0.0 : trial == 1 ? 1.0 : rng.uniform();
    Batch b{Tensor({2, 1, 16, 16}), Tensor({2, 1, 16, 16}), random_tensor({2, 3, 16, 16}, rng, 0, 1), {}};
    for (std::size_t i = 0; i < b.raw.size(); ++i) {
      const bool hole = rng.bernoulli(hole_p);
      b.valid[i] = hole ? 0.0 : 1.0;
      b.raw[i] = hole ? 0.0 : rng.uniform(0.5, 10.0);
    }
    for (Mode mode : {Mode::Eval, Mode::Train}) {
      const Tensor out = net.prefill(b.raw, b.valid, b.rgb, mode);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (b.valid[i] != 0.0 && out[i] != b.raw[i]) ++preserved_fail;
        if (!(out[i] > 0.0)) ++zero_pixels;
      }
    }
  }
  return {preserved_fail == 0 && zero_pixels == 0,
          "50 masks (all-valid, all-invalid, random); changed valid pixels " +
              std::to_string(preserved_fail) + ", non-positive outputs " + std::to_string(zero_pixels)};
}

Outcome loss_identities() {
  CounterRng rng(105);
  bool ok = true;
  std::string why;
  auto require = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      why += what + " ";
    }
  };
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = random_tensor({2, 1, 6, 7}, rng, 0.0, 10.0);
    require(huber_loss(p, p, 1.0).item() == 0.0, "huber(p,p)");
    // Grid values keep every shifted sum exact in binary floating point.
    Tensor q = random_tensor({2, 1, 6, 7}, rng, 0.0, 4.0);
    for (double& v : p.data()) v = std::round(v * 64) / 64;
    for (double& v : q.data()) v = std::round(v * 64) / 64;
    Tensor shifted(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) shifted[i] = p[i] + 5.0;
    require(edge_loss(shifted, q).item() == edge_loss(p, q).item(), "edge offset");
    Tensor a = random_tensor({1, 1, 5, 5}, rng, 0.0, 5.0), g = random_tensor({1, 1, 5, 5}, rng, 0.5, 5.0);
    const double w1 = rng.uniform(0, 2), w2 = rng.uniform(0, 2);
    const double h = total_loss(a, g, LossWeights{1.0, 0.0, 1.0}).item();
    const double e = total_loss(a, g, LossWeights{0.0, 1.0, 1.0}).item();
    require(std::abs(total_loss(a, g, LossWeights{w1, w2, 1.0}).item() - (w1 * h + w2 * e)) <= 1e-12,
            "linearity");
  }
  // Hand-computed values.
  const Tensor zero = Tensor::scalar(0.0);
  require(std::abs(huber_loss(Tensor::scalar(0.5), zero, 1.0).item() - 0.125) <= 1e-12, "huber quad");
  require(std::abs(huber_loss(Tensor::scalar(3.0), zero, 1.0).item() - 2.5) <= 1e-12, "huber lin");
  require(std::abs(huber_loss(Tensor::scalar(-0.3), zero, 0.2).item() - 0.04) <= 1e-12, "huber delta");
  Tensor ramp({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  require(std::abs(edge_loss(ramp, Tensor({1, 1, 2, 2}, 0.0)).item() - 2.0) <= 1e-12, "edge hand");
  Tensor step({1, 1, 2, 3}, std::vector<double>{0, 0, 3, 1, 1, 1});
  // Horizontal diffs: 0,3 | 0,0; vertical diffs: 1,1,-2 -> |.| sum 3 + 4 = 7.
  require(std::abs(edge_loss(step, Tensor({1, 1, 2, 3}, 0.0)).item() - 7.0) <= 1e-12, "edge hand 2");
  return {ok, ok ? "20 random trials plus 5 hand examples" : "failed: " + why};
}

Outcome metric_properties() {
  CounterRng rng(110);
  bool monotone = true;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor p = random_tensor({1, 1, 8, 8}, rng, 0.0, 8.0);
    Tensor g = random_tensor({1, 1, 8, 8}, rng, 0.1, 8.0);
    const MetricReport r = evaluate(p, g);
    for (int t = 1; t < 4; ++t) monotone = monotone && r.delta[t - 1] <= r.delta[t];
  }
  double worst = 0;
  bool pixels_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor p = random_tensor({2, 1, 6, 6}, rng, 0.1, 6.0);
    Tensor g = random_tensor({2, 1, 6, 6}, rng, 0.1, 6.0);
    Tensor mask({2, 1, 6, 6});
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i > 0 && rng.bernoulli(0.3)) g[i] = rng.bernoulli(0.5) ? 0.0 : -1.0;
      mask[i] = i == 0 || rng.bernoulli(0.8) ? 1.0 : 0.0;
    }
    for (bool use_mask : {false, true}) {
      const MetricReport r = use_mask ? evaluate(p, g, mask) : evaluate(p, g);
      const auto o = use_mask ? oracle::evaluate(values(p), values(g), values(mask))
                              : oracle::evaluate(values(p), values(g));
      pixels_ok = pixels_ok && r.pixels == o.pixels;
      worst = std::max({worst, oracle::rel_diff(r.rmse, o.rmse), oracle::rel_diff(r.rel, o.rel)});
      for (int t = 0; t < 4; ++t) worst = std::max(worst, oracle::rel_diff(r.delta[t], o.delta[t]));
    }
  }
  return {monotone && pixels_ok && worst <= 1e-10,
          std::string("delta monotone ") + (monotone ? "yes" : "NO") + ", oracle deviation " + fmt(worst) +
              (pixels_ok ? "" : ", pixel count mismatch")};
}

}  // namespace acceptance
