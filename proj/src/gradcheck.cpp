#include "aggnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aggnet/errors.hpp"
#include "aggnet/gradcheck_suite.hpp"
#include "aggnet/layers.hpp"
#include "aggnet/losses.hpp"
#include "aggnet/model.hpp"
#include "aggnet/ops.hpp"
#include "aggnet/rng.hpp"

AGGNET_BEGIN_NAMESPACE

Tensor random_projection(const Tensor& y, std::uint64_t seed) {
  Tensor r(y.shape());
  CounterRng rng(seed);
  for (Real& v : r.data()) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return ops::sum(ops::mul(y, r));
}

GradcheckReport gradcheck(const std::function<Tensor()>& loss, const std::vector<Tensor>& wrt,
                          const GradcheckOptions& options) {
  for (const Tensor& t : wrt) {
    if (!t.requires_grad()) throw ContractError("gradcheck: tensor does not require grad");
    t.clear_grad();
  }
  {
    Graph graph;
    graph.backward(loss());
  }
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) {
    std::vector<double> g(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
    analytic.push_back(std::move(g));
    t.clear_grad();
  }

  // With no graph in scope the probes below record nothing.
  auto eval = [&] { return static_cast<double>(loss().item()); };
  const double f0 = eval();
  const double h = options.h;
  GradcheckReport report;
  CounterRng rng(options.seed);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k];
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries > 0 && idx.size() > options.max_entries) {
      for (std::size_t i = 0; i < options.max_entries; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(options.max_entries);
    }
    auto values = t.data();
    for (std::size_t i : idx) {
      const Real x0 = values[i];
      values[i] = static_cast<Real>(x0 + h);
      const double fp = eval();
      values[i] = static_cast<Real>(x0 - h);
      const double fm = eval();
      values[i] = x0;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[k][i];
      const double diff = std::abs(a - numeric);
      const double rel =
          diff / std::max({std::abs(a), std::abs(numeric), options.floor});
      // At a kink the one-sided slopes disagree by about as much as the
      // analytic value differs from their mean; smooth points do not.
      const double one_sided_gap = std::abs((fp - f0) / h - (f0 - fm) / h);
      if (rel > 1e-5 && one_sided_gap > diff) {
        ++report.skipped;
        continue;
      }
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  return report;
}

AGGNET_END_NAMESPACE

#ifdef AGGNET_DOUBLE

AGGNET_BEGIN_NAMESPACE

namespace {

Tensor random_tensor(Shape s, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (Real& v : t.data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Randomizes every trainable tensor so no parameter sits at a special value.
void randomize(ParamStore& store, CounterRng& rng) {
  for (Param& p : store.entries()) {
    if (!p.trainable()) continue;
    const double center = p.kind == ParamKind::Gamma ? 1.0 : 0.0;
    for (Real& v : p.value.data()) v = center + rng.uniform(-0.5, 0.5);
  }
}

std::vector<Tensor> trainable(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const Param& p : store.entries())
    if (p.trainable()) out.push_back(p.value);
  return out;
}

BlockGradcheck finish(const std::string& name, const GradcheckReport& r, double tol) {
  BlockGradcheck b;
  b.block = name;
  b.max_rel_error = r.max_rel_error;
  b.checked = r.checked;
  b.skipped = r.skipped;
  // A check that skipped most of its entries proves nothing.
  b.passed = r.max_rel_error < tol && r.checked > 0 && r.skipped * 10 <= r.checked;
  return b;
}

template <typename Build>
BlockGradcheck check_block(const std::string& name, std::uint64_t seed, double tol,
                           std::size_t max_entries, Build build) {
  std::uint64_t stream = 0;
  for (unsigned char ch : name) stream = mix64(stream ^ ch);
  CounterRng rng(derive_seed(seed, stream));
  ParamStore store;
  Init init{rng, 0.2};
  std::vector<Tensor> inputs;
  std::function<Tensor()> forward = build(store, init, rng, inputs);
  randomize(store, rng);
  std::vector<Tensor> wrt = inputs;
  for (const Tensor& t : trainable(store)) wrt.push_back(t);
  const std::uint64_t probe = rng.next_u64();
  GradcheckOptions opts;
  opts.max_entries = max_entries;
  opts.seed = rng.next_u64();
  const auto report = gradcheck([&] { return random_projection(forward(), probe); }, wrt, opts);
  return finish(name, report, tol);
}

}  // namespace

AGGNET_END_NAMESPACE

namespace aggnet {

std::vector<BlockGradcheck> run_block_gradchecks(std::uint64_t seed, double tol) {
  using namespace aggnet::f64;
  using S = ParamStore;
  using In = std::vector<Tensor>;
  std::vector<BlockGradcheck> out;

  out.push_back(check_block("conv2d", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    Conv c1(s, "c1", 3, 4, 3, 1, init);
    Conv c2(s, "c2", 4, 2, 3, 2, init);
    in.push_back(random_tensor({2, 3, 8, 8}, rng));
    return std::function<Tensor()>([c1, c2, x = in[0]] { return c2.forward(c1.forward(x)); });
  }));
  out.push_back(check_block("deconv2d", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    Deconv d(s, "d", 4, 3, 3, 2, init);
    Deconv d1(s, "d1", 3, 2, 3, 1, init);
    in.push_back(random_tensor({2, 4, 4, 4}, rng));
    return std::function<Tensor()>([d, d1, x = in[0]] { return d1.forward(d.forward(x)); });
  }));
  out.push_back(check_block("fully_connected", seed, tol, 0,
                            [](S& s, Init& init, CounterRng& rng, In& in) {
    Tensor w = s.add("fc.weight", {4, 6, 1, 1}, ParamKind::FcWeight);
    Tensor b = s.add("fc.bias", {1, 4, 1, 1}, ParamKind::Bias);
    in.push_back(random_tensor({5, 6, 1, 1}, rng));
    return std::function<Tensor()>([w, b, x = in[0]] { return ops::fully_connected(x, w, b); });
  }));
  out.push_back(check_block("batch_norm", seed, tol, 0, [](S& s, Init&, CounterRng& rng, In& in) {
    BatchNorm bn(s, "bn", 2);
    in.push_back(random_tensor({2, 2, 3, 3}, rng));
    return std::function<Tensor()>([bn, x = in[0]] { return bn.forward(x, Mode::Train); });
  }));
  out.push_back(check_block("elementwise", seed, tol, 0, [](S&, Init&, CounterRng& rng, In& in) {
    in.push_back(random_tensor({2, 2, 4, 4}, rng));
    in.push_back(random_tensor({2, 2, 4, 4}, rng));
    Tensor mask(Shape{2, 2, 4, 4});
    for (Real& v : mask.data()) v = rng.bernoulli(0.5) ? 1 : 0;
    return std::function<Tensor()>([a = in[0], b = in[1], mask] {
      Tensor p = ops::mul(ops::sigmoid(a), b);
      Tensor q = ops::leaky_relu(ops::sub(a, b), 0.2);
      Tensor r = ops::relu(ops::add(a, ops::scale(b, 0.5)));
      Tensor u = ops::where(mask, ops::clamp_min(a, -0.3), b);
      Tensor h = ops::huber_elem(ops::scale(a, 3.0), b, 1.0);
      Tensor e = ops::abs_diff(a, b);
      Tensor cat = ops::concat_channels({p, q, r, u, h, e});
      Tensor dv = ops::diff_vertical(cat);
      Tensor dh = ops::diff_horizontal(cat);
      return ops::concat_channels(
          {ops::reshape(cat, {2, 16, 4, 3}), ops::reshape(dv, {2, 12, 4, 3}), dh});
    });
  }));
  out.push_back(check_block("vconv", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    VConv v(s, "v", 3, 4, 3, 2, init);
    in.push_back(random_tensor({2, 3, 8, 8}, rng));
    return std::function<Tensor()>([v, x = in[0]] { return v.forward(x, Mode::Train); });
  }));
  out.push_back(check_block("gconv", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    GConv g(s, "g", 3, 4, 3, 1, init);
    in.push_back(random_tensor({2, 3, 8, 8}, rng));
    return std::function<Tensor()>([g, x = in[0]] { return g.forward(x, Mode::Train); });
  }));
  out.push_back(check_block("de_gconv", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    DeGConv g(s, "dg", 4, 2, 3, 2, init);
    in.push_back(random_tensor({2, 4, 4, 4}, rng));
    return std::function<Tensor()>([g, x = in[0]] { return g.forward(x, Mode::Train); });
  }));
  out.push_back(check_block("contextual_attention", seed, tol, 0,
                            [](S& s, Init& init, CounterRng& rng, In& in) {
    ContextualAttention ca(s, "ca", CaConfig{16, 2}, init);
    in.push_back(random_tensor({2, 3, 4, 4}, rng));
    return std::function<Tensor()>([ca, x = in[0]] { return ca.forward(x); });
  }));
  out.push_back(check_block("ag_gconv", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    AgGConv g(s, "agg", 2, 4, 3, 4, 4, 4, init);
    in.push_back(random_tensor({2, 2, 8, 8}, rng));
    in.push_back(random_tensor({2, 4, 4, 4}, rng));
    return std::function<Tensor()>(
        [g, d = in[0], c = in[1]] { return g.forward(d, c, Mode::Train); });
  }));
  out.push_back(check_block("ag_sc", seed, tol, 0, [](S& s, Init& init, CounterRng& rng, In& in) {
    AgSc a(s, "agsc", 3, 3, init);
    in.push_back(random_tensor({2, 3, 4, 4}, rng));
    in.push_back(random_tensor({2, 3, 4, 4}, rng));
    return std::function<Tensor()>(
        [a, c = in[0], d = in[1]] { return a.forward(c, d, Mode::Train); });
  }));
  out.push_back(check_block("losses", seed, tol, 0, [](S&, Init&, CounterRng& rng, In& in) {
    in.push_back(random_tensor({2, 1, 8, 8}, rng, 0.0, 4.0));
    Tensor gt(Shape{2, 1, 8, 8});
    for (Real& v : gt.data()) v = rng.uniform(0.5, 3.5);
    return std::function<Tensor()>([pred = in[0], gt] {
      // Scalar already; the outer projection just rescales it.
      return total_loss(pred, gt, LossWeights{0.7, 0.3, 1.0});
    });
  }));

  {
    // End-to-end: the full scheme-G pipeline on a 16x16 input. Parameters are
    // sampled a few entries per tensor to stay within the time budget.
    ModelConfig cfg;
    cfg.m = 2;
    cfg.c0 = 2;
    cfg.height = 16;
    cfg.width = 16;
    cfg.prefill_channels = 4;
    cfg.scheme = Scheme::G;
    AggNet model(cfg, seed);
    CounterRng rng(derive_seed(seed, 0x6e2e));
    randomize(model.params(), rng);
    Batch b{Tensor(Shape{2, 1, 16, 16}), Tensor(Shape{2, 1, 16, 16}), Tensor(Shape{2, 3, 16, 16}),
            Tensor(Shape{2, 1, 16, 16})};
    for (std::size_t i = 0; i < b.raw.size(); ++i) {
      b.gt[i] = rng.uniform(0.5, 8.0);
      const bool valid = rng.bernoulli(0.7);
      b.valid[i] = valid ? 1 : 0;
      b.raw[i] = valid ? b.gt[i] : 0;
    }
    for (Real& v : b.rgb.data()) v = rng.uniform(0.0, 1.0);
    GradcheckOptions opts;
    opts.max_entries = 4;
    opts.seed = rng.next_u64();
    const auto report = gradcheck(
        [&] { return total_loss(model.forward(b, Mode::Train), b.gt, cfg.loss); },
        trainable(model.params()), opts);
    out.push_back(finish("model_scheme_g", report, tol));
  }
  return out;
}

}  // namespace aggnet

#endif  // AGGNET_DOUBLE
