#include "aggnet/losses.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "aggnet/errors.hpp"
#include "aggnet/ops.hpp"

AGGNET_BEGIN_NAMESPACE

namespace {

void require_same(const Tensor& pred, const Tensor& gt, const char* what) {
  if (!pred.defined() || !gt.defined() || pred.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": prediction " + pred.shape().str() +
                     " and ground truth " + gt.shape().str() + " differ");
  }
}

}  // namespace

Tensor huber_loss(const Tensor& pred, const Tensor& gt, Real delta) {
  require_same(pred, gt, "huber_loss");
  return ops::sum(ops::huber_elem(pred, gt, delta));
}

Tensor edge_loss(const Tensor& pred, const Tensor& gt) {
  require_same(pred, gt, "edge_loss");
  Tensor vertical = ops::abs_diff(ops::diff_vertical(pred), ops::diff_vertical(gt));
  Tensor horizontal = ops::abs_diff(ops::diff_horizontal(pred), ops::diff_horizontal(gt));
  return ops::add(ops::sum(vertical), ops::sum(horizontal));
}

Tensor total_loss(const Tensor& pred, const Tensor& gt, const LossWeights& weights) {
  weights.validate();
  require_same(pred, gt, "total_loss");
  const Real inv_pixels = Real(1) / static_cast<Real>(pred.size());
  Tensor huber = ops::scale(huber_loss(pred, gt, static_cast<Real>(weights.huber_delta)),
                            static_cast<Real>(weights.lambda_delta) * inv_pixels);
  Tensor edge =
      ops::scale(edge_loss(pred, gt), static_cast<Real>(weights.lambda_p) * inv_pixels);
  return ops::add(huber, edge);
}

std::string MetricReport::to_line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "rmse=%.6f rel=%.6f d110=%.4f d125=%.4f d156=%.4f d195=%.4f pixels=%zu", rmse,
                rel, delta[0], delta[1], delta[2], delta[3], pixels);
  return buf;
}

MetricReport MetricReport::from_line(const std::string& line) {
  MetricReport r;
  std::istringstream in(line);
  std::string token;
  int seen = 0;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "rmse") r.rmse = std::stod(value), ++seen;
      else if (key == "rel") r.rel = std::stod(value), ++seen;
      else if (key == "d110") r.delta[0] = std::stod(value), ++seen;
      else if (key == "d125") r.delta[1] = std::stod(value), ++seen;
      else if (key == "d156") r.delta[2] = std::stod(value), ++seen;
      else if (key == "d195") r.delta[3] = std::stod(value), ++seen;
      else if (key == "pixels") r.pixels = std::stoul(value);
    } catch (const std::exception&) {
      throw ParseError("bad metric value for '" + key + "'", 0);
    }
  }
  if (seen != 6) throw ParseError("metric line is missing fields: " + line, 0);
  return r;
}

void MetricAccumulator::add_pixel(double p, double g) {
  const double e = p - g;
  sq_ += e * e;
  rel_ += std::abs(e) / g;
  const double ratio = std::max(p / g, g / p);
  for (std::size_t t = 0; t < kDeltaThresholds.size(); ++t) {
    if (ratio < kDeltaThresholds[t]) ++within_[t];
  }
  ++count_;
}

void MetricAccumulator::add(std::span<const Real> pred, std::span<const Real> gt,
                            std::span<const Real> mask) {
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size())) {
    throw ShapeError("metrics: prediction, ground truth and mask sizes differ");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0)) continue;
    if (!mask.empty() && mask[i] == Real(0)) continue;
    add_pixel(pred[i], gt[i]);
  }
}

MetricReport MetricAccumulator::report() const {
  if (count_ == 0) throw NumericalError("no valid pixels to evaluate");
  MetricReport r;
  const double n = static_cast<double>(count_);
  r.rmse = std::sqrt(sq_ / n);
  r.rel = rel_ / n;
  for (std::size_t t = 0; t < r.delta.size(); ++t) {
    r.delta[t] = 100.0 * static_cast<double>(within_[t]) / n;
  }
  r.pixels = count_;
  return r;
}

MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& eval_mask) {
  require_same(pred, gt, "evaluate");
  if (eval_mask.defined() && eval_mask.shape() != gt.shape()) {
    throw ShapeError("evaluate: mask " + eval_mask.shape().str() + " does not match " +
                     gt.shape().str());
  }
  MetricAccumulator acc;
  acc.add(pred.data(), gt.data(), eval_mask.defined() ? eval_mask.data() : std::span<const Real>{});
  return acc.report();
}

AGGNET_END_NAMESPACE
