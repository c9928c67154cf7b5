#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include "aggnet/model_config.hpp"
#include "aggnet/tensor.hpp"

AGGNET_BEGIN_NAMESPACE

/// Sum over pixels of huber(pred - gt) with threshold delta.
Tensor huber_loss(const Tensor& pred, const Tensor& gt, Real delta);

/// Sum of |g_v(pred) - g_v(gt)| + |g_h(pred) - g_h(gt)| with forward
/// differences; the last row (vertical) and last column (horizontal) have no
/// difference and contribute nothing.
Tensor edge_loss(const Tensor& pred, const Tensor& gt);

/// (lambda_delta * huber + lambda_p * edge) / pixel count.
Tensor total_loss(const Tensor& pred, const Tensor& gt, const LossWeights& weights);

inline constexpr std::array<double, 4> kDeltaThresholds = {1.10, 1.25, 1.25 * 1.25,
                                                           1.25 * 1.25 * 1.25};

struct MetricReport {
  double rmse = 0;                // meters
  double rel = 0;                 // mean |pred - gt| / gt
  std::array<double, 4> delta{};  // percentages for kDeltaThresholds
  std::size_t pixels = 0;

  /// "rmse=... rel=... d110=... d125=... d156=... d195=... pixels=..."
  std::string to_line() const;
  static MetricReport from_line(const std::string& line);
};

/// Streaming accumulator so metrics can be pooled over many images.
class MetricAccumulator {
 public:
  /// Pixels with gt <= 0, or with a zero in `mask` when provided, are skipped.
  void add(std::span<const Real> pred, std::span<const Real> gt,
           std::span<const Real> mask = {});
  std::size_t pixels() const { return count_; }
  /// Throws NumericalError("no valid pixels") when nothing was accumulated.
  MetricReport report() const;

 private:
  void add_pixel(double p, double g);
  double sq_ = 0;
  double rel_ = 0;
  std::array<std::size_t, 4> within_{};
  std::size_t count_ = 0;
};

/// Metrics over pixels where eval_mask != 0 and gt > 0. An undefined mask
/// selects every pixel with gt > 0.
MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& eval_mask = {});

AGGNET_END_NAMESPACE
