#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aggnet/tensor.hpp"

AGGNET_BEGIN_NAMESPACE

struct GradcheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  /// Entries skipped because a kink (ReLU, clamp, |.|) lies within +-h, where
  /// a finite difference does not estimate the derivative.
  std::size_t skipped = 0;
};

struct GradcheckOptions {
  double h = 1e-5;
  /// Entries sampled per tensor; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;
  /// Absolute floor of the relative-error denominator.
  double floor = 1e-6;
};

/// Compares the analytic gradient of the scalar `loss()` with central finite
/// differences for every entry (or a sample) of every tensor in `wrt`.
/// `loss` must recompute from the current values of `wrt` on each call.
/// Error per entry: |a - n| / max(|a|, |n|, floor).
GradcheckReport gradcheck(const std::function<Tensor()>& loss, const std::vector<Tensor>& wrt,
                          const GradcheckOptions& options = {});

/// sum(y * r) for a fixed random r: a scalar probe with a generic cotangent.
Tensor random_projection(const Tensor& y, std::uint64_t seed);

AGGNET_END_NAMESPACE
