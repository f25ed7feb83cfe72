// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "jpcc/autograd.hpp"

namespace jpcc {

// A tensor whose analytic gradient is compared against central differences.
// `value` is perturbed in place; `grad` is where backward leaves its gradient.
struct GradTarget {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  size_t entries = 0;
  size_t skipped = 0;  // entries next to a non-differentiable point
};

// Non-scalar outputs are reduced with fixed random weights. At most
// `max_entries` entries per target are differenced (chosen at random); the
// error of a target is |g_a - g_n| / max(|g_a|, |g_n|) over those entries
// (2-norms), zero when both norms are below 1e-10. Entries whose one-sided
// differences still disagree at step/256 sit on a kink and are skipped.
GradCheckResult check_gradients(const std::string& name, const std::function<Var(Tape*)>& f,
                                const std::vector<GradTarget>& targets, std::mt19937_64& rng,
                                size_t max_entries = 24, double step = 1e-4);

// Every differentiable op and layer kind, the residual blocks, the focal
// loss, the rate proxy and the end-to-end coding loss on random blocks of
// `points` voxels.
std::vector<GradCheckResult> gradient_suite(uint64_t seed, size_t points = 30);

}  // namespace jpcc
