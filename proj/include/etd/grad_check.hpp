#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "etd/tensor.hpp"

namespace etd::tensor {

/// Scalar-valued function of leaf variables, re-run on a fresh tape per evaluation.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckOptions {
    double step = 1e-5;
    // Inputs larger than this are checked on a random subsample of this many
    // coordinates; 0 checks every coordinate.
    std::size_t max_coords_per_input = 0;
    // Fourth-order stencil over x +- h and x +- 2h instead of plain central differences.
    bool five_point = false;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of f against central differences.
///
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Array>& inputs,
                           const GradCheckOptions& opts = {});

}  // namespace etd::tensor
