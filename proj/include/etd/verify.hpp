#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace etd::verify {

/// Worst finite-difference disagreement of one kernel over several random draws.
struct OpCheck {
    std::string op;
    double max_rel_error = 0.0;
    double threshold = 0.0;
    std::size_t seeds = 0;
    std::size_t coords = 0;
    // Gradients at the worst coordinate.
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed() const { return max_rel_error < threshold; }
};

/// Gradient checks of every detector kernel plus the full loss, each over
/// `n_seeds` random shapes and values starting at `base_seed`.
std::vector<OpCheck> run_gradient_suite(std::size_t n_seeds, std::uint64_t base_seed = 1);

}  // namespace etd::verify
