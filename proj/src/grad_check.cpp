#include "etd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "etd/domain.hpp"

namespace etd::tensor {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Array>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Array& a : inputs) vars.push_back(tape.borrow(a, false));
    const Var out = f(tape, vars);
    const Array& v = tape.value(out);
    if (v.size() != 1) throw ShapeError("grad_check: function must return a scalar, got " + shape_string(v.shape()));
    return v[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Array>& inputs, const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    for (const Array& a : inputs) {
        if (!a.all_finite()) throw NumericError("grad_check: non-finite input");
    }

    std::vector<Array> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Array& a : inputs) vars.push_back(tape.borrow(a, true));
        const Var out = f(tape, vars);
        tape.backward(out);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }

    std::mt19937_64 rng(opts.seed);
    std::vector<Array> work = inputs;
    GradCheckResult res;
    for (std::size_t in = 0; in < work.size(); ++in) {
        std::vector<std::size_t> coords(work[in].size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opts.max_coords_per_input > 0 && coords.size() > opts.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.max_coords_per_input);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            const double orig = work[in][c];
            auto at = [&](double offset) {
                work[in][c] = orig + offset;
                const double y = evaluate(f, work);
                if (!std::isfinite(y)) throw NumericError("grad_check: non-finite function value");
                return y;
            };
            const double h = opts.step;
            double numeric = 0.0;
            if (opts.five_point) {
                numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12.0 * h);
            } else {
                numeric = (at(h) - at(-h)) / (2.0 * h);
            }
            work[in][c] = orig;

            const double a = analytic[in][c];
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            ++res.coords_checked;
            if (err > res.max_rel_error || res.coords_checked == 1) {
                res.max_rel_error = err;
                res.worst_input = in;
                res.worst_coord = c;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

}  // namespace etd::tensor
