#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etd::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);

/// Thrown when operand shapes disagree; the message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool all_finite() const;
    void fill(double v);

    friend bool operator==(const Array&, const Array&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

class Tape;

/// Backward rule: receives the gradient of the node's output and scatters it
/// into the gradient buffers of the node's inputs.
using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Every recorded value is checked for NaN/Inf; a non-finite result throws
/// etd::NumericError naming the op and the current stage label.
class Tape {
public:
    Var input(Array value, bool requires_grad = true);
    /// Leaf whose value lives outside the tape; it must outlive the tape.
    Var borrow(const Array& value, bool requires_grad = true);
    Var constant(Array value) { return input(std::move(value), false); }

    Var record(std::string_view op, std::initializer_list<Var> inputs, Array value, BackwardFn backward);
    Var record(std::string_view op, const std::vector<Var>& inputs, Array value, BackwardFn backward);

    const Array& value(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::string_view op(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient after backward(); zeros when the node was not reached.
    Array grad(Var v) const;
    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.shape().empty(); }

    /// Gradient buffer for accumulation inside backward rules, or nullptr when
    /// the node does not require a gradient.
    Array* grad_target(Var v);

    /// Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse order.
    void backward(Var loss);

    void set_stage(std::string stage) { stage_ = std::move(stage); }
    const std::string& stage() const { return stage_; }

    /// Smallest distance of any relu input from 0 or of any pooling window's
    /// maximum from its runner-up seen so far. Infinity when there were none.
    double kink_margin() const { return kink_margin_; }
    void note_kink(double distance) { kink_margin_ = std::min(kink_margin_, distance); }

private:
    struct Node {
        std::string_view op;
        std::vector<std::size_t> inputs;
        Array value;
        const Array* external = nullptr;
        Array grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    void check_finite(std::string_view op, const Array& a) const;

    std::vector<Node> nodes_;
    std::string stage_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
};

// Elementwise ------------------------------------------------------------

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var sum(Tape& t, Var a);

// Matrix ------------------------------------------------------------------

/// x[n,d_in] * W[d_in,d_out] + b[d_out]; pass an invalid Var to omit the bias.
Var linear(Tape& t, Var x, Var w, Var b);
/// a[n,k] * b[k,m]
Var matmul(Tape& t, Var a, Var b);
/// a[n,k] * b[m,k]^T
Var matmul_nt(Tape& t, Var a, Var b);

// Layout ------------------------------------------------------------------

Var reshape(Tape& t, Var a, Shape shape);
/// [n,m] -> [m,n]
Var transpose(Tape& t, Var a);
Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t len);
Var slice_rows(Tape& t, Var x, std::size_t start, std::size_t len);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
/// Mean over rows: [n,d] -> [d].
Var mean_rows(Tape& t, Var x);

// Convolution and pooling -------------------------------------------------

/// Stride-1 unpadded cross-correlation: x[C_in,H,W], k[C_out,C_in,kh,kw], b[C_out].
Var conv2d_valid(Tape& t, Var x, Var kernels, Var bias);

struct Pooled {
    Var out;
    // Flat index into the input of the element selected for each output.
    std::vector<std::size_t> argmax;
};

/// Max over time windows of x[C,R,T]; ties resolve to the lowest index.
Pooled maxpool_time(Tape& t, Var x, std::size_t window, std::size_t stride);

// Normalization and losses ------------------------------------------------

/// Row-wise softmax of x[n,k] (or a single row x[k]).
Var softmax(Tape& t, Var x);

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization of x[n,d] with scale gamma[d] and shift beta[d].
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = kLayerNormEps);

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy over probs[n,2] using the class-1 column.
Var cross_entropy(Tape& t, Var probs, std::span<const int> labels);

// Plain (tape-free) helpers ------------------------------------------------

std::vector<double> softmax_values(std::span<const double> z);

}  // namespace etd::tensor
