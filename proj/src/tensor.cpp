#include "etd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "etd/domain.hpp"

namespace etd::tensor {

std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

std::size_t product(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_rank(std::string_view op, const Array& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(a.shape()));
    }
}

void add_into(Array& dst, const Array& src) {
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

template <class F, class DF>
Var unary(Tape& t, std::string_view op, Var a, F f, DF df) {
    const Array& av = t.value(a);
    Array out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return t.record(op, {a}, std::move(out), [a, df](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            const Array& x = tp.value(a);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i]);
        }
    });
}

}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw ShapeError("array shape " + shape_string(shape_) + " does not match buffer length " +
                         std::to_string(data_.size()));
    }
}

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// Tape ----------------------------------------------------------------------

Var Tape::input(Array value, bool requires_grad) {
    check_finite("input", value);
    Node n;
    n.op = "input";
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::borrow(const Array& value, bool requires_grad) {
    check_finite("input", value);
    Node n;
    n.op = "input";
    n.external = &value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::record(std::string_view op, std::initializer_list<Var> inputs, Array value, BackwardFn backward) {
    return record(op, std::vector<Var>(inputs), std::move(value), std::move(backward));
}

Var Tape::record(std::string_view op, const std::vector<Var>& inputs, Array value, BackwardFn backward) {
    check_finite(op, value);
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (Var v : inputs) {
        if (v.id >= nodes_.size()) throw std::out_of_range(std::string(op) + ": input refers to a later node");
        n.inputs.push_back(v.id);
        n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Array& Tape::value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.value;
}

Array Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.shape().empty()) return Array(value(v).shape());
    return n.grad;
}

Array* Tape::grad_target(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.shape().empty()) n.grad = Array((n.external ? *n.external : n.value).shape());
    return &n.grad;
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad = Array();
    Array* seed = grad_target(loss);
    if (!seed) return;
    (*seed)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && !n.grad.shape().empty()) n.backward(*this, n.grad);
    }
}

void Tape::check_finite(std::string_view op, const Array& a) const {
    if (!a.all_finite()) {
        std::string msg = "non-finite value produced by " + std::string(op);
        if (!stage_.empty()) msg += " in stage '" + stage_ + "'";
        throw NumericError(msg);
    }
}

// Elementwise ---------------------------------------------------------------

Var add(Tape& t, Var a, Var b) {
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    if (av.shape() != bv.shape()) shape_mismatch("add", av.shape(), bv.shape());
    Array out = av;
    add_into(out, bv);
    return t.record("add", {a, b}, std::move(out), [a, b](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) add_into(*ga, g);
        if (Array* gb = tp.grad_target(b)) add_into(*gb, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    if (av.shape() != bv.shape()) shape_mismatch("sub", av.shape(), bv.shape());
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.record("sub", {a, b}, std::move(out), [a, b](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) add_into(*ga, g);
        if (Array* gb = tp.grad_target(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
    Array out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return t.record("mul", {a, b}, std::move(out), [a, b](Tape& tp, const Array& g) {
        const Array& x = tp.value(a);
        const Array& y = tp.value(b);
        if (Array* ga = tp.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
        }
        if (Array* gb = tp.grad_target(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
        }
    });
}

Var scale(Tape& t, Var a, double c) {
    const Array& av = t.value(a);
    Array out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    return t.record("scale", {a}, std::move(out), [a, c](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c;
        }
    });
}

Var sigmoid(Tape& t, Var a) {
    const Array& av = t.value(a);
    Array out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
    const Var self{t.size()};
    return t.record("sigmoid", {a}, std::move(out), [a, self](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            const Array& y = tp.value(self);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Var tanh(Tape& t, Var a) {
    const Array& av = t.value(a);
    Array out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
    const Var self{t.size()};
    return t.record("tanh", {a}, std::move(out), [a, self](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            const Array& y = tp.value(self);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
        }
    });
}

Var relu(Tape& t, Var a) {
    for (double x : t.value(a).vec()) t.note_kink(std::abs(x));
    return unary(
        t, "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sum(Tape& t, Var a) {
    const Array& av = t.value(a);
    const double s = std::accumulate(av.vec().begin(), av.vec().end(), 0.0);
    return t.record("sum", {a}, Array::scalar(s), [a](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
        }
    });
}

// Matrix --------------------------------------------------------------------

Var linear(Tape& t, Var x, Var w, Var b) {
    const Array& xv = t.value(x);
    const Array& wv = t.value(w);
    require_rank("linear", xv, 2);
    require_rank("linear", wv, 2);
    if (xv.dim(1) != wv.dim(0)) shape_mismatch("linear", xv.shape(), wv.shape());
    const std::size_t n = xv.dim(0), din = xv.dim(1), dout = wv.dim(1);
    if (b.valid()) {
        const Array& bv = t.value(b);
        if (bv.rank() != 1 || bv.dim(0) != dout) shape_mismatch("linear bias", wv.shape(), bv.shape());
    }

    Array out({n, dout});
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * dout;
        if (b.valid()) std::copy_n(t.value(b).data(), dout, o);
        for (std::size_t k = 0; k < din; ++k) {
            const double xik = xv[i * din + k];
            const double* wr = wv.data() + k * dout;
            for (std::size_t j = 0; j < dout; ++j) o[j] += xik * wr[j];
        }
    }
    std::vector<Var> inputs{x, w};
    if (b.valid()) inputs.push_back(b);
    return t.record("linear", inputs, std::move(out), [x, w, b, n, din, dout](Tape& tp, const Array& g) {
        const Array& xv = tp.value(x);
        const Array& wv = tp.value(w);
        if (Array* gx = tp.grad_target(x)) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* gi = g.data() + i * dout;
                for (std::size_t k = 0; k < din; ++k) {
                    const double* wr = wv.data() + k * dout;
                    double s = 0.0;
                    for (std::size_t j = 0; j < dout; ++j) s += gi[j] * wr[j];
                    (*gx)[i * din + k] += s;
                }
            }
        }
        if (Array* gw = tp.grad_target(w)) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* gi = g.data() + i * dout;
                for (std::size_t k = 0; k < din; ++k) {
                    const double xik = xv[i * din + k];
                    double* gwr = gw->data() + k * dout;
                    for (std::size_t j = 0; j < dout; ++j) gwr[j] += xik * gi[j];
                }
            }
        }
        if (b.valid()) {
            if (Array* gb = tp.grad_target(b)) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += g[i * dout + j];
                }
            }
        }
    });
}

Var matmul(Tape& t, Var a, Var b) { return linear(t, a, b, Var{}); }

Var matmul_nt(Tape& t, Var a, Var b) {
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    require_rank("matmul_nt", av, 2);
    require_rank("matmul_nt", bv, 2);
    if (av.dim(1) != bv.dim(1)) shape_mismatch("matmul_nt", av.shape(), bv.shape());
    const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(0);
    Array out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += av[i * k + c] * bv[j * k + c];
            out[i * m + j] = s;
        }
    }
    return t.record("matmul_nt", {a, b}, std::move(out), [a, b, n, k, m](Tape& tp, const Array& g) {
        const Array& av = tp.value(a);
        const Array& bv = tp.value(b);
        Array* ga = tp.grad_target(a);
        Array* gb = tp.grad_target(b);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double gij = g[i * m + j];
                if (gij == 0.0) continue;
                for (std::size_t c = 0; c < k; ++c) {
                    if (ga) (*ga)[i * k + c] += gij * bv[j * k + c];
                    if (gb) (*gb)[j * k + c] += gij * av[i * k + c];
                }
            }
        }
    });
}

// Layout --------------------------------------------------------------------

Var reshape(Tape& t, Var a, Shape shape) {
    const Array& av = t.value(a);
    if (product(shape) != av.size()) shape_mismatch("reshape", av.shape(), shape);
    Array out(std::move(shape), av.vec());
    return t.record("reshape", {a}, std::move(out), [a](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
    });
}

Var transpose(Tape& t, Var a) {
    const Array& av = t.value(a);
    require_rank("transpose", av, 2);
    const std::size_t n = av.dim(0), m = av.dim(1);
    Array out({m, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
    }
    return t.record("transpose", {a}, std::move(out), [a, n, m](Tape& tp, const Array& g) {
        if (Array* ga = tp.grad_target(a)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) (*ga)[i * m + j] += g[j * n + i];
            }
        }
    });
}

Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t len) {
    const Array& xv = t.value(x);
    require_rank("slice_cols", xv, 2);
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    if (start + len > d) throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                                          std::to_string(start + len) + ") out of " + shape_string(xv.shape()));
    Array out({n, len});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(xv.data() + i * d + start, len, out.data() + i * len);
    }
    return t.record("slice_cols", {x}, std::move(out), [x, start, len, n, d](Tape& tp, const Array& g) {
        if (Array* gx = tp.grad_target(x)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < len; ++j) (*gx)[i * d + start + j] += g[i * len + j];
            }
        }
    });
}

Var slice_rows(Tape& t, Var x, std::size_t start, std::size_t len) {
    const Array& xv = t.value(x);
    require_rank("slice_rows", xv, 2);
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    if (start + len > n) throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " +
                                          std::to_string(start + len) + ") out of " + shape_string(xv.shape()));
    Array out({len, d});
    std::copy_n(xv.data() + start * d, len * d, out.data());
    return t.record("slice_rows", {x}, std::move(out), [x, start, d](Tape& tp, const Array& g) {
        if (Array* gx = tp.grad_target(x)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[start * d + i] += g[i];
        }
    });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t n = t.value(parts[0]).dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (Var p : parts) {
        const Array& pv = t.value(p);
        require_rank("concat_cols", pv, 2);
        if (pv.dim(0) != n) shape_mismatch("concat_cols", t.value(parts[0]).shape(), pv.shape());
        widths.push_back(pv.dim(1));
        total += pv.dim(1);
    }
    Array out({n, total});
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Array& pv = t.value(parts[p]);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(pv.data() + i * widths[p], widths[p], out.data() + i * total + off);
        }
        off += widths[p];
    }
    return t.record("concat_cols", parts, std::move(out), [parts, widths, n, total](Tape& tp, const Array& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            if (Array* gp = tp.grad_target(parts[p])) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < widths[p]; ++j) (*gp)[i * widths[p] + j] += g[i * total + off + j];
                }
            }
            off += widths[p];
        }
    });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t d = t.value(parts[0]).dim(1);
    std::size_t rows = 0;
    for (Var p : parts) {
        const Array& pv = t.value(p);
        require_rank("concat_rows", pv, 2);
        if (pv.dim(1) != d) shape_mismatch("concat_rows", t.value(parts[0]).shape(), pv.shape());
        rows += pv.dim(0);
    }
    Array out({rows, d});
    std::size_t off = 0;
    for (Var p : parts) {
        const Array& pv = t.value(p);
        std::copy_n(pv.data(), pv.size(), out.data() + off);
        off += pv.size();
    }
    return t.record("concat_rows", parts, std::move(out), [parts](Tape& tp, const Array& g) {
        std::size_t off = 0;
        for (Var p : parts) {
            const std::size_t sz = tp.value(p).size();
            if (Array* gp = tp.grad_target(p)) {
                for (std::size_t i = 0; i < sz; ++i) (*gp)[i] += g[off + i];
            }
            off += sz;
        }
    });
}

Var mean_rows(Tape& t, Var x) {
    const Array& xv = t.value(x);
    require_rank("mean_rows", xv, 2);
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    if (n == 0) throw ShapeError("mean_rows: no rows");
    Array out({d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
    return t.record("mean_rows", {x}, std::move(out), [x, n, d](Tape& tp, const Array& g) {
        if (Array* gx = tp.grad_target(x)) {
            const double inv = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) (*gx)[i * d + j] += g[j] * inv;
            }
        }
    });
}

// Convolution and pooling ---------------------------------------------------

Var conv2d_valid(Tape& t, Var x, Var kernels, Var bias) {
    const Array& xv = t.value(x);
    const Array& kv = t.value(kernels);
    const Array& bv = t.value(bias);
    require_rank("conv2d_valid input", xv, 3);
    require_rank("conv2d_valid kernels", kv, 4);
    const std::size_t cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    const std::size_t cout = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
    if (kv.dim(1) != cin) shape_mismatch("conv2d_valid", xv.shape(), kv.shape());
    if (kh > H || kw > W) {
        throw ShapeError("conv2d_valid: kernel " + shape_string(kv.shape()) + " larger than input " +
                         shape_string(xv.shape()));
    }
    if (bv.rank() != 1 || bv.dim(0) != cout) shape_mismatch("conv2d_valid bias", kv.shape(), bv.shape());

    const std::size_t oh = H - kh + 1, ow = W - kw + 1;
    Array out({cout, oh, ow});
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t c = 0; c < ow; ++c) {
                double s = bv[o];
                for (std::size_t i = 0; i < cin; ++i) {
                    for (std::size_t a = 0; a < kh; ++a) {
                        const double* xr = xv.data() + (i * H + r + a) * W + c;
                        const double* kr = kv.data() + ((o * cin + i) * kh + a) * kw;
                        for (std::size_t b = 0; b < kw; ++b) s += xr[b] * kr[b];
                    }
                }
                out[(o * oh + r) * ow + c] = s;
            }
        }
    }
    return t.record("conv2d_valid", {x, kernels, bias}, std::move(out),
                    [x, kernels, bias, cin, H, W, cout, kh, kw, oh, ow](Tape& tp, const Array& g) {
                        const Array& xv = tp.value(x);
                        const Array& kv = tp.value(kernels);
                        Array* gx = tp.grad_target(x);
                        Array* gk = tp.grad_target(kernels);
                        Array* gb = tp.grad_target(bias);
                        for (std::size_t o = 0; o < cout; ++o) {
                            for (std::size_t r = 0; r < oh; ++r) {
                                for (std::size_t c = 0; c < ow; ++c) {
                                    const double go = g[(o * oh + r) * ow + c];
                                    if (gb) (*gb)[o] += go;
                                    for (std::size_t i = 0; i < cin; ++i) {
                                        for (std::size_t a = 0; a < kh; ++a) {
                                            const std::size_t xoff = (i * H + r + a) * W + c;
                                            const std::size_t koff = ((o * cin + i) * kh + a) * kw;
                                            for (std::size_t b = 0; b < kw; ++b) {
                                                if (gx) (*gx)[xoff + b] += go * kv[koff + b];
                                                if (gk) (*gk)[koff + b] += go * xv[xoff + b];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
}

Pooled maxpool_time(Tape& t, Var x, std::size_t window, std::size_t stride) {
    const Array& xv = t.value(x);
    require_rank("maxpool_time", xv, 3);
    if (window < 1 || stride < 1) throw ShapeError("maxpool_time: window and stride must be >= 1");
    const std::size_t C = xv.dim(0), R = xv.dim(1), T = xv.dim(2);
    if (T < window) {
        throw ShapeError("maxpool_time: window " + std::to_string(window) + " longer than input " +
                         shape_string(xv.shape()));
    }
    const std::size_t tout = (T - window) / stride + 1;
    Array out({C, R, tout});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t cr = 0; cr < C * R; ++cr) {
        for (std::size_t j = 0; j < tout; ++j) {
            std::size_t best = cr * T + j * stride;
            for (std::size_t w = 1; w < window; ++w) {
                const std::size_t idx = cr * T + j * stride + w;
                if (xv[idx] > xv[best]) best = idx;
            }
            for (std::size_t w = 0; w < window; ++w) {
                const std::size_t idx = cr * T + j * stride + w;
                // Windows of zeros from dead relus are covered by the relu margin.
                if (idx != best && !(xv[best] == 0.0 && xv[idx] == 0.0)) t.note_kink(xv[best] - xv[idx]);
            }
            out[cr * tout + j] = xv[best];
            argmax[cr * tout + j] = best;
        }
    }
    Var v = t.record("maxpool_time", {x}, std::move(out), [x, argmax](Tape& tp, const Array& g) {
        if (Array* gx = tp.grad_target(x)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[argmax[i]] += g[i];
        }
    });
    return Pooled{v, std::move(argmax)};
}

// Normalization and losses --------------------------------------------------

std::vector<double> softmax_values(std::span<const double> z) {
    std::vector<double> out(z.size());
    if (z.empty()) return out;
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        out[j] = std::exp(z[j] - m);
        s += out[j];
    }
    for (double& v : out) v /= s;
    return out;
}

Var softmax(Tape& t, Var x) {
    const Array& xv = t.value(x);
    if (xv.rank() != 1 && xv.rank() != 2) {
        throw ShapeError("softmax: expected rank 1 or 2, got " + shape_string(xv.shape()));
    }
    const std::size_t k = xv.shape().back();
    if (k == 0) throw ShapeError("softmax: empty row");
    const std::size_t rows = xv.size() / k;
    Array out(xv.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const auto row = softmax_values(xv.values().subspan(i * k, k));
        std::copy(row.begin(), row.end(), out.data() + i * k);
    }
    const Var self{t.size()};
    return t.record("softmax", {x}, std::move(out), [x, self, rows, k](Tape& tp, const Array& g) {
        if (Array* gx = tp.grad_target(x)) {
            const Array& y = tp.value(self);
            for (std::size_t i = 0; i < rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * y[i * k + j];
                for (std::size_t j = 0; j < k; ++j) (*gx)[i * k + j] += y[i * k + j] * (g[i * k + j] - dot);
            }
        }
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Array& xv = t.value(x);
    const Array& gv = t.value(gamma);
    const Array& bv = t.value(beta);
    require_rank("layer_norm", xv, 2);
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    if (gv.shape() != Shape{d}) shape_mismatch("layer_norm gamma", xv.shape(), gv.shape());
    if (bv.shape() != Shape{d}) shape_mismatch("layer_norm beta", xv.shape(), bv.shape());

    Array out({n, d});
    std::vector<double> xhat(n * d), inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = xv.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += r[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (r[j] - mean) * inv_std[i];
            out[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
        }
    }
    return t.record("layer_norm", {x, gamma, beta}, std::move(out),
                    [x, gamma, beta, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        Tape& tp, const Array& g) {
                        const Array& gv = tp.value(gamma);
                        if (Array* gg = tp.grad_target(gamma)) {
                            for (std::size_t i = 0; i < n; ++i) {
                                for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[i * d + j] * xhat[i * d + j];
                            }
                        }
                        if (Array* gb = tp.grad_target(beta)) {
                            for (std::size_t i = 0; i < n; ++i) {
                                for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[i * d + j];
                            }
                        }
                        if (Array* gx = tp.grad_target(x)) {
                            const double inv_d = 1.0 / static_cast<double>(d);
                            for (std::size_t i = 0; i < n; ++i) {
                                double mean_dx = 0.0, mean_dx_xhat = 0.0;
                                for (std::size_t j = 0; j < d; ++j) {
                                    const double dxh = g[i * d + j] * gv[j];
                                    mean_dx += dxh;
                                    mean_dx_xhat += dxh * xhat[i * d + j];
                                }
                                mean_dx *= inv_d;
                                mean_dx_xhat *= inv_d;
                                for (std::size_t j = 0; j < d; ++j) {
                                    const double dxh = g[i * d + j] * gv[j];
                                    (*gx)[i * d + j] +=
                                        inv_std[i] * (dxh - mean_dx - xhat[i * d + j] * mean_dx_xhat);
                                }
                            }
                        }
                    });
}

Var cross_entropy(Tape& t, Var probs, std::span<const int> labels) {
    const Array& pv = t.value(probs);
    require_rank("cross_entropy", pv, 2);
    const std::size_t n = pv.dim(0);
    if (pv.dim(1) != 2) throw ShapeError("cross_entropy: expected (n,2) probabilities, got " + shape_string(pv.shape()));
    if (labels.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_string(pv.shape()));
    }
    if (n == 0) throw ShapeError("cross_entropy: empty batch");

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(pv[i * 2 + 1], kProbClamp, 1.0 - kProbClamp);
        loss -= labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    loss /= static_cast<double>(n);
    std::vector<int> y(labels.begin(), labels.end());
    return t.record("cross_entropy", {probs}, Array::scalar(loss), [probs, y, n](Tape& tp, const Array& g) {
        if (Array* gp = tp.grad_target(probs)) {
            const Array& pv = tp.value(probs);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double raw = pv[i * 2 + 1];
                if (raw < kProbClamp || raw > 1.0 - kProbClamp) continue;
                const double d = y[i] ? -1.0 / raw : 1.0 / (1.0 - raw);
                (*gp)[i * 2 + 1] += g[0] * d * inv_n;
            }
        }
    });
}

}  // namespace etd::tensor
