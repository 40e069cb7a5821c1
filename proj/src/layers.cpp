#include "etd/layers.hpp"

#include <cmath>
#include <string>

namespace etd::tensor {

Var lstm_forward(Tape& t, Var x_seq, const LstmVars& p, Var h0, Var c0) {
    const Array& xv = t.value(x_seq);
    const Array& whh = t.value(p.w_hh);
    if (xv.rank() != 2 || whh.rank() != 2) {
        throw ShapeError("lstm_forward: expected x_seq [T,d_in] and w_hh [d_h,4*d_h], got " +
                         shape_string(xv.shape()) + " and " + shape_string(whh.shape()));
    }
    const std::size_t steps = xv.dim(0);
    const std::size_t dh = whh.dim(0);
    if (whh.dim(1) != 4 * dh) {
        throw ShapeError("lstm_forward: w_hh shape " + shape_string(whh.shape()) + " is not [d_h,4*d_h]");
    }
    if (t.value(p.w_ih).rank() != 2 || t.value(p.w_ih).dim(1) != 4 * dh) {
        throw ShapeError("lstm_forward: w_ih shape " + shape_string(t.value(p.w_ih).shape()) +
                         " does not match hidden size " + std::to_string(dh));
    }
    if (steps == 0) throw ShapeError("lstm_forward: empty sequence");

    Var h = h0.valid() ? h0 : t.constant(Array({1, dh}));
    Var c = c0.valid() ? c0 : t.constant(Array({1, dh}));
    if (t.value(h).shape() != Shape{1, dh} || t.value(c).shape() != Shape{1, dh}) {
        throw ShapeError("lstm_forward: initial state must have shape " + shape_string({1, dh}));
    }

    // Input contributions for every step at once: [T, 4*d_h].
    const Var xw = linear(t, x_seq, p.w_ih, p.bias);
    std::vector<Var> states;
    states.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const Var gates = add(t, slice_rows(t, xw, s, 1), matmul(t, h, p.w_hh));
        const Var in = sigmoid(t, slice_cols(t, gates, 0, dh));
        const Var forget = sigmoid(t, slice_cols(t, gates, dh, dh));
        const Var cand = tanh(t, slice_cols(t, gates, 2 * dh, dh));
        const Var out = sigmoid(t, slice_cols(t, gates, 3 * dh, dh));
        c = add(t, mul(t, forget, c), mul(t, in, cand));
        h = mul(t, out, tanh(t, c));
        states.push_back(h);
    }
    return concat_rows(t, states);
}

Var multihead_self_attention(Tape& t, Var h, std::size_t n_heads, const AttentionVars& p,
                             std::vector<Array>* weights) {
    const Array& hv = t.value(h);
    if (hv.rank() != 2) throw ShapeError("multihead_self_attention: expected [T,d], got " + shape_string(hv.shape()));
    const std::size_t d = hv.dim(1);
    if (n_heads == 0 || d % n_heads != 0) {
        throw ShapeError("multihead_self_attention: model width " + std::to_string(d) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
    }
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const Var q = linear(t, h, p.wq, p.bq);
    const Var k = linear(t, h, p.wk, p.bk);
    const Var v = linear(t, h, p.wv, p.bv);
    std::vector<Var> heads;
    heads.reserve(n_heads);
    if (weights) weights->clear();
    for (std::size_t head = 0; head < n_heads; ++head) {
        const std::size_t off = head * dh;
        const Var qh = slice_cols(t, q, off, dh);
        const Var kh = slice_cols(t, k, off, dh);
        const Var vh = slice_cols(t, v, off, dh);
        const Var attn = softmax(t, scale(t, matmul_nt(t, qh, kh), inv_sqrt));
        if (weights) weights->push_back(t.value(attn));
        heads.push_back(matmul(t, attn, vh));
    }
    return linear(t, concat_cols(t, heads), p.wo, p.bo);
}

Var encoder_layer(Tape& t, Var x, std::size_t n_heads, const EncoderVars& p) {
    const Var attn = multihead_self_attention(t, x, n_heads, p.attn);
    const Var y = layer_norm(t, add(t, x, attn), p.ln1_gamma, p.ln1_beta);
    const Var ff = linear(t, relu(t, linear(t, y, p.ff1_w, p.ff1_b)), p.ff2_w, p.ff2_b);
    return layer_norm(t, add(t, y, ff), p.ln2_gamma, p.ln2_beta);
}

Array sinusoidal_positions(std::size_t T, std::size_t d) {
    Array pe({T, d});
    for (std::size_t pos = 0; pos < T; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) * rate;
            pe[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

}  // namespace etd::tensor
