#pragma once

#include <vector>

#include "etd/tensor.hpp"

namespace etd::tensor {

/// Gate weights in column blocks [input | forget | candidate | output].
struct LstmVars {
    Var w_ih;  // [d_in, 4*d_h]
    Var w_hh;  // [d_h, 4*d_h]
    Var bias;  // [4*d_h]
};

/// Runs the recurrence over x_seq[T,d_in] and returns all hidden states [T,d_h].
/// h0/c0 ([1,d_h]) default to zeros when left invalid.
Var lstm_forward(Tape& t, Var x_seq, const LstmVars& p, Var h0 = {}, Var c0 = {});

struct AttentionVars {
    Var wq, bq;
    Var wk, bk;
    Var wv, bv;
    Var wo, bo;
};

/// Scaled dot-product self-attention over h[T,d] split into n_heads heads.
/// When `weights` is non-null it receives one [T,T] attention matrix per head.
Var multihead_self_attention(Tape& t, Var h, std::size_t n_heads, const AttentionVars& p,
                             std::vector<Array>* weights = nullptr);

struct EncoderVars {
    AttentionVars attn;
    Var ln1_gamma, ln1_beta;
    Var ff1_w, ff1_b;
    Var ff2_w, ff2_b;
    Var ln2_gamma, ln2_beta;
};

/// Post-norm encoder block: LN(x + MHA(x)) followed by LN(y + FFN(y)).
Var encoder_layer(Tape& t, Var x, std::size_t n_heads, const EncoderVars& p);

/// Fixed sinusoidal position table [T,d].
Array sinusoidal_positions(std::size_t T, std::size_t d);

}  // namespace etd::tensor
