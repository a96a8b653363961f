#pragma once

#include "grasp/autodiff.hpp"

namespace grasp {

// Projection matrices of one attention layer, each D x D, bound to a tape.
struct AttentionWeights
{
    Var query;
    Var key;
    Var value;
    Var output;
};

struct AttentionResult
{
    Var output;      // L_q x D
    Tensor weights;  // heads x L_q x L_k, rows sum to one
};

// Standard multi-head cross-attention:
//   out = concat_h(softmax(Q_h K_h^T / sqrt(D / heads)) V_h) W_o
// with Q = q W_q, K = k W_k, V = v W_v.
AttentionResult multihead_cross_attention(Var q, Var k, Var v, const AttentionWeights& w, std::size_t heads);

} // namespace grasp
