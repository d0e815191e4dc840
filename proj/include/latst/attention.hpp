#pragma once

#include <vector>

#include "latst/numerics.hpp"
#include "latst/tensor.hpp"

namespace latst {

enum class SoftmaxKind { stable, naive };

struct AttentionConfig {
    std::size_t model_dim = 16;
    std::size_t num_heads = 4;
    bool logit_smoothing = true;  // GELU on the scaled logits before softmax
    SoftmaxKind softmax_kind = SoftmaxKind::stable;
    double attn_dropout = 0.0;

    std::size_t head_dim() const { return model_dim / num_heads; }
    void validate() const;
};

// Fused projections: one matrix per role, sliced into heads along the last
// axis. Mathematically identical to per-head matrices.
struct AttentionParams {
    Tensor w_q, b_q;  // [model_dim x model_dim], [model_dim]
    Tensor w_k, b_k;
    Tensor w_v, b_v;
    Tensor w_o, b_o;
};

struct AttentionOutput {
    Tensor out;    // [batch x tokens x model_dim]
    Tensor probs;  // [batch x heads x tokens x tokens], detached snapshot
    double max_abs_logit = 0.0;   // largest finite |logit| seen across heads
    bool nonfinite_probs = false; // naive softmax overflow indicator
};

// Scaled dot-product attention per head: logits = Q K^T / sqrt(head_dim),
// optionally GELU-smoothed, mapped to probabilities by the configured
// softmax, times V; heads concatenated and projected by w_o. Dropout applies
// to the probabilities, inverted-scaled, only when training. With the stable
// softmax a non-finite logit raises InstabilityError (cannot happen for
// finite inputs and parameters); with the naive softmax non-finite
// probabilities flow through and set nonfinite_probs.
AttentionOutput attention_forward(const Tensor& x, const AttentionConfig& cfg,
                                  const AttentionParams& params, bool training,
                                  Rng* dropout_rng = nullptr);

// Per-head Shannon entropy of attention rows, normalized by ln(tokens):
// 1 = uniform attention, 0 = fully collapsed. A single token has only the
// uniform row, reported as 1.
struct EntropyStats {
    std::vector<double> mean;  // one entry per head
    std::vector<double> min;
    std::vector<double> max;

    double overall_mean() const;
    double overall_min() const;
};

EntropyStats attention_entropy(const Tensor& probs);

}  // namespace latst
