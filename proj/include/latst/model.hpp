#pragma once

#include <string>
#include <utility>
#include <vector>

#include "latst/attention.hpp"
#include "latst/tensor.hpp"

namespace latst {

enum class FfnActivation { prelu, relu, gelu };

struct ModelConfig {
    std::size_t channels = 1;
    std::size_t lookback = 336;
    std::size_t horizon = 96;
    std::size_t patch_len = 16;
    std::size_t patch_stride = 8;
    std::size_t model_dim = 16;
    std::size_t ffn_dim = 32;
    std::size_t num_heads = 4;
    FfnActivation ffn_activation = FfnActivation::prelu;
    bool logit_smoothing = true;
    SoftmaxKind softmax_kind = SoftmaxKind::stable;
    bool revin_affine = true;
    double revin_eps = 1e-5;
    bool use_positional_embedding = true;
    double dropout = 0.0;       // token embedding, FFN hidden, and head dropout
    double attn_dropout = 0.0;  // attention probability dropout

    std::size_t token_count() const;
    AttentionConfig attention_config() const;
    void validate() const;
};

// All trainable tensors. for_each visits them in a fixed order shared by the
// optimizer state and the checkpoint format.
struct ModelParams {
    Tensor revin_gamma, revin_beta;      // [C]
    Tensor patch_embed_w, patch_embed_b; // [patch_len x model_dim], [model_dim]
    Tensor pos_embed;                    // [token_count x model_dim]
    AttentionParams attention;
    Tensor ln1_scale, ln1_offset;        // [model_dim]
    Tensor ln2_scale, ln2_offset;
    Tensor ffn_w1, ffn_b1;               // [model_dim x ffn_dim], [ffn_dim]
    Tensor ffn_w2, ffn_b2;               // [ffn_dim x model_dim], [model_dim]
    Tensor prelu_slopes;                 // [ffn_dim]
    Tensor head_w, head_b;               // [(token_count*model_dim) x horizon], [horizon]

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    void set_requires_grad(bool value);
    void zero_grad();
    ModelParams clone() const;
    bool all_finite() const;
};

struct RevinStats {
    Tensor mean;  // [batch x C]
    Tensor std;   // [batch x C], sqrt(var + eps), strictly positive
};

// Per instance and channel over the lookback axis: (x - mean) / sqrt(var +
// eps), then gamma * . + beta when the affine is enabled.
std::pair<Tensor, RevinStats> revin_normalize(const Tensor& x, const ModelConfig& cfg,
                                              const ModelParams& params);

// Inverse affine then y * std + mean broadcast over the horizon axis. stats
// must come from the matching revin_normalize call.
Tensor revin_denormalize(const Tensor& y_norm, const RevinStats& stats, const ModelConfig& cfg,
                         const ModelParams& params);

// Channel-independent patch tokens: [batch x C x L] ->
// [(batch*C) x token_count x patch_len]; windows start at multiples of
// patch_stride, trailing remainder dropped.
Tensor patchify(const Tensor& x_norm, const ModelConfig& cfg);

struct ForecastDiagnostics {
    Tensor attention_probs;  // [(batch*C) x heads x tokens x tokens]
    EntropyStats entropy;
    double max_abs_logit = 0.0;
    bool nonfinite_probs = false;
};

struct ForecastOutput {
    Tensor y_hat;  // [batch x C x horizon]
    ForecastDiagnostics diagnostics;
};

// Full pipeline: RevIN -> patchify -> embed (+ positional) -> pre-norm
// attention block -> pre-norm FFN block -> flatten tokens -> linear head ->
// RevIN denormalize.
ForecastOutput latst_forward(const Tensor& x, const ModelConfig& cfg, const ModelParams& params,
                             bool training, Rng* dropout_rng = nullptr);

// Uniform +-sqrt(1/fan_in) projections, N(0, 0.02^2) positional embedding,
// PReLU slopes 0.25, RevIN gamma 1 / beta 0, layer-norm scale 1 / offset 0.
// Deterministic for a fixed seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace latst
