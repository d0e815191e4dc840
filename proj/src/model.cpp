#include "latst/model.hpp"

#include <cmath>

namespace latst {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

std::size_t ModelConfig::token_count() const {
    if (patch_len > lookback) {
        throw ConfigError("patch_len " + std::to_string(patch_len) + " exceeds lookback " +
                          std::to_string(lookback));
    }
    return (lookback - patch_len) / patch_stride + 1;
}

AttentionConfig ModelConfig::attention_config() const {
    AttentionConfig acfg;
    acfg.model_dim = model_dim;
    acfg.num_heads = num_heads;
    acfg.logit_smoothing = logit_smoothing;
    acfg.softmax_kind = softmax_kind;
    acfg.attn_dropout = attn_dropout;
    return acfg;
}

void ModelConfig::validate() const {
    if (channels == 0 || lookback == 0 || horizon == 0) {
        throw ConfigError("channels, lookback, and horizon must be positive");
    }
    if (lookback < 2) throw ConfigError("lookback must be >= 2 for RevIN variance");
    if (patch_stride == 0) throw ConfigError("patch_stride must be positive");
    if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
    if (!(revin_eps > 0.0)) throw ConfigError("revin_eps must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    token_count();  // patch_len vs lookback
    attention_config().validate();
}

// ---------------------------------------------------------------------------
// Parameter bookkeeping

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return {
        {"revin.gamma", &revin_gamma},
        {"revin.beta", &revin_beta},
        {"patch_embed.weight", &patch_embed_w},
        {"patch_embed.bias", &patch_embed_b},
        {"pos_embed", &pos_embed},
        {"attn.wq", &attention.w_q},
        {"attn.bq", &attention.b_q},
        {"attn.wk", &attention.w_k},
        {"attn.bk", &attention.b_k},
        {"attn.wv", &attention.w_v},
        {"attn.bv", &attention.b_v},
        {"attn.wo", &attention.w_o},
        {"attn.bo", &attention.b_o},
        {"ln1.scale", &ln1_scale},
        {"ln1.offset", &ln1_offset},
        {"ln2.scale", &ln2_scale},
        {"ln2.offset", &ln2_offset},
        {"ffn.w1", &ffn_w1},
        {"ffn.b1", &ffn_b1},
        {"ffn.w2", &ffn_w2},
        {"ffn.b2", &ffn_b2},
        {"ffn.prelu_slopes", &prelu_slopes},
        {"head.weight", &head_w},
        {"head.bias", &head_b},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, tensor] : mutable_view) out.emplace_back(name, tensor);
    return out;
}

void ModelParams::set_requires_grad(bool value) {
    for (auto& [name, tensor] : named()) tensor->set_requires_grad(value);
}

void ModelParams::zero_grad() {
    for (auto& [name, tensor] : named()) tensor->zero_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams copy;
    auto src = named();
    auto dst = copy.named();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->clone();
    return copy;
}

bool ModelParams::all_finite() const {
    for (auto& [name, tensor] : named()) {
        if (!tensor->all_finite()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// RevIN

namespace {

// out[b,c,l] = gamma[c] * x[b,c,l] + beta[c]; the per-channel affine sits on
// the middle axis, outside what the broadcast rules cover.
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const std::size_t channels = x.dim(1);
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw DimensionError("channel affine expects per-channel gamma/beta of length " +
                             std::to_string(channels));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t width = x.numel() / (batch * channels);
    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Tensor out = Tensor::zeros(x.shape(), rg);
    const double* px = x.data().data();
    const double* pg = gamma.data().data();
    const double* pb = beta.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * width;
            for (std::size_t l = 0; l < width; ++l) po[base + l] = pg[c] * px[base + l] + pb[c];
        }
    }
    Tape* tape = active_tape();
    if (tape && rg) {
        unwrap(out).tape_id = tape->id();
        Tensor cx = x, cg = gamma, cb = beta, cout = out;
        const bool need_x = x.requires_grad(), need_g = gamma.requires_grad(),
                   need_b = beta.requires_grad();
        tape->record([cx, cg, cb, cout, batch, channels, width, need_x, need_g,
                      need_b]() mutable {
            if (!cout.has_grad()) return;
            auto g = cout.grad();
            const double* px = cx.data().data();
            const double* pg = cg.data().data();
            std::span<double> dx, dg, db;
            if (need_x) dx = cx.mutable_grad();
            if (need_g) dg = cg.mutable_grad();
            if (need_b) db = cb.mutable_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t base = (b * channels + c) * width;
                    for (std::size_t l = 0; l < width; ++l) {
                        const double gv = g[base + l];
                        if (need_x) dx[base + l] += gv * pg[c];
                        if (need_g) dg[c] += gv * px[base + l];
                        if (need_b) db[c] += gv;
                    }
                }
            }
        });
    }
    return out;
}

Tensor sqrt_positive(const Tensor& x) {
    // sqrt on strictly positive input, composed from verified primitives
    return exp(scale(log(x), 0.5));
}

}  // namespace

std::pair<Tensor, RevinStats> revin_normalize(const Tensor& x, const ModelConfig& cfg,
                                              const ModelParams& params) {
    if (x.rank() != 3 || x.dim(1) != cfg.channels) {
        throw DimensionError("revin_normalize expects [batch x channels x lookback], got " +
                             shape_str(x.shape()));
    }
    if (x.dim(2) < 2) throw ContractError("revin_normalize needs lookback >= 2");

    Tensor mean = reduce_mean(x, 2);  // [B x C]
    Tensor centered = sub(x, mean, Broadcast::prefix);
    Tensor var = reduce_mean(mul(centered, centered), 2);
    Tensor stddev = sqrt_positive(add_scalar(var, cfg.revin_eps));
    Tensor x_norm = div(centered, stddev, Broadcast::prefix);
    if (cfg.revin_affine) {
        x_norm = channel_affine(x_norm, params.revin_gamma, params.revin_beta);
    }
    return {x_norm, RevinStats{mean, stddev}};
}

Tensor revin_denormalize(const Tensor& y_norm, const RevinStats& stats, const ModelConfig& cfg,
                         const ModelParams& params) {
    if (y_norm.rank() != 3 || y_norm.dim(1) != cfg.channels) {
        throw DimensionError("revin_denormalize expects [batch x channels x horizon], got " +
                             shape_str(y_norm.shape()));
    }
    Tensor y = y_norm;
    if (cfg.revin_affine) {
        for (double g : params.revin_gamma.data()) {
            if (g == 0.0) {
                throw DomainError("revin_denormalize: affine gamma contains zero, not invertible");
            }
        }
        Tensor ones = Tensor::full(Shape{cfg.channels}, 1.0);
        Tensor inv_gamma = div(ones, params.revin_gamma);
        Tensor neg_beta_over_gamma = neg(div(params.revin_beta, params.revin_gamma));
        y = channel_affine(y, inv_gamma, neg_beta_over_gamma);
    }
    return add(mul(y, stats.std, Broadcast::prefix), stats.mean, Broadcast::prefix);
}

// ---------------------------------------------------------------------------
// Patch tokens

Tensor patchify(const Tensor& x_norm, const ModelConfig& cfg) {
    if (x_norm.rank() != 3) {
        throw DimensionError("patchify expects [batch x channels x lookback], got " +
                             shape_str(x_norm.shape()));
    }
    const std::size_t batch = x_norm.dim(0);
    const std::size_t channels = x_norm.dim(1);
    const std::size_t lookback = x_norm.dim(2);
    if (cfg.patch_len > lookback) {
        throw ConfigError("patch_len " + std::to_string(cfg.patch_len) + " exceeds lookback " +
                          std::to_string(lookback));
    }
    const std::size_t tokens = (lookback - cfg.patch_len) / cfg.patch_stride + 1;
    const std::size_t plen = cfg.patch_len;
    const std::size_t stride = cfg.patch_stride;
    const std::size_t instances = batch * channels;

    Tensor out = Tensor::zeros(Shape{instances, tokens, plen}, x_norm.requires_grad());
    const double* px = x_norm.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const double* series = px + inst * lookback;
        for (std::size_t t = 0; t < tokens; ++t) {
            const double* window = series + t * stride;
            double* dst = po + (inst * tokens + t) * plen;
            for (std::size_t j = 0; j < plen; ++j) dst[j] = window[j];
        }
    }
    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor cx = x_norm, cout = out;
        tape->record([cx, cout, instances, tokens, plen, stride, lookback]() mutable {
            if (!cout.has_grad()) return;
            auto g = cout.grad();
            auto dx = cx.mutable_grad();
            // overlapping windows accumulate
            for (std::size_t inst = 0; inst < instances; ++inst) {
                for (std::size_t t = 0; t < tokens; ++t) {
                    const std::size_t src = (inst * tokens + t) * plen;
                    const std::size_t dst = inst * lookback + t * stride;
                    for (std::size_t j = 0; j < plen; ++j) dx[dst + j] += g[src + j];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward pipeline

namespace {

Tensor layer_norm(const Tensor& h, const Tensor& scale_param, const Tensor& offset_param) {
    const std::size_t last = h.rank() - 1;
    Tensor mu = reduce_mean(h, last);
    Tensor centered = sub(h, mu, Broadcast::prefix);
    Tensor var = reduce_mean(mul(centered, centered), last);
    Tensor inv_std = exp(scale(log(add_scalar(var, kLayerNormEps)), -0.5));
    Tensor normed = mul(centered, inv_std, Broadcast::prefix);
    return add(mul(normed, scale_param, Broadcast::suffix), offset_param, Broadcast::suffix);
}

Tensor ffn_activation_apply(const Tensor& z, const ModelConfig& cfg, const ModelParams& params) {
    switch (cfg.ffn_activation) {
        case FfnActivation::prelu:
            return prelu(z, params.prelu_slopes);
        case FfnActivation::relu:
            return prelu(z, Tensor::scalar(0.0));
        case FfnActivation::gelu:
            return gelu(z);
    }
    throw ConfigError("unknown ffn activation");
}

}  // namespace

ForecastOutput latst_forward(const Tensor& x, const ModelConfig& cfg, const ModelParams& params,
                             bool training, Rng* dropout_rng) {
    cfg.validate();
    if (x.rank() != 3 || x.dim(1) != cfg.channels || x.dim(2) != cfg.lookback) {
        throw DimensionError("latst_forward expects [batch x " + std::to_string(cfg.channels) +
                             " x " + std::to_string(cfg.lookback) + "], got " +
                             shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t tokens = cfg.token_count();
    const bool drop = training && cfg.dropout > 0.0;
    if ((drop || (training && cfg.attn_dropout > 0.0)) && dropout_rng == nullptr) {
        throw ContractError("latst_forward: training with dropout needs an RNG");
    }

    auto [x_norm, stats] = revin_normalize(x, cfg, params);
    Tensor patches = patchify(x_norm, cfg);  // [(B*C) x T x patch_len]

    Tensor h = add(matmul(patches, params.patch_embed_w), params.patch_embed_b,
                   Broadcast::suffix);
    if (cfg.use_positional_embedding) h = add(h, params.pos_embed, Broadcast::suffix);
    if (drop) h = dropout(h, cfg.dropout, *dropout_rng);

    Tensor attn_in = layer_norm(h, params.ln1_scale, params.ln1_offset);
    AttentionOutput attn =
        attention_forward(attn_in, cfg.attention_config(), params.attention, training,
                          dropout_rng);
    h = add(h, attn.out);

    Tensor ffn_in = layer_norm(h, params.ln2_scale, params.ln2_offset);
    Tensor hidden = add(matmul(ffn_in, params.ffn_w1), params.ffn_b1, Broadcast::suffix);
    hidden = ffn_activation_apply(hidden, cfg, params);
    if (drop) hidden = dropout(hidden, cfg.dropout, *dropout_rng);
    Tensor ffn_out = add(matmul(hidden, params.ffn_w2), params.ffn_b2, Broadcast::suffix);
    h = add(h, ffn_out);

    Tensor flat = reshape(h, Shape{batch * cfg.channels, tokens * cfg.model_dim});
    if (drop) flat = dropout(flat, cfg.dropout, *dropout_rng);
    Tensor projected = add(matmul(flat, params.head_w), params.head_b, Broadcast::suffix);
    Tensor y_norm = reshape(projected, Shape{batch, cfg.channels, cfg.horizon});

    ForecastOutput out;
    out.y_hat = revin_denormalize(y_norm, stats, cfg, params);
    out.diagnostics.attention_probs = attn.probs;
    out.diagnostics.max_abs_logit = attn.max_abs_logit;
    out.diagnostics.nonfinite_probs = attn.nonfinite_probs;
    if (!attn.nonfinite_probs) out.diagnostics.entropy = attention_entropy(attn.probs);
    return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::size_t C = cfg.channels;
    const std::size_t D = cfg.model_dim;
    const std::size_t F = cfg.ffn_dim;
    const std::size_t T = cfg.token_count();
    const std::size_t P = cfg.horizon;

    ModelParams params;
    params.revin_gamma = Tensor::full(Shape{C}, 1.0, true);
    params.revin_beta = Tensor::zeros(Shape{C}, true);
    params.patch_embed_w = uniform_init(Shape{cfg.patch_len, D}, cfg.patch_len, rng);
    params.patch_embed_b = Tensor::zeros(Shape{D}, true);
    params.pos_embed = normal_init(Shape{T, D}, 0.02, rng);
    params.attention.w_q = uniform_init(Shape{D, D}, D, rng);
    params.attention.b_q = Tensor::zeros(Shape{D}, true);
    params.attention.w_k = uniform_init(Shape{D, D}, D, rng);
    params.attention.b_k = Tensor::zeros(Shape{D}, true);
    params.attention.w_v = uniform_init(Shape{D, D}, D, rng);
    params.attention.b_v = Tensor::zeros(Shape{D}, true);
    params.attention.w_o = uniform_init(Shape{D, D}, D, rng);
    params.attention.b_o = Tensor::zeros(Shape{D}, true);
    params.ln1_scale = Tensor::full(Shape{D}, 1.0, true);
    params.ln1_offset = Tensor::zeros(Shape{D}, true);
    params.ln2_scale = Tensor::full(Shape{D}, 1.0, true);
    params.ln2_offset = Tensor::zeros(Shape{D}, true);
    params.ffn_w1 = uniform_init(Shape{D, F}, D, rng);
    params.ffn_b1 = Tensor::zeros(Shape{F}, true);
    params.ffn_w2 = uniform_init(Shape{F, D}, F, rng);
    params.ffn_b2 = Tensor::zeros(Shape{D}, true);
    params.prelu_slopes = Tensor::full(Shape{F}, 0.25, true);
    params.head_w = uniform_init(Shape{T * D, P}, T * D, rng);
    params.head_b = Tensor::zeros(Shape{P}, true);
    return params;
}

}  // namespace latst
