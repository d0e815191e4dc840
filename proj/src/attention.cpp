#include "latst/attention.hpp"

#include <cmath>
#include <cstring>

namespace latst {

void AttentionConfig::validate() const {
    if (model_dim == 0 || num_heads == 0) {
        throw ConfigError("attention: model_dim and num_heads must be positive");
    }
    if (model_dim % num_heads != 0) {
        throw ConfigError("attention: model_dim " + std::to_string(model_dim) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
    }
    if (!(attn_dropout >= 0.0 && attn_dropout < 1.0)) {
        throw ConfigError("attention: attn_dropout must lie in [0, 1)");
    }
}

AttentionOutput attention_forward(const Tensor& x, const AttentionConfig& cfg,
                                  const AttentionParams& params, bool training,
                                  Rng* dropout_rng) {
    cfg.validate();
    if (x.rank() != 3 || x.dim(2) != cfg.model_dim) {
        throw DimensionError("attention input must be [batch x tokens x model_dim], got " +
                             shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t tokens = x.dim(1);
    const std::size_t heads = cfg.num_heads;
    const std::size_t hdim = cfg.head_dim();
    const bool drop = training && cfg.attn_dropout > 0.0;
    if (drop && dropout_rng == nullptr) {
        throw ContractError("attention: training with attn_dropout > 0 needs an RNG");
    }

    Tensor q = add(matmul(x, params.w_q), params.b_q, Broadcast::suffix);
    Tensor k = add(matmul(x, params.w_k), params.b_k, Broadcast::suffix);
    Tensor v = add(matmul(x, params.w_v), params.b_v, Broadcast::suffix);

    AttentionOutput result;
    Tensor probs_snapshot = Tensor::zeros(Shape{batch, heads, tokens, tokens});
    double* snap = probs_snapshot.mutable_data().data();

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hdim));
    std::vector<Tensor> contexts;
    contexts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = slice_last(q, h * hdim, hdim);
        Tensor kh = slice_last(k, h * hdim, hdim);
        Tensor vh = slice_last(v, h * hdim, hdim);
        Tensor logits = scale(matmul(qh, transpose_last2(kh)), inv_sqrt_d);

        for (double lv : logits.data()) {
            if (std::isfinite(lv)) {
                result.max_abs_logit = std::max(result.max_abs_logit, std::abs(lv));
            } else if (cfg.softmax_kind == SoftmaxKind::stable) {
                throw InstabilityError(
                    "attention: non-finite logit under stable softmax (head " +
                    std::to_string(h) + "); inputs or parameters are not finite");
            }
        }

        if (cfg.logit_smoothing) logits = gelu(logits);
        Tensor probs = (cfg.softmax_kind == SoftmaxKind::stable) ? stable_softmax(logits)
                                                                 : naive_softmax(logits);
        if (!probs.all_finite()) result.nonfinite_probs = true;

        // diagnostic snapshot, ordered [batch x heads x tokens x tokens]
        const double* ph = probs.data().data();
        for (std::size_t b = 0; b < batch; ++b) {
            std::memcpy(snap + (b * heads + h) * tokens * tokens, ph + b * tokens * tokens,
                        tokens * tokens * sizeof(double));
        }

        if (drop) probs = dropout(probs, cfg.attn_dropout, *dropout_rng);
        contexts.push_back(matmul(probs, vh));
    }

    Tensor ctx = (heads == 1) ? contexts.front() : concat_last(contexts);
    result.out = add(matmul(ctx, params.w_o), params.b_o, Broadcast::suffix);
    result.probs = probs_snapshot;
    return result;
}

double EntropyStats::overall_mean() const {
    double acc = 0.0;
    for (double m : mean) acc += m;
    return mean.empty() ? 0.0 : acc / static_cast<double>(mean.size());
}

double EntropyStats::overall_min() const {
    double best = 1.0;
    for (double m : min) best = std::min(best, m);
    return best;
}

EntropyStats attention_entropy(const Tensor& probs) {
    if (probs.rank() != 4) {
        throw DimensionError("attention_entropy expects [batch x heads x tokens x tokens], got " +
                             shape_str(probs.shape()));
    }
    const std::size_t batch = probs.dim(0);
    const std::size_t heads = probs.dim(1);
    const std::size_t tokens = probs.dim(2);

    Tensor entropies = row_entropy(probs);  // [batch x heads x tokens]
    const double* pe = entropies.data().data();
    const double norm = (tokens > 1) ? std::log(static_cast<double>(tokens)) : 1.0;

    EntropyStats stats;
    stats.mean.assign(heads, 0.0);
    stats.min.assign(heads, 1.0);
    stats.max.assign(heads, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        double acc = 0.0, lo = 1e300, hi = -1e300;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < tokens; ++t) {
                const double value =
                    (tokens > 1) ? pe[(b * heads + h) * tokens + t] / norm : 1.0;
                acc += value;
                lo = std::min(lo, value);
                hi = std::max(hi, value);
            }
        }
        stats.mean[h] = acc / static_cast<double>(batch * tokens);
        stats.min[h] = lo;
        stats.max[h] = hi;
    }
    return stats;
}

}  // namespace latst
