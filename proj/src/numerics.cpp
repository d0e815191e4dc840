#include "latst/numerics.hpp"

#include <cmath>

namespace latst {

namespace {

void require_rank1(const Tensor& t, const char* op) {
    if (t.rank() < 1) {
        throw DimensionError(std::string(op) + " needs rank >= 1, got " + shape_str(t.shape()));
    }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

Tensor naive_softmax(const Tensor& logits) {
    require_rank1(logits, "naive_softmax");
    Tensor e = exp(logits);
    Tensor total = reduce_sum(e, logits.rank() - 1);
    return div(e, total, Broadcast::prefix);
}

Tensor logsumexp(const Tensor& logits) {
    require_rank1(logits, "logsumexp");
    const std::size_t last = logits.rank() - 1;
    Tensor m = reduce_max(logits, last);
    Tensor shifted = sub(logits, m, Broadcast::prefix);
    Tensor total = reduce_sum(exp(shifted), last);
    // total >= 1 because the max element contributes e^0
    return add(log(total), m);
}

Tensor stable_softmax(const Tensor& logits) {
    require_rank1(logits, "stable_softmax");
    const std::size_t last = logits.rank() - 1;
    Tensor m = reduce_max(logits, last);
    Tensor e = exp(sub(logits, m, Broadcast::prefix));
    Tensor total = reduce_sum(e, last);
    return div(e, total, Broadcast::prefix);
}

Tensor gelu(const Tensor& x) {
    const std::size_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    const double* px = x.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * normal_cdf(px[i]);

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor cx = x, cout = out;
        tape->record([cx, cout, n]() mutable {
            if (!cout.has_grad()) return;
            auto g = cout.grad();
            const double* px = cx.data().data();
            auto dx = cx.mutable_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double v = px[i];
                dx[i] += g[i] * (normal_cdf(v) + v * normal_pdf(v));
            }
        });
    }
    return out;
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
    require_rank1(x, "prelu");
    const std::size_t channels = x.shape().back();
    const bool shared = slope.numel() == 1;
    if (!shared && !(slope.rank() == 1 && slope.dim(0) == channels)) {
        throw DimensionError("prelu slope shape " + shape_str(slope.shape()) +
                             " does not broadcast over channel axis of " +
                             shape_str(x.shape()));
    }
    const std::size_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad() || slope.requires_grad());
    const double* px = x.data().data();
    const double* pa = slope.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = px[i];
        po[i] = (v >= 0.0) ? v : pa[shared ? 0 : i % channels] * v;
    }

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor cx = x, ca = slope, cout = out;
        const bool need_x = x.requires_grad(), need_a = slope.requires_grad();
        tape->record([cx, ca, cout, n, channels, shared, need_x, need_a]() mutable {
            if (!cout.has_grad()) return;
            auto g = cout.grad();
            const double* px = cx.data().data();
            const double* pa = ca.data().data();
            std::span<double> dx, da;
            if (need_x) dx = cx.mutable_grad();
            if (need_a) da = ca.mutable_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double v = px[i];
                const std::size_t c = shared ? 0 : i % channels;
                if (v >= 0.0) {
                    if (need_x) dx[i] += g[i];
                } else {
                    if (need_x) dx[i] += g[i] * pa[c];
                    if (need_a) da[c] += g[i] * v;
                }
            }
        });
    }
    return out;
}

Tensor row_entropy(const Tensor& probs) {
    require_rank1(probs, "row_entropy");
    const std::size_t n = probs.shape().back();
    const std::size_t rows = probs.numel() / n;
    Shape out_shape(probs.shape().begin(), probs.shape().end() - 1);
    Tensor out = Tensor::zeros(out_shape);
    const double* p = probs.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        double h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = p[r * n + j];
            if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) {
                throw ContractError("row_entropy: entry " + std::to_string(v) + " in row " +
                                    std::to_string(r) + " is not a probability");
            }
            sum += v;
            if (v > 0.0) h -= v * std::log(v);
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw ContractError("row_entropy: row " + std::to_string(r) + " sums to " +
                                std::to_string(sum) + ", not 1 within 1e-6");
        }
        po[r] = h;
    }
    return out;
}

}  // namespace latst
