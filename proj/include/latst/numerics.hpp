#pragma once

#include "latst/tensor.hpp"

namespace latst {

// All kernels normalize over the LAST axis of their input.

// Softmax computed exactly as written, e^{x_i} / sum_j e^{x_j}, with no
// shifting. Overflows to non-finite values once entries pass ~709.78; kept
// permanently as the ablation and contrast path, so non-finite outputs flow
// through instead of raising.
Tensor naive_softmax(const Tensor& logits);

// max_i x_i + log sum_i e^{x_i - max}; finite for every finite input. The
// gradient of a summed logsumexp equals the stabilized softmax.
Tensor logsumexp(const Tensor& logits);

// Max-shifted softmax: e^{x_j - max} / sum_i e^{x_i - max}. Rows sum to 1,
// every output lies in [0, 1], finite for all finite inputs.
Tensor stable_softmax(const Tensor& logits);

// x * Phi(x) with Phi the exact standard-normal CDF (erfc form, not the tanh
// approximation). Backward uses Phi(x) + x * phi(x).
Tensor gelu(const Tensor& x);

// x where x >= 0, slope * x otherwise; x = 0 takes the positive branch.
// slope is either a single shared scalar or one value per channel along the
// last axis; it receives gradient sum_{x<0} x * dL/dout.
Tensor prelu(const Tensor& x, const Tensor& slope);

// Shannon entropy -sum_i p_i ln p_i per row over the last axis, 0 ln 0 := 0.
// Rows must be probability vectors (sums within 1e-6 of 1). Diagnostic:
// forward only, never recorded on a tape.
Tensor row_entropy(const Tensor& probs);

}  // namespace latst
