#pragma once

#include <limits>
#include <string>
#include <vector>

#include "latst/data.hpp"
#include "latst/model.hpp"

namespace latst {

// Mean of squared differences over every element (batch, channel, horizon).
Tensor mse_loss(const Tensor& y_hat, const Tensor& y);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers parallel to the named parameter order.
struct OptimState {
    AdamConfig cfg;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

OptimState make_adam_state(ModelParams& params, const AdamConfig& cfg);

// One bias-corrected Adam update from the gradients stored on the parameter
// tensors. A non-finite gradient raises InstabilityError naming the
// parameter and step.
void adam_step(ModelParams& params, OptimState& state);

struct TrainSchedule {
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 8;
    double lr = 1e-4;
    double lr_decay = 1.0;   // multiplicative per epoch; 1 = constant
    double grad_clip = 0.0;  // global L2 norm cap; 0 = off
    std::uint64_t seed = 42;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
    double entropy_mean = 0.0;  // normalized, probe batch, mean over heads
    double entropy_min = 0.0;   // min over heads and rows
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    double best_val_mse = std::numeric_limits<double>::quiet_NaN();
    double test_mse = std::numeric_limits<double>::quiet_NaN();  // filled by the caller
    double total_seconds = 0.0;
};

struct TrainResult {
    ModelParams best_params;
    TrainReport report;
};

struct EvalResult {
    double mse = 0.0;
    double raw_mse = std::numeric_limits<double>::quiet_NaN();  // when scaler given
    EntropyStats entropy;
    double max_abs_logit = 0.0;
    bool nonfinite_probs = false;
};

// Deterministic full pass (training = false); MSE is the windows-weighted
// mean over batches. Raw-scale MSE is also computed when a scaler is passed.
EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const WindowedDataset& dataset, std::size_t batch_size,
                    const Scaler* scaler = nullptr);

// Epoch loop: shuffled batches, forward/backward/adam, per-epoch validation
// MSE and entropy stats on a fixed probe batch, early stopping on the best
// validation MSE (train loss when the validation split is empty). Returns
// the parameters from the best epoch.
TrainResult train(const ModelConfig& cfg, const ModelParams& initial,
                  const DatasetBundle& data, const TrainSchedule& schedule);

}  // namespace latst
