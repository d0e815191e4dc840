#include "latst/train.hpp"

#include <chrono>
#include <cmath>

namespace latst {

Tensor mse_loss(const Tensor& y_hat, const Tensor& y) {
    if (y_hat.shape() != y.shape()) {
        throw DimensionError("mse_loss shape mismatch: " + shape_str(y_hat.shape()) + " vs " +
                             shape_str(y.shape()));
    }
    Tensor diff = sub(y_hat, y);
    return reduce_mean_all(mul(diff, diff));
}

OptimState make_adam_state(ModelParams& params, const AdamConfig& cfg) {
    OptimState state;
    state.cfg = cfg;
    for (auto& [name, tensor] : params.named()) {
        state.m.emplace_back(tensor->numel(), 0.0);
        state.v.emplace_back(tensor->numel(), 0.0);
    }
    return state;
}

void adam_step(ModelParams& params, OptimState& state) {
    auto named = params.named();
    if (named.size() != state.m.size()) {
        throw ContractError("adam state does not match parameter list");
    }
    ++state.step;
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (std::size_t p = 0; p < named.size(); ++p) {
        Tensor& tensor = *named[p].second;
        if (!tensor.has_grad()) continue;  // parameter unused by this graph
        auto grad = tensor.grad();
        auto data = tensor.mutable_data();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double g = grad[i];
            if (!std::isfinite(g)) {
                throw InstabilityError("non-finite gradient in parameter '" + named[p].first +
                                       "' at step " + std::to_string(state.step));
            }
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            data[i] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
        }
    }
}

namespace {

double global_grad_norm(ModelParams& params) {
    double sq = 0.0;
    for (auto& [name, tensor] : params.named()) {
        if (!tensor->has_grad()) continue;
        for (double g : tensor->grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

void scale_grads(ModelParams& params, double factor) {
    for (auto& [name, tensor] : params.named()) {
        if (!tensor->has_grad()) continue;
        for (double& g : tensor->mutable_grad()) g *= factor;
    }
}

}  // namespace

EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const WindowedDataset& dataset, std::size_t batch_size,
                    const Scaler* scaler) {
    if (dataset.count == 0) {
        throw ContractError("evaluate: dataset '" + dataset.split + "' is empty");
    }
    Batches batches(dataset, batch_size, /*shuffle=*/false, /*seed=*/0);

    double sq_sum = 0.0;          // standardized-scale squared error
    double raw_sq_sum = 0.0;      // de-standardized squared error
    double elements = 0.0;
    EvalResult result;
    bool entropy_started = false;
    double entropy_weight = 0.0;

    for (std::size_t b = 0; b < batches.batch_count(); ++b) {
        Batch batch = batches.get(b);
        ForecastOutput out = latst_forward(batch.inputs, cfg, params, /*training=*/false);

        const double* yh = out.y_hat.data().data();
        const double* yt = batch.targets.data().data();
        const std::size_t channels = batch.targets.dim(1);
        const std::size_t horizon = batch.targets.dim(2);
        for (std::size_t i = 0; i < batch.targets.numel(); ++i) {
            const double d = yh[i] - yt[i];
            sq_sum += d * d;
            if (scaler) {
                const std::size_t c = (i / horizon) % channels;
                const double ds = d * scaler->std[c];
                raw_sq_sum += ds * ds;
            }
        }
        elements += static_cast<double>(batch.targets.numel());

        result.max_abs_logit = std::max(result.max_abs_logit, out.diagnostics.max_abs_logit);
        result.nonfinite_probs = result.nonfinite_probs || out.diagnostics.nonfinite_probs;
        if (!out.diagnostics.nonfinite_probs) {
            const EntropyStats& es = out.diagnostics.entropy;
            const double w = static_cast<double>(batch.size);
            if (!entropy_started) {
                result.entropy.mean.assign(es.mean.size(), 0.0);
                result.entropy.min = es.min;
                result.entropy.max = es.max;
                entropy_started = true;
            }
            for (std::size_t h = 0; h < es.mean.size(); ++h) {
                result.entropy.mean[h] += es.mean[h] * w;
                result.entropy.min[h] = std::min(result.entropy.min[h], es.min[h]);
                result.entropy.max[h] = std::max(result.entropy.max[h], es.max[h]);
            }
            entropy_weight += w;
        }
    }
    if (entropy_started && entropy_weight > 0.0) {
        for (double& m : result.entropy.mean) m /= entropy_weight;
    }
    result.mse = sq_sum / elements;
    if (scaler) result.raw_mse = raw_sq_sum / elements;
    return result;
}

TrainResult train(const ModelConfig& cfg, const ModelParams& initial, const DatasetBundle& data,
                  const TrainSchedule& schedule) {
    if (data.train.count == 0) throw ContractError("train: training dataset is empty");
    cfg.validate();

    ModelParams params = initial.clone();
    params.set_requires_grad(true);
    AdamConfig adam_cfg;
    adam_cfg.lr = schedule.lr;
    OptimState optim = make_adam_state(params, adam_cfg);
    Rng dropout_rng(schedule.seed ^ 0x9e3779b97f4a7c15ULL);

    const bool has_val = data.val.count > 0;
    // Fixed probe batch for the per-epoch entropy reading: first validation
    // batch when available, first training batch otherwise.
    Batch probe = has_val ? Batches(data.val, schedule.batch_size, false, 0).get(0)
                          : Batches(data.train, schedule.batch_size, false, 0).get(0);

    TrainResult result;
    result.best_params = params.clone();
    result.report.best_val_mse = std::numeric_limits<double>::infinity();
    double best_metric = std::numeric_limits<double>::infinity();
    std::size_t epochs_without_improvement = 0;
    double lr = schedule.lr;
    const auto t_start = std::chrono::steady_clock::now();

    for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        optim.cfg.lr = lr;
        Batches batches(data.train, schedule.batch_size, /*shuffle=*/true,
                        schedule.seed + epoch);
        double loss_sum = 0.0;
        double window_sum = 0.0;
        for (std::size_t b = 0; b < batches.batch_count(); ++b) {
            Batch batch = batches.get(b);
            params.zero_grad();
            Tape tape;
            double loss_value = 0.0;
            try {
                TapeScope scope(tape);
                ForecastOutput out =
                    latst_forward(batch.inputs, cfg, params, /*training=*/true, &dropout_rng);
                Tensor loss = mse_loss(out.y_hat, batch.targets);
                loss_value = loss.value();
                tape.backward(loss);
                if (schedule.grad_clip > 0.0) {
                    const double norm = global_grad_norm(params);
                    if (norm > schedule.grad_clip) {
                        scale_grads(params, schedule.grad_clip / norm);
                    }
                }
                adam_step(params, optim);
            } catch (const InstabilityError& err) {
                throw InstabilityError("epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b) + ": " + err.what());
            }
            loss_sum += loss_value * static_cast<double>(batch.size);
            window_sum += static_cast<double>(batch.size);
        }
        const double train_loss = loss_sum / window_sum;

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        stats.lr = lr;
        if (has_val) {
            stats.val_mse = evaluate(cfg, params, data.val, schedule.batch_size).mse;
        }
        ForecastOutput probe_out = latst_forward(probe.inputs, cfg, params, /*training=*/false);
        if (!probe_out.diagnostics.nonfinite_probs) {
            stats.entropy_mean = probe_out.diagnostics.entropy.overall_mean();
            stats.entropy_min = probe_out.diagnostics.entropy.overall_min();
        }
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start)
                            .count();
        result.report.epochs.push_back(stats);

        const double metric = has_val ? stats.val_mse : train_loss;
        if (metric < best_metric) {
            best_metric = metric;
            result.best_params = params.clone();
            result.report.best_epoch = epoch;
            result.report.best_val_mse = metric;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= schedule.patience) break;
        }
        lr *= schedule.lr_decay;
    }
    result.report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace latst
