#pragma once

#include <array>
#include <string>
#include <vector>

#include "latst/data.hpp"
#include "latst/model.hpp"
#include "latst/train.hpp"

namespace latst {

// Flat configuration for the CLI: key = value lines, '#' comments, every
// field defaulted, unknown keys rejected. CLI flags override file values.
struct RunConfig {
    std::string dataset = "data/synthetic_sines.csv";
    std::string date_column = "date";
    std::string preset = "generic";  // generic | ett-hourly | ett-quarter
    std::array<double, 3> split_fractions = {0.7, 0.1, 0.2};
    std::size_t channels = 0;  // 0 = derive from the dataset

    std::size_t lookback = 336;
    std::size_t horizon = 96;
    std::size_t window_stride = 1;

    std::size_t patch_len = 16;
    std::size_t patch_stride = 8;
    std::size_t model_dim = 16;
    std::size_t ffn_dim = 32;
    std::size_t num_heads = 4;
    std::string ffn_activation = "prelu";  // prelu | relu | gelu
    bool logit_smoothing = true;
    std::string softmax_kind = "stable";  // stable | naive
    bool revin_affine = true;
    double revin_eps = 1e-5;
    bool use_positional_embedding = true;
    double dropout = 0.2;
    double attn_dropout = 0.0;

    std::size_t batch_size = 8;
    double lr = 1e-4;
    double lr_decay = 1.0;
    std::size_t epochs = 100;
    std::size_t patience = 10;
    double grad_clip = 0.0;

    std::uint64_t seed = 42;
    std::string out_dir = "latst_out";
    bool raw_scale_metrics = false;

    // Derived views; channels must be resolved (> 0) for model_config().
    ModelConfig model_config() const;
    WindowSpec window_spec() const;
    TrainSchedule train_schedule() const;
    SplitPreset split_preset() const;

    // Assign one field by key; ConfigError on unknown key or bad value.
    void set(const std::string& key, const std::string& value);
    // Full echo, fixed order, one "key = value" per line.
    std::string to_text() const;
};

// Parses a config file; errors carry the offending line number.
RunConfig parse_config_file(const std::string& path);
// Same grammar from an in-memory block (checkpoint config echo).
RunConfig parse_config_text(const std::string& text);
// Applies "key=value" override strings in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

}  // namespace latst
