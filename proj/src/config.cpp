#include "latst/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace latst {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value +
                          "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || std::isnan(out)) {
        throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

ModelConfig RunConfig::model_config() const {
    if (channels == 0) {
        throw ConfigError("channels not resolved; load the dataset first or set 'channels'");
    }
    ModelConfig cfg;
    cfg.channels = channels;
    cfg.lookback = lookback;
    cfg.horizon = horizon;
    cfg.patch_len = patch_len;
    cfg.patch_stride = patch_stride;
    cfg.model_dim = model_dim;
    cfg.ffn_dim = ffn_dim;
    cfg.num_heads = num_heads;
    if (ffn_activation == "prelu") {
        cfg.ffn_activation = FfnActivation::prelu;
    } else if (ffn_activation == "relu") {
        cfg.ffn_activation = FfnActivation::relu;
    } else if (ffn_activation == "gelu") {
        cfg.ffn_activation = FfnActivation::gelu;
    } else {
        throw ConfigError("ffn_activation must be prelu, relu, or gelu, got '" + ffn_activation +
                          "'");
    }
    cfg.logit_smoothing = logit_smoothing;
    if (softmax_kind == "stable") {
        cfg.softmax_kind = SoftmaxKind::stable;
    } else if (softmax_kind == "naive") {
        cfg.softmax_kind = SoftmaxKind::naive;
    } else {
        throw ConfigError("softmax_kind must be stable or naive, got '" + softmax_kind + "'");
    }
    cfg.revin_affine = revin_affine;
    cfg.revin_eps = revin_eps;
    cfg.use_positional_embedding = use_positional_embedding;
    cfg.dropout = dropout;
    cfg.attn_dropout = attn_dropout;
    return cfg;
}

WindowSpec RunConfig::window_spec() const {
    WindowSpec spec;
    spec.lookback = lookback;
    spec.horizon = horizon;
    spec.stride = window_stride;
    return spec;
}

TrainSchedule RunConfig::train_schedule() const {
    TrainSchedule schedule;
    schedule.epochs = epochs;
    schedule.patience = patience;
    schedule.batch_size = batch_size;
    schedule.lr = lr;
    schedule.lr_decay = lr_decay;
    schedule.grad_clip = grad_clip;
    schedule.seed = seed;
    return schedule;
}

SplitPreset RunConfig::split_preset() const {
    if (preset == "generic") return SplitPreset::generic;
    if (preset == "ett-hourly") return SplitPreset::ett_hourly;
    if (preset == "ett-quarter") return SplitPreset::ett_quarter;
    throw ConfigError("preset must be generic, ett-hourly, or ett-quarter, got '" + preset + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "dataset") {
        dataset = value;
    } else if (key == "date_column") {
        date_column = value;
    } else if (key == "preset") {
        preset = value;
        (void)split_preset();  // validate eagerly
    } else if (key == "split_fractions") {
        std::array<double, 3> fr{};
        std::stringstream ss(value);
        std::string part;
        std::size_t i = 0;
        while (std::getline(ss, part, ',')) {
            if (i >= 3) break;
            fr[i++] = parse_double(key, trim(part));
        }
        if (i != 3) {
            throw ConfigError("split_fractions expects three comma-separated numbers, got '" +
                              value + "'");
        }
        split_fractions = fr;
    } else if (key == "channels") {
        channels = parse_size(key, value);
    } else if (key == "lookback") {
        lookback = parse_size(key, value);
    } else if (key == "horizon") {
        horizon = parse_size(key, value);
    } else if (key == "window_stride") {
        window_stride = parse_size(key, value);
    } else if (key == "patch_len") {
        patch_len = parse_size(key, value);
    } else if (key == "patch_stride") {
        patch_stride = parse_size(key, value);
    } else if (key == "model_dim") {
        model_dim = parse_size(key, value);
    } else if (key == "ffn_dim") {
        ffn_dim = parse_size(key, value);
    } else if (key == "num_heads") {
        num_heads = parse_size(key, value);
    } else if (key == "ffn_activation") {
        if (value != "prelu" && value != "relu" && value != "gelu") {
            throw ConfigError("ffn_activation must be prelu, relu, or gelu, got '" + value + "'");
        }
        ffn_activation = value;
    } else if (key == "logit_smoothing") {
        logit_smoothing = parse_bool(key, value);
    } else if (key == "softmax_kind") {
        if (value != "stable" && value != "naive") {
            throw ConfigError("softmax_kind must be stable or naive, got '" + value + "'");
        }
        softmax_kind = value;
    } else if (key == "revin_affine") {
        revin_affine = parse_bool(key, value);
    } else if (key == "revin_eps") {
        revin_eps = parse_double(key, value);
    } else if (key == "use_positional_embedding") {
        use_positional_embedding = parse_bool(key, value);
    } else if (key == "dropout") {
        dropout = parse_double(key, value);
    } else if (key == "attn_dropout") {
        attn_dropout = parse_double(key, value);
    } else if (key == "batch_size") {
        batch_size = parse_size(key, value);
    } else if (key == "lr") {
        lr = parse_double(key, value);
    } else if (key == "lr_decay") {
        lr_decay = parse_double(key, value);
    } else if (key == "epochs") {
        epochs = parse_size(key, value);
    } else if (key == "patience") {
        patience = parse_size(key, value);
    } else if (key == "grad_clip") {
        grad_clip = parse_double(key, value);
    } else if (key == "seed") {
        seed = parse_size(key, value);
    } else if (key == "out_dir") {
        out_dir = value;
    } else if (key == "raw_scale_metrics") {
        raw_scale_metrics = parse_bool(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "dataset = " << dataset << "\n";
    os << "date_column = " << date_column << "\n";
    os << "preset = " << preset << "\n";
    os << "split_fractions = " << format_double(split_fractions[0]) << ","
       << format_double(split_fractions[1]) << "," << format_double(split_fractions[2]) << "\n";
    os << "channels = " << channels << "\n";
    os << "lookback = " << lookback << "\n";
    os << "horizon = " << horizon << "\n";
    os << "window_stride = " << window_stride << "\n";
    os << "patch_len = " << patch_len << "\n";
    os << "patch_stride = " << patch_stride << "\n";
    os << "model_dim = " << model_dim << "\n";
    os << "ffn_dim = " << ffn_dim << "\n";
    os << "num_heads = " << num_heads << "\n";
    os << "ffn_activation = " << ffn_activation << "\n";
    os << "logit_smoothing = " << (logit_smoothing ? "true" : "false") << "\n";
    os << "softmax_kind = " << softmax_kind << "\n";
    os << "revin_affine = " << (revin_affine ? "true" : "false") << "\n";
    os << "revin_eps = " << format_double(revin_eps) << "\n";
    os << "use_positional_embedding = " << (use_positional_embedding ? "true" : "false") << "\n";
    os << "dropout = " << format_double(dropout) << "\n";
    os << "attn_dropout = " << format_double(attn_dropout) << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "lr = " << format_double(lr) << "\n";
    os << "lr_decay = " << format_double(lr_decay) << "\n";
    os << "epochs = " << epochs << "\n";
    os << "patience = " << patience << "\n";
    os << "grad_clip = " << format_double(grad_clip) << "\n";
    os << "seed = " << seed << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "raw_scale_metrics = " << (raw_scale_metrics ? "true" : "false") << "\n";
    return os.str();
}

namespace {

RunConfig parse_lines(std::istream& in, const std::string& origin) {
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            config.set(key, value);
        } catch (const ConfigError& err) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
    return config;
}

}  // namespace

RunConfig parse_config_file(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw ConfigError("cannot open config file '" + path + "'");
    return parse_lines(file, path);
}

RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_lines(in, "<config>");
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + item + "' is not of the form key=value");
        }
        std::string key = item.substr(0, eq);
        std::string value = item.substr(eq + 1);
        // trim copies of the pieces
        key.erase(0, key.find_first_not_of(" \t"));
        if (!key.empty()) key.erase(key.find_last_not_of(" \t") + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        if (!value.empty()) value.erase(value.find_last_not_of(" \t") + 1);
        config.set(key, value);
    }
}

}  // namespace latst
