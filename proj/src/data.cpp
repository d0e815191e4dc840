#include "latst/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace latst {

// ---------------------------------------------------------------------------
// CSV loading

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else if (ch != '\r') {
            current.push_back(ch);
        }
    }
    fields.push_back(current);
    return fields;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    // tolerate surrounding spaces
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    if (first == last) {
        throw DataError("empty cell at row " + std::to_string(row) + ", column '" + column + "'");
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                        ", column '" + column + "'");
    }
    if (std::isnan(value)) {
        throw DataError("NaN cell at row " + std::to_string(row) + ", column '" + column + "'");
    }
    return value;
}

}  // namespace

TimeSeriesTable load_csv(const std::string& path, const std::string& date_column) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open dataset file '" + path + "'");

    std::string line;
    if (!std::getline(file, line)) throw DataError("dataset file '" + path + "' is empty");
    std::vector<std::string> header = split_line(line);

    std::size_t date_index = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        for (std::size_t j = i + 1; j < header.size(); ++j) {
            if (header[i] == header[j]) {
                throw DataError("duplicate column name '" + header[i] + "' in '" + path + "'");
            }
        }
        if (header[i] == date_column) date_index = i;
    }
    if (date_index == header.size()) {
        throw DataError("date column '" + date_column + "' not found in '" + path + "'");
    }
    if (header.size() < 2) throw DataError("dataset '" + path + "' has no value columns");

    TimeSeriesTable table;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i != date_index) table.channel_names.push_back(header[i]);
    }
    const std::size_t channels = table.channel_names.size();

    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(file, line)) {
        ++row;  // 1-based data row, matching what a user sees below the header
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        table.timestamps.push_back(fields[date_index]);
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == date_index) continue;
            values.push_back(parse_cell(fields[i], row, header[i]));
        }
    }
    if (table.timestamps.empty()) throw DataError("dataset '" + path + "' has no data rows");

    table.values =
        Tensor::from_data(Shape{table.timestamps.size(), channels}, std::move(values));
    return table;
}

// ---------------------------------------------------------------------------
// Splitting and standardization

SplitRanges chronological_split(std::size_t total_rows, SplitPreset preset,
                                std::array<double, 3> fractions, std::size_t lookback,
                                std::size_t horizon) {
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    switch (preset) {
        case SplitPreset::ett_hourly:
            n_train = 12 * 30 * 24;
            n_val = 4 * 30 * 24;
            n_test = 4 * 30 * 24;
            break;
        case SplitPreset::ett_quarter:
            n_train = 12 * 30 * 24 * 4;
            n_val = 4 * 30 * 24 * 4;
            n_test = 4 * 30 * 24 * 4;
            break;
        case SplitPreset::generic: {
            double sum = 0.0;
            for (double f : fractions) {
                if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
                sum += f;
            }
            if (sum > 1.0 + 1e-12) {
                throw ConfigError("split fractions sum to " + std::to_string(sum) +
                                  ", must be <= 1");
            }
            n_train = static_cast<std::size_t>(fractions[0] * static_cast<double>(total_rows));
            n_val = static_cast<std::size_t>(fractions[1] * static_cast<double>(total_rows));
            n_test = static_cast<std::size_t>(fractions[2] * static_cast<double>(total_rows));
            break;
        }
    }
    if (n_train + n_val + n_test > total_rows) {
        throw ConfigError("split needs " + std::to_string(n_train + n_val + n_test) +
                          " rows, dataset has " + std::to_string(total_rows));
    }
    if (n_train < lookback + horizon) {
        throw ConfigError("train split of " + std::to_string(n_train) +
                          " rows is smaller than lookback + horizon = " +
                          std::to_string(lookback + horizon));
    }
    SplitRanges ranges;
    ranges.train = {0, n_train};
    ranges.val = {n_train, n_train + n_val};
    ranges.test = {n_train + n_val, n_train + n_val + n_test};
    return ranges;
}

std::pair<TimeSeriesTable, Scaler> standardize(const TimeSeriesTable& table,
                                               const RowRange& train_range) {
    if (train_range.size() == 0) throw ContractError("standardize: empty train range");
    const std::size_t rows = table.rows();
    const std::size_t channels = table.channels();
    if (train_range.end > rows) throw ContractError("standardize: train range exceeds table");

    const double* src = table.values.data().data();
    Scaler scaler;
    scaler.mean.assign(channels, 0.0);
    scaler.std.assign(channels, 0.0);
    const double n = static_cast<double>(train_range.size());
    for (std::size_t r = train_range.begin; r < train_range.end; ++r) {
        for (std::size_t c = 0; c < channels; ++c) scaler.mean[c] += src[r * channels + c];
    }
    for (std::size_t c = 0; c < channels; ++c) scaler.mean[c] /= n;
    for (std::size_t r = train_range.begin; r < train_range.end; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = src[r * channels + c] - scaler.mean[c];
            scaler.std[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < channels; ++c) {
        scaler.std[c] = std::max(std::sqrt(scaler.std[c] / n), 1e-8);
    }

    TimeSeriesTable scaled;
    scaled.timestamps = table.timestamps;
    scaled.channel_names = table.channel_names;
    std::vector<double> values(rows * channels);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
            values[r * channels + c] = (src[r * channels + c] - scaler.mean[c]) / scaler.std[c];
        }
    }
    scaled.values = Tensor::from_data(Shape{rows, channels}, std::move(values));
    return {std::move(scaled), std::move(scaler)};
}

// ---------------------------------------------------------------------------
// Windowing

WindowedDataset make_windows(const TimeSeriesTable& table, const RowRange& range,
                             const WindowSpec& spec, const std::string& split_name,
                             bool borrow_context) {
    if (spec.lookback == 0 || spec.horizon == 0 || spec.stride == 0) {
        throw ConfigError("window spec fields must be positive");
    }
    if (range.end > table.rows() || range.begin > range.end) {
        throw ContractError("window range exceeds table rows");
    }
    const std::size_t L = spec.lookback;
    const std::size_t P = spec.horizon;

    std::size_t effective_begin = range.begin;
    if (borrow_context) effective_begin = (range.begin >= L) ? range.begin - L : 0;
    const std::size_t effective_rows = range.end - effective_begin;

    WindowedDataset ds;
    ds.split = split_name;
    if (effective_rows < L + P) {
        if (split_name == "train") {
            throw ConfigError("train split yields zero windows: " +
                              std::to_string(effective_rows) + " rows for lookback " +
                              std::to_string(L) + " + horizon " + std::to_string(P));
        }
        return ds;  // empty val/test dataset; caller may warn
    }
    const std::size_t count = (effective_rows - L - P) / spec.stride + 1;
    const std::size_t channels = table.channels();

    std::vector<double> inputs(count * channels * L);
    std::vector<double> targets(count * channels * P);
    const double* src = table.values.data().data();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = effective_begin + i * spec.stride;
        for (std::size_t c = 0; c < channels; ++c) {
            double* in_row = inputs.data() + (i * channels + c) * L;
            double* tg_row = targets.data() + (i * channels + c) * P;
            for (std::size_t l = 0; l < L; ++l) in_row[l] = src[(start + l) * channels + c];
            for (std::size_t p = 0; p < P; ++p) tg_row[p] = src[(start + L + p) * channels + c];
        }
    }
    ds.count = count;
    ds.inputs = Tensor::from_data(Shape{count, channels, L}, std::move(inputs));
    ds.targets = Tensor::from_data(Shape{count, channels, P}, std::move(targets));
    return ds;
}

DatasetBundle build_datasets(const TimeSeriesTable& table, const SplitRanges& ranges,
                             const WindowSpec& spec) {
    auto [scaled, scaler] = standardize(table, ranges.train);
    DatasetBundle bundle;
    bundle.scaler = std::move(scaler);
    bundle.train = make_windows(scaled, ranges.train, spec, "train", false);
    bundle.val = make_windows(scaled, ranges.val, spec, "val", true);
    bundle.test = make_windows(scaled, ranges.test, spec, "test", true);
    return bundle;
}

// ---------------------------------------------------------------------------
// Batching

Batches::Batches(const WindowedDataset& dataset, std::size_t batch_size, bool shuffle,
                 std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size) {
    if (batch_size == 0) throw ContractError("batch_size must be >= 1");
    order_.resize(dataset.count);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(order_);
    }
}

std::size_t Batches::batch_count() const {
    return (dataset_->count + batch_size_ - 1) / batch_size_;
}

Batch Batches::get(std::size_t batch_index) const {
    const std::size_t begin = batch_index * batch_size_;
    if (begin >= dataset_->count) throw ContractError("batch index out of range");
    const std::size_t size = std::min(batch_size_, dataset_->count - begin);

    const Shape& in_shape = dataset_->inputs.shape();    // [N x C x L]
    const Shape& tg_shape = dataset_->targets.shape();   // [N x C x P]
    const std::size_t in_window = in_shape[1] * in_shape[2];
    const std::size_t tg_window = tg_shape[1] * tg_shape[2];

    std::vector<double> in(size * in_window);
    std::vector<double> tg(size * tg_window);
    const double* src_in = dataset_->inputs.data().data();
    const double* src_tg = dataset_->targets.data().data();
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t w = order_[begin + i];
        std::copy_n(src_in + w * in_window, in_window, in.data() + i * in_window);
        std::copy_n(src_tg + w * tg_window, tg_window, tg.data() + i * tg_window);
    }
    Batch batch;
    batch.size = size;
    batch.inputs = Tensor::from_data(Shape{size, in_shape[1], in_shape[2]}, std::move(in));
    batch.targets = Tensor::from_data(Shape{size, tg_shape[1], tg_shape[2]}, std::move(tg));
    return batch;
}

}  // namespace latst
