#pragma once

#include <array>
#include <string>
#include <vector>

#include "latst/tensor.hpp"

namespace latst {

// Multivariate series as loaded from CSV: one opaque timestamp column plus C
// numeric channels over T rows. Missing cells are a hard load error.
struct TimeSeriesTable {
    std::vector<std::string> timestamps;
    Tensor values;  // [T x C]
    std::vector<std::string> channel_names;

    std::size_t rows() const { return timestamps.size(); }
    std::size_t channels() const { return channel_names.size(); }
};

// UTF-8 comma-separated file with a header row; the date column is matched
// by name and kept opaque, every other column parses as a 64-bit float.
TimeSeriesTable load_csv(const std::string& path, const std::string& date_column = "date");

struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // half-open
    std::size_t size() const { return end - begin; }
};

struct SplitRanges {
    RowRange train, val, test;
};

enum class SplitPreset { generic, ett_hourly, ett_quarter };

// Contiguous, ordered, non-overlapping train/val/test row ranges. Presets:
// ett-hourly = 8640/2880/2880 rows (12/4/4 months at hourly cadence),
// ett-quarter = x4 rows, generic = the given fractions (default 0.7/0.1/0.2,
// floor per split, remainder rows unused). The train range must hold at
// least lookback + horizon rows.
SplitRanges chronological_split(std::size_t total_rows, SplitPreset preset,
                                std::array<double, 3> fractions, std::size_t lookback,
                                std::size_t horizon);

struct Scaler {
    std::vector<double> mean;  // per channel, fitted on train rows only
    std::vector<double> std;   // population std, floored at 1e-8
};

// Per channel: subtract train-mean, divide by train-std. Returns the scaled
// table and the scaler for optional raw-scale metric reporting.
std::pair<TimeSeriesTable, Scaler> standardize(const TimeSeriesTable& table,
                                               const RowRange& train_range);

struct WindowSpec {
    std::size_t lookback = 336;
    std::size_t horizon = 96;
    std::size_t stride = 1;
};

struct WindowedDataset {
    std::string split;  // "train" | "val" | "test"
    std::size_t count = 0;
    Tensor inputs;   // [N x C x lookback]; undefined handle when count == 0
    Tensor targets;  // [N x C x horizon]
};

// Sliding windows for one split. Window i reads rows [s_i, s_i + L) as input
// and rows [s_i + L, s_i + L + P) as target, s_i stepping by stride. When
// borrow_context is set (val/test), lookback may reach up to L rows before
// range.begin, so the first target row is exactly range.begin; targets never
// leave the range. Zero windows raises ConfigError for train and returns an
// empty dataset otherwise.
WindowedDataset make_windows(const TimeSeriesTable& table, const RowRange& range,
                             const WindowSpec& spec, const std::string& split_name,
                             bool borrow_context);

struct DatasetBundle {
    WindowedDataset train, val, test;
    Scaler scaler;
};

// load -> split -> standardize -> window, end to end.
DatasetBundle build_datasets(const TimeSeriesTable& table, const SplitRanges& ranges,
                             const WindowSpec& spec);

struct Batch {
    Tensor inputs;   // [b x C x L]
    Tensor targets;  // [b x C x P]
    std::size_t size = 0;
};

// Covers every window exactly once per epoch, final partial batch included;
// shuffle is a seeded permutation.
class Batches {
public:
    Batches(const WindowedDataset& dataset, std::size_t batch_size, bool shuffle,
            std::uint64_t seed);

    std::size_t batch_count() const;
    Batch get(std::size_t batch_index) const;
    const std::vector<std::size_t>& order() const { return order_; }

private:
    const WindowedDataset* dataset_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
};

}  // namespace latst
