#pragma once

// Shared domain vocabulary: grids, windows, feature maps, intent labels and
// the labeled dataset container.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace cyltouch {

using json = nlohmann::json;

/// Raised when a file or message does not follow the expected schema.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cylindrical grid geometry. Rows wrap around the handle, columns run along it.
struct GridShape {
    std::size_t rows = 11;
    std::size_t cols = 5;

    constexpr std::size_t cells() const noexcept { return rows * cols; }
    friend constexpr bool operator==(const GridShape&, const GridShape&) = default;
};

inline void check_shape(const GridShape& shape)
{
    if (shape.rows < 2 || shape.cols < 1)
        throw std::invalid_argument("grid shape needs rows >= 2 and cols >= 1, got " +
                                    std::to_string(shape.rows) + "x" + std::to_string(shape.cols));
}

inline std::string to_string(const GridShape& shape)
{
    return std::to_string(shape.rows) + "x" + std::to_string(shape.cols);
}

// ---------------------------------------------------------------------------
// Intent labels
// ---------------------------------------------------------------------------

enum class IntentLabel : int { turn_left = 0, turn_right = 1, speed_up = 2, stop = 3, neutral = 4 };

inline constexpr std::size_t kNumIntents = 5;

inline constexpr std::array<IntentLabel, kNumIntents> kAllIntents = {
    IntentLabel::turn_left, IntentLabel::turn_right, IntentLabel::speed_up, IntentLabel::stop,
    IntentLabel::neutral};

inline constexpr std::array<std::string_view, kNumIntents> kIntentNames = {
    "turn_left", "turn_right", "speed_up", "stop", "neutral"};

constexpr int to_index(IntentLabel label) noexcept { return static_cast<int>(label); }

inline IntentLabel label_from_index(int index)
{
    if (index < 0 || index >= static_cast<int>(kNumIntents))
        throw std::out_of_range("intent index out of range: " + std::to_string(index));
    return static_cast<IntentLabel>(index);
}

constexpr std::string_view to_string(IntentLabel label) noexcept
{
    return kIntentNames[static_cast<std::size_t>(label)];
}

inline std::optional<IntentLabel> parse_label(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kNumIntents; ++i)
        if (kIntentNames[i] == name)
            return static_cast<IntentLabel>(i);
    return std::nullopt;
}

inline IntentLabel label_from_string(std::string_view name)
{
    if (auto label = parse_label(name))
        return *label;
    throw FormatError("unknown intent label '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Raw data
// ---------------------------------------------------------------------------

/// One time slice of the pressure grid, row-major, normalized to [0, 1].
struct TactileFrame {
    GridShape shape;
    std::vector<double> values;

    TactileFrame() = default;
    explicit TactileFrame(GridShape s) : shape(s), values(s.cells(), 0.0) {}
    TactileFrame(GridShape s, std::vector<double> v) : shape(s), values(std::move(v))
    {
        if (values.size() != shape.cells())
            throw std::invalid_argument("frame has " + std::to_string(values.size()) +
                                        " values, expected " + std::to_string(shape.cells()));
    }

    double& at(std::size_t row, std::size_t col) { return values[row * shape.cols + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * shape.cols + col]; }

    friend bool operator==(const TactileFrame&, const TactileFrame&) = default;
};

struct TactileWindow {
    std::vector<TactileFrame> frames;
    double sample_rate_hz = 45.0;

    GridShape shape() const { return frames.empty() ? GridShape{} : frames.front().shape; }
    std::size_t size() const noexcept { return frames.size(); }

    friend bool operator==(const TactileWindow&, const TactileWindow&) = default;
};

/// Number of frames in a window of the given duration.
inline std::size_t frames_per_window(double window_seconds, double sample_rate_hz)
{
    return static_cast<std::size_t>(std::lround(window_seconds * sample_rate_hz));
}

// ---------------------------------------------------------------------------
// Feature maps
// ---------------------------------------------------------------------------

enum class Channel : std::size_t { mean = 0, max = 1, std = 2, gradient = 3 };

inline constexpr std::size_t kNumChannels = 4;

/// Four stacked row-major planes (mean, max, std, gradient) over one grid.
struct FeatureMap {
    GridShape shape;
    std::vector<double> data; // [channel][row][col]

    FeatureMap() = default;
    explicit FeatureMap(GridShape s) : shape(s), data(kNumChannels * s.cells(), 0.0) {}
    FeatureMap(GridShape s, std::vector<double> d) : shape(s), data(std::move(d))
    {
        if (data.size() != kNumChannels * shape.cells())
            throw std::invalid_argument("feature map has " + std::to_string(data.size()) +
                                        " values, expected " +
                                        std::to_string(kNumChannels * shape.cells()));
    }

    std::size_t index(std::size_t channel, std::size_t row, std::size_t col) const noexcept
    {
        return (channel * shape.rows + row) * shape.cols + col;
    }
    double& at(Channel c, std::size_t row, std::size_t col)
    {
        return data[index(static_cast<std::size_t>(c), row, col)];
    }
    double at(Channel c, std::size_t row, std::size_t col) const
    {
        return data[index(static_cast<std::size_t>(c), row, col)];
    }
    std::span<double> plane(Channel c)
    {
        return std::span<double>(data).subspan(static_cast<std::size_t>(c) * shape.cells(),
                                               shape.cells());
    }
    std::span<const double> plane(Channel c) const
    {
        return std::span<const double>(data).subspan(static_cast<std::size_t>(c) * shape.cells(),
                                                      shape.cells());
    }

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class DatasetKind { raw, featurized };

constexpr std::string_view to_string(DatasetKind kind) noexcept
{
    return kind == DatasetKind::raw ? "raw" : "featurized";
}

using Payload = std::variant<TactileWindow, FeatureMap>;

struct LabeledSample {
    Payload payload;
    IntentLabel label;

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct LabeledDataset {
    DatasetKind kind = DatasetKind::featurized;
    std::vector<LabeledSample> items;
    json meta = json::object();

    std::size_t size() const noexcept { return items.size(); }
    bool empty() const noexcept { return items.empty(); }

    const TactileWindow& window(std::size_t i) const { return std::get<TactileWindow>(items[i].payload); }
    const FeatureMap& features(std::size_t i) const { return std::get<FeatureMap>(items[i].payload); }
    IntentLabel label(std::size_t i) const { return items[i].label; }

    std::vector<IntentLabel> labels() const
    {
        std::vector<IntentLabel> out;
        out.reserve(items.size());
        for (const auto& item : items)
            out.push_back(item.label);
        return out;
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

using ClassCounts = std::array<std::size_t, kNumIntents>;

inline ClassCounts class_counts(const LabeledDataset& ds)
{
    ClassCounts counts{};
    for (const auto& item : ds.items)
        ++counts[static_cast<std::size_t>(to_index(item.label))];
    return counts;
}

inline std::size_t classes_present(const ClassCounts& counts)
{
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                                  [](std::size_t c) { return c > 0; }));
}

/// Subset of a dataset in the given index order; meta is copied.
inline LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices)
{
    LabeledDataset out;
    out.kind = ds.kind;
    out.meta = ds.meta;
    out.items.reserve(indices.size());
    for (auto i : indices)
        out.items.push_back(ds.items.at(i));
    return out;
}

inline std::vector<FeatureMap> feature_maps(const LabeledDataset& ds)
{
    if (ds.kind != DatasetKind::featurized)
        throw std::invalid_argument("expected a featurized dataset");
    std::vector<FeatureMap> out;
    out.reserve(ds.size());
    for (const auto& item : ds.items)
        out.push_back(std::get<FeatureMap>(item.payload));
    return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    ClassCounts class_counts{};

    bool valid() const noexcept { return violations.empty(); }
};

namespace detail {

inline bool all_finite(std::span<const double> xs)
{
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

// First problem found in one payload, or empty. Shape mismatches against the
// dataset's reference shape are reported separately by the caller.
inline std::string payload_problem(const TactileWindow& w)
{
    if (w.frames.empty())
        return "empty window";
    if (!(w.sample_rate_hz > 0.0))
        return "non-positive sample rate";
    for (const auto& f : w.frames) {
        if (f.shape != w.frames.front().shape)
            return "frames with differing grid shapes";
        if (f.values.size() != f.shape.cells())
            return "frame value count does not match its shape";
        if (!all_finite(f.values))
            return "non-finite pressure value";
        if (std::any_of(f.values.begin(), f.values.end(), [](double v) { return v < 0.0; }))
            return "negative pressure value";
    }
    return {};
}

inline std::string payload_problem(const FeatureMap& m)
{
    if (m.data.size() != kNumChannels * m.shape.cells())
        return "feature value count does not match its shape";
    if (!all_finite(m.data))
        return "non-finite feature value";
    auto sd = m.plane(Channel::std);
    if (std::any_of(sd.begin(), sd.end(), [](double v) { return v < 0.0; }))
        return "negative std channel entry";
    auto mean = m.plane(Channel::mean);
    auto mx = m.plane(Channel::max);
    for (std::size_t i = 0; i < mean.size(); ++i)
        if (mx[i] < mean[i])
            return "max channel below mean channel";
    return {};
}

} // namespace detail

inline ValidationReport validate_dataset(const LabeledDataset& ds)
{
    ValidationReport report;
    report.class_counts = class_counts(ds);
    if (ds.items.empty()) {
        report.violations.push_back("dataset is empty");
        return report;
    }

    std::optional<GridShape> ref_shape;
    std::optional<std::size_t> ref_frames;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const auto& payload = ds.items[i].payload;
        const std::string where = "sample " + std::to_string(i) + ": ";

        const bool is_raw = std::holds_alternative<TactileWindow>(payload);
        if (is_raw != (ds.kind == DatasetKind::raw)) {
            report.violations.push_back(where + "payload kind differs from dataset kind " +
                                        std::string(to_string(ds.kind)));
            continue;
        }

        std::string problem;
        GridShape shape;
        if (is_raw) {
            const auto& w = std::get<TactileWindow>(payload);
            problem = detail::payload_problem(w);
            shape = w.shape();
            if (problem.empty()) {
                if (!ref_frames)
                    ref_frames = w.size();
                else if (*ref_frames != w.size())
                    problem = "window length " + std::to_string(w.size()) + " differs from " +
                              std::to_string(*ref_frames);
            }
        } else {
            const auto& m = std::get<FeatureMap>(payload);
            problem = detail::payload_problem(m);
            shape = m.shape;
        }
        if (!problem.empty()) {
            report.violations.push_back(where + problem);
            continue;
        }
        if (!ref_shape)
            ref_shape = shape;
        else if (*ref_shape != shape)
            report.violations.push_back(where + "shape mismatch, " + to_string(shape) + " vs " +
                                        to_string(*ref_shape));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Seeding and splitting
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer, used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Named sub-seed: every consumer of randomness gets its own stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return mix_seed(seed ^ mix_seed(h));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
    return mix_seed(seed ^ mix_seed(index + 0x632BE59BD9B4E019ull));
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Global shuffle, then the first round(n * fraction) indices train. With
/// `stratified`, each class is shuffled and cut separately.
inline SplitIndices split_indices(const LabeledDataset& ds, double train_fraction,
                                  std::uint64_t seed, bool stratified = false)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train fraction must lie in (0, 1), got " +
                                    std::to_string(train_fraction));
    const std::size_t n = ds.size();
    if (n < 2)
        throw std::invalid_argument("need at least 2 samples to split, got " + std::to_string(n));

    std::mt19937_64 rng(derive_seed(seed, "split"));
    auto cut = [&](std::size_t count) {
        auto k = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(count)));
        return std::clamp<std::size_t>(k, 1, count - 1);
    };

    SplitIndices out;
    if (!stratified) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto k = cut(n);
        out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
        return out;
    }

    for (auto label : kAllIntents) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (ds.items[i].label == label)
                members.push_back(i);
        if (members.empty())
            continue;
        std::shuffle(members.begin(), members.end(), rng);
        const auto k = members.size() == 1 ? std::size_t{1} : cut(members.size());
        out.train.insert(out.train.end(), members.begin(),
                         members.begin() + static_cast<std::ptrdiff_t>(k));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(k),
                        members.end());
    }
    if (out.test.empty())
        throw std::invalid_argument("stratified split left the test set empty");
    return out;
}

inline std::pair<LabeledDataset, LabeledDataset>
split_train_test(const LabeledDataset& ds, double train_fraction, std::uint64_t seed,
                 bool stratified = false)
{
    auto idx = split_indices(ds, train_fraction, seed, stratified);
    return {subset(ds, idx.train), subset(ds, idx.test)};
}

} // namespace cyltouch
