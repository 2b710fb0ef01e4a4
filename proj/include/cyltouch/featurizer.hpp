#pragma once

// Collapses a one-second window into a 4-channel feature map. The gradient
// channel wraps circularly along rows so that rotating the input rotates the
// output by the same amount.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cyltouch/core.hpp"

namespace cyltouch {

enum class GradientMode { central_wrap };

struct FeaturizerConfig {
    GradientMode gradient_mode = GradientMode::central_wrap;
    /// Added under the square root of the variance. 0 keeps the exact population std.
    double epsilon = 0.0;
};

inline json to_json(const FeaturizerConfig& cfg)
{
    return {{"gradient_mode", "central_wrap"}, {"epsilon", cfg.epsilon}};
}

/// Gradient magnitude of a single row-major plane: central differences with
/// circular wrap on rows, one-sided differences at the first and last column.
inline void spatial_gradient(std::span<const double> plane, GridShape shape, std::span<double> out)
{
    const std::size_t k = shape.rows;
    const std::size_t c = shape.cols;
    auto v = [&](std::size_t i, std::size_t j) { return plane[i * c + j]; };
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t up = (i + 1) % k;
        const std::size_t down = (i + k - 1) % k;
        for (std::size_t j = 0; j < c; ++j) {
            const double g_row = 0.5 * (v(up, j) - v(down, j));
            double g_col = 0.0;
            if (c > 1) {
                if (j == 0)
                    g_col = v(i, 1) - v(i, 0);
                else if (j == c - 1)
                    g_col = v(i, c - 1) - v(i, c - 2);
                else
                    g_col = 0.5 * (v(i, j + 1) - v(i, j - 1));
            }
            out[i * c + j] = std::sqrt(g_row * g_row + g_col * g_col);
        }
    }
}

inline FeatureMap featurize(const TactileWindow& w, const FeaturizerConfig& cfg = {})
{
    if (w.frames.empty())
        throw std::invalid_argument("cannot featurize an empty window");
    const GridShape shape = w.shape();
    const std::size_t cells = shape.cells();
    for (const auto& f : w.frames)
        if (f.shape != shape || f.values.size() != cells)
            throw std::invalid_argument("window frames have inconsistent shapes");

    FeatureMap out(shape);
    auto mean = out.plane(Channel::mean);
    auto mx = out.plane(Channel::max);
    auto sd = out.plane(Channel::std);
    const double n = static_cast<double>(w.size());

    for (std::size_t cell = 0; cell < cells; ++cell) {
        double sum = 0.0;
        double peak = w.frames.front().values[cell];
        double floor = peak;
        for (const auto& f : w.frames) {
            sum += f.values[cell];
            peak = std::max(peak, f.values[cell]);
            floor = std::min(floor, f.values[cell]);
        }
        // A flat cell is exact: summing n copies can round away from the value.
        const double mu = peak == floor ? peak : sum / n;
        double ss = 0.0;
        if (peak != floor) {
            for (const auto& f : w.frames) {
                const double d = f.values[cell] - mu;
                ss += d * d;
            }
        }
        mean[cell] = mu;
        mx[cell] = std::max(peak, mu); // guards rounding of mu past a flat max
        sd[cell] = std::sqrt(ss / n + cfg.epsilon);
    }
    spatial_gradient(out.plane(Channel::mean), shape, out.plane(Channel::gradient));
    return out;
}

inline LabeledDataset featurize_dataset(const LabeledDataset& ds, const FeaturizerConfig& cfg = {})
{
    if (ds.kind != DatasetKind::raw)
        throw std::invalid_argument("featurize expects a raw dataset");
    LabeledDataset out;
    out.kind = DatasetKind::featurized;
    out.meta = ds.meta;
    out.meta["featurizer"] = to_json(cfg);
    out.items.reserve(ds.size());
    for (const auto& item : ds.items)
        out.items.push_back({featurize(std::get<TactileWindow>(item.payload), cfg), item.label});
    return out;
}

} // namespace cyltouch
