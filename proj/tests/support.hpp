#pragma once

// Shared helpers for the unit tests: random inputs and slow reference
// implementations that the library code is checked against.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cyltouch/core.hpp"
#include "cyltouch/kernels.hpp"

namespace testing {

using namespace cyltouch;

inline FeatureMap random_map(std::mt19937_64& rng, GridShape shape = {}, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(0.0, scale);
    FeatureMap m(shape);
    for (auto& v : m.data)
        v = u(rng);
    return m;
}

inline TactileFrame random_frame(std::mt19937_64& rng, GridShape shape = {})
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TactileFrame f(shape);
    for (auto& v : f.values)
        v = u(rng);
    return f;
}

inline TactileWindow random_window(std::mt19937_64& rng, std::size_t frames, GridShape shape = {})
{
    TactileWindow w;
    for (std::size_t t = 0; t < frames; ++t)
        w.frames.push_back(random_frame(rng, shape));
    return w;
}

inline TactileWindow constant_window(double value, std::size_t frames, GridShape shape = {})
{
    TactileWindow w;
    TactileFrame f(shape);
    for (auto& v : f.values)
        v = value;
    w.frames.assign(frames, f);
    return w;
}

/// Materializes every shifted copy of b and keeps the cheapest alignment.
/// Ties go to the smaller circular displacement, then the smaller shift.
inline Alignment brute_force_cylindrical(const FeatureMap& a, const FeatureMap& b, double delta)
{
    const std::size_t k = a.shape.rows;
    const std::size_t c = a.shape.cols;
    Alignment best{std::numeric_limits<double>::infinity(), 0};
    std::size_t best_disp = k;
    for (std::size_t s = 0; s < k; ++s) {
        std::vector<double> shifted(b.data.size());
        for (std::size_t p = 0; p < kNumChannels; ++p)
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    shifted[(p * k + i) * c + j] = b.data[(p * k + (i + k - s) % k) * c + j];
        double sq = 0.0;
        for (std::size_t t = 0; t < shifted.size(); ++t)
            sq += (a.data[t] - shifted[t]) * (a.data[t] - shifted[t]);
        const std::size_t disp = std::min(s, k - s);
        const double total = sq + std::expm1(static_cast<double>(disp) / delta);
        if (total < best.distance || (total == best.distance && disp < best_disp)) {
            best = {total, s};
            best_disp = disp;
        }
    }
    return best;
}

inline double frobenius_sq(const FeatureMap& a, const FeatureMap& b)
{
    double s = 0.0;
    for (std::size_t t = 0; t < a.data.size(); ++t)
        s += (a.data[t] - b.data[t]) * (a.data[t] - b.data[t]);
    return s;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c)
            a(r, c) = n(rng);
    return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("cyltouch_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing
