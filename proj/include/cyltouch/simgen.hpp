#pragma once

// Simulated grasp dataset: five base patterns, each sample rotated by a small
// random row shift and corrupted with Gaussian noise, emitted as raw windows.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyltouch/core.hpp"
#include "cyltouch/kernels.hpp"

namespace cyltouch {

/// One rows x cols pressure pattern per intent, in label order.
using PatternSet = std::array<TactileFrame, kNumIntents>;

struct GeneratorConfig {
    GridShape shape{};
    std::size_t samples_per_class = 40;
    std::size_t frames_per_sample = 45;
    double sample_rate_hz = 45.0;
    /// Shifts are drawn uniformly from [-max_shift, max_shift], at most
    /// rows/2 - 1 so that a near half-turn never stays within one gesture.
    int max_shift = 4;
    /// Per-sample, per-cell static noise (trial-to-trial grasp variation).
    double noise_sigma = 0.15;
    /// Per-frame, per-cell fluctuation around the sample's grasp.
    double temporal_jitter_sigma = 0.02;
    /// Scale of forward (speed-up-like) loading mixed into the other classes.
    double forward_bias = 0.0;
    PatternSet base_patterns{};
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

namespace detail {

inline double circular_row_distance(double i, double center, std::size_t k)
{
    const double kk = static_cast<double>(k);
    double d = std::fmod(std::abs(i - center), kk);
    return std::min(d, kk - d);
}

inline double bump(double i, double center, double width, std::size_t k)
{
    const double d = circular_row_distance(i, center, k) / width;
    return std::exp(-0.5 * d * d);
}

} // namespace detail

/// Neutral grasp band plus four modulations: turn_left and turn_right load
/// opposite circumferential halves (mirror images about the grasp center),
/// speed_up adds forward axial loading on every row, stop adds a uniform
/// squeeze. Contacts are narrow (about one row) so that a one-row rotation
/// moves them onto different cells. Values are in [0, 1].
inline PatternSet default_patterns(GridShape shape = {})
{
    check_shape(shape);
    const std::size_t k = shape.rows;
    const std::size_t c = shape.cols;
    const double kd = static_cast<double>(k);
    const double center = (kd - 1.0) / 2.0;
    const double spread = kd / 5.5;   // neutral contacts sit +-2 rows from center on 11 rows
    const double side = kd / 2.75;    // turning contacts +-4 rows from center on 11 rows
    const double width = 0.55;

    auto axial_band = [&](std::size_t j) {
        if (c <= 2)
            return 1.0;
        return (j == 0 || j == c - 1) ? 0.5 : 1.0;
    };
    auto forward = [&](std::size_t j) { return c == 1 ? 1.0 : static_cast<double>(j) / static_cast<double>(c - 1); };

    PatternSet out;
    for (auto& p : out)
        p = TactileFrame(shape);
    for (std::size_t i = 0; i < k; ++i) {
        const double row = static_cast<double>(i);
        const double band = detail::bump(row, center - spread, width, k) + detail::bump(row, center + spread, width, k);
        const double left = detail::bump(row, center - side, width, k);
        const double right = detail::bump(row, center + side, width, k);
        for (std::size_t j = 0; j < c; ++j) {
            const double base = 0.4 * band * axial_band(j);
            auto set = [&](IntentLabel l, double v) {
                out[static_cast<std::size_t>(to_index(l))].at(i, j) = std::clamp(v, 0.0, 1.0);
            };
            set(IntentLabel::neutral, base);
            set(IntentLabel::turn_left, base + 0.55 * left * axial_band(j));
            set(IntentLabel::turn_right, base + 0.55 * right * axial_band(j));
            set(IntentLabel::speed_up, base + 0.4 * forward(j) * (0.1 + band));
            set(IntentLabel::stop, 1.8 * base + 0.08 * axial_band(j));
        }
    }
    return out;
}

inline double frobenius_distance(const TactileFrame& a, const TactileFrame& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    return std::sqrt(s);
}

/// Throws unless every pattern matches `shape`, lies in [0, 1] and every pair
/// differs by more than 0.5 in Frobenius norm.
inline void check_patterns(const PatternSet& patterns, GridShape shape)
{
    for (std::size_t p = 0; p < kNumIntents; ++p) {
        const auto& pat = patterns[p];
        if (pat.shape != shape || pat.values.size() != shape.cells())
            throw std::invalid_argument(std::string("pattern ") + std::string(kIntentNames[p]) +
                                        " does not match grid " + to_string(shape));
        for (double v : pat.values)
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument(std::string("pattern ") + std::string(kIntentNames[p]) +
                                            " has values outside [0, 1]");
    }
    for (std::size_t a = 0; a < kNumIntents; ++a)
        for (std::size_t b = a + 1; b < kNumIntents; ++b)
            if (!(frobenius_distance(patterns[a], patterns[b]) > 0.5))
                throw std::invalid_argument(std::string("patterns ") + std::string(kIntentNames[a]) + " and " +
                                            std::string(kIntentNames[b]) + " are closer than 0.5");
}

inline json patterns_to_json(const PatternSet& patterns)
{
    const auto shape = patterns[0].shape;
    json pj = json::object();
    for (std::size_t p = 0; p < kNumIntents; ++p) {
        json rows = json::array();
        for (std::size_t i = 0; i < shape.rows; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < shape.cols; ++j)
                row.push_back(patterns[p].at(i, j));
            rows.push_back(std::move(row));
        }
        pj[std::string(kIntentNames[p])] = std::move(rows);
    }
    return {{"shape", {shape.rows, shape.cols}}, {"patterns", pj}};
}

inline PatternSet patterns_from_json(const json& j)
{
    try {
        const auto dims = j.at("shape").get<std::vector<std::size_t>>();
        if (dims.size() != 2)
            throw FormatError("patterns shape must be [rows, cols]");
        const GridShape shape{dims[0], dims[1]};
        check_shape(shape);
        PatternSet out;
        for (std::size_t p = 0; p < kNumIntents; ++p) {
            const auto rows = j.at("patterns").at(std::string(kIntentNames[p])).get<std::vector<std::vector<double>>>();
            if (rows.size() != shape.rows)
                throw FormatError("pattern " + std::string(kIntentNames[p]) + " has wrong row count");
            TactileFrame f(shape);
            for (std::size_t i = 0; i < shape.rows; ++i) {
                if (rows[i].size() != shape.cols)
                    throw FormatError("pattern " + std::string(kIntentNames[p]) + " has wrong column count");
                for (std::size_t jj = 0; jj < shape.cols; ++jj)
                    f.at(i, jj) = rows[i][jj];
            }
            out[p] = std::move(f);
        }
        check_patterns(out, shape);
        return out;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed patterns file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

inline PatternSet load_patterns(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open patterns file '" + path + "'");
    try {
        return patterns_from_json(json::parse(is));
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline GeneratorConfig default_generator_config(std::uint64_t seed = 0)
{
    GeneratorConfig cfg;
    cfg.base_patterns = default_patterns(cfg.shape);
    cfg.seed = seed;
    return cfg;
}

inline void validate(const GeneratorConfig& cfg)
{
    check_shape(cfg.shape);
    if (cfg.samples_per_class == 0)
        throw std::invalid_argument("samples_per_class must be positive");
    if (cfg.frames_per_sample == 0)
        throw std::invalid_argument("frames_per_sample must be positive");
    if (!(cfg.sample_rate_hz > 0.0))
        throw std::invalid_argument("sample_rate_hz must be positive");
    const int limit = static_cast<int>(cfg.shape.rows / 2) - 1;
    if (cfg.max_shift < 0 || cfg.max_shift > limit)
        throw std::invalid_argument("max_shift must lie in [0, " + std::to_string(limit) + "] for " +
                                    std::to_string(cfg.shape.rows) + " rows");
    if (!(cfg.noise_sigma >= 0.0) || !(cfg.temporal_jitter_sigma >= 0.0) || !(cfg.forward_bias >= 0.0))
        throw std::invalid_argument("noise, jitter and forward_bias must be non-negative");
    check_patterns(cfg.base_patterns, cfg.shape);
}

inline json to_json(const GeneratorConfig& cfg, bool include_patterns = true)
{
    json j{{"shape", {cfg.shape.rows, cfg.shape.cols}},
           {"samples_per_class", cfg.samples_per_class},
           {"frames_per_sample", cfg.frames_per_sample},
           {"sample_rate_hz", cfg.sample_rate_hz},
           {"max_shift", cfg.max_shift},
           {"noise_sigma", cfg.noise_sigma},
           {"temporal_jitter_sigma", cfg.temporal_jitter_sigma},
           {"forward_bias", cfg.forward_bias},
           {"seed", cfg.seed}};
    if (include_patterns)
        j["base_patterns"] = patterns_to_json(cfg.base_patterns)["patterns"];
    return j;
}

/// Reads a generator config; missing keys keep their defaults. Patterns come
/// from "base_patterns" (same layout as a patterns file's "patterns") or the
/// built-in set for the configured shape.
inline GeneratorConfig generator_config_from_json(const json& j)
{
    try {
        GeneratorConfig cfg;
        if (j.contains("shape")) {
            const auto dims = j.at("shape").get<std::vector<std::size_t>>();
            if (dims.size() != 2)
                throw FormatError("generator shape must be [rows, cols]");
            cfg.shape = {dims[0], dims[1]};
        }
        check_shape(cfg.shape);
        cfg.samples_per_class = j.value("samples_per_class", cfg.samples_per_class);
        cfg.frames_per_sample = j.value("frames_per_sample", cfg.frames_per_sample);
        cfg.sample_rate_hz = j.value("sample_rate_hz", cfg.sample_rate_hz);
        cfg.max_shift = j.value("max_shift", cfg.max_shift);
        cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
        cfg.temporal_jitter_sigma = j.value("temporal_jitter_sigma", cfg.temporal_jitter_sigma);
        cfg.forward_bias = j.value("forward_bias", cfg.forward_bias);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("base_patterns"))
            cfg.base_patterns = patterns_from_json(
                {{"shape", {cfg.shape.rows, cfg.shape.cols}}, {"patterns", j.at("base_patterns")}});
        else
            cfg.base_patterns = default_patterns(cfg.shape);
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed generator config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GeneratedSample {
    TactileWindow window;
    int shift = 0;
};

/// One sample, seeded by (cfg.seed, sample_index) so any subset can be
/// regenerated independently of thread count or order.
inline GeneratedSample generate_sample(const GeneratorConfig& cfg, IntentLabel label, std::size_t sample_index)
{
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(sample_index)));
    std::uniform_int_distribution<int> shift_dist(-cfg.max_shift, cfg.max_shift);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const auto& patterns = cfg.base_patterns;
    const auto li = static_cast<std::size_t>(to_index(label));
    const std::size_t cells = cfg.shape.cells();

    const int shift = shift_dist(rng);
    TactileFrame grasp = patterns[li];
    if (cfg.forward_bias > 0.0 && label != IntentLabel::speed_up) {
        const auto& fwd = patterns[static_cast<std::size_t>(to_index(IntentLabel::speed_up))];
        const auto& neu = patterns[static_cast<std::size_t>(to_index(IntentLabel::neutral))];
        const double amount = cfg.forward_bias * uniform(rng);
        for (std::size_t cell = 0; cell < cells; ++cell)
            grasp.values[cell] += amount * std::max(0.0, fwd.values[cell] - neu.values[cell]);
    }
    for (auto& v : grasp.values)
        v += cfg.noise_sigma * unit(rng);
    grasp = rotate_rows(grasp, shift);

    GeneratedSample out;
    out.shift = shift;
    out.window.sample_rate_hz = cfg.sample_rate_hz;
    out.window.frames.reserve(cfg.frames_per_sample);
    for (std::size_t t = 0; t < cfg.frames_per_sample; ++t) {
        TactileFrame f(cfg.shape);
        for (std::size_t cell = 0; cell < cells; ++cell)
            f.values[cell] = std::clamp(grasp.values[cell] + cfg.temporal_jitter_sigma * unit(rng), 0.0, 1.0);
        out.window.frames.push_back(std::move(f));
    }
    return out;
}

/// samples_per_class windows per label, grouped by label in label order.
inline LabeledDataset generate(const GeneratorConfig& cfg)
{
    validate(cfg);
    LabeledDataset ds;
    ds.kind = DatasetKind::raw;
    std::map<int, std::size_t> histogram;
    for (int s = -cfg.max_shift; s <= cfg.max_shift; ++s)
        histogram[s] = 0;
    std::vector<int> shifts;
    std::size_t index = 0;
    for (auto label : kAllIntents) {
        for (std::size_t n = 0; n < cfg.samples_per_class; ++n, ++index) {
            auto sample = generate_sample(cfg, label, index);
            ++histogram[sample.shift];
            shifts.push_back(sample.shift);
            ds.items.push_back({std::move(sample.window), label});
        }
    }
    json hist = json::object();
    for (const auto& [s, count] : histogram)
        hist[std::to_string(s)] = count;
    ds.meta = {{"source", "simgen"},
               {"sample_rate_hz", cfg.sample_rate_hz},
               {"generator", to_json(cfg)},
               {"shift_histogram", hist},
               {"shifts", shifts}};
    return ds;
}

} // namespace cyltouch
