#pragma once

// RBF and cylindrical kernels over feature maps.
//
// The cylindrical distance aligns two maps by the circular row shift that
// minimizes squared Frobenius mismatch plus an exponential shift penalty:
//
//   d_C(a, b) = min_s ||a - rot_s(b)||_F^2 + (exp(min(s, k - s) / delta) - 1)
//
// and the cylindrical kernel is exp(-gamma * d_C). The minimum over shifts
// means the kernel is not guaranteed positive semidefinite.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyltouch/core.hpp"
#include "cyltouch/parallel.hpp"

namespace cyltouch {

enum class KernelKind { rbf, cylindrical };

constexpr std::string_view to_string(KernelKind kind) noexcept
{
    return kind == KernelKind::rbf ? "rbf" : "cylindrical";
}

inline KernelKind kernel_kind_from_string(std::string_view name)
{
    if (name == "rbf")
        return KernelKind::rbf;
    if (name == "cylindrical")
        return KernelKind::cylindrical;
    throw FormatError("unknown kernel kind '" + std::string(name) + "' (expected rbf or cylindrical)");
}

struct KernelSpec {
    KernelKind kind = KernelKind::cylindrical;
    double gamma = 1.0 / 220.0;
    double delta = 2.0;

    /// gamma = 1 / (4 * rows * cols), delta = 2.
    static KernelSpec defaults(KernelKind kind, GridShape shape = {})
    {
        return {kind, 1.0 / static_cast<double>(kNumChannels * shape.cells()), 2.0};
    }

    void validate() const
    {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("kernel gamma must be positive, got " + std::to_string(gamma));
        if (kind == KernelKind::cylindrical && (!(delta > 0.0) || !std::isfinite(delta)))
            throw std::invalid_argument("cylindrical kernel delta must be positive, got " +
                                        std::to_string(delta));
    }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline json to_json(const KernelSpec& spec)
{
    json j{{"kind", to_string(spec.kind)}, {"gamma", spec.gamma}};
    if (spec.kind == KernelKind::cylindrical)
        j["delta"] = spec.delta;
    return j;
}

inline KernelSpec kernel_spec_from_json(const json& j)
{
    KernelSpec spec;
    spec.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    spec.gamma = j.at("gamma").get<double>();
    spec.delta = j.value("delta", 2.0);
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Shift operator
// ---------------------------------------------------------------------------

/// Reduces any integer shift into [0, k).
constexpr std::size_t wrap_shift(long long s, std::size_t k) noexcept
{
    const auto kk = static_cast<long long>(k);
    return static_cast<std::size_t>(((s % kk) + kk) % kk);
}

/// Circular row rotation of a stack of row-major planes: output row i takes
/// input row (i - s) mod k.
inline void rotate_plane_rows(std::span<const double> in, std::span<double> out, GridShape shape,
                              std::size_t planes, long long s)
{
    const std::size_t k = shape.rows;
    const std::size_t c = shape.cols;
    const std::size_t shift = wrap_shift(s, k);
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * k * c;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t src = (i + k - shift) % k;
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(base + src * c), c,
                        out.begin() + static_cast<std::ptrdiff_t>(base + i * c));
        }
    }
}

inline FeatureMap rotate_rows(const FeatureMap& x, long long s)
{
    FeatureMap out(x.shape);
    rotate_plane_rows(x.data, out.data, x.shape, kNumChannels, s);
    return out;
}

inline TactileFrame rotate_rows(const TactileFrame& f, long long s)
{
    TactileFrame out(f.shape);
    rotate_plane_rows(f.values, out.values, f.shape, 1, s);
    return out;
}

inline TactileWindow rotate_rows(const TactileWindow& w, long long s)
{
    TactileWindow out;
    out.sample_rate_hz = w.sample_rate_hz;
    out.frames.reserve(w.size());
    for (const auto& f : w.frames)
        out.frames.push_back(rotate_rows(f, s));
    return out;
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// exp(min(s, k - s) / delta) - 1 for a shift s in [0, k).
inline double shift_penalty(std::size_t s, std::size_t k, double delta)
{
    if (!(delta > 0.0))
        throw std::invalid_argument("shift penalty delta must be positive, got " + std::to_string(delta));
    if (k == 0 || s >= k)
        throw std::invalid_argument("shift " + std::to_string(s) + " outside [0, " + std::to_string(k) + ")");
    const auto circ = static_cast<double>(std::min(s, k - s));
    return std::expm1(circ / delta);
}

inline void require_same_shape(const FeatureMap& a, const FeatureMap& b)
{
    if (a.shape != b.shape || a.data.size() != b.data.size())
        throw std::invalid_argument("feature map shapes differ: " + to_string(a.shape) + " vs " +
                                    to_string(b.shape));
}

/// Squared Euclidean distance over all channels jointly.
inline double squared_distance(const FeatureMap& a, const FeatureMap& b)
{
    require_same_shape(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum;
}

struct Alignment {
    double distance = 0.0;
    std::size_t shift = 0;
};

/// Visiting order 0, 1, k-1, 2, k-2, ...: non-decreasing penalty, and within
/// equal penalty the smaller raw shift first.
inline std::vector<std::size_t> shift_visit_order(std::size_t k)
{
    std::vector<std::size_t> order;
    order.reserve(k);
    order.push_back(0);
    for (std::size_t m = 1; 2 * m <= k; ++m) {
        order.push_back(m);
        if (k - m != m)
            order.push_back(k - m);
    }
    return order;
}

/// Squared Frobenius mismatch between a and rot_s(b), abandoned (returning
/// a value >= bound) as soon as the partial sum reaches bound.
inline double shifted_mismatch(const FeatureMap& a, const FeatureMap& b, std::size_t s, double bound)
{
    const std::size_t k = a.shape.rows;
    const std::size_t c = a.shape.cols;
    double sum = 0.0;
    for (std::size_t p = 0; p < kNumChannels; ++p) {
        const double* pa = a.data.data() + p * k * c;
        const double* pb = b.data.data() + p * k * c;
        for (std::size_t i = 0; i < k; ++i) {
            const double* ra = pa + i * c;
            const double* rb = pb + ((i + k - s) % k) * c;
            for (std::size_t j = 0; j < c; ++j) {
                const double d = ra[j] - rb[j];
                sum += d * d;
            }
        }
        if (sum >= bound)
            return sum;
    }
    return sum;
}

/// Minimum alignment cost over all circular row shifts of x2. Ties go to the
/// smaller circular displacement, then the smaller raw shift.
inline Alignment cylindrical_distance(const FeatureMap& x1, const FeatureMap& x2, double delta)
{
    require_same_shape(x1, x2);
    if (!(delta > 0.0))
        throw std::invalid_argument("cylindrical distance delta must be positive");
    const std::size_t k = x1.shape.rows;

    Alignment best{std::numeric_limits<double>::infinity(), 0};
    for (std::size_t s : shift_visit_order(k)) {
        const double penalty = shift_penalty(s, k, delta);
        // Penalties only grow along the visiting order.
        if (penalty >= best.distance)
            break;
        const double mismatch = shifted_mismatch(x1, x2, s, best.distance - penalty);
        const double total = mismatch + penalty;
        if (total < best.distance)
            best = {total, s};
    }
    return best;
}

inline double kernel_eval(const KernelSpec& spec, const FeatureMap& x1, const FeatureMap& x2)
{
    const double d = spec.kind == KernelKind::rbf ? squared_distance(x1, x2)
                                                  : cylindrical_distance(x1, x2, spec.delta).distance;
    return std::exp(-spec.gamma * d);
}

// ---------------------------------------------------------------------------
// Gram matrices
// ---------------------------------------------------------------------------

/// Dense symmetric n x n matrix, row-major.
struct SymmetricMatrix {
    std::size_t n = 0;
    std::vector<double> entries;

    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t size) : n(size), entries(size * size, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return entries[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

struct GramMatrix : SymmetricMatrix {
    KernelSpec spec;

    GramMatrix() = default;
    GramMatrix(std::size_t size, KernelSpec s) : SymmetricMatrix(size), spec(s) {}
};

inline void require_homogeneous(std::span<const FeatureMap> xs)
{
    if (xs.empty())
        throw std::invalid_argument("need at least one feature map");
    for (const auto& x : xs)
        if (x.shape != xs.front().shape || x.data.size() != xs.front().data.size())
            throw std::invalid_argument("feature maps have mixed shapes");
}

/// Pairwise kernel distances (squared Euclidean for rbf, d_C for cylindrical).
/// Independent of gamma, so one table serves a whole gamma grid.
inline SymmetricMatrix pairwise_distances(KernelKind kind, double delta, std::span<const FeatureMap> xs,
                                          std::size_t threads = 1)
{
    require_homogeneous(xs);
    const std::size_t n = xs.size();
    SymmetricMatrix d(n);
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = kind == KernelKind::rbf ? squared_distance(xs[i], xs[j])
                                                     : cylindrical_distance(xs[i], xs[j], delta).distance;
            d(i, j) = v;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d(j, i) = d(i, j);
    return d;
}

inline GramMatrix gram_from_distances(const SymmetricMatrix& distances, const KernelSpec& spec)
{
    spec.validate();
    GramMatrix g(distances.n, spec);
    for (std::size_t i = 0; i < distances.entries.size(); ++i)
        g.entries[i] = std::exp(-spec.gamma * distances.entries[i]);
    return g;
}

inline GramMatrix gram(const KernelSpec& spec, std::span<const FeatureMap> xs, std::size_t threads = 1)
{
    spec.validate();
    return gram_from_distances(pairwise_distances(spec.kind, spec.delta, xs, threads), spec);
}

} // namespace cyltouch
