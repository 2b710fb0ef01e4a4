#pragma once

// Soft-margin binary SVM dual solved by sequential minimal optimization on a
// precomputed kernel matrix:
//
//   min_a  1/2 a'Qa - e'a    s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij
//
// Working pairs use maximal-violation / second-order selection. Kernels need
// not be PSD: when the pair curvature K_ii + K_jj - 2 K_ij is not positive the
// one-dimensional subproblem is concave, and the step jumps to whichever end
// of the feasible segment gives the better objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cyltouch/core.hpp"

namespace cyltouch {

struct SmoConfig {
    double C = 10.0;
    double tol = 1e-3;
    int max_passes = 200; ///< iteration budget is max_passes * n pair updates
    std::uint64_t seed = 0;
};

struct SmoResult {
    std::vector<double> alpha;
    double bias = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    double final_gap = 0.0; ///< max KKT violation gap m(a) - M(a) at exit
};

/// Any indexable kernel matrix: k(i, j) -> double.
template <class M>
concept KernelMatrix = requires(const M& m, std::size_t i) {
    { m(i, i) } -> std::convertible_to<double>;
};

/// Row/column selection of a larger kernel matrix.
template <KernelMatrix M>
class SubMatrix {
public:
    SubMatrix(const M& base, std::span<const std::size_t> index) : base_(&base), index_(index) {}
    double operator()(std::size_t i, std::size_t j) const { return (*base_)(index_[i], index_[j]); }

private:
    const M* base_;
    std::span<const std::size_t> index_;
};

template <KernelMatrix M>
SmoResult solve_smo(const M& K, std::span<const int> y, const SmoConfig& cfg)
{
    const std::size_t n = y.size();
    if (n < 2)
        throw std::invalid_argument("SMO needs at least two samples");
    if (!(cfg.C > 0.0))
        throw std::invalid_argument("soft-margin C must be positive");
    bool has_pos = false;
    bool has_neg = false;
    for (int v : y) {
        if (v != 1 && v != -1)
            throw std::invalid_argument("binary labels must be +1 or -1");
        (v > 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw std::invalid_argument("binary training needs both label signs");

    const double C = cfg.C;
    constexpr double kTau = 1e-12;

    // Seeded scan order: only affects tie-breaking between equally good pairs.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, "smo"));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> diag(n);
    for (std::size_t t = 0; t < n; ++t)
        diag[t] = K(t, t);

    SmoResult res;
    res.alpha.assign(n, 0.0);
    auto& a = res.alpha;
    std::vector<double> G(n, -1.0); // gradient Qa - e

    auto in_up = [&](std::size_t t) { return y[t] > 0 ? a[t] < C : a[t] > 0.0; };
    auto in_low = [&](std::size_t t) { return y[t] > 0 ? a[t] > 0.0 : a[t] < C; };

    const std::size_t max_iter = static_cast<std::size_t>(std::max(cfg.max_passes, 1)) * n;
    for (;;) {
        // i: maximal -y G over the "up" set.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t : order) {
            if (in_up(t) && -y[t] * G[t] > gmax) {
                gmax = -y[t] * G[t];
                i = t;
            }
        }
        // j: best second-order gain among violators in the "low" set.
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t : order) {
            if (!in_low(t))
                continue;
            gmax2 = std::max(gmax2, y[t] * G[t]);
            if (i == n)
                continue;
            const double b = gmax + y[t] * G[t];
            if (b > 0.0) {
                double curv = diag[i] + diag[t] - 2.0 * K(i, t);
                if (curv <= 0.0)
                    curv = kTau;
                const double obj = -(b * b) / curv;
                if (obj < best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        res.final_gap = gmax + gmax2;
        if (i == n || j == n || gmax + gmax2 < cfg.tol) {
            res.converged = true;
            break;
        }
        if (res.iterations >= max_iter)
            break;
        ++res.iterations;

        // Move t along a_i += y_i t, a_j -= y_j t (keeps y'a fixed).
        const double slope = y[i] * G[i] - y[j] * G[j]; // < 0 for a violating pair
        const double eta = diag[i] + diag[j] - 2.0 * K(i, j);
        auto range = [&](std::size_t idx, int sign) {
            // feasible t such that a_idx + sign * t in [0, C]
            return sign > 0 ? std::pair{-a[idx], C - a[idx]} : std::pair{a[idx] - C, a[idx]};
        };
        const auto [lo_i, hi_i] = range(i, y[i]);
        const auto [lo_j, hi_j] = range(j, -y[j]);
        const double t_lo = std::max(lo_i, lo_j);
        const double t_hi = std::min(hi_i, hi_j);

        double step;
        if (eta > 0.0) {
            step = std::clamp(-slope / eta, t_lo, t_hi);
        } else {
            // Concave along the segment: the minimum sits on an endpoint.
            auto delta_f = [&](double t) { return slope * t + 0.5 * eta * t * t; };
            step = delta_f(t_hi) <= delta_f(t_lo) ? t_hi : t_lo;
        }
        if (step == 0.0) {
            // Degenerate pair (numerically pinned); nothing can move.
            res.converged = false;
            break;
        }

        a[i] = std::clamp(a[i] + y[i] * step, 0.0, C);
        a[j] = std::clamp(a[j] - y[j] * step, 0.0, C);
        for (std::size_t t = 0; t < n; ++t)
            G[t] += y[t] * step * (K(t, i) - K(t, j));
    }

    // Bias: average over free vectors, else the midpoint of the feasible interval.
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * G[t];
        if (a[t] > 0.0 && a[t] < C) {
            free_sum += yg;
            ++free_count;
        } else if ((a[t] >= C && y[t] < 0) || (a[t] <= 0.0 && y[t] > 0)) {
            upper = std::min(upper, yg);
        } else {
            lower = std::max(lower, yg);
        }
    }
    double rho = 0.0;
    if (free_count > 0)
        rho = free_sum / static_cast<double>(free_count);
    else if (std::isfinite(upper) && std::isfinite(lower))
        rho = 0.5 * (upper + lower);
    else
        rho = std::isfinite(upper) ? upper : lower;
    res.bias = -rho;
    return res;
}

/// Decision value sum_t a_t y_t K(x, x_t) + b using one kernel row.
template <class Row>
double decision_value(const Row& kernel_row, std::span<const double> alpha, std::span<const int> y,
                      double bias)
{
    double f = bias;
    for (std::size_t t = 0; t < alpha.size(); ++t)
        if (alpha[t] != 0.0)
            f += alpha[t] * y[t] * kernel_row(t);
    return f;
}

} // namespace cyltouch
