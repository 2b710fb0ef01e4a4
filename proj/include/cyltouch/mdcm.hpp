#pragma once

// Minimum distance to covariance mean: each raw window becomes a shrunk
// sample covariance over the flattened cells, classes are summarized by their
// Frechet mean under the affine-invariant metric, and prediction picks the
// nearest class mean by geodesic distance.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cyltouch/core.hpp"
#include "cyltouch/parallel.hpp"

namespace cyltouch {

inline constexpr double kCovarianceFloor = 1e-8;

struct MdcmConfig {
    double shrinkage = 0.1;
    int max_iterations = 50;
    double tolerance = 1e-6;
};

struct MdcmModel {
    GridShape shape{};
    double shrinkage = 0.1;
    std::vector<IntentLabel> labels;
    std::vector<Eigen::MatrixXd> centroids; ///< one per entry of labels
    json train_meta = json::object();
};

/// (1 - lambda) C + lambda tr(C)/d I with C the unbiased frame covariance.
/// A window with zero variance everywhere yields kCovarianceFloor * I.
inline Eigen::MatrixXd sample_covariance(const TactileWindow& w, double shrinkage)
{
    if (w.size() < 2)
        throw std::invalid_argument("sample covariance needs at least two frames, got " + std::to_string(w.size()));
    if (!(shrinkage > 0.0 && shrinkage <= 1.0))
        throw std::invalid_argument("shrinkage must lie in (0, 1], got " + std::to_string(shrinkage));
    const auto d = static_cast<Eigen::Index>(w.frames.front().values.size());
    const auto t = static_cast<Eigen::Index>(w.size());
    Eigen::MatrixXd x(t, d);
    for (Eigen::Index r = 0; r < t; ++r) {
        const auto& f = w.frames[static_cast<std::size_t>(r)].values;
        if (static_cast<Eigen::Index>(f.size()) != d)
            throw std::invalid_argument("window frames have mixed sizes");
        x.row(r) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), d);
    }
    x.rowwise() -= x.colwise().mean();
    // A constant cell is exact: its mean can round away from the value.
    for (Eigen::Index c = 0; c < d; ++c)
        if (x.col(c).maxCoeff() == x.col(c).minCoeff())
            x.col(c).setZero();
    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(t - 1);
    const double tr = cov.trace();
    if (!(tr > 0.0))
        return kCovarianceFloor * Eigen::MatrixXd::Identity(d, d);
    cov *= 1.0 - shrinkage;
    cov.diagonal().array() += shrinkage * tr / static_cast<double>(d);
    return 0.5 * (cov + cov.transpose());
}

namespace detail {

inline void require_spd(const Eigen::MatrixXd& m, const char* what)
{
    if (m.rows() != m.cols() || m.rows() == 0)
        throw std::invalid_argument(std::string(what) + " must be a non-empty square matrix");
    if (!m.allFinite() || !m.isApprox(m.transpose(), 1e-9))
        throw std::invalid_argument(std::string(what) + " must be symmetric and finite");
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument(std::string(what) + " is not positive definite");
}

/// V f(diag) V' for a symmetric matrix.
template <class Fn>
Eigen::MatrixXd spectral_map(const Eigen::MatrixXd& m, Fn fn)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd mapped = es.eigenvalues().unaryExpr(fn);
    return es.eigenvectors() * mapped.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// ||log(a^{-1/2} b a^{-1/2})||_F.
inline double geodesic_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    detail::require_spd(a, "first matrix");
    detail::require_spd(b, "second matrix");
    if (a.rows() != b.rows())
        throw std::invalid_argument("matrices differ in size");
    const Eigen::MatrixXd inv_sqrt = detail::spectral_map(a, [](double v) { return 1.0 / std::sqrt(v); });
    const Eigen::MatrixXd inner = inv_sqrt * b * inv_sqrt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    return std::sqrt(es.eigenvalues().array().log().square().sum());
}

struct FrechetResult {
    Eigen::MatrixXd mean;
    int iterations = 0;
    bool converged = false;
};

/// Fixed point M <- M^{1/2} exp(mean_i log(M^{-1/2} X_i M^{-1/2})) M^{1/2},
/// started from the arithmetic mean; stops when the tangent step is small.
inline FrechetResult frechet_mean(std::span<const Eigen::MatrixXd> points, const MdcmConfig& cfg = {})
{
    if (points.empty())
        throw std::invalid_argument("Frechet mean of an empty set");
    FrechetResult res;
    res.mean = Eigen::MatrixXd::Zero(points.front().rows(), points.front().cols());
    for (const auto& p : points)
        res.mean += p;
    res.mean /= static_cast<double>(points.size());
    for (res.iterations = 0; res.iterations < cfg.max_iterations;) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.mean);
        const Eigen::MatrixXd& v = es.eigenvectors();
        const Eigen::VectorXd ev = es.eigenvalues();
        const Eigen::MatrixXd sqrt_m = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
        const Eigen::MatrixXd inv_sqrt_m = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
        Eigen::MatrixXd step = Eigen::MatrixXd::Zero(res.mean.rows(), res.mean.cols());
        for (const auto& p : points) {
            const Eigen::MatrixXd inner = inv_sqrt_m * p * inv_sqrt_m;
            step += detail::spectral_map(0.5 * (inner + inner.transpose()), [](double x) { return std::log(x); });
        }
        step /= static_cast<double>(points.size());
        ++res.iterations;
        const Eigen::MatrixXd next = sqrt_m * detail::spectral_map(step, [](double x) { return std::exp(x); }) * sqrt_m;
        res.mean = 0.5 * (next + next.transpose());
        if (step.norm() < cfg.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

inline MdcmModel train_mdcm(const LabeledDataset& ds, const MdcmConfig& cfg = {}, std::size_t threads = 1)
{
    if (ds.kind != DatasetKind::raw)
        throw std::invalid_argument("MDCM trains on raw windows");
    if (ds.empty())
        throw std::invalid_argument("MDCM needs a non-empty dataset");
    MdcmModel model;
    model.shape = ds.window(0).shape();
    model.shrinkage = cfg.shrinkage;

    const auto counts = class_counts(ds);
    for (auto label : kAllIntents) {
        const auto n = counts[static_cast<std::size_t>(to_index(label))];
        if (n == 1)
            throw std::invalid_argument("class " + std::string(to_string(label)) + " has fewer than 2 samples");
        if (n >= 2)
            model.labels.push_back(label);
    }
    if (model.labels.empty())
        throw std::invalid_argument("MDCM needs at least one class with 2 samples");

    std::vector<Eigen::MatrixXd> covs(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) { covs[i] = sample_covariance(ds.window(i), cfg.shrinkage); });

    std::vector<FrechetResult> results(model.labels.size());
    parallel_for(model.labels.size(), threads, [&](std::size_t c) {
        std::vector<Eigen::MatrixXd> members;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.label(i) == model.labels[c])
                members.push_back(covs[i]);
        results[c] = frechet_mean(members, cfg);
    });

    json iterations = json::array();
    json converged = json::array();
    for (auto& r : results) {
        model.centroids.push_back(std::move(r.mean));
        iterations.push_back(r.iterations);
        converged.push_back(r.converged);
    }
    model.train_meta = {{"input", "raw_window_covariance"},
                        {"metric", "affine_invariant"},
                        {"mean", "log_map_fixed_point"},
                        {"max_iterations", cfg.max_iterations},
                        {"tolerance", cfg.tolerance},
                        {"iterations", iterations},
                        {"converged", converged},
                        {"n_train", ds.size()}};
    return model;
}

/// Distances from a covariance to every class centroid, in model.labels order.
inline std::vector<double> mdcm_distances(const MdcmModel& model, const Eigen::MatrixXd& cov)
{
    std::vector<double> out;
    out.reserve(model.centroids.size());
    for (const auto& c : model.centroids)
        out.push_back(geodesic_distance(c, cov));
    return out;
}

/// Nearest centroid; ties go to the smaller label index.
inline IntentLabel predict_mdcm(const MdcmModel& model, const TactileWindow& w)
{
    if (w.shape() != model.shape)
        throw std::invalid_argument("window shape " + to_string(w.shape()) + " does not match model " +
                                    to_string(model.shape));
    const auto dist = mdcm_distances(model, sample_covariance(w, model.shrinkage));
    std::size_t best = 0;
    for (std::size_t c = 1; c < dist.size(); ++c)
        if (dist[c] < dist[best])
            best = c;
    return model.labels[best];
}

inline constexpr std::string_view kMdcmFormat = "cyltouch-mdcm";

inline json mdcm_to_json(const MdcmModel& model)
{
    json labels = json::array();
    json centroids = json::array();
    for (std::size_t c = 0; c < model.labels.size(); ++c) {
        labels.push_back(to_string(model.labels[c]));
        const auto& m = model.centroids[c];
        centroids.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    }
    return {{"format", kMdcmFormat},
            {"version", 1},
            {"shape", {model.shape.rows, model.shape.cols}},
            {"shrinkage", model.shrinkage},
            {"labels", labels},
            {"centroids", centroids},
            {"train_meta", model.train_meta}};
}

inline MdcmModel mdcm_from_json(const json& j)
{
    try {
        if (j.at("format").get<std::string>() != kMdcmFormat)
            throw FormatError("not an MDCM model file");
        MdcmModel model;
        const auto dims = j.at("shape").get<std::vector<std::size_t>>();
        if (dims.size() != 2)
            throw FormatError("MDCM shape must be [rows, cols]");
        model.shape = {dims[0], dims[1]};
        check_shape(model.shape);
        model.shrinkage = j.at("shrinkage").get<double>();
        const auto d = static_cast<Eigen::Index>(model.shape.cells());
        const auto& centroids = j.at("centroids");
        for (const auto& name : j.at("labels"))
            model.labels.push_back(label_from_string(name.get<std::string>()));
        if (centroids.size() != model.labels.size())
            throw FormatError("MDCM centroid count does not match labels");
        for (const auto& c : centroids) {
            const auto v = c.get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != d * d)
                throw FormatError("MDCM centroid has wrong size");
            model.centroids.push_back(Eigen::Map<const Eigen::MatrixXd>(v.data(), d, d));
        }
        model.train_meta = j.value("train_meta", json::object());
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed MDCM model: ") + e.what());
    }
}

} // namespace cyltouch
