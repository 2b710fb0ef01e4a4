#pragma once

// Fully connected classifier on flattened feature maps: per-feature
// standardization fitted on the training set, rectifier hidden layers,
// softmax output over the five intents, trained by full-batch gradient
// descent on mean cross-entropy.

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cyltouch/core.hpp"

namespace cyltouch {

struct MlpConfig {
    std::vector<std::size_t> hidden{64};
    double lr = 0.01;
    int epochs = 300;
    std::uint64_t seed = 0;
};

struct MlpModel {
    GridShape shape{};
    std::vector<std::size_t> layer_sizes;  ///< input, hidden..., classes
    std::vector<Eigen::MatrixXd> weights;  ///< layer l maps size[l] -> size[l+1], stored (out x in)
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd input_mean;  ///< subtracted from each input
    Eigen::VectorXd input_scale; ///< then divided by this
    json train_meta = json::object();

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }
};

struct MlpGradient {
    double loss = 0.0;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct MlpTrainResult {
    MlpModel model;
    std::vector<double> loss_curve; ///< loss before each update, then the final loss
};

/// He-normal weights, zero biases.
inline MlpModel init_mlp(GridShape shape, std::span<const std::size_t> hidden, std::uint64_t seed)
{
    check_shape(shape);
    MlpModel m;
    m.shape = shape;
    m.layer_sizes.push_back(kNumChannels * shape.cells());
    for (auto h : hidden) {
        if (h == 0)
            throw std::invalid_argument("hidden layer sizes must be positive");
        m.layer_sizes.push_back(h);
    }
    m.layer_sizes.push_back(kNumIntents);
    std::mt19937_64 rng(derive_seed(seed, "mlp-init"));
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        Eigen::MatrixXd w(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c)
                w(r, c) = scale * unit(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    const auto d = static_cast<Eigen::Index>(m.layer_sizes.front());
    m.input_mean = Eigen::VectorXd::Zero(d);
    m.input_scale = Eigen::VectorXd::Ones(d);
    return m;
}

/// Per-row mean and population std of x; constant rows get scale 1.
inline void fit_standardizer(MlpModel& m, const Eigen::MatrixXd& x)
{
    const double n = static_cast<double>(x.cols());
    m.input_mean = x.rowwise().sum() / n;
    const Eigen::MatrixXd centered = x.colwise() - m.input_mean;
    m.input_scale = (centered.array().square().rowwise().sum() / n).sqrt().matrix();
    for (Eigen::Index r = 0; r < m.input_scale.size(); ++r)
        if (!(m.input_scale(r) > 1e-12))
            m.input_scale(r) = 1.0;
}

inline Eigen::MatrixXd standardize(const MlpModel& m, const Eigen::MatrixXd& x)
{
    return (x.colwise() - m.input_mean).array().colwise() / m.input_scale.array();
}

/// Column-per-sample input matrix.
inline Eigen::MatrixXd mlp_inputs(std::span<const FeatureMap> xs)
{
    if (xs.empty())
        throw std::invalid_argument("MLP needs at least one sample");
    const auto d = static_cast<Eigen::Index>(xs.front().data.size());
    Eigen::MatrixXd x(d, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (static_cast<Eigen::Index>(xs[i].data.size()) != d)
            throw std::invalid_argument("feature maps have mixed sizes");
        x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(xs[i].data.data(), d);
    }
    return x;
}

namespace detail {

inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& z)
{
    Eigen::MatrixXd p = z.rowwise() - z.colwise().maxCoeff();
    p = p.array().exp();
    return p.array().rowwise() / p.colwise().sum().array();
}

} // namespace detail

/// Class probabilities, one column per input column.
inline Eigen::MatrixXd mlp_forward(const MlpModel& m, const Eigen::MatrixXd& x)
{
    if (x.rows() != static_cast<Eigen::Index>(m.layer_sizes.front()))
        throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) + " features, model expects " +
                                    std::to_string(m.layer_sizes.front()));
    Eigen::MatrixXd a = standardize(m, x);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        Eigen::MatrixXd z = (m.weights[l] * a).colwise() + m.biases[l];
        a = l + 1 < m.weights.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return detail::softmax_columns(a);
}

/// Mean cross-entropy and its exact gradient by backpropagation.
inline MlpGradient mlp_loss_and_gradient(const MlpModel& m, const Eigen::MatrixXd& x, std::span<const int> y)
{
    const auto n = x.cols();
    if (static_cast<Eigen::Index>(y.size()) != n)
        throw std::invalid_argument("label count does not match sample count");
    const std::size_t layers = m.weights.size();
    std::vector<Eigen::MatrixXd> acts{standardize(m, x)};
    std::vector<Eigen::MatrixXd> pre;
    for (std::size_t l = 0; l < layers; ++l) {
        pre.push_back((m.weights[l] * acts.back()).colwise() + m.biases[l]);
        if (l + 1 < layers)
            acts.push_back(pre.back().cwiseMax(0.0));
    }
    const Eigen::MatrixXd prob = detail::softmax_columns(pre.back());

    MlpGradient g;
    g.weights.resize(layers);
    g.biases.resize(layers);
    Eigen::MatrixXd delta = prob;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto yi = y[static_cast<std::size_t>(i)];
        g.loss -= std::log(std::max(prob(yi, i), std::numeric_limits<double>::min()));
        delta(yi, i) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    g.loss *= inv_n;
    delta *= inv_n;
    for (std::size_t l = layers; l-- > 0;) {
        g.weights[l] = delta * acts[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > 0)
            delta = (m.weights[l].transpose() * delta).cwiseProduct(
                (pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return g;
}

inline double mlp_loss(const MlpModel& m, const Eigen::MatrixXd& x, std::span<const int> y)
{
    const Eigen::MatrixXd prob = mlp_forward(m, x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        loss -= std::log(std::max(prob(y[static_cast<std::size_t>(i)], i), std::numeric_limits<double>::min()));
    return loss / static_cast<double>(x.cols());
}

inline MlpTrainResult train_mlp(std::span<const FeatureMap> xs, std::span<const IntentLabel> labels,
                                const MlpConfig& cfg = {})
{
    if (xs.empty() || xs.size() != labels.size())
        throw std::invalid_argument("MLP needs a non-empty dataset with one label per sample");
    if (!(cfg.lr > 0.0) || cfg.epochs < 0)
        throw std::invalid_argument("MLP learning rate must be positive and epochs non-negative");
    MlpTrainResult res;
    res.model = init_mlp(xs.front().shape, cfg.hidden, cfg.seed);
    const Eigen::MatrixXd x = mlp_inputs(xs);
    fit_standardizer(res.model, x);
    std::vector<int> y;
    y.reserve(labels.size());
    for (auto l : labels)
        y.push_back(to_index(l));

    auto& m = res.model;
    for (int e = 0; e < cfg.epochs; ++e) {
        const auto g = mlp_loss_and_gradient(m, x, y);
        res.loss_curve.push_back(g.loss);
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            m.weights[l] -= cfg.lr * g.weights[l];
            m.biases[l] -= cfg.lr * g.biases[l];
        }
    }
    res.loss_curve.push_back(mlp_loss(m, x, y));
    m.train_meta = {{"optimizer", "full_batch_gradient_descent"},
                    {"loss", "softmax_cross_entropy"},
                    {"activation", "relu"},
                    {"init", "he_normal"},
                    {"input", "standardized_features"},
                    {"lr", cfg.lr},
                    {"epochs", cfg.epochs},
                    {"seed", cfg.seed},
                    {"n_train", xs.size()},
                    {"final_loss", res.loss_curve.back()}};
    return res;
}

inline MlpTrainResult train_mlp(const LabeledDataset& ds, const MlpConfig& cfg = {})
{
    const auto xs = feature_maps(ds);
    const auto labels = ds.labels();
    return train_mlp(xs, labels, cfg);
}

/// Highest-probability class; ties go to the smaller label index.
inline IntentLabel predict_mlp(const MlpModel& m, const FeatureMap& x)
{
    const Eigen::VectorXd p = mlp_forward(m, Eigen::Map<const Eigen::VectorXd>(x.data.data(),
                                                                               static_cast<Eigen::Index>(x.data.size())));
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.size(); ++c)
        if (p(c) > p(best))
            best = c;
    return label_from_index(static_cast<int>(best));
}

inline constexpr std::string_view kMlpFormat = "cyltouch-mlp";

inline json mlp_to_json(const MlpModel& m)
{
    json layers = json::array();
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        // Row-major weights so each row is one output unit.
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(m.weights[l].size()));
        for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
            for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c)
                w.push_back(m.weights[l](r, c));
        layers.push_back({{"weights", w},
                          {"bias", std::vector<double>(m.biases[l].data(), m.biases[l].data() + m.biases[l].size())}});
    }
    json labels = json::array();
    for (auto l : kAllIntents)
        labels.push_back(to_string(l));
    return {{"format", kMlpFormat},
            {"version", 1},
            {"shape", {kNumChannels, m.shape.rows, m.shape.cols}},
            {"layer_sizes", m.layer_sizes},
            {"labels", labels},
            {"layers", layers},
            {"input_mean", std::vector<double>(m.input_mean.data(), m.input_mean.data() + m.input_mean.size())},
            {"input_scale", std::vector<double>(m.input_scale.data(), m.input_scale.data() + m.input_scale.size())},
            {"train_meta", m.train_meta}};
}

inline MlpModel mlp_from_json(const json& j)
{
    try {
        if (j.at("format").get<std::string>() != kMlpFormat)
            throw FormatError("not an MLP model file");
        MlpModel m;
        const auto dims = j.at("shape").get<std::vector<std::size_t>>();
        if (dims.size() != 3 || dims[0] != kNumChannels)
            throw FormatError("MLP shape must be [4, rows, cols]");
        m.shape = {dims[1], dims[2]};
        check_shape(m.shape);
        m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        if (m.layer_sizes.size() < 2 || m.layer_sizes.front() != kNumChannels * m.shape.cells() ||
            m.layer_sizes.back() != kNumIntents)
            throw FormatError("MLP layer sizes do not match the feature shape and intent count");
        const auto& layers = j.at("layers");
        if (layers.size() + 1 != m.layer_sizes.size())
            throw FormatError("MLP layer count does not match layer_sizes");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
            const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
            const auto w = layers[l].at("weights").get<std::vector<double>>();
            const auto b = layers[l].at("bias").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
                throw FormatError("MLP layer " + std::to_string(l) + " has wrong parameter count");
            Eigen::MatrixXd wm(out, in);
            for (Eigen::Index r = 0; r < out; ++r)
                for (Eigen::Index c = 0; c < in; ++c)
                    wm(r, c) = w[static_cast<std::size_t>(r * in + c)];
            if (!wm.allFinite())
                throw FormatError("MLP weights must be finite");
            m.weights.push_back(std::move(wm));
            m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), out));
        }
        const auto mean = j.at("input_mean").get<std::vector<double>>();
        const auto scale = j.at("input_scale").get<std::vector<double>>();
        const auto d = static_cast<Eigen::Index>(m.layer_sizes.front());
        if (static_cast<Eigen::Index>(mean.size()) != d || static_cast<Eigen::Index>(scale.size()) != d)
            throw FormatError("MLP standardizer has wrong size");
        m.input_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
        m.input_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), d);
        if (!(m.input_scale.array() > 0.0).all())
            throw FormatError("MLP input scales must be positive");
        m.train_meta = j.value("train_meta", json::object());
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed MLP model: ") + e.what());
    }
}

} // namespace cyltouch
