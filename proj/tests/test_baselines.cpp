#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "cyltouch/featurizer.hpp"
#include "cyltouch/mdcm.hpp"
#include "cyltouch/mlp.hpp"
#include "cyltouch/simgen.hpp"
#include "support.hpp"

using namespace cyltouch;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TactileWindow scalar_window(std::initializer_list<double> values)
{
    TactileWindow w;
    for (double v : values)
        w.frames.push_back(TactileFrame({1, 1}, {v}));
    return w;
}

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

const LabeledDataset& simulated_raw()
{
    static const LabeledDataset ds = [] {
        auto cfg = default_generator_config(derive_seed(2, "generator"));
        cfg.samples_per_class = 12;
        return generate(cfg);
    }();
    return ds;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

/// Largest relative error between backprop and central differences over the
/// selected parameters (every parameter when stride is 1).
double gradient_check(MlpModel m, const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t stride)
{
    const auto g = mlp_loss_and_gradient(m, x, y);
    const double h = 1e-6;
    double worst = 0.0;
    std::size_t counter = 0;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
            for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) {
                if (counter++ % stride != 0)
                    continue;
                const double keep = m.weights[l](r, c);
                m.weights[l](r, c) = keep + h;
                const double up = mlp_loss(m, x, y);
                m.weights[l](r, c) = keep - h;
                const double down = mlp_loss(m, x, y);
                m.weights[l](r, c) = keep;
                worst = std::max(worst, relative_error(g.weights[l](r, c), (up - down) / (2.0 * h)));
            }
        for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) {
            const double keep = m.biases[l](r);
            m.biases[l](r) = keep + h;
            const double up = mlp_loss(m, x, y);
            m.biases[l](r) = keep - h;
            const double down = mlp_loss(m, x, y);
            m.biases[l](r) = keep;
            worst = std::max(worst, relative_error(g.biases[l](r), (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

} // namespace

// ---------------------------------------------------------------------------
// mdcm
// ---------------------------------------------------------------------------

TEST_CASE("covariance of a one-cell window {0, 2} is 2 before and after shrinkage", "[mdcm]")
{
    const auto c = sample_covariance(scalar_window({0.0, 2.0}), 0.1);
    REQUIRE(c.rows() == 1);
    CHECK_THAT(c(0, 0), WithinAbs((1 - 0.1) * 2.0 + 0.1 * 2.0, 1e-15));
}

TEST_CASE("shrinkage pulls toward the scaled identity", "[mdcm]")
{
    // Cells (0, 2) and (1, 1): raw covariance diag(2, 0), trace/d = 1.
    TactileWindow w;
    w.frames.push_back(TactileFrame({2, 1}, {0.0, 1.0}));
    w.frames.push_back(TactileFrame({2, 1}, {2.0, 1.0}));
    const auto c = sample_covariance(w, 0.1);
    CHECK_THAT(c(0, 0), WithinAbs(1.9, 1e-14));
    CHECK_THAT(c(1, 1), WithinAbs(0.1, 1e-14));
    CHECK(c(0, 1) == 0.0);
}

TEST_CASE("a constant window is floored to a tiny multiple of the identity", "[mdcm]")
{
    const auto c = sample_covariance(testing::constant_window(0.3, 45), 0.1);
    CHECK(c.isApprox(kCovarianceFloor * Eigen::MatrixXd::Identity(55, 55)));
}

TEST_CASE("shrunk covariances are symmetric positive definite", "[mdcm]")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto c = sample_covariance(testing::random_window(rng, 45), 0.1);
        CHECK(c.rows() == 55);
        CHECK((c - c.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
    CHECK_THROWS(sample_covariance(scalar_window({1.0}), 0.1));
    CHECK_THROWS(sample_covariance(scalar_window({1.0, 2.0}), 0.0));
    CHECK_THROWS(sample_covariance(scalar_window({1.0, 2.0}), 1.5));
}

TEST_CASE("geodesic distance: identity, scalar form, symmetry", "[mdcm]")
{
    CHECK_THAT(geodesic_distance(scalar(2.0), scalar(8.0)), WithinAbs(std::abs(std::log(8.0 / 2.0)), 1e-12));
    CHECK_THAT(geodesic_distance(scalar(5.0), scalar(0.5)), WithinAbs(std::abs(std::log(0.5 / 5.0)), 1e-12));
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = testing::random_spd(rng, 6);
        const auto b = testing::random_spd(rng, 6);
        CHECK(geodesic_distance(a, a) < 1e-6);
        CHECK_THAT(geodesic_distance(a, b), WithinAbs(geodesic_distance(b, a), 1e-9));
    }
}

TEST_CASE("geodesic distance is invariant under congruence", "[mdcm]")
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = testing::random_spd(rng, 5);
        const auto b = testing::random_spd(rng, 5);
        Eigen::MatrixXd w = Eigen::MatrixXd::Identity(5, 5);
        for (Eigen::Index r = 0; r < 5; ++r)
            for (Eigen::Index c = 0; c < 5; ++c)
                w(r, c) += 0.4 * n(rng);
        CHECK_THAT(geodesic_distance(w * a * w.transpose(), w * b * w.transpose()),
                   WithinAbs(geodesic_distance(a, b), 1e-6));
    }
}

TEST_CASE("geodesic distance rejects non-SPD input", "[mdcm]")
{
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS(geodesic_distance(bad, Eigen::MatrixXd::Identity(2, 2)));
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
    asym(0, 1) = 0.5;
    CHECK_THROWS(geodesic_distance(asym, Eigen::MatrixXd::Identity(2, 2)));
    CHECK_THROWS(geodesic_distance(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3)));
}

TEST_CASE("Frechet mean closed forms", "[mdcm]")
{
    // Scalars: geometric mean.
    const std::vector<Eigen::MatrixXd> two{scalar(1.0), scalar(std::exp(2.0))};
    const auto r = frechet_mean(two);
    CHECK(r.converged);
    CHECK_THAT(r.mean(0, 0), WithinRel(std::exp(1.0), 1e-9));

    // Commuting (diagonal) matrices: elementwise geometric mean.
    const std::vector<Eigen::MatrixXd> diag{Eigen::Vector3d(1, 2, 3).asDiagonal(), Eigen::Vector3d(4, 8, 1).asDiagonal(),
                                            Eigen::Vector3d(2, 1, 9).asDiagonal()};
    const auto d = frechet_mean(diag);
    CHECK(d.converged);
    const Eigen::Vector3d expect(std::cbrt(8.0), std::cbrt(16.0), std::cbrt(27.0));
    for (int i = 0; i < 3; ++i)
        CHECK_THAT(d.mean(i, i), WithinRel(expect(i), 1e-9));
    CHECK_THAT(d.mean(0, 1), WithinAbs(0.0, 1e-12));

    // Identical points: the point itself.
    std::mt19937_64 rng(4);
    const auto p = testing::random_spd(rng, 4);
    const std::vector<Eigen::MatrixXd> same{p, p, p};
    CHECK(frechet_mean(same).mean.isApprox(p, 1e-12));
}

TEST_CASE("Frechet mean does not depend on sample order", "[mdcm]")
{
    std::mt19937_64 rng(5);
    std::vector<Eigen::MatrixXd> pts;
    for (int i = 0; i < 6; ++i)
        pts.push_back(testing::random_spd(rng, 4));
    const auto a = frechet_mean(pts).mean;
    std::reverse(pts.begin(), pts.end());
    const auto b = frechet_mean(pts).mean;
    CHECK((a - b).norm() < 1e-9);
    // The mean is a critical point: tangent vectors average to zero.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::MatrixXd inv_sqrt = es.operatorInverseSqrt();
    Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(4, 4);
    for (const auto& p : pts) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> inner(inv_sqrt * p * inv_sqrt);
        tangent += inner.eigenvectors() * inner.eigenvalues().array().log().matrix().asDiagonal() *
                   inner.eigenvectors().transpose();
    }
    CHECK(tangent.norm() / 6.0 < 1e-5);
}

TEST_CASE("MDCM beats chance on its training data", "[mdcm]")
{
    const auto& ds = simulated_raw();
    const auto model = train_mdcm(ds);
    CHECK(model.labels.size() == 5);
    for (const auto& c : model.centroids) {
        CHECK((c - c.transpose()).norm() < 1e-9);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        correct += predict_mdcm(model, ds.window(i)) == ds.label(i);
    CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) > 0.2);
}

TEST_CASE("MDCM predicts the nearest centroid by brute force", "[mdcm]")
{
    const auto& ds = simulated_raw();
    const auto model = train_mdcm(ds);
    for (std::size_t i = 0; i < ds.size(); i += 7) {
        const auto cov = sample_covariance(ds.window(i), model.shrinkage);
        std::size_t best = 0;
        double best_d = geodesic_distance(model.centroids[0], cov);
        for (std::size_t c = 1; c < model.centroids.size(); ++c) {
            const double d = geodesic_distance(model.centroids[c], cov);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        CHECK(predict_mdcm(model, ds.window(i)) == model.labels[best]);
        CHECK(mdcm_distances(model, cov)[best] == best_d);
    }
}

TEST_CASE("a window sitting on a centroid gets that class; midpoints tie to the smaller index", "[mdcm]")
{
    MdcmModel model;
    model.shape = {1, 1};
    model.labels = {IntentLabel::turn_left, IntentLabel::stop};
    model.centroids = {scalar(4.0), scalar(1.0)};
    CHECK(predict_mdcm(model, scalar_window({0.0, 2.0 * std::sqrt(2.0)})) == IntentLabel::turn_left);
    CHECK(predict_mdcm(model, scalar_window({0.0, std::sqrt(2.0)})) == IntentLabel::stop);
    // Covariance 2 is the geometric midpoint of 1 and 4.
    CHECK(predict_mdcm(model, scalar_window({0.0, 2.0})) == IntentLabel::turn_left);
    std::swap(model.centroids[0], model.centroids[1]);
    CHECK(predict_mdcm(model, scalar_window({0.0, 2.0})) == IntentLabel::turn_left);
}

TEST_CASE("MDCM training validates its input and round-trips through JSON", "[mdcm]")
{
    auto ds = simulated_raw();
    const auto model = train_mdcm(ds);
    const auto back = mdcm_from_json(mdcm_to_json(model));
    CHECK(mdcm_to_json(back) == mdcm_to_json(model));
    for (std::size_t i = 0; i < ds.size(); i += 5)
        CHECK(predict_mdcm(back, ds.window(i)) == predict_mdcm(model, ds.window(i)));

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.label(i) != IntentLabel::stop || keep.empty() || ds.label(keep.back()) != IntentLabel::stop)
            keep.push_back(i);
    CHECK_THROWS(train_mdcm(subset(ds, keep)));
    CHECK_THROWS(train_mdcm(featurize_dataset(ds)));
    CHECK_THROWS_AS(mdcm_from_json(json{{"format", "cyltouch-mdcm"}}), FormatError);
}

// ---------------------------------------------------------------------------
// mlp
// ---------------------------------------------------------------------------

TEST_CASE("backprop matches central differences on a small network", "[mlp]")
{
    std::mt19937_64 rng(6);
    const GridShape shape{2, 2};
    const std::vector<std::size_t> hidden{6};
    auto m = init_mlp(shape, hidden, 3);
    std::vector<FeatureMap> xs;
    for (int i = 0; i < 3; ++i)
        xs.push_back(testing::random_map(rng, shape));
    const auto x = mlp_inputs(xs);
    fit_standardizer(m, x);
    const std::vector<int> y{0, 3, 4};
    CHECK(gradient_check(m, x, y, 1) < 1e-5);
}

TEST_CASE("backprop matches central differences on the default architecture", "[mlp]")
{
    std::mt19937_64 rng(7);
    const std::vector<std::size_t> hidden{64};
    auto m = init_mlp({}, hidden, 4);
    std::vector<FeatureMap> xs;
    for (int i = 0; i < 3; ++i)
        xs.push_back(testing::random_map(rng));
    const auto x = mlp_inputs(xs);
    fit_standardizer(m, x);
    CHECK(gradient_check(m, x, {1, 2, 2}, 37) < 1e-5);
}

TEST_CASE("default architecture is 220-64-5", "[mlp]")
{
    const auto m = init_mlp({}, MlpConfig{}.hidden, 0);
    CHECK(m.layer_sizes == std::vector<std::size_t>{220, 64, 5});
    CHECK(m.parameter_count() == 220 * 64 + 64 + 64 * 5 + 5);
    CHECK(MlpConfig{}.lr == 0.01);
    CHECK(MlpConfig{}.epochs == 300);
}

TEST_CASE("loss never rises on a separable toy with a small step", "[mlp]")
{
    std::vector<FeatureMap> xs;
    std::vector<IntentLabel> labels;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int i = 0; i < 20; ++i) {
        FeatureMap m({2, 1});
        for (auto& v : m.data)
            v = (i % 2 ? 0.8 : 0.2) + jitter(rng);
        xs.push_back(m);
        labels.push_back(i % 2 ? IntentLabel::speed_up : IntentLabel::neutral);
    }
    MlpConfig cfg;
    cfg.hidden = {8};
    cfg.epochs = 200;
    cfg.seed = 2;
    const auto r = train_mlp(xs, labels, cfg);
    REQUIRE(r.loss_curve.size() == 201);
    for (std::size_t e = 1; e < r.loss_curve.size(); ++e)
        CHECK(r.loss_curve[e] <= r.loss_curve[e - 1] + 1e-12);
    CHECK(r.loss_curve.back() < r.loss_curve.front());
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(predict_mlp(r.model, xs[i]) == labels[i]);
}

TEST_CASE("MLP training is byte-identical for a seed and round-trips", "[mlp]")
{
    const auto ds = featurize_dataset(simulated_raw());
    MlpConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 5;
    const auto a = train_mlp(ds, cfg);
    const auto b = train_mlp(ds, cfg);
    CHECK(mlp_to_json(a.model).dump() == mlp_to_json(b.model).dump());
    cfg.seed = 6;
    CHECK(mlp_to_json(train_mlp(ds, cfg).model).dump() != mlp_to_json(a.model).dump());

    const auto back = mlp_from_json(mlp_to_json(a.model));
    CHECK(mlp_to_json(back) == mlp_to_json(a.model));
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(predict_mlp(back, ds.features(i)) == predict_mlp(a.model, ds.features(i)));
    CHECK_THROWS_AS(mlp_from_json(json{{"format", "cyltouch-mlp"}}), FormatError);
}

TEST_CASE("MLP probability ties go to the smaller index", "[mlp]")
{
    auto m = init_mlp({}, MlpConfig{}.hidden, 1);
    for (auto& w : m.weights)
        w.setZero();
    for (auto& b : m.biases)
        b.setZero();
    std::mt19937_64 rng(9);
    CHECK(predict_mlp(m, testing::random_map(rng)) == IntentLabel::turn_left);
}

TEST_CASE("MLP learns the simulated classes beyond chance", "[mlp]")
{
    const auto ds = featurize_dataset(simulated_raw());
    const auto r = train_mlp(ds, MlpConfig{});
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        correct += predict_mlp(r.model, ds.features(i)) == ds.label(i);
    CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) > 0.5);
    CHECK(r.loss_curve.back() < r.loss_curve.front());
    CHECK_THROWS(train_mlp(std::vector<FeatureMap>{}, std::vector<IntentLabel>{}, MlpConfig{}));
}
