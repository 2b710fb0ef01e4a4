#pragma once

// One-vs-one multi-class kernel SVM on top of the SMO solver, model files and
// cross-validated hyperparameter search.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cyltouch/core.hpp"
#include "cyltouch/kernels.hpp"
#include "cyltouch/parallel.hpp"
#include "cyltouch/smo.hpp"

namespace cyltouch {

struct TrainerConfig {
    double C = 10.0;
    double tol = 1e-3;
    int max_passes = 200;
    std::uint64_t seed = 0;
    bool psd_clip = false; ///< train on the Gram with negative eigenvalues clipped to 0

    SmoConfig smo() const { return {C, tol, max_passes, seed}; }
};

struct BinarySvm {
    std::pair<IntentLabel, IntentLabel> class_pair; ///< first class is the +1 side
    std::vector<std::size_t> support_indices;       ///< into SvmModel::support_vectors
    std::vector<double> dual_coef;                  ///< alpha_i * y_i
    double bias = 0.0;
    bool converged = true;
    std::size_t iterations = 0;
};

struct SvmModel {
    KernelSpec spec;
    TrainerConfig trainer;
    std::vector<IntentLabel> labels; ///< classes present at training time, ascending
    std::vector<FeatureMap> support_vectors;
    std::vector<BinarySvm> binaries;
    json train_meta = json::object();

    GridShape shape() const { return support_vectors.empty() ? GridShape{} : support_vectors.front().shape; }
};

struct Prediction {
    IntentLabel label = IntentLabel::neutral;
    std::array<int, kNumIntents> votes{};
    std::vector<double> decisions; ///< one per binary, model order
};

// ---------------------------------------------------------------------------
// One-vs-one over a precomputed kernel matrix
// ---------------------------------------------------------------------------

/// A trained binary machine expressed in indices of the kernel matrix it was trained on.
struct PairMachine {
    std::pair<IntentLabel, IntentLabel> class_pair;
    std::vector<std::size_t> members; ///< kernel-matrix indices with nonzero coefficient
    std::vector<double> coef;         ///< alpha * y, aligned with members
    double bias = 0.0;
    bool converged = true;
    std::size_t iterations = 0;
};

/// Votes from per-binary decision values. Majority wins; ties go to the larger
/// summed |decision| over won contests, then to the smaller label index.
inline Prediction tally_votes(std::span<const std::pair<IntentLabel, IntentLabel>> pairs,
                              std::vector<double> decisions)
{
    Prediction p;
    std::array<double, kNumIntents> strength{};
    for (std::size_t b = 0; b < pairs.size(); ++b) {
        const auto winner = decisions[b] > 0.0 ? pairs[b].first : pairs[b].second;
        const auto w = static_cast<std::size_t>(to_index(winner));
        ++p.votes[w];
        strength[w] += std::abs(decisions[b]);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumIntents; ++c) {
        if (p.votes[c] > p.votes[best] || (p.votes[c] == p.votes[best] && strength[c] > strength[best]))
            best = c;
    }
    p.label = label_from_index(static_cast<int>(best));
    p.decisions = std::move(decisions);
    return p;
}

inline std::vector<IntentLabel> present_labels(std::span<const IntentLabel> labels)
{
    std::array<bool, kNumIntents> seen{};
    for (auto l : labels)
        seen[static_cast<std::size_t>(to_index(l))] = true;
    std::vector<IntentLabel> out;
    for (std::size_t c = 0; c < kNumIntents; ++c)
        if (seen[c])
            out.push_back(label_from_index(static_cast<int>(c)));
    return out;
}

/// Trains every class-pair machine on rows `index` of `K`. `labels` is indexed
/// like `K`. Machines are ordered by (first, second) label index.
template <KernelMatrix M>
std::vector<PairMachine> train_one_vs_one(const M& K, std::span<const std::size_t> index,
                                          std::span<const IntentLabel> labels, const TrainerConfig& cfg,
                                          std::size_t threads = 1)
{
    std::vector<IntentLabel> sub_labels;
    sub_labels.reserve(index.size());
    for (auto i : index)
        sub_labels.push_back(labels[i]);
    const auto classes = present_labels(sub_labels);
    if (classes.size() < 2)
        throw std::invalid_argument("multi-class training needs at least 2 classes, got " +
                                    std::to_string(classes.size()));

    std::vector<std::pair<IntentLabel, IntentLabel>> pairs;
    for (std::size_t a = 0; a < classes.size(); ++a)
        for (std::size_t b = a + 1; b < classes.size(); ++b)
            pairs.emplace_back(classes[a], classes[b]);

    std::vector<PairMachine> machines(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t m) {
        const auto [pos, neg] = pairs[m];
        std::vector<std::size_t> rows;
        std::vector<int> y;
        for (auto i : index) {
            if (labels[i] == pos || labels[i] == neg) {
                rows.push_back(i);
                y.push_back(labels[i] == pos ? 1 : -1);
            }
        }
        SmoConfig smo = cfg.smo();
        smo.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(to_index(pos) * 8 + to_index(neg)));
        const auto sol = solve_smo(SubMatrix<M>(K, rows), y, smo);

        PairMachine& out = machines[m];
        out.class_pair = pairs[m];
        out.bias = sol.bias;
        out.converged = sol.converged;
        out.iterations = sol.iterations;
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (sol.alpha[t] > 0.0) {
                out.members.push_back(rows[t]);
                out.coef.push_back(sol.alpha[t] * y[t]);
            }
        }
    });
    return machines;
}

/// Predicts sample `row` of `K` from machines trained on the same matrix.
template <KernelMatrix M>
Prediction predict_from_matrix(const M& K, std::size_t row, std::span<const PairMachine> machines)
{
    std::vector<std::pair<IntentLabel, IntentLabel>> pairs;
    std::vector<double> decisions;
    for (const auto& m : machines) {
        double f = m.bias;
        for (std::size_t t = 0; t < m.members.size(); ++t)
            f += m.coef[t] * K(row, m.members[t]);
        pairs.push_back(m.class_pair);
        decisions.push_back(f);
    }
    return tally_votes(pairs, std::move(decisions));
}

// ---------------------------------------------------------------------------
// Spectrum handling for indefinite Gram matrices
// ---------------------------------------------------------------------------

struct SpectrumReport {
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    std::size_t negative_count = 0;
    double negative_mass = 0.0; ///< sum |lambda| over negative eigenvalues / sum |lambda|
};

inline Eigen::MatrixXd to_eigen(const SymmetricMatrix& m)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(m.n));
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return out;
}

inline SpectrumReport spectrum_report(const SymmetricMatrix& m, double neg_threshold = -1e-10)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(m), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    SpectrumReport r;
    r.min_eigenvalue = ev.minCoeff();
    r.max_eigenvalue = ev.maxCoeff();
    double neg = 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        total += std::abs(ev[i]);
        if (ev[i] < neg_threshold) {
            ++r.negative_count;
            neg += -ev[i];
        }
    }
    r.negative_mass = total > 0.0 ? neg / total : 0.0;
    return r;
}

inline json to_json(const SpectrumReport& r)
{
    return {{"min_eigenvalue", r.min_eigenvalue},
            {"max_eigenvalue", r.max_eigenvalue},
            {"negative_count", r.negative_count},
            {"negative_mass", r.negative_mass}};
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to 0.
inline GramMatrix clip_to_psd(const GramMatrix& g)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(g));
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd psd = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    GramMatrix out(g.n, g.spec);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            const auto a = static_cast<Eigen::Index>(std::min(i, j));
            const auto b = static_cast<Eigen::Index>(std::max(i, j));
            out(i, j) = psd(a, b); // read one triangle so the result is exactly symmetric
        }
    return out;
}

// ---------------------------------------------------------------------------
// Model training and prediction
// ---------------------------------------------------------------------------

inline SvmModel assemble_model(const KernelSpec& spec, const TrainerConfig& cfg,
                               std::span<const FeatureMap> xs, std::span<const IntentLabel> labels,
                               std::span<const PairMachine> machines)
{
    SvmModel model;
    model.spec = spec;
    model.trainer = cfg;
    model.labels = present_labels(labels);

    std::vector<std::size_t> used;
    for (const auto& m : machines)
        used.insert(used.end(), m.members.begin(), m.members.end());
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t s = 0; s < used.size(); ++s) {
        slot[used[s]] = s;
        model.support_vectors.push_back(xs[used[s]]);
    }
    bool all_converged = true;
    for (const auto& m : machines) {
        BinarySvm b;
        b.class_pair = m.class_pair;
        b.bias = m.bias;
        b.converged = m.converged;
        b.iterations = m.iterations;
        b.dual_coef = m.coef;
        for (auto idx : m.members)
            b.support_indices.push_back(slot.at(idx));
        all_converged = all_converged && m.converged;
        model.binaries.push_back(std::move(b));
    }

    const auto counts = [&] {
        ClassCounts c{};
        for (auto l : labels)
            ++c[static_cast<std::size_t>(to_index(l))];
        return c;
    }();
    json counts_json = json::object();
    for (std::size_t c = 0; c < kNumIntents; ++c)
        counts_json[std::string(kIntentNames[c])] = counts[c];
    model.train_meta = {{"multiclass", "one-vs-one"},
                        {"solver", "smo-second-order"},
                        {"indefinite_handling", cfg.psd_clip ? "psd-clip" : "endpoint-step"},
                        {"tol", cfg.tol},
                        {"max_passes", cfg.max_passes},
                        {"seed", cfg.seed},
                        {"n_train", labels.size()},
                        {"class_counts", counts_json},
                        {"all_converged", all_converged}};
    return model;
}

inline SvmModel train_multiclass(std::span<const FeatureMap> xs, std::span<const IntentLabel> labels,
                                 const KernelSpec& spec, const TrainerConfig& cfg, std::size_t threads = 1)
{
    if (xs.size() != labels.size())
        throw std::invalid_argument("feature and label counts differ");
    spec.validate();
    GramMatrix K = gram(spec, xs, threads);
    const auto spectrum = spectrum_report(K);
    if (cfg.psd_clip)
        K = clip_to_psd(K);
    std::vector<std::size_t> all(xs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto machines = train_one_vs_one(K, all, labels, cfg, threads);
    auto model = assemble_model(spec, cfg, xs, labels, machines);
    model.train_meta["spectrum"] = to_json(spectrum);
    return model;
}

inline SvmModel train_multiclass(const LabeledDataset& ds, const KernelSpec& spec, const TrainerConfig& cfg,
                                 std::size_t threads = 1)
{
    const auto xs = feature_maps(ds);
    const auto labels = ds.labels();
    return train_multiclass(xs, labels, spec, cfg, threads);
}

/// Kernel value between x and every support vector, computed once per query.
inline std::vector<double> support_kernel_row(const SvmModel& model, const FeatureMap& x)
{
    std::vector<double> row(model.support_vectors.size());
    for (std::size_t s = 0; s < row.size(); ++s)
        row[s] = kernel_eval(model.spec, x, model.support_vectors[s]);
    return row;
}

inline Prediction predict(const SvmModel& model, const FeatureMap& x)
{
    if (!model.support_vectors.empty() && x.shape != model.shape())
        throw std::invalid_argument("feature map shape " + to_string(x.shape) +
                                    " does not match model shape " + to_string(model.shape()));
    const auto row = support_kernel_row(model, x);
    std::vector<std::pair<IntentLabel, IntentLabel>> pairs;
    std::vector<double> decisions;
    for (const auto& b : model.binaries) {
        double f = b.bias;
        for (std::size_t t = 0; t < b.support_indices.size(); ++t)
            f += b.dual_coef[t] * row[b.support_indices[t]];
        pairs.push_back(b.class_pair);
        decisions.push_back(f);
    }
    return tally_votes(pairs, std::move(decisions));
}

inline IntentLabel predict_label(const SvmModel& model, const FeatureMap& x) { return predict(model, x).label; }

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline constexpr std::string_view kModelFormat = "cyltouch-model";

inline json model_to_json(const SvmModel& model)
{
    json j;
    j["format"] = kModelFormat;
    j["version"] = 1;
    j["kernel"] = to_json(model.spec);
    j["C"] = model.trainer.C;
    json labels = json::array();
    for (auto l : model.labels)
        labels.push_back(std::string(to_string(l)));
    j["labels"] = labels;
    const auto shape = model.shape();
    j["shape"] = {kNumChannels, shape.rows, shape.cols};
    json svs = json::array();
    for (const auto& sv : model.support_vectors)
        svs.push_back(sv.data);
    j["support_vectors"] = std::move(svs);
    json bins = json::array();
    for (const auto& b : model.binaries) {
        bins.push_back({{"pair", {std::string(to_string(b.class_pair.first)), std::string(to_string(b.class_pair.second))}},
                        {"dual_coef", b.dual_coef},
                        {"support_indices", b.support_indices},
                        {"bias", b.bias},
                        {"converged", b.converged},
                        {"iterations", b.iterations}});
    }
    j["binaries"] = std::move(bins);
    j["train_meta"] = model.train_meta;
    return j;
}

inline SvmModel model_from_json(const json& j)
{
    try {
        if (j.value("format", "") != kModelFormat)
            throw FormatError("not a cyltouch-model file");
        SvmModel model;
        model.spec = kernel_spec_from_json(j.at("kernel"));
        model.trainer.C = j.at("C").get<double>();
        model.train_meta = j.value("train_meta", json::object());
        model.trainer.tol = model.train_meta.value("tol", 1e-3);
        model.trainer.max_passes = model.train_meta.value("max_passes", 200);
        model.trainer.seed = model.train_meta.value("seed", std::uint64_t{0});
        model.trainer.psd_clip = model.train_meta.value("indefinite_handling", "") == "psd-clip";
        for (const auto& l : j.at("labels"))
            model.labels.push_back(label_from_string(l.get<std::string>()));
        const auto shape = j.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 3 || shape[0] != kNumChannels)
            throw FormatError("model shape must be [4, rows, cols]");
        const GridShape grid{shape[1], shape[2]};
        check_shape(grid);
        for (const auto& sv : j.at("support_vectors"))
            model.support_vectors.emplace_back(grid, sv.get<std::vector<double>>());
        for (const auto& bj : j.at("binaries")) {
            BinarySvm b;
            const auto pair = bj.at("pair").get<std::vector<std::string>>();
            if (pair.size() != 2)
                throw FormatError("binary pair must have 2 labels");
            b.class_pair = {label_from_string(pair[0]), label_from_string(pair[1])};
            b.dual_coef = bj.at("dual_coef").get<std::vector<double>>();
            b.support_indices = bj.at("support_indices").get<std::vector<std::size_t>>();
            b.bias = bj.at("bias").get<double>();
            b.converged = bj.value("converged", true);
            b.iterations = bj.value("iterations", std::size_t{0});
            if (b.dual_coef.size() != b.support_indices.size())
                throw FormatError("dual_coef and support_indices lengths differ");
            for (auto idx : b.support_indices)
                if (idx >= model.support_vectors.size())
                    throw FormatError("support index " + std::to_string(idx) + " out of range");
            model.binaries.push_back(std::move(b));
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_json(const std::string& path, const json& j)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    os << j.dump() << '\n';
}

inline json load_json(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open '" + path + "'");
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void save_model(const std::string& path, const SvmModel& model) { save_json(path, model_to_json(model)); }

inline SvmModel load_model(const std::string& path)
{
    try {
        return model_from_json(load_json(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

struct HyperGrid {
    std::vector<double> gamma;
    std::vector<double> C;
    std::vector<double> delta;

    /// C {0.1, 1, 10, 100}; gamma {0.01, 0.1, 1/(4 rows cols), 1}; delta {1, 2, 4}.
    static HyperGrid defaults(GridShape shape = {})
    {
        return {{0.01, 0.1, 1.0 / static_cast<double>(kNumChannels * shape.cells()), 1.0},
                {0.1, 1.0, 10.0, 100.0},
                {1.0, 2.0, 4.0}};
    }
};

inline json to_json(const HyperGrid& g) { return {{"gamma", g.gamma}, {"C", g.C}, {"delta", g.delta}}; }

inline HyperGrid hyper_grid_from_json(const json& j, GridShape shape = {})
{
    HyperGrid g = HyperGrid::defaults(shape);
    if (j.contains("gamma"))
        g.gamma = j.at("gamma").get<std::vector<double>>();
    if (j.contains("C"))
        g.C = j.at("C").get<std::vector<double>>();
    if (j.contains("delta"))
        g.delta = j.at("delta").get<std::vector<double>>();
    return g;
}

struct CvRecord {
    KernelSpec spec;
    double C = 0.0;
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
};

struct GridSearchResult {
    KernelSpec best_spec;
    double best_C = 0.0;
    double best_accuracy = 0.0;
    std::vector<CvRecord> table;
};

inline json to_json(const GridSearchResult& r)
{
    json table = json::array();
    for (const auto& rec : r.table)
        table.push_back({{"kernel", to_json(rec.spec)},
                         {"C", rec.C},
                         {"fold_accuracy", rec.fold_accuracy},
                         {"mean_accuracy", rec.mean_accuracy}});
    return {{"best", {{"kernel", to_json(r.best_spec)}, {"C", r.best_C}, {"cv_accuracy", r.best_accuracy}}},
            {"cv_table", table}};
}

/// Seeded fold assignment: shuffled positions dealt round-robin into folds.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed)
{
    if (folds < 2)
        throw std::invalid_argument("cross-validation needs at least 2 folds");
    if (n < folds)
        throw std::invalid_argument("fewer samples (" + std::to_string(n) + ") than folds (" +
                                    std::to_string(folds) + ")");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, "folds"));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t p = 0; p < n; ++p)
        out[p % folds].push_back(order[p]);
    for (auto& f : out)
        std::sort(f.begin(), f.end());
    return out;
}

/// k-fold cross-validated accuracy for every grid point, using only `xs`.
/// Best by mean accuracy; ties to smaller C, then larger gamma, then smaller delta.
inline GridSearchResult grid_search(std::span<const FeatureMap> xs, std::span<const IntentLabel> labels,
                                    KernelKind kind, const HyperGrid& grid, std::size_t folds,
                                    const TrainerConfig& base, std::size_t threads = 1)
{
    if (grid.gamma.empty() || grid.C.empty() || (kind == KernelKind::cylindrical && grid.delta.empty()))
        throw std::invalid_argument("hyperparameter grid is empty");
    if (xs.size() != labels.size())
        throw std::invalid_argument("feature and label counts differ");

    const auto fold_sets = make_folds(xs.size(), folds, base.seed);
    const std::vector<double> deltas =
        kind == KernelKind::cylindrical ? grid.delta : std::vector<double>{KernelSpec::defaults(kind).delta};

    GridSearchResult result;
    for (double delta : deltas) {
        const auto distances = pairwise_distances(kind, delta, xs, threads);
        struct Point {
            double gamma;
            double C;
        };
        std::vector<Point> points;
        for (double g : grid.gamma)
            for (double c : grid.C)
                points.push_back({g, c});
        std::vector<CvRecord> records(points.size());

        // One Gram per gamma, shared across C values.
        std::vector<GramMatrix> grams;
        for (double g : grid.gamma)
            grams.push_back(gram_from_distances(distances, {kind, g, delta}));

        parallel_for(points.size(), threads, [&](std::size_t p) {
            const auto& K = grams[p / grid.C.size()];
            TrainerConfig cfg = base;
            cfg.C = points[p].C;
            CvRecord rec;
            rec.spec = {kind, points[p].gamma, delta};
            rec.C = points[p].C;
            double sum = 0.0;
            for (std::size_t f = 0; f < fold_sets.size(); ++f) {
                std::vector<std::size_t> train;
                for (std::size_t g = 0; g < fold_sets.size(); ++g)
                    if (g != f)
                        train.insert(train.end(), fold_sets[g].begin(), fold_sets[g].end());
                std::sort(train.begin(), train.end());
                const auto machines = train_one_vs_one(K, train, labels, cfg);
                std::size_t correct = 0;
                for (auto i : fold_sets[f])
                    if (predict_from_matrix(K, i, machines).label == labels[i])
                        ++correct;
                const double acc = static_cast<double>(correct) / static_cast<double>(fold_sets[f].size());
                rec.fold_accuracy.push_back(acc);
                sum += acc;
            }
            rec.mean_accuracy = sum / static_cast<double>(fold_sets.size());
            records[p] = std::move(rec);
        });
        result.table.insert(result.table.end(), records.begin(), records.end());
    }

    auto better = [](const CvRecord& a, const CvRecord& b) {
        if (a.mean_accuracy != b.mean_accuracy)
            return a.mean_accuracy > b.mean_accuracy;
        if (a.C != b.C)
            return a.C < b.C;
        if (a.spec.gamma != b.spec.gamma)
            return a.spec.gamma > b.spec.gamma;
        return a.spec.delta < b.spec.delta;
    };
    const auto& best = *std::min_element(result.table.begin(), result.table.end(),
                                         [&](const CvRecord& a, const CvRecord& b) { return better(a, b); });
    result.best_spec = best.spec;
    result.best_C = best.C;
    result.best_accuracy = best.mean_accuracy;
    return result;
}

inline GridSearchResult grid_search(const LabeledDataset& train, KernelKind kind, const HyperGrid& grid,
                                    std::size_t folds, const TrainerConfig& base, std::size_t threads = 1)
{
    const auto xs = feature_maps(train);
    const auto labels = train.labels();
    return grid_search(xs, labels, kind, grid, folds, base, threads);
}

} // namespace cyltouch
