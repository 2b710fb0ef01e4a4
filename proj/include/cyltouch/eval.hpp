#pragma once

// Multi-seed comparison of the classifiers on identical train/test splits:
// per-seed accuracy, mean and sample standard deviation across seeds, and a
// confusion matrix summed over seeds.

#include <array>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "cyltouch/core.hpp"
#include "cyltouch/dataset_io.hpp"
#include "cyltouch/featurizer.hpp"
#include "cyltouch/mdcm.hpp"
#include "cyltouch/mlp.hpp"
#include "cyltouch/simgen.hpp"
#include "cyltouch/svm.hpp"

namespace cyltouch {

enum class Method { rbf_svm, ck_svm, mlp, mdcm };

inline constexpr std::array<Method, 4> kAllMethods = {Method::rbf_svm, Method::ck_svm, Method::mlp, Method::mdcm};

constexpr std::string_view to_string(Method m) noexcept
{
    switch (m) {
    case Method::rbf_svm: return "rbf_svm";
    case Method::ck_svm: return "ck_svm";
    case Method::mlp: return "mlp";
    case Method::mdcm: return "mdcm";
    }
    return "?";
}

inline Method method_from_string(std::string_view name)
{
    for (auto m : kAllMethods)
        if (to_string(m) == name)
            return m;
    throw FormatError("unknown method '" + std::string(name) + "' (expected rbf_svm, ck_svm, mlp or mdcm)");
}

struct ExperimentConfig {
    /// Exactly one source: a dataset file, or a generator re-seeded per run.
    std::optional<std::string> dataset_path;
    GeneratorConfig generator = default_generator_config();
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    double train_fraction = 0.8;
    bool hyper_search = true;
    HyperGrid grid = HyperGrid::defaults();
    std::size_t folds = 5;
    TrainerConfig trainer{};
    MlpConfig mlp{};
    MdcmConfig mdcm{};
    FeaturizerConfig featurizer{};

    void validate() const
    {
        if (methods.empty())
            throw std::invalid_argument("experiment needs at least one method");
        if (seeds.empty())
            throw std::invalid_argument("experiment needs at least one seed");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
        if (!dataset_path)
            cyltouch::validate(generator);
    }
};

inline json to_json(const ExperimentConfig& c)
{
    json methods = json::array();
    for (auto m : c.methods)
        methods.push_back(to_string(m));
    json j{{"methods", methods},
           {"seeds", c.seeds},
           {"train_fraction", c.train_fraction},
           {"hyper_search", c.hyper_search},
           {"grid", to_json(c.grid)},
           {"folds", c.folds},
           {"trainer", {{"C", c.trainer.C}, {"tol", c.trainer.tol}, {"max_passes", c.trainer.max_passes}}},
           {"mlp", {{"hidden", c.mlp.hidden}, {"lr", c.mlp.lr}, {"epochs", c.mlp.epochs}}},
           {"mdcm",
            {{"shrinkage", c.mdcm.shrinkage},
             {"max_iterations", c.mdcm.max_iterations},
             {"tolerance", c.mdcm.tolerance}}}};
    if (c.dataset_path)
        j["dataset"] = {{"file", *c.dataset_path}};
    else
        j["dataset"] = {{"generator", to_json(c.generator, false)}};
    return j;
}

/// Missing keys keep their defaults. "dataset" is {"file": path} or
/// {"generator": {...}}; absent means the default generator.
inline ExperimentConfig experiment_config_from_json(const json& j)
{
    try {
        ExperimentConfig c;
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            if (d.contains("file") == d.contains("generator"))
                throw FormatError("dataset must name exactly one of \"file\" or \"generator\"");
            if (d.contains("file"))
                c.dataset_path = d.at("file").get<std::string>();
            else
                c.generator = generator_config_from_json(d.at("generator"));
        }
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j.at("methods"))
                c.methods.push_back(method_from_string(m.get<std::string>()));
        }
        c.seeds = j.value("seeds", c.seeds);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.hyper_search = j.value("hyper_search", c.hyper_search);
        if (j.contains("grid"))
            c.grid = hyper_grid_from_json(j.at("grid"), c.generator.shape);
        c.folds = j.value("folds", c.folds);
        if (j.contains("trainer")) {
            const auto& t = j.at("trainer");
            c.trainer.C = t.value("C", c.trainer.C);
            c.trainer.tol = t.value("tol", c.trainer.tol);
            c.trainer.max_passes = t.value("max_passes", c.trainer.max_passes);
        }
        if (j.contains("mlp")) {
            const auto& m = j.at("mlp");
            c.mlp.hidden = m.value("hidden", c.mlp.hidden);
            c.mlp.lr = m.value("lr", c.mlp.lr);
            c.mlp.epochs = m.value("epochs", c.mlp.epochs);
        }
        if (j.contains("mdcm")) {
            const auto& m = j.at("mdcm");
            c.mdcm.shrinkage = m.value("shrinkage", c.mdcm.shrinkage);
            c.mdcm.max_iterations = m.value("max_iterations", c.mdcm.max_iterations);
            c.mdcm.tolerance = m.value("tolerance", c.mdcm.tolerance);
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed experiment config: ") + e.what());
    }
}

using ConfusionMatrix = std::array<std::array<std::size_t, kNumIntents>, kNumIntents>; ///< [true][predicted]

struct MethodResult {
    Method method = Method::ck_svm;
    std::vector<double> accuracies; ///< one per seed, config order
    double mean = 0.0;
    double std = 0.0;               ///< sample std over seeds, 0 for a single seed
    ConfusionMatrix confusion{};
    json per_seed = json::array();  ///< chosen hyperparameters etc.
    double train_seconds = 0.0;
    double test_seconds = 0.0;
};

struct ExperimentReport {
    std::vector<std::uint64_t> seeds;
    std::vector<MethodResult> methods;
    json source = json::object();
};

inline std::pair<double, double> mean_and_sample_std(std::span<const double> xs)
{
    if (xs.empty())
        return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2)
        return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

namespace detail {

struct SeedData {
    LabeledDataset raw; ///< empty when the source is featurized only
    LabeledDataset features;
};

inline SeedData load_seed_data(const ExperimentConfig& cfg, std::uint64_t seed,
                               const std::optional<LabeledDataset>& file_data)
{
    SeedData d;
    if (file_data) {
        if (file_data->kind == DatasetKind::raw) {
            d.raw = *file_data;
            d.features = featurize_dataset(d.raw, cfg.featurizer);
        } else {
            d.features = *file_data;
        }
    } else {
        GeneratorConfig g = cfg.generator;
        g.seed = derive_seed(seed, "generator");
        d.raw = generate(g);
        d.features = featurize_dataset(d.raw, cfg.featurizer);
    }
    return d;
}

inline void require_disjoint(const SplitIndices& idx)
{
    std::vector<std::size_t> a = idx.train;
    std::vector<std::size_t> b = idx.test;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty())
        throw std::logic_error("train and test sets overlap");
}

} // namespace detail

/// Runs every method on every seed. Each seed regenerates (or reuses the
/// loaded) dataset, splits it once, and all methods share that split;
/// hyperparameter search sees only the training part.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1)
{
    cfg.validate();
    std::optional<LabeledDataset> file_data;
    ExperimentReport report;
    report.seeds = cfg.seeds;
    if (cfg.dataset_path) {
        file_data = load_dataset(*cfg.dataset_path);
        report.source = {{"file", *cfg.dataset_path}, {"kind", to_string(file_data->kind)}, {"n", file_data->size()}};
        for (auto m : cfg.methods)
            if (m == Method::mdcm && file_data->kind != DatasetKind::raw)
                throw std::invalid_argument("method mdcm needs raw windows but '" + *cfg.dataset_path +
                                            "' is featurized");
    } else {
        report.source = {{"generator", to_json(cfg.generator, false)}, {"generator_seed", "derived per seed"}};
    }

    for (auto m : cfg.methods) {
        MethodResult r;
        r.method = m;
        report.methods.push_back(std::move(r));
    }

    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

    for (auto seed : cfg.seeds) {
        const auto data = detail::load_seed_data(cfg, seed, file_data);
        const auto idx = split_indices(data.features, cfg.train_fraction, seed);
        detail::require_disjoint(idx);
        const auto train = subset(data.features, idx.train);
        const auto test = subset(data.features, idx.test);

        for (auto& r : report.methods) {
            json info{{"seed", seed}};
            std::vector<IntentLabel> predicted;
            const auto t0 = clock::now();
            clock::time_point t1;
            if (r.method == Method::rbf_svm || r.method == Method::ck_svm) {
                const auto kind = r.method == Method::rbf_svm ? KernelKind::rbf : KernelKind::cylindrical;
                TrainerConfig tc = cfg.trainer;
                tc.seed = derive_seed(seed, "svm");
                KernelSpec spec = KernelSpec::defaults(kind, train.features(0).shape);
                if (cfg.hyper_search) {
                    const auto gs = grid_search(train, kind, cfg.grid, cfg.folds, tc, threads);
                    spec = gs.best_spec;
                    tc.C = gs.best_C;
                    info["cv_accuracy"] = gs.best_accuracy;
                }
                const auto model = train_multiclass(train, spec, tc, threads);
                t1 = clock::now();
                info["kernel"] = to_json(spec);
                info["C"] = tc.C;
                info["all_converged"] = model.train_meta.value("all_converged", true);
                for (std::size_t i = 0; i < test.size(); ++i)
                    predicted.push_back(predict_label(model, test.features(i)));
            } else if (r.method == Method::mlp) {
                MlpConfig mc = cfg.mlp;
                mc.seed = derive_seed(seed, "mlp");
                const auto res = train_mlp(train, mc);
                t1 = clock::now();
                info["final_loss"] = res.loss_curve.back();
                for (std::size_t i = 0; i < test.size(); ++i)
                    predicted.push_back(predict_mlp(res.model, test.features(i)));
            } else {
                const auto raw_train = subset(data.raw, idx.train);
                const auto model = train_mdcm(raw_train, cfg.mdcm, threads);
                t1 = clock::now();
                info["iterations"] = model.train_meta["iterations"];
                for (auto i : idx.test)
                    predicted.push_back(predict_mdcm(model, data.raw.window(i)));
            }
            const auto t2 = clock::now();
            r.train_seconds += seconds(t0, t1);
            r.test_seconds += seconds(t1, t2);

            std::size_t correct = 0;
            for (std::size_t i = 0; i < test.size(); ++i) {
                const auto truth = static_cast<std::size_t>(to_index(test.label(i)));
                const auto guess = static_cast<std::size_t>(to_index(predicted[i]));
                ++r.confusion[truth][guess];
                correct += truth == guess;
            }
            const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
            info["accuracy"] = acc;
            info["n_test"] = test.size();
            r.accuracies.push_back(acc);
            r.per_seed.push_back(std::move(info));
        }
    }
    for (auto& r : report.methods)
        std::tie(r.mean, r.std) = mean_and_sample_std(r.accuracies);
    return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReportNote =
    "std is the sample standard deviation over seeds; confusion counts are summed over seeds";

/// Timings are left out so the document is a pure function of the config.
inline json to_json(const ExperimentReport& r)
{
    json methods = json::array();
    for (const auto& m : r.methods) {
        json conf = json::array();
        for (const auto& row : m.confusion)
            conf.push_back(row);
        methods.push_back({{"method", to_string(m.method)},
                           {"accuracies", m.accuracies},
                           {"mean", m.mean},
                           {"std", m.std},
                           {"confusion", conf},
                           {"per_seed", m.per_seed}});
    }
    json labels = json::array();
    for (auto l : kAllIntents)
        labels.push_back(to_string(l));
    return {{"format", "cyltouch-report"}, {"version", 1},     {"note", kReportNote}, {"seeds", r.seeds},
            {"labels", labels},            {"source", r.source}, {"methods", methods}};
}

inline ExperimentReport report_from_json(const json& j)
{
    try {
        ExperimentReport r;
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        r.source = j.value("source", json::object());
        for (const auto& mj : j.at("methods")) {
            MethodResult m;
            m.method = method_from_string(mj.at("method").get<std::string>());
            m.accuracies = mj.at("accuracies").get<std::vector<double>>();
            m.mean = mj.at("mean").get<double>();
            m.std = mj.at("std").get<double>();
            const auto conf = mj.at("confusion").get<std::vector<std::vector<std::size_t>>>();
            if (conf.size() != kNumIntents)
                throw FormatError("confusion matrix must be 5x5");
            for (std::size_t a = 0; a < kNumIntents; ++a) {
                if (conf[a].size() != kNumIntents)
                    throw FormatError("confusion matrix must be 5x5");
                for (std::size_t b = 0; b < kNumIntents; ++b)
                    m.confusion[a][b] = conf[a][b];
            }
            m.per_seed = mj.value("per_seed", json::array());
            r.methods.push_back(std::move(m));
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
}

/// method,mean,std,seed_<s>... with accuracies at full precision.
inline std::string report_csv(const ExperimentReport& r)
{
    std::ostringstream os;
    os << std::setprecision(17) << "method,mean,std";
    for (auto s : r.seeds)
        os << ",seed_" << s;
    os << '\n';
    for (const auto& m : r.methods) {
        os << to_string(m.method) << ',' << m.mean << ',' << m.std;
        for (double a : m.accuracies)
            os << ',' << a;
        os << '\n';
    }
    return os.str();
}

/// method,true,<predicted labels...> with integer counts.
inline std::string confusion_csv(const ExperimentReport& r)
{
    std::ostringstream os;
    os << "method,true";
    for (auto l : kAllIntents)
        os << ',' << to_string(l);
    os << '\n';
    for (const auto& m : r.methods)
        for (std::size_t a = 0; a < kNumIntents; ++a) {
            os << to_string(m.method) << ',' << kIntentNames[a];
            for (std::size_t b = 0; b < kNumIntents; ++b)
                os << ',' << m.confusion[a][b];
            os << '\n';
        }
    return os.str();
}

inline std::string report_text(const ExperimentReport& r, bool with_timings = true)
{
    std::ostringstream os;
    os << "Classification accuracy over " << r.seeds.size() << " seed(s) (mean +- std)\n";
    os << "(" << kReportNote << ")\n\n";
    os << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "mean" << std::setw(10) << "std";
    if (with_timings)
        os << std::setw(12) << "train s" << std::setw(10) << "test s";
    os << '\n';
    os << std::fixed;
    for (const auto& m : r.methods) {
        os << std::left << std::setw(10) << to_string(m.method) << std::right << std::setprecision(4) << std::setw(10)
           << m.mean << std::setw(10) << m.std;
        if (with_timings)
            os << std::setprecision(2) << std::setw(12) << m.train_seconds << std::setw(10) << m.test_seconds;
        os << '\n';
    }
    for (const auto& m : r.methods) {
        os << "\nconfusion " << to_string(m.method) << " (rows true, columns predicted)\n";
        os << std::setw(12) << "";
        for (auto l : kAllIntents)
            os << std::setw(12) << to_string(l);
        os << std::setw(8) << "total" << '\n';
        for (std::size_t a = 0; a < kNumIntents; ++a) {
            std::size_t total = 0;
            os << std::left << std::setw(12) << kIntentNames[a] << std::right;
            for (std::size_t b = 0; b < kNumIntents; ++b) {
                os << std::setw(12) << m.confusion[a][b];
                total += m.confusion[a][b];
            }
            os << std::setw(8) << total << '\n';
        }
    }
    return os.str();
}

enum class ReportFormat { text, json, csv };

inline ReportFormat report_format_from_string(std::string_view s)
{
    if (s == "text")
        return ReportFormat::text;
    if (s == "json")
        return ReportFormat::json;
    if (s == "csv")
        return ReportFormat::csv;
    throw FormatError("unknown report format '" + std::string(s) + "' (expected text, json or csv)");
}

inline std::string render_report(const ExperimentReport& r, ReportFormat format)
{
    switch (format) {
    case ReportFormat::text: return report_text(r);
    case ReportFormat::json: return to_json(r).dump(2) + "\n";
    case ReportFormat::csv: return report_csv(r);
    }
    return {};
}

} // namespace cyltouch
