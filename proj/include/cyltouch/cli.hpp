#pragma once

// Command-line front end: simgen, featurize, train, eval, predict, replay and
// serve. Exit status 0 on success, 2 on usage errors, 1 on runtime errors.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cyltouch/core.hpp"
#include "cyltouch/dataset_io.hpp"
#include "cyltouch/eval.hpp"
#include "cyltouch/featurizer.hpp"
#include "cyltouch/mdcm.hpp"
#include "cyltouch/mlp.hpp"
#include "cyltouch/models.hpp"
#include "cyltouch/pipeline.hpp"
#include "cyltouch/server.hpp"
#include "cyltouch/simgen.hpp"
#include "cyltouch/svm.hpp"

namespace cyltouch {

namespace cli_detail {

struct Globals {
    std::uint64_t seed = 0;
    std::string config;
    bool quiet = false;
    std::size_t threads = 0;

    std::size_t thread_count() const { return threads > 0 ? threads : default_threads(); }
    std::optional<json> config_json() const
    {
        if (config.empty())
            return std::nullopt;
        return load_json(config);
    }
};

inline void write_text(const std::string& path, const std::string& text)
{
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    os << text;
    if (!os)
        throw std::runtime_error("failed writing '" + path + "'");
}

inline LabeledDataset featurized_view(const LabeledDataset& ds)
{
    return ds.kind == DatasetKind::featurized ? ds : featurize_dataset(ds);
}

struct Subcommands {
    // simgen
    std::string simgen_out;
    std::string simgen_patterns;
    std::string simgen_write_patterns;
    std::optional<std::size_t> simgen_samples;
    std::optional<int> simgen_max_shift;
    std::optional<double> simgen_noise;
    std::optional<double> simgen_jitter;
    std::optional<double> simgen_forward_bias;
    // featurize
    std::string feat_in;
    std::string feat_out;
    // train
    std::string train_in;
    std::string train_out;
    std::string train_method = "svm";
    std::string train_kernel = "cylindrical";
    bool train_grid = false;
    bool train_psd_clip = false;
    std::optional<double> train_gamma;
    std::optional<double> train_delta;
    std::optional<double> train_C;
    std::size_t train_folds = 5;
    std::string train_cv_out;
    // eval
    std::string eval_out;
    std::string eval_csv;
    std::string eval_confusion;
    std::string eval_in;
    std::vector<std::string> eval_methods;
    std::vector<std::uint64_t> eval_seeds;
    bool eval_no_grid = false;
    std::string eval_format = "text";
    // predict
    std::string predict_model;
    std::string predict_in;
    std::string predict_out;
    // replay
    std::string replay_model;
    std::string replay_log;
    std::string replay_out;
    // serve
    std::string serve_model;
    std::string serve_address = "127.0.0.1";
    unsigned short serve_port = 8800;
    std::string serve_patterns;
    std::string serve_ui_dir;
};

inline int do_simgen(const Globals& g, const Subcommands& s, std::ostream& out)
{
    GeneratorConfig cfg = default_generator_config();
    if (auto j = g.config_json())
        cfg = generator_config_from_json(*j);
    if (!s.simgen_patterns.empty())
        cfg.base_patterns = load_patterns(s.simgen_patterns);
    if (s.simgen_samples)
        cfg.samples_per_class = *s.simgen_samples;
    if (s.simgen_max_shift)
        cfg.max_shift = *s.simgen_max_shift;
    if (s.simgen_noise)
        cfg.noise_sigma = *s.simgen_noise;
    if (s.simgen_jitter)
        cfg.temporal_jitter_sigma = *s.simgen_jitter;
    if (s.simgen_forward_bias)
        cfg.forward_bias = *s.simgen_forward_bias;
    cfg.seed = derive_seed(g.seed, "generator");
    if (!s.simgen_write_patterns.empty())
        write_text(s.simgen_write_patterns, patterns_to_json(cfg.base_patterns).dump(2) + "\n");
    if (s.simgen_out.empty()) {
        if (s.simgen_write_patterns.empty())
            throw CLI::ValidationError("simgen", "nothing to do: give --out and/or --write-patterns");
        return 0;
    }
    const auto ds = generate(cfg);
    save_dataset(s.simgen_out, ds);
    if (!g.quiet)
        out << "wrote " << ds.size() << " raw samples (" << cfg.samples_per_class << " per class, max_shift "
            << cfg.max_shift << ") to " << s.simgen_out << "\n";
    return 0;
}

inline int do_featurize(const Globals& g, const Subcommands& s, std::ostream& out)
{
    const auto ds = load_dataset(s.feat_in);
    if (ds.kind != DatasetKind::raw)
        throw std::runtime_error("'" + s.feat_in + "' is already featurized");
    const auto report = validate_dataset(ds);
    if (!report.valid())
        throw std::runtime_error("'" + s.feat_in + "' failed validation: " + report.violations.front());
    const auto fs = featurize_dataset(ds);
    save_dataset(s.feat_out, fs);
    if (!g.quiet)
        out << "featurized " << fs.size() << " samples to " << s.feat_out << "\n";
    return 0;
}

inline int do_train(const Globals& g, const Subcommands& s, std::ostream& out)
{
    const auto ds = load_dataset(s.train_in);
    const auto report = validate_dataset(ds);
    if (!report.valid())
        throw std::runtime_error("'" + s.train_in + "' failed validation: " + report.violations.front());
    const json cfg = g.config_json().value_or(json::object());

    if (s.train_method == "mdcm") {
        if (ds.kind != DatasetKind::raw)
            throw std::runtime_error("mdcm trains on raw windows but '" + s.train_in + "' is featurized");
        MdcmConfig mc;
        if (cfg.contains("mdcm")) {
            mc.shrinkage = cfg["mdcm"].value("shrinkage", mc.shrinkage);
            mc.max_iterations = cfg["mdcm"].value("max_iterations", mc.max_iterations);
            mc.tolerance = cfg["mdcm"].value("tolerance", mc.tolerance);
        }
        const auto model = train_mdcm(ds, mc, g.thread_count());
        save_json(s.train_out, mdcm_to_json(model));
        if (!g.quiet)
            out << "trained mdcm on " << ds.size() << " samples -> " << s.train_out << "\n";
        return 0;
    }
    const auto fs = featurized_view(ds);
    if (s.train_method == "mlp") {
        MlpConfig mc;
        if (cfg.contains("mlp")) {
            mc.hidden = cfg["mlp"].value("hidden", mc.hidden);
            mc.lr = cfg["mlp"].value("lr", mc.lr);
            mc.epochs = cfg["mlp"].value("epochs", mc.epochs);
        }
        mc.seed = derive_seed(g.seed, "mlp");
        const auto res = train_mlp(fs, mc);
        save_json(s.train_out, mlp_to_json(res.model));
        if (!g.quiet)
            out << "trained mlp on " << fs.size() << " samples, loss " << res.loss_curve.front() << " -> "
                << res.loss_curve.back() << " -> " << s.train_out << "\n";
        return 0;
    }

    const auto kind = kernel_kind_from_string(s.train_kernel);
    const auto shape = fs.features(0).shape;
    KernelSpec spec = KernelSpec::defaults(kind, shape);
    TrainerConfig tc;
    if (cfg.contains("trainer")) {
        tc.C = cfg["trainer"].value("C", tc.C);
        tc.tol = cfg["trainer"].value("tol", tc.tol);
        tc.max_passes = cfg["trainer"].value("max_passes", tc.max_passes);
    }
    if (cfg.contains("kernel")) {
        spec.gamma = cfg["kernel"].value("gamma", spec.gamma);
        spec.delta = cfg["kernel"].value("delta", spec.delta);
    }
    tc.seed = derive_seed(g.seed, "svm");
    tc.psd_clip = s.train_psd_clip;
    if (s.train_grid) {
        const HyperGrid grid = cfg.contains("grid") ? hyper_grid_from_json(cfg["grid"], shape) : HyperGrid::defaults(shape);
        const auto gs = grid_search(fs, kind, grid, s.train_folds, tc, g.thread_count());
        spec = gs.best_spec;
        tc.C = gs.best_C;
        if (!s.train_cv_out.empty())
            save_json(s.train_cv_out, to_json(gs));
        if (!g.quiet)
            out << "grid search: best C " << gs.best_C << ", gamma " << spec.gamma
                << (kind == KernelKind::cylindrical ? ", delta " + std::to_string(spec.delta) : std::string{})
                << ", cv accuracy " << gs.best_accuracy << "\n";
    }
    if (s.train_gamma)
        spec.gamma = *s.train_gamma;
    if (s.train_delta)
        spec.delta = *s.train_delta;
    if (s.train_C)
        tc.C = *s.train_C;
    spec.validate();
    const auto model = train_multiclass(fs, spec, tc, g.thread_count());
    save_model(s.train_out, model);
    if (!g.quiet)
        out << "trained " << to_string(kind) << " svm on " << fs.size() << " samples, " << model.support_vectors.size()
            << " support vectors -> " << s.train_out << "\n";
    return 0;
}

inline int do_eval(const Globals& g, const Subcommands& s, std::ostream& out)
{
    ExperimentConfig cfg;
    if (auto j = g.config_json())
        cfg = experiment_config_from_json(*j);
    if (!s.eval_in.empty())
        cfg.dataset_path = s.eval_in;
    if (!s.eval_methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : s.eval_methods)
            cfg.methods.push_back(method_from_string(m));
    }
    if (!s.eval_seeds.empty())
        cfg.seeds = s.eval_seeds;
    if (s.eval_no_grid)
        cfg.hyper_search = false;
    const auto format = report_format_from_string(s.eval_format);
    const auto report = run_experiment(cfg, g.thread_count());

    if (!s.eval_out.empty()) {
        const std::filesystem::path out_path(s.eval_out);
        write_text(s.eval_out, render_report(report, ReportFormat::json));
        const auto dir = out_path.parent_path();
        const auto csv = s.eval_csv.empty() ? (dir / (out_path.stem().string() + ".csv")).string() : s.eval_csv;
        const auto conf = s.eval_confusion.empty() ? (dir / "confusion.csv").string() : s.eval_confusion;
        write_text(csv, report_csv(report));
        write_text(conf, confusion_csv(report));
    }
    if (!g.quiet)
        out << render_report(report, format);
    return 0;
}

inline int do_predict(const Globals& g, const Subcommands& s, std::ostream& out)
{
    const auto model = load_any_model(s.predict_model);
    const auto ds = load_dataset(s.predict_in);
    if (ds.empty())
        throw std::runtime_error("'" + s.predict_in + "' has no samples");
    std::ostringstream lines;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto label = classify_item(model, ds.items[i]);
        correct += label == ds.label(i);
        lines << json{{"index", i}, {"label", to_string(label)}, {"truth", to_string(ds.label(i))}}.dump() << '\n';
    }
    if (!s.predict_out.empty())
        write_text(s.predict_out, lines.str());
    else
        out << lines.str();
    if (!g.quiet)
        std::cerr << "accuracy " << correct << "/" << ds.size() << " = "
                  << static_cast<double>(correct) / static_cast<double>(ds.size()) << "\n";
    return 0;
}

inline PipelineConfig pipeline_config_for(const Globals& g)
{
    if (auto j = g.config_json())
        return pipeline_config_from_json(j->contains("pipeline") ? (*j)["pipeline"] : *j);
    return {};
}

inline int do_replay(const Globals& g, const Subcommands& s, std::ostream& out)
{
    const auto model = std::make_shared<const AnyModel>(load_any_model(s.replay_model));
    const auto stream = load_frame_stream(s.replay_log);
    const auto log = replay(stream, window_classifier(model), pipeline_config_for(g));
    const auto text = command_log_to_string(log);
    if (!s.replay_out.empty())
        write_text(s.replay_out, text);
    else
        out << text;
    if (!g.quiet && !s.replay_out.empty())
        out << "replayed " << stream.size() << " frames, " << log.size() << " commands -> " << s.replay_out << "\n";
    return 0;
}

inline int do_serve(const Globals& g, const Subcommands& s, std::ostream& out)
{
    ServerConfig cfg;
    cfg.address = s.serve_address;
    cfg.port = s.serve_port;
    cfg.session.pipeline = pipeline_config_for(g);
    if (!s.serve_model.empty()) {
        const auto any = load_any_model(s.serve_model);
        if (!std::holds_alternative<SvmModel>(any))
            throw std::runtime_error("serve needs an SVM model file ('" + s.serve_model + "' is not one)");
        auto model = std::make_shared<const SvmModel>(std::get<SvmModel>(any));
        cfg.session.shape = model->shape();
        cfg.session.kernel = model->spec;
        cfg.session.trainer = model->trainer;
        cfg.model = std::move(model);
    }
    cfg.patterns = s.serve_patterns.empty() ? patterns_to_json(default_patterns(cfg.session.shape))
                                            : patterns_to_json(load_patterns(s.serve_patterns));
    if (!s.serve_ui_dir.empty()) {
        if (!std::filesystem::is_directory(s.serve_ui_dir))
            throw std::runtime_error("--ui-dir '" + s.serve_ui_dir + "' is not a directory");
        cfg.ui_dir = s.serve_ui_dir;
    }
    if (!g.quiet)
        cfg.log = [&out](const std::string& msg) { out << msg << std::endl; };

    net::asio::io_context ioc;
    StreamServer server(ioc, cfg);
    server.start();
    net::asio::signal_set signals(ioc, SIGINT, SIGTERM);
    signals.async_wait([&](boost::system::error_code, int) {
        server.stop();
        ioc.stop();
    });
    if (!g.quiet)
        out << "serving on " << cfg.address << ":" << server.port() << std::endl;
    ioc.run();
    return 0;
}

} // namespace cli_detail

/// Runs the command line; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    using namespace cli_detail;
    Globals g;
    Subcommands s;

    CLI::App app{"cyltouch: tactile intent classification with cylindrical-kernel SVMs"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.add_option("--seed", g.seed, "Root seed; every random choice derives a named sub-seed from it")
        ->capture_default_str();
    app.add_option("--config", g.config,
                   "JSON config: generator config (simgen), {trainer,kernel,grid,mlp,mdcm} (train), "
                   "experiment config (eval), pipeline config (replay, serve)")
        ->check(CLI::ExistingFile);
    app.add_flag("--quiet", g.quiet, "Suppress progress output");
    app.add_option("--threads", g.threads, "Worker threads (default: CYLTOUCH_THREADS or all cores)");
    app.fallthrough();

    const std::string formats =
        "Files: datasets are JSON Lines with a header {\"format\":\"cyltouch-dataset\",...} and one "
        "record per sample {\"label\",\"kind\",\"shape\",\"data\"}; raw shape is [frames, rows, cols], "
        "featurized shape is [4, rows, cols]. Models are JSON with \"format\" cyltouch-model, "
        "cyltouch-mlp or cyltouch-mdcm.";

    app.footer(formats);
    auto* simgen = app.add_subcommand("simgen", "Generate a simulated raw dataset");
    simgen->add_option("--out", s.simgen_out, "Output dataset (JSONL, raw windows)");
    simgen->add_option("--patterns", s.simgen_patterns, "Base patterns JSON to use instead of the built-in set")
        ->check(CLI::ExistingFile);
    simgen->add_option("--write-patterns", s.simgen_write_patterns, "Also write the base patterns JSON here");
    simgen->add_option("--samples-per-class", s.simgen_samples, "Samples per intent");
    simgen->add_option("--max-shift", s.simgen_max_shift, "Largest random row shift");
    simgen->add_option("--noise", s.simgen_noise, "Per-sample static noise sigma");
    simgen->add_option("--jitter", s.simgen_jitter, "Per-frame noise sigma");
    simgen->add_option("--forward-bias", s.simgen_forward_bias, "Forward-loading contamination of other classes");

    auto* feat = app.add_subcommand("featurize", "Turn raw windows into 4-channel feature maps");
    feat->add_option("--in", s.feat_in, "Raw dataset (JSONL)")->required()->check(CLI::ExistingFile);
    feat->add_option("--out", s.feat_out, "Featurized dataset (JSONL)")->required();

    auto* train = app.add_subcommand("train", "Train a classifier");
    train->add_option("--in", s.train_in, "Dataset (featurized, or raw which is featurized on the fly)")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--out", s.train_out, "Model file (JSON)")->required();
    train->add_option("--method", s.train_method, "svm, mlp or mdcm")->check(CLI::IsMember({"svm", "mlp", "mdcm"}));
    train->add_option("--kernel", s.train_kernel, "SVM kernel: rbf or cylindrical")
        ->check(CLI::IsMember({"rbf", "cylindrical"}));
    train->add_flag("--grid", s.train_grid, "Pick gamma, C (and delta) by cross-validation");
    train->add_option("--folds", s.train_folds, "Cross-validation folds for --grid");
    train->add_option("--cv-out", s.train_cv_out, "Write the cross-validation table (JSON) here");
    train->add_flag("--psd-clip", s.train_psd_clip, "Clip negative Gram eigenvalues before training");
    train->add_option("--gamma", s.train_gamma, "Kernel gamma (overrides defaults and --grid)");
    train->add_option("--delta", s.train_delta, "Cylindrical shift penalty scale (overrides defaults and --grid)");
    train->add_option("--C", s.train_C, "Soft-margin C (overrides defaults and --grid)");

    auto* eval = app.add_subcommand(
        "eval", "Compare methods over several seeds; writes report JSON plus report and confusion CSVs");
    eval->add_option("--out", s.eval_out, "Report JSON; CSVs go beside it unless --csv/--confusion are given");
    eval->add_option("--csv", s.eval_csv, "Accuracy CSV path");
    eval->add_option("--confusion", s.eval_confusion, "Confusion CSV path");
    eval->add_option("--in", s.eval_in, "Evaluate on this dataset instead of regenerating per seed")
        ->check(CLI::ExistingFile);
    eval->add_option("--methods", s.eval_methods, "Subset of rbf_svm ck_svm mlp mdcm");
    eval->add_option("--seeds", s.eval_seeds, "Run seeds, each driving data generation, split and training (default 1 2 3 4 5)");
    eval->add_flag("--no-grid", s.eval_no_grid, "Use default kernel parameters instead of grid search");
    eval->add_option("--format", s.eval_format, "Console format: text, json or csv")
        ->check(CLI::IsMember({"text", "json", "csv"}));

    auto* predict = app.add_subcommand("predict", "Classify every sample of a dataset");
    predict->add_option("--model", s.predict_model, "Model file")->required()->check(CLI::ExistingFile);
    predict->add_option("--in", s.predict_in, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
    predict->add_option("--out", s.predict_out, "Predictions JSONL {index,label,truth} (default stdout)");

    auto* rep = app.add_subcommand(
        "replay",
        "Run a timestamped frame stream through the live pipeline. Frame log lines are "
        "{\"t\":ms,\"shape\":[rows,cols],\"data\":[...]}; a raw dataset file is also accepted and played "
        "back to back. Command log lines are {\"t\",\"intent\",\"linear_mps\",\"angular_rps\"}.");
    rep->add_option("--model", s.replay_model, "Model file")->required()->check(CLI::ExistingFile);
    rep->add_option("--log", s.replay_log, "Frame log or raw dataset")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", s.replay_out, "Command log JSONL (default stdout)");

    auto* serve = app.add_subcommand(
        "serve", "Stream service: raw newline-delimited JSON over TCP, or WebSocket/HTTP on the same port");
    serve->add_option("--model", s.serve_model, "Initial SVM model (optional; sessions can capture and train)")
        ->check(CLI::ExistingFile);
    serve->add_option("--address", s.serve_address, "Listen address");
    serve->add_option("--port", s.serve_port, "Listen port (0 picks a free port)");
    serve->add_option("--patterns", s.serve_patterns, "Patterns JSON served at /patterns.json")
        ->check(CLI::ExistingFile);
    serve->add_option("--ui-dir", s.serve_ui_dir, "Static files served over HTTP");

    for (auto* sub : {simgen, feat, train, eval, predict})
        sub->footer(formats);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        if (simgen->parsed())
            return do_simgen(g, s, out);
        if (feat->parsed())
            return do_featurize(g, s, out);
        if (train->parsed())
            return do_train(g, s, out);
        if (eval->parsed())
            return do_eval(g, s, out);
        if (predict->parsed())
            return do_predict(g, s, out);
        if (rep->parsed())
            return do_replay(g, s, out);
        if (serve->parsed())
            return do_serve(g, s, out);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace cyltouch
