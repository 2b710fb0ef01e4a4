#pragma once

// One streaming client session: live classification through the intent
// pipeline, capture of labelled samples, background retraining with an
// atomic model swap, and a simulated unicycle robot pose.
//
// Client to server messages (one JSON object each):
//   {"type":"frame","t":ms,"grid":[[...]]}   t optional, grid rows x cols
//   {"type":"mode","mode":"live"|"capture"}
//   {"type":"end_sample","label":"stop"}
//   {"type":"train"}  {"type":"export"}  {"type":"reset_pose"}
// Server to client: intent, command, pose, progress, dataset, error.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cyltouch/core.hpp"
#include "cyltouch/dataset_io.hpp"
#include "cyltouch/featurizer.hpp"
#include "cyltouch/kernels.hpp"
#include "cyltouch/pipeline.hpp"
#include "cyltouch/svm.hpp"

namespace cyltouch {

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

/// Exact unicycle motion over dt seconds at constant (v, w).
inline Pose integrate_unicycle(Pose p, double v, double w, double dt)
{
    if (std::abs(w) < 1e-12) {
        p.x += v * std::cos(p.heading) * dt;
        p.y += v * std::sin(p.heading) * dt;
        return p;
    }
    const double h1 = p.heading + w * dt;
    p.x += v / w * (std::sin(h1) - std::sin(p.heading));
    p.y -= v / w * (std::cos(h1) - std::cos(p.heading));
    p.heading = h1;
    return p;
}

enum class SessionMode { live, capture };

struct SessionConfig {
    PipelineConfig pipeline{};
    GridShape shape{};
    TrainerConfig trainer{};
    KernelSpec kernel = KernelSpec::defaults(KernelKind::cylindrical);
    std::size_t min_samples_per_class = 2;
};

using ModelPtr = std::shared_ptr<const SvmModel>;

class StreamSession {
public:
    using Sink = std::function<void(const json&)>;

    StreamSession(std::string id, ModelPtr model, SessionConfig cfg, Sink sink)
        : id_(std::move(id)), cfg_(std::move(cfg)), sink_(std::move(sink)), model_(std::move(model)),
          pipeline_(cfg_.pipeline), start_(std::chrono::steady_clock::now())
    {
        check_shape(cfg_.shape);
        if (model_ && model_->shape() != cfg_.shape)
            throw std::invalid_argument("model grid " + to_string(model_->shape()) + " does not match session grid " +
                                        to_string(cfg_.shape));
    }

    StreamSession(const StreamSession&) = delete;
    StreamSession& operator=(const StreamSession&) = delete;

    ~StreamSession() { wait_for_training(); }

    const std::string& id() const noexcept { return id_; }

    /// Parses one line; malformed input produces an error message only.
    void handle_line(const std::string& line)
    {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos)
            return;
        json msg;
        try {
            msg = json::parse(line);
        } catch (const json::parse_error& e) {
            send_error(std::string("malformed JSON: ") + e.what());
            return;
        }
        handle_message(msg);
    }

    void handle_message(const json& msg)
    {
        try {
            if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
                throw FormatError("message must be an object with a string \"type\"");
            const auto type = msg["type"].get<std::string>();
            if (type == "frame")
                on_frame(msg);
            else if (type == "mode")
                on_mode(msg);
            else if (type == "end_sample")
                on_end_sample(msg);
            else if (type == "train")
                on_train();
            else if (type == "export")
                on_export();
            else if (type == "reset_pose")
                on_reset_pose();
            else
                throw FormatError("unknown message type '" + type + "'");
        } catch (const json::exception& e) {
            send_error(std::string("bad message: ") + e.what());
        } catch (const std::exception& e) {
            send_error(e.what());
        }
    }

    /// Blocks until a background training run (if any) has finished.
    void wait_for_training()
    {
        std::thread t;
        {
            std::lock_guard lock(train_mutex_);
            t = std::move(trainer_);
        }
        if (t.joinable())
            t.join();
    }

    ModelPtr model() const
    {
        std::lock_guard lock(state_mutex_);
        return model_;
    }

    SessionMode mode() const
    {
        std::lock_guard lock(state_mutex_);
        return mode_;
    }

    Pose pose() const
    {
        std::lock_guard lock(state_mutex_);
        return pose_;
    }

    LabeledDataset captured() const
    {
        std::lock_guard lock(state_mutex_);
        return captured_;
    }

private:
    void send(const json& msg)
    {
        std::lock_guard lock(send_mutex_);
        sink_(msg);
    }

    void send_error(const std::string& what) { send({{"type", "error"}, {"session", id_}, {"message", what}}); }

    json pose_message() const
    {
        return {{"type", "pose"}, {"x", pose_.x}, {"y", pose_.y}, {"heading", pose_.heading}};
    }

    TactileFrame parse_grid(const json& grid) const
    {
        if (!grid.is_array() || grid.size() != cfg_.shape.rows)
            throw FormatError("frame grid must have " + std::to_string(cfg_.shape.rows) + " rows");
        TactileFrame f(cfg_.shape);
        for (std::size_t i = 0; i < cfg_.shape.rows; ++i) {
            const auto& row = grid[i];
            if (!row.is_array() || row.size() != cfg_.shape.cols)
                throw FormatError("frame grid row " + std::to_string(i) + " must have " +
                                  std::to_string(cfg_.shape.cols) + " values");
            for (std::size_t j = 0; j < cfg_.shape.cols; ++j) {
                const double v = row[j].get<double>();
                if (!std::isfinite(v))
                    throw FormatError("frame values must be finite");
                f.at(i, j) = v;
            }
        }
        return f;
    }

    void on_frame(const json& msg)
    {
        const auto frame = parse_grid(msg.at("grid"));
        std::vector<json> out;
        {
            std::lock_guard lock(state_mutex_);
            const double t = msg.contains("t") ? msg.at("t").get<double>()
                                               : std::chrono::duration<double, std::milli>(
                                                     std::chrono::steady_clock::now() - start_)
                                                     .count();
            if (mode_ == SessionMode::capture) {
                capture_.push_back(frame);
                const std::size_t keep = cfg_.pipeline.window_frames();
                if (capture_.size() > keep)
                    capture_.erase(capture_.begin(), capture_.begin() + static_cast<std::ptrdiff_t>(capture_.size() - keep));
                return;
            }
            if (!model_)
                throw std::runtime_error("no model loaded; capture and train first or start with --model");
            const ModelPtr model = model_;
            const auto ev = pipeline_.push_frame(frame, t, [&model](const TactileWindow& w) {
                return predict_label(*model, featurize(w));
            });
            if (!ev)
                return;
            json buffer = json::array();
            for (auto l : ev->buffer)
                buffer.push_back(to_string(l));
            out.push_back({{"type", "intent"}, {"t", ev->t}, {"label", to_string(ev->prediction)}, {"buffer", buffer}});
            if (ev->command) {
                json cmd = to_json(*ev->command);
                cmd["type"] = "command";
                out.push_back(std::move(cmd));
                pose_ = integrate_unicycle(pose_, ev->command->linear_mps, ev->command->angular_rps,
                                           cfg_.pipeline.hop_ms / 1000.0);
                out.push_back(pose_message());
            }
        }
        for (const auto& m : out)
            send(m);
    }

    void on_mode(const json& msg)
    {
        const auto m = msg.at("mode").get<std::string>();
        std::lock_guard lock(state_mutex_);
        if (m == "live") {
            mode_ = SessionMode::live;
            pipeline_.reset();
        } else if (m == "capture") {
            mode_ = SessionMode::capture;
            capture_.clear();
        } else {
            throw FormatError("mode must be \"live\" or \"capture\"");
        }
        send({{"type", "progress"}, {"stage", "mode"}, {"mode", m}});
    }

    json counts_json() const
    {
        json counts = json::object();
        const auto c = class_counts(captured_);
        for (std::size_t i = 0; i < kNumIntents; ++i)
            counts[std::string(kIntentNames[i])] = c[i];
        return counts;
    }

    void on_end_sample(const json& msg)
    {
        const auto label = label_from_string(msg.at("label").get<std::string>());
        std::lock_guard lock(state_mutex_);
        if (mode_ != SessionMode::capture)
            throw std::runtime_error("end_sample is only valid in capture mode");
        const std::size_t need = cfg_.pipeline.window_frames();
        if (capture_.size() < need)
            throw std::runtime_error("sample has " + std::to_string(capture_.size()) + " frames, needs " +
                                     std::to_string(need));
        TactileWindow w;
        w.sample_rate_hz = cfg_.pipeline.sample_rate_hz;
        w.frames = capture_;
        capture_.clear();
        captured_.kind = DatasetKind::raw;
        captured_.items.push_back({std::move(w), label});
        send({{"type", "progress"},
              {"stage", "captured"},
              {"label", to_string(label)},
              {"total", captured_.size()},
              {"class_counts", counts_json()}});
    }

    void on_export()
    {
        std::lock_guard lock(state_mutex_);
        LabeledDataset ds = captured_;
        ds.kind = DatasetKind::raw;
        ds.meta = {{"source", "capture"}, {"session", id_}, {"sample_rate_hz", cfg_.pipeline.sample_rate_hz}};
        send({{"type", "dataset"}, {"format", "jsonl"}, {"samples", ds.size()}, {"content", dataset_to_string(ds)}});
    }

    void on_reset_pose()
    {
        std::lock_guard lock(state_mutex_);
        pose_ = {};
        send(pose_message());
    }

    void on_train()
    {
        LabeledDataset snapshot;
        {
            std::lock_guard lock(state_mutex_);
            const auto counts = class_counts(captured_);
            if (classes_present(counts) < 2)
                throw std::runtime_error("training needs captured samples from at least 2 classes");
            for (std::size_t i = 0; i < kNumIntents; ++i)
                if (counts[i] > 0 && counts[i] < cfg_.min_samples_per_class)
                    throw std::runtime_error("class " + std::string(kIntentNames[i]) + " has " +
                                             std::to_string(counts[i]) + " samples, needs at least " +
                                             std::to_string(cfg_.min_samples_per_class));
            snapshot = captured_;
        }
        std::lock_guard lock(train_mutex_);
        if (training_)
            throw std::runtime_error("training already in progress");
        if (trainer_.joinable())
            trainer_.join();
        training_ = true;
        trainer_ = std::thread([this, ds = std::move(snapshot)]() mutable { train_worker(std::move(ds)); });
    }

    void train_worker(LabeledDataset ds)
    {
        try {
            const auto t0 = std::chrono::steady_clock::now();
            send({{"type", "progress"}, {"stage", "featurize"}, {"samples", ds.size()}});
            const auto features = featurize_dataset(ds);
            send({{"type", "progress"}, {"stage", "train"}, {"kernel", to_json(cfg_.kernel)}});
            auto model = std::make_shared<const SvmModel>(train_multiclass(features, cfg_.kernel, cfg_.trainer));
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            {
                std::lock_guard lock(state_mutex_);
                model_ = std::move(model);
                mode_ = SessionMode::live;
                pipeline_.reset();
            }
            send({{"type", "progress"},
                  {"stage", "model_ready"},
                  {"samples", ds.size()},
                  {"seconds", secs},
                  {"mode", "live"}});
        } catch (const std::exception& e) {
            send_error(std::string("training failed: ") + e.what());
        }
        std::lock_guard lock(train_mutex_);
        training_ = false;
    }

    std::string id_;
    SessionConfig cfg_;
    Sink sink_;

    mutable std::mutex state_mutex_;
    ModelPtr model_;
    SessionMode mode_ = SessionMode::live;
    IntentPipeline pipeline_;
    Pose pose_{};
    std::vector<TactileFrame> capture_;
    LabeledDataset captured_;
    std::chrono::steady_clock::time_point start_;

    std::mutex send_mutex_;
    std::mutex train_mutex_;
    std::thread trainer_;
    bool training_ = false;
};

} // namespace cyltouch
