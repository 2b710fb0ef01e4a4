#pragma once

// Live intent loop: a sliding window of frames is classified every hop, the
// latest predictions sit in a fixed-length buffer, and a motion command is
// issued only when the whole buffer agrees (otherwise neutral).

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyltouch/core.hpp"
#include "cyltouch/dataset_io.hpp"
#include "cyltouch/featurizer.hpp"
#include "cyltouch/svm.hpp"

namespace cyltouch {

struct PipelineConfig {
    double window_seconds = 1.0;
    double hop_ms = 100.0;
    std::size_t buffer_len = 7;
    double angular_speed_rps = 0.15;
    double speed_increment_mps = 0.01;
    double max_speed_mps = 0.15;
    double sample_rate_hz = 45.0;

    std::size_t window_frames() const { return frames_per_window(window_seconds, sample_rate_hz); }

    void validate() const
    {
        if (!(window_seconds > 0.0) || !(hop_ms > 0.0) || !(angular_speed_rps > 0.0) ||
            !(speed_increment_mps > 0.0) || !(max_speed_mps > 0.0) || !(sample_rate_hz > 0.0))
            throw std::invalid_argument("pipeline timings, speeds and sample rate must be positive");
        if (buffer_len < 1)
            throw std::invalid_argument("pipeline buffer_len must be at least 1");
        if (speed_increment_mps > max_speed_mps)
            throw std::invalid_argument("speed increment exceeds the maximum speed");
        if (window_frames() < 1)
            throw std::invalid_argument("pipeline window holds no frames");
    }
};

inline json to_json(const PipelineConfig& c)
{
    return {{"window_seconds", c.window_seconds},       {"hop_ms", c.hop_ms},
            {"buffer_len", c.buffer_len},               {"angular_speed_rps", c.angular_speed_rps},
            {"speed_increment_mps", c.speed_increment_mps}, {"max_speed_mps", c.max_speed_mps},
            {"sample_rate_hz", c.sample_rate_hz}};
}

inline PipelineConfig pipeline_config_from_json(const json& j)
{
    try {
        PipelineConfig c;
        c.window_seconds = j.value("window_seconds", c.window_seconds);
        c.hop_ms = j.value("hop_ms", c.hop_ms);
        c.buffer_len = j.value("buffer_len", c.buffer_len);
        c.angular_speed_rps = j.value("angular_speed_rps", c.angular_speed_rps);
        c.speed_increment_mps = j.value("speed_increment_mps", c.speed_increment_mps);
        c.max_speed_mps = j.value("max_speed_mps", c.max_speed_mps);
        c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed pipeline config: ") + e.what());
    }
}

struct MotionCommand {
    double linear_mps = 0.0;
    double angular_rps = 0.0; ///< positive turns left
    IntentLabel source_intent = IntentLabel::neutral;
    double t = 0.0;           ///< stream time in ms

    friend bool operator==(const MotionCommand&, const MotionCommand&) = default;
};

inline json to_json(const MotionCommand& c)
{
    return {{"t", c.t}, {"intent", to_string(c.source_intent)}, {"linear_mps", c.linear_mps},
            {"angular_rps", c.angular_rps}};
}

inline MotionCommand motion_command_from_json(const json& j)
{
    return {j.at("linear_mps").get<double>(), j.at("angular_rps").get<double>(),
            label_from_string(j.at("intent").get<std::string>()), j.at("t").get<double>()};
}

/// What happened at one hop boundary.
struct HopEvent {
    double t = 0.0;
    IntentLabel prediction = IntentLabel::neutral;
    std::vector<IntentLabel> buffer;      ///< oldest first
    std::optional<MotionCommand> command; ///< set once the buffer is full
};

/// Any callable IntentLabel(const TactileWindow&).
using WindowClassifier = std::function<IntentLabel(const TactileWindow&)>;

inline WindowClassifier svm_classifier(const SvmModel& model, FeaturizerConfig fcfg = {})
{
    return [&model, fcfg](const TactileWindow& w) { return predict_label(model, featurize(w, fcfg)); };
}

class IntentPipeline {
public:
    explicit IntentPipeline(PipelineConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    const PipelineConfig& config() const noexcept { return cfg_; }
    double linear_mps() const noexcept { return linear_; }
    const std::deque<TactileFrame>& frames() const noexcept { return ring_; }
    const std::deque<IntentLabel>& buffer() const noexcept { return buffer_; }

    void reset()
    {
        ring_.clear();
        buffer_.clear();
        linear_ = 0.0;
        first_t_.reset();
        next_hop_index_ = 0;
        last_t_.reset();
        shape_.reset();
    }

    /// Velocity update for one issued intent.
    MotionCommand apply_intent(IntentLabel intent, double t = 0.0)
    {
        double angular = 0.0;
        switch (intent) {
        case IntentLabel::turn_left: angular = cfg_.angular_speed_rps; break;
        case IntentLabel::turn_right: angular = -cfg_.angular_speed_rps; break;
        case IntentLabel::speed_up: linear_ = std::min(linear_ + cfg_.speed_increment_mps, cfg_.max_speed_mps); break;
        case IntentLabel::stop: linear_ = 0.0; break;
        case IntentLabel::neutral: break;
        }
        return {linear_, angular, intent, t};
    }

    /// Appends a frame stamped t (ms). Hop boundaries sit at first_t + window,
    /// then every hop_ms; a boundary is crossed by the first frame at or past
    /// it. Returns the hop's outcome when a boundary is crossed with a full
    /// window, else nothing.
    std::optional<HopEvent> push_frame(const TactileFrame& frame, double t, const WindowClassifier& classify)
    {
        if (!std::isfinite(t))
            throw std::invalid_argument("frame timestamp must be finite");
        if (last_t_ && t < *last_t_)
            throw std::invalid_argument("frame timestamps must not decrease (" + std::to_string(t) + " after " +
                                        std::to_string(*last_t_) + ")");
        if (frame.values.size() != frame.shape.cells())
            throw std::invalid_argument("frame values do not match its shape");
        if (shape_ && frame.shape != *shape_)
            throw std::invalid_argument("frame shape " + to_string(frame.shape) + " differs from stream shape " +
                                        to_string(*shape_));
        shape_ = frame.shape;
        last_t_ = t;
        if (!first_t_)
            first_t_ = t;

        ring_.push_back(frame);
        while (ring_.size() > cfg_.window_frames())
            ring_.pop_front();

        if (t < hop_boundary(next_hop_index_))
            return std::nullopt;
        // Boundaries skipped by a gap in the stream collapse into this hop.
        const double elapsed = (t - hop_boundary(0)) / cfg_.hop_ms;
        next_hop_index_ = std::max(next_hop_index_ + 1, static_cast<std::size_t>(elapsed) + 1);
        while (next_hop_index_ > 1 && hop_boundary(next_hop_index_ - 1) > t)
            --next_hop_index_;
        while (hop_boundary(next_hop_index_) <= t)
            ++next_hop_index_;
        if (ring_.size() < cfg_.window_frames())
            return std::nullopt;

        TactileWindow w;
        w.sample_rate_hz = cfg_.sample_rate_hz;
        w.frames.assign(ring_.begin(), ring_.end());
        HopEvent ev;
        ev.t = t;
        ev.prediction = classify(w);
        buffer_.push_back(ev.prediction);
        while (buffer_.size() > cfg_.buffer_len)
            buffer_.pop_front();
        ev.buffer.assign(buffer_.begin(), buffer_.end());
        if (buffer_.size() == cfg_.buffer_len) {
            const bool unanimous = std::all_of(buffer_.begin(), buffer_.end(),
                                               [&](IntentLabel l) { return l == buffer_.front(); });
            ev.command = apply_intent(unanimous ? buffer_.front() : IntentLabel::neutral, t);
        }
        return ev;
    }

private:
    double hop_boundary(std::size_t index) const
    {
        return *first_t_ + cfg_.window_seconds * 1000.0 + static_cast<double>(index) * cfg_.hop_ms;
    }

    PipelineConfig cfg_;
    std::deque<TactileFrame> ring_;
    std::deque<IntentLabel> buffer_;
    double linear_ = 0.0;
    std::optional<double> first_t_;
    std::size_t next_hop_index_ = 0;
    std::optional<double> last_t_;
    std::optional<GridShape> shape_;
};

// ---------------------------------------------------------------------------
// Frame streams and replay
// ---------------------------------------------------------------------------

struct TimedFrame {
    double t = 0.0; ///< ms
    TactileFrame frame;
};

/// Concatenates the dataset's raw windows back to back at the given rate,
/// starting at t = 0.
inline std::vector<TimedFrame> stream_from_dataset(const LabeledDataset& ds, double sample_rate_hz)
{
    if (ds.kind != DatasetKind::raw)
        throw std::invalid_argument("a frame stream needs a raw dataset");
    std::vector<TimedFrame> out;
    std::size_t i = 0;
    for (const auto& item : ds.items)
        for (const auto& f : std::get<TactileWindow>(item.payload).frames)
            out.push_back({static_cast<double>(i++) * 1000.0 / sample_rate_hz, f});
    return out;
}

/// Frame log: one JSON object per line, {"t": ms, "shape": [rows, cols], "data": [row-major values]}.
inline void write_frame_log(std::ostream& os, std::span<const TimedFrame> frames)
{
    for (const auto& f : frames)
        os << json{{"t", f.t}, {"shape", {f.frame.shape.rows, f.frame.shape.cols}}, {"data", f.frame.values}}.dump()
           << '\n';
}

inline std::vector<TimedFrame> read_frame_log(std::istream& is)
{
    std::vector<TimedFrame> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = json::parse(line);
            const auto dims = j.at("shape").get<std::vector<std::size_t>>();
            if (dims.size() != 2)
                throw FormatError("shape must be [rows, cols]");
            const GridShape shape{dims[0], dims[1]};
            check_shape(shape);
            auto values = j.at("data").get<std::vector<double>>();
            if (values.size() != shape.cells())
                throw FormatError("data has " + std::to_string(values.size()) + " values, shape needs " +
                                  std::to_string(shape.cells()));
            out.push_back({j.at("t").get<double>(), TactileFrame(shape, std::move(values))});
        } catch (const json::exception& e) {
            throw FormatError("frame log line " + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("frame log line " + std::to_string(lineno) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw FormatError("frame log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Reads either a frame log or a raw dataset file (whose windows are laid
/// end to end at the dataset's sample rate).
inline std::vector<TimedFrame> load_frame_stream(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open frame stream '" + path + "'");
    std::string first;
    std::getline(is, first);
    is.clear();
    is.seekg(0);
    bool is_dataset = false;
    try {
        const auto j = json::parse(first);
        is_dataset = j.is_object() && j.value("format", "") == kDatasetFormat;
    } catch (const json::exception&) {
    }
    try {
        if (is_dataset) {
            const auto ds = read_dataset(is);
            return stream_from_dataset(ds, ds.meta.value("sample_rate_hz", 45.0));
        }
        return read_frame_log(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

/// Feeds the stream through a fresh pipeline and collects every command.
inline std::vector<MotionCommand> replay(std::span<const TimedFrame> stream, const WindowClassifier& classify,
                                         const PipelineConfig& cfg = {})
{
    IntentPipeline pipe(cfg);
    std::vector<MotionCommand> log;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (i > 0 && stream[i].t < stream[i - 1].t)
            throw std::invalid_argument("stream timestamps decrease at frame " + std::to_string(i));
        if (auto ev = pipe.push_frame(stream[i].frame, stream[i].t, classify); ev && ev->command)
            log.push_back(*ev->command);
    }
    return log;
}

inline void write_command_log(std::ostream& os, std::span<const MotionCommand> log)
{
    for (const auto& c : log)
        os << to_json(c).dump() << '\n';
}

inline std::string command_log_to_string(std::span<const MotionCommand> log)
{
    std::ostringstream os;
    write_command_log(os, log);
    return os.str();
}

} // namespace cyltouch
