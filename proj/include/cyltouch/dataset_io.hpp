#pragma once

// JSON Lines dataset files.
//
//   {"format": "cyltouch-dataset", "version": 1, "meta": {...}}
//   {"label": "turn_left", "kind": "raw", "shape": [45, 11, 5], "data": [...]}
//   {"label": "stop", "kind": "featurized", "shape": [4, 11, 5], "data": [...]}
//
// `data` is flat and row-major over `shape`. Doubles are written in shortest
// round-trip form, so reading a written file reproduces it bit for bit.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "cyltouch/core.hpp"

namespace cyltouch {

inline constexpr std::string_view kDatasetFormat = "cyltouch-dataset";
inline constexpr int kDatasetVersion = 1;

inline json sample_to_json(const LabeledSample& sample)
{
    json rec;
    rec["label"] = std::string(to_string(sample.label));
    if (const auto* w = std::get_if<TactileWindow>(&sample.payload)) {
        const auto shape = w->shape();
        std::vector<double> flat;
        flat.reserve(w->size() * shape.cells());
        for (const auto& f : w->frames)
            flat.insert(flat.end(), f.values.begin(), f.values.end());
        rec["kind"] = "raw";
        rec["shape"] = {w->size(), shape.rows, shape.cols};
        rec["data"] = std::move(flat);
    } else {
        const auto& m = std::get<FeatureMap>(sample.payload);
        rec["kind"] = "featurized";
        rec["shape"] = {kNumChannels, m.shape.rows, m.shape.cols};
        rec["data"] = m.data;
    }
    return rec;
}

inline LabeledSample sample_from_json(const json& rec, double sample_rate_hz)
{
    try {
        const auto label = label_from_string(rec.at("label").get<std::string>());
        const auto kind = rec.at("kind").get<std::string>();
        const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
        auto data = rec.at("data").get<std::vector<double>>();
        if (shape.size() != 3)
            throw FormatError("shape must have 3 entries");
        const GridShape grid{shape[1], shape[2]};
        check_shape(grid);
        if (data.size() != shape[0] * grid.cells())
            throw FormatError("data has " + std::to_string(data.size()) + " values, shape needs " +
                              std::to_string(shape[0] * grid.cells()));

        if (kind == "raw") {
            TactileWindow w;
            w.sample_rate_hz = sample_rate_hz;
            w.frames.reserve(shape[0]);
            for (std::size_t t = 0; t < shape[0]; ++t) {
                auto first = data.begin() + static_cast<std::ptrdiff_t>(t * grid.cells());
                w.frames.emplace_back(grid, std::vector<double>(
                                                first, first + static_cast<std::ptrdiff_t>(grid.cells())));
            }
            return {std::move(w), label};
        }
        if (kind == "featurized") {
            if (shape[0] != kNumChannels)
                throw FormatError("featurized records need " + std::to_string(kNumChannels) +
                                  " channels");
            return {FeatureMap(grid, std::move(data)), label};
        }
        throw FormatError("unknown record kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed dataset record: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

inline void write_dataset(std::ostream& os, const LabeledDataset& ds)
{
    json header;
    header["format"] = kDatasetFormat;
    header["version"] = kDatasetVersion;
    header["kind"] = to_string(ds.kind);
    header["meta"] = ds.meta;
    os << header.dump() << '\n';
    for (const auto& item : ds.items)
        os << sample_to_json(item).dump() << '\n';
}

inline std::string dataset_to_string(const LabeledDataset& ds)
{
    std::ostringstream os;
    write_dataset(os, ds);
    return os.str();
}

inline LabeledDataset read_dataset(std::istream& is)
{
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                return true;
        }
        return false;
    };

    if (!next_line())
        throw FormatError("dataset file is empty");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("line 1: header is not JSON: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != kDatasetFormat)
        throw FormatError("line 1: missing {\"format\": \"cyltouch-dataset\"} header");
    if (header.value("version", 0) != kDatasetVersion)
        throw FormatError("line 1: unsupported dataset version");

    LabeledDataset ds;
    ds.meta = header.value("meta", json::object());
    const double rate = ds.meta.value("sample_rate_hz", 45.0);

    bool first = true;
    while (next_line()) {
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
        LabeledSample sample;
        try {
            sample = sample_from_json(rec, rate);
        } catch (const FormatError& e) {
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto kind = std::holds_alternative<TactileWindow>(sample.payload) ? DatasetKind::raw
                                                                                 : DatasetKind::featurized;
        if (first) {
            ds.kind = kind;
            first = false;
        } else if (kind != ds.kind) {
            throw FormatError("line " + std::to_string(line_no) + ": mixes raw and featurized records");
        }
        ds.items.push_back(std::move(sample));
    }
    if (first)
        ds.kind = header.value("kind", "raw") == "featurized" ? DatasetKind::featurized
                                                               : DatasetKind::raw;
    return ds;
}

inline LabeledDataset dataset_from_string(const std::string& text)
{
    std::istringstream is(text);
    return read_dataset(is);
}

inline LabeledDataset load_dataset(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open dataset file '" + path + "'");
    try {
        return read_dataset(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void save_dataset(const std::string& path, const LabeledDataset& ds)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write dataset file '" + path + "'");
    write_dataset(os, ds);
}

} // namespace cyltouch
