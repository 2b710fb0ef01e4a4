#pragma once

// Loads any of the three model file formats and exposes it as a classifier
// of raw windows (featurizing first where the model expects feature maps).

#include <memory>
#include <string>
#include <variant>

#include "cyltouch/featurizer.hpp"
#include "cyltouch/mdcm.hpp"
#include "cyltouch/mlp.hpp"
#include "cyltouch/pipeline.hpp"
#include "cyltouch/svm.hpp"

namespace cyltouch {

using AnyModel = std::variant<SvmModel, MlpModel, MdcmModel>;

inline AnyModel any_model_from_json(const json& j)
{
    const auto format = j.is_object() ? j.value("format", std::string{}) : std::string{};
    if (format == kModelFormat)
        return model_from_json(j);
    if (format == kMlpFormat)
        return mlp_from_json(j);
    if (format == kMdcmFormat)
        return mdcm_from_json(j);
    throw FormatError("unknown model format '" + format + "' (expected " + std::string(kModelFormat) + ", " +
                      std::string(kMlpFormat) + " or " + std::string(kMdcmFormat) + ")");
}

inline AnyModel load_any_model(const std::string& path)
{
    try {
        return any_model_from_json(load_json(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline json any_model_to_json(const AnyModel& m)
{
    return std::visit(
        [](const auto& model) -> json {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, SvmModel>)
                return model_to_json(model);
            else if constexpr (std::is_same_v<T, MlpModel>)
                return mlp_to_json(model);
            else
                return mdcm_to_json(model);
        },
        m);
}

inline GridShape model_shape(const AnyModel& m)
{
    return std::visit(
        [](const auto& model) -> GridShape {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, SvmModel>)
                return model.shape();
            else
                return model.shape;
        },
        m);
}

inline bool needs_raw_windows(const AnyModel& m) { return std::holds_alternative<MdcmModel>(m); }

/// Classifier over raw windows; the model is shared, not copied.
inline WindowClassifier window_classifier(std::shared_ptr<const AnyModel> m)
{
    return [m](const TactileWindow& w) {
        return std::visit(
            [&w](const auto& model) {
                using T = std::decay_t<decltype(model)>;
                if constexpr (std::is_same_v<T, SvmModel>)
                    return predict_label(model, featurize(w));
                else if constexpr (std::is_same_v<T, MlpModel>)
                    return predict_mlp(model, featurize(w));
                else
                    return predict_mdcm(model, w);
            },
            *m);
    };
}

/// Label for one dataset item, featurizing raw windows when needed.
inline IntentLabel classify_item(const AnyModel& m, const LabeledSample& item)
{
    if (const auto* w = std::get_if<TactileWindow>(&item.payload)) {
        if (needs_raw_windows(m))
            return predict_mdcm(std::get<MdcmModel>(m), *w);
        const auto x = featurize(*w);
        if (const auto* svm = std::get_if<SvmModel>(&m))
            return predict_label(*svm, x);
        return predict_mlp(std::get<MlpModel>(m), x);
    }
    const auto& x = std::get<FeatureMap>(item.payload);
    if (needs_raw_windows(m))
        throw std::invalid_argument("MDCM models classify raw windows, not feature maps");
    if (const auto* svm = std::get_if<SvmModel>(&m))
        return predict_label(*svm, x);
    return predict_mlp(std::get<MlpModel>(m), x);
}

} // namespace cyltouch
