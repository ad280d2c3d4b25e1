#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedstream/core.hpp"
#include "fedstream/ensemble_rules.hpp"
#include "fedstream/learners.hpp"

namespace fedstream {

// Wire-format payloads exchanged between devices and the server. Everything
// crosses the boundary serialized; raw instances never do.

struct ModelUpload {
    DeviceId device = 0;
    std::string blob; // serialized local ensemble
    std::int64_t seq = 0;
};

struct EvaluationRequest {
    std::uint64_t round = 0;
    DeviceId evaluator = 0;
    std::string model_id; // "candidate:<device>" or "member:<device>"
    std::string blob;
};

struct EvaluationResponse {
    std::uint64_t round = 0;
    DeviceId evaluator = 0;
    std::string model_id;
    double accuracy = 0.0;
};

struct GlobalModelBroadcast {
    std::string blob; // serialized global ensemble
};

inline std::string serialize_ensemble(std::span<const TrainedModel> models) {
    nlohmann::json j;
    j["models"] = nlohmann::json::array();
    for (const auto& m : models) j["models"].push_back(model_to_json(m));
    return j.dump();
}

inline std::vector<TrainedModel> deserialize_ensemble(const std::string& blob) {
    const auto j = nlohmann::json::parse(blob);
    std::vector<TrainedModel> models;
    for (const auto& mj : j.at("models")) models.push_back(model_from_json(mj));
    if (models.empty()) throw std::invalid_argument("ensemble blob: no models");
    return models;
}

/// Device-side view of the broadcast global ensemble; used only to score
/// unlabeled instances for transduction.
struct GlobalModelView {
    struct Member {
        DeviceId device = 0;
        double significance = 0.0;
        double mean_accuracy = 0.0;
        std::vector<TrainedModel> models;
    };
    std::vector<Member> members;

    bool empty() const { return members.empty(); }

    PosteriorVector predict(std::span<const double> x) const {
        std::vector<PosteriorVector> outputs;
        outputs.reserve(members.size());
        for (const auto& member : members) {
            std::vector<PosteriorVector> locals;
            locals.reserve(member.models.size());
            for (const auto& m : member.models) locals.push_back(predict_posterior(m, x));
            outputs.push_back(median_combine(locals));
        }
        return product_combine(outputs);
    }
};

inline std::string serialize_global(const GlobalModelView& view) {
    nlohmann::json j;
    j["members"] = nlohmann::json::array();
    for (const auto& member : view.members) {
        nlohmann::json mj;
        mj["device"] = member.device;
        mj["significance"] = member.significance;
        mj["mean_accuracy"] = member.mean_accuracy;
        mj["models"] = nlohmann::json::array();
        for (const auto& m : member.models) mj["models"].push_back(model_to_json(m));
        j["members"].push_back(std::move(mj));
    }
    return j.dump();
}

inline GlobalModelView deserialize_global(const std::string& blob) {
    const auto j = nlohmann::json::parse(blob);
    GlobalModelView view;
    for (const auto& mj : j.at("members")) {
        GlobalModelView::Member member;
        member.device = mj.at("device").get<DeviceId>();
        member.significance = mj.at("significance").get<double>();
        member.mean_accuracy = mj.at("mean_accuracy").get<double>();
        for (const auto& model : mj.at("models")) member.models.push_back(model_from_json(model));
        view.members.push_back(std::move(member));
    }
    if (view.members.empty()) throw std::invalid_argument("global blob: no members");
    return view;
}

} // namespace fedstream
