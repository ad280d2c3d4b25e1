#pragma once

#include <cassert>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedstream/core.hpp"
#include "fedstream/drift.hpp"
#include "fedstream/ensemble_rules.hpp"
#include "fedstream/learners.hpp"
#include "fedstream/messages.hpp"
#include "fedstream/rng.hpp"

namespace fedstream {

struct LocalConfig {
    int delta = 100;
    double alpha = 0.05;
    double gamma = 0.9;          // transduction confidence threshold
    int max_local_models = 5;    // M_l
    int min_labeled = 200;       // L, defaults to 2*delta
    int classes = 2;
    LearnerSpec learner;
    bool drift_gating = true;

    DriftConfig drift() const { return DriftConfig{delta, alpha, drift_gating}; }

    void validate() const {
        if (delta < 1) throw std::invalid_argument("LocalConfig: delta >= 1 required");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("LocalConfig: alpha in (0,1) required");
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("LocalConfig: gamma in (0,1) required");
        if (max_local_models < 1) throw std::invalid_argument("LocalConfig: max_local_models >= 1 required");
        if (classes < 2) throw std::invalid_argument("LocalConfig: classes >= 2 required");
        if (min_labeled < classes) throw std::invalid_argument("LocalConfig: min_labeled >= classes required");
        learner.validate();
    }
};

/// FIFO list of at most M_l base models combined by the median rule.
struct LocalEnsemble {
    std::vector<TrainedModel> models; // front is oldest
    int capacity = 5;

    bool empty() const { return models.empty(); }
    std::size_t size() const { return models.size(); }

    void push(TrainedModel model) {
        if (static_cast<int>(models.size()) >= capacity) models.erase(models.begin());
        models.push_back(std::move(model));
    }
};

inline PosteriorVector median_rule_predict(const LocalEnsemble& ensemble, std::span<const double> x) {
    if (ensemble.empty()) throw std::invalid_argument("median_rule_predict: empty ensemble");
    std::vector<PosteriorVector> outputs;
    outputs.reserve(ensemble.size());
    for (const auto& m : ensemble.models) outputs.push_back(predict_posterior(m, x));
    return median_combine(outputs);
}

/// Confidence of the local model: the renormalized median posterior of the
/// predicted class, clamped away from {0,1} before it enters the drift window.
inline double ensemble_confidence(const LocalEnsemble& ensemble, std::span<const double> x) {
    const auto posterior = median_rule_predict(ensemble, x);
    return clamp_confidence(posterior[argmax_class(posterior)]);
}

/// Accept the global model's prediction as a pseudo-label when its confidence
/// reaches gamma ("equal to or greater than").
inline std::optional<ClassId> transduce(std::span<const double> x, const GlobalModelView& global,
                                        double gamma) {
    if (global.empty()) throw std::invalid_argument("transduce: empty global model");
    const auto posterior = global.predict(x);
    const ClassId predicted = argmax_class(posterior);
    if (posterior[predicted] >= gamma) return predicted;
    return std::nullopt;
}

/// True iff every class has at least ceil(L / 2C) labeled examples.
inline bool training_gate(std::span<const int> labeled_counts, int min_labeled, int classes) {
    if (static_cast<int>(labeled_counts.size()) != classes)
        throw std::invalid_argument("training_gate: counts/classes mismatch");
    const int per_class = (min_labeled + 2 * classes - 1) / (2 * classes);
    for (int count : labeled_counts) {
        if (count < 0) throw std::invalid_argument("training_gate: negative count");
        if (count < per_class) return false;
    }
    return true;
}

struct DriftFireInfo {
    int change_point = 0;
    double score = 0.0;
};

struct IngestResult {
    std::vector<ModelUpload> uploads;
    std::optional<DriftFireInfo> drift;
    std::optional<ClassId> pseudo_label;
    bool trained = false;
    bool retrain_skipped = false; // drift fired but the window lacked labeled data
};

/// Per-device state machine: transduction, training gate, median-rule
/// ensemble, drift-triggered retraining, model upload.
class LocalNode {
public:
    LocalNode(DeviceId device, LocalConfig config, std::uint64_t seed)
        : device_(device),
          config_(config),
          ensemble_{{}, config.max_local_models},
          window_(config.drift().window_capacity(), config.classes),
          rng_(seed) {
        config_.validate();
    }

    DeviceId device() const { return device_; }
    const LocalConfig& config() const { return config_; }
    const LocalEnsemble& ensemble() const { return ensemble_; }
    const DriftWindow& window() const { return window_; }
    bool has_global() const { return global_.has_value(); }
    const GlobalModelView& global_model() const { return *global_; }

    void receive_broadcast(const GlobalModelBroadcast& broadcast) {
        global_ = deserialize_global(broadcast.blob);
    }

    IngestResult ingest(Instance instance) {
        if (instance.device != device_)
            throw std::logic_error("LocalNode: instance belongs to another device");
        IngestResult result;

        if (!instance.label && global_) {
            const auto pseudo = transduce(instance.features, *global_, config_.gamma);
            if (pseudo) {
                assert(global_->predict(instance.features)[*pseudo] >= config_.gamma);
                instance.label = *pseudo;
                result.pseudo_label = *pseudo;
            }
        }

        if (!ensemble_.empty()) {
            const double confidence = ensemble_confidence(ensemble_, instance.features);
            const std::int64_t seq = instance.seq;
            const auto decision =
                observe(window_, std::move(instance), confidence, rng_, config_.drift());
            if (decision.fired) {
                result.drift = DriftFireInfo{*decision.change_point, *decision.score};
                adapt_to_drift(result, seq);
            }
        } else {
            const std::int64_t seq = instance.seq;
            window_.push(std::move(instance), 0.5); // no model yet, neutral confidence
            if (training_gate(window_.labeled_counts(), config_.min_labeled, config_.classes)) {
                train_from_window(result);
                if (result.trained) result.uploads.push_back(make_upload(seq));
            }
        }
        return result;
    }

    /// Ensemble retraining: fit a new base model on the labeled data still in
    /// the window, push it (evicting the oldest at capacity), then
    /// reinitialize the window. A gate failure skips the fit but still resets.
    void adapt_to_drift(IngestResult& result, std::int64_t seq) {
        if (training_gate(window_.labeled_counts(), config_.min_labeled, config_.classes)) {
            train_from_window(result);
        } else {
            result.retrain_skipped = true;
        }
        window_.clear();
        if (result.trained) result.uploads.push_back(make_upload(seq));
    }

    /// Plain accuracy of a candidate ensemble on the labeled instances
    /// currently held; nullopt (non-response) when no labeled data exists.
    std::optional<double> evaluate_candidate(std::span<const TrainedModel> models) const {
        const auto labeled = window_.labeled_instances();
        if (labeled.empty()) return std::nullopt;
        LocalEnsemble candidate{{models.begin(), models.end()},
                                static_cast<int>(models.size())};
        long hits = 0;
        for (const auto& inst : labeled) {
            const auto posterior = median_rule_predict(candidate, inst.features);
            if (argmax_class(posterior) == *inst.label) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(labeled.size());
    }

private:
    void train_from_window(IngestResult& result) {
        const auto labeled = window_.labeled_instances();
        auto model = train(config_.learner, labeled, rng_.next_u64());
        if (model.classes != config_.classes)
            throw std::runtime_error("LocalNode: trained model class count mismatch");
        ensemble_.push(std::move(model));
        result.trained = true;
    }

    ModelUpload make_upload(std::int64_t seq) const {
        return ModelUpload{device_, serialize_ensemble(ensemble_.models), seq};
    }

    DeviceId device_;
    LocalConfig config_;
    LocalEnsemble ensemble_;
    DriftWindow window_;
    std::optional<GlobalModelView> global_;
    Rng rng_;
};

} // namespace fedstream
