#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedstream {

using ClassId = int;
using DeviceId = int;

/// One observation of a device's stream. Unlabeled instances carry an empty label.
struct Instance {
    std::vector<double> features;
    std::optional<ClassId> label;
    DeviceId device = 0;
    std::int64_t seq = 0;
};

/// Per-class probabilities; entries nonnegative and summing to 1 (within 1e-9).
struct PosteriorVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t k) const { return probs[k]; }

    bool valid(double tol = 1e-9) const {
        if (probs.size() < 2) return false;
        double sum = 0.0;
        for (double p : probs) {
            if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
            sum += p;
        }
        return std::abs(sum - 1.0) <= tol;
    }
};

struct MetricsRecord {
    long iteration = 0;
    std::string subject; // device id as decimal string, or "global"
    double balanced_accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

/// Smallest class index attaining the maximum probability.
inline ClassId argmax_class(const PosteriorVector& p) {
    if (p.probs.empty()) throw std::invalid_argument("argmax_class: empty posterior");
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.probs.size(); ++k)
        if (p.probs[k] > p.probs[best]) best = k;
    return static_cast<ClassId>(best);
}

/// One-vs-rest sensitivity/specificity against a configured positive class.
/// Throws if either denominator class is absent from the truths.
inline MetricsRecord classification_metrics(std::span<const ClassId> predictions,
                                            std::span<const ClassId> truths,
                                            ClassId positive) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("classification_metrics: length mismatch");
    if (truths.empty())
        throw std::invalid_argument("classification_metrics: empty input");
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const bool truth_pos = truths[i] == positive;
        const bool pred_pos = predictions[i] == positive;
        if (truth_pos && pred_pos) ++tp;
        else if (truth_pos) ++fn;
        else if (pred_pos) ++fp;
        else ++tn;
    }
    if (tp + fn == 0)
        throw std::invalid_argument("classification_metrics: positive class absent from truths");
    if (tn + fp == 0)
        throw std::invalid_argument("classification_metrics: negative class absent from truths");
    MetricsRecord rec;
    rec.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    rec.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    rec.balanced_accuracy = 0.5 * (rec.sensitivity + rec.specificity);
    return rec;
}

} // namespace fedstream
