#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedstream/core.hpp"
#include "fedstream/rng.hpp"
#include "fedstream/stats.hpp"

namespace fedstream {

// Change detection on the stream of ensemble confidences: the window's
// pre/post-split halves are fitted as beta distributions and a CUSUM of
// log-likelihood ratios flags distribution shifts in the negative direction.

constexpr double kConfidenceClampLo = 1e-6;
constexpr double kConfidenceClampHi = 1.0 - 1e-6;

inline double clamp_confidence(double c) {
    return c < kConfidenceClampLo ? kConfidenceClampLo
                                  : (c > kConfidenceClampHi ? kConfidenceClampHi : c);
}

struct BetaParams {
    double a = 1.0;
    double b = 1.0;
};

struct DriftDecision {
    bool fired = false;
    std::optional<int> change_point; // 1-based split index k_max within the window
    std::optional<double> score;     // s_f
};

struct DriftConfig {
    int delta = 100;
    double alpha = 0.05;
    bool gating = true; // run the scan with probability e^{-2 confidence}

    double threshold() const { return -std::log(alpha); } // T_h
    int window_capacity() const { return 20 * delta; }    // N_max
};

/// Method-of-moments beta fit; nullopt when degenerate (near-zero variance or
/// non-positive common factor), in which case the caller skips the split.
inline std::optional<BetaParams> estimate_beta(std::span<const double> confidences) {
    if (confidences.size() < 2) throw std::invalid_argument("estimate_beta: need at least 2 samples");
    const double m = mean_of(confidences);
    const double v = sample_variance(confidences);
    if (v < 1e-9) return std::nullopt;
    const double t = m * (1.0 - m) / v - 1.0;
    if (t <= 0.0) return std::nullopt;
    return BetaParams{m * t, (1.0 - m) * t};
}

inline double beta_log_pdf(double confidence, const BetaParams& p) {
    return (p.a - 1.0) * std::log(confidence) + (p.b - 1.0) * std::log(1.0 - confidence) -
           log_beta_fn(p.a, p.b);
}

/// Sliding history of (instance, confidence). Evicts the oldest entry at
/// capacity and keeps per-class counts of its labeled instances in sync.
class DriftWindow {
public:
    struct Entry {
        Instance instance;
        double confidence;
        double log_conf;     // cached for the scan
        double log_comp;     // log(1 - confidence)
    };

    DriftWindow(int capacity, int classes)
        : capacity_(capacity), labeled_counts_(classes, 0) {
        if (capacity < 1 || classes < 2)
            throw std::invalid_argument("DriftWindow: capacity >= 1 and classes >= 2 required");
    }

    void push(Instance instance, double confidence) {
        if (static_cast<int>(entries_.size()) >= capacity_) {
            if (entries_.front().instance.label) --labeled_counts_[*entries_.front().instance.label];
            entries_.pop_front();
        }
        const double c = clamp_confidence(confidence);
        if (instance.label) {
            if (*instance.label < 0 || *instance.label >= static_cast<int>(labeled_counts_.size()))
                throw std::invalid_argument("DriftWindow: label out of range");
            ++labeled_counts_[*instance.label];
        }
        entries_.push_back(Entry{std::move(instance), c, std::log(c), std::log(1.0 - c)});
    }

    void clear() {
        entries_.clear();
        std::fill(labeled_counts_.begin(), labeled_counts_.end(), 0);
    }

    int size() const { return static_cast<int>(entries_.size()); }
    int capacity() const { return capacity_; }
    const std::deque<Entry>& entries() const { return entries_; }
    const std::vector<int>& labeled_counts() const { return labeled_counts_; }

    std::vector<Instance> labeled_instances() const {
        std::vector<Instance> out;
        for (const auto& e : entries_)
            if (e.instance.label) out.push_back(e.instance);
        return out;
    }

private:
    std::deque<Entry> entries_;
    int capacity_;
    std::vector<int> labeled_counts_;
};

struct ScanResult {
    double score = 0.0;
    std::optional<int> change_point;
};

/// Scan every split k in [delta, N-delta]: when the post-split mean has
/// dropped by the sensitivity factor, accumulate the log-likelihood ratio of
/// the post-split confidences under the two fitted betas. Prefix sums make
/// each split O(1).
inline ScanResult cusum_scan(const DriftWindow& window, int delta, double alpha) {
    ScanResult result;
    const int n = window.size();
    if (n < 2 * delta) return result;

    std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0), l1(n + 1, 0.0), l2(n + 1, 0.0);
    {
        int i = 0;
        for (const auto& e : window.entries()) {
            s1[i + 1] = s1[i] + e.confidence;
            s2[i + 1] = s2[i] + e.confidence * e.confidence;
            l1[i + 1] = l1[i] + e.log_conf;
            l2[i + 1] = l2[i] + e.log_comp;
            ++i;
        }
    }

    auto fit_range = [&](int lo, int hi) -> std::optional<BetaParams> { // [lo, hi), size >= 2
        const double cnt = hi - lo;
        const double m = (s1[hi] - s1[lo]) / cnt;
        const double v = (s2[hi] - s2[lo] - cnt * m * m) / (cnt - 1.0);
        if (v < 1e-9) return std::nullopt;
        const double t = m * (1.0 - m) / v - 1.0;
        if (t <= 0.0) return std::nullopt;
        return BetaParams{m * t, (1.0 - m) * t};
    };

    for (int k = delta; k <= n - delta; ++k) {
        const double m_before = s1[k] / k;
        const double m_after = (s1[n] - s1[k]) / (n - k);
        if (m_after > (1.0 - alpha) * m_before) continue;
        const auto before = fit_range(0, k);
        if (!before) continue;
        const auto after = fit_range(k, n);
        if (!after) continue;
        const double n_after = n - k;
        const double sum_log = l1[n] - l1[k];
        const double sum_comp = l2[n] - l2[k];
        const double s_k = (after->a - before->a) * sum_log + (after->b - before->b) * sum_comp -
                           n_after * (log_beta_fn(after->a, after->b) -
                                      log_beta_fn(before->a, before->b));
        if (s_k > result.score) {
            result.score = s_k;
            result.change_point = k;
        }
    }
    return result;
}

/// Append (instance, confidence) and, gated by a probability of
/// e^{-2 confidence}, run the scan. Fires when the best split score exceeds
/// -log(alpha); the caller is responsible for reinitializing the window
/// after a fire (retraining reads the window's labeled data first).
inline DriftDecision observe(DriftWindow& window, Instance instance, double confidence, Rng& rng,
                             const DriftConfig& config) {
    window.push(std::move(instance), confidence);
    if (config.gating) {
        const double r = rng.uniform();
        if (std::exp(-2.0 * clamp_confidence(confidence)) < r) return {};
    }
    const auto scan = cusum_scan(window, config.delta, config.alpha);
    if (scan.score > config.threshold())
        return DriftDecision{true, scan.change_point, scan.score};
    return {};
}

} // namespace fedstream
