#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedstream/core.hpp"
#include "fedstream/ensemble_rules.hpp"
#include "fedstream/messages.hpp"
#include "fedstream/rng.hpp"
#include "fedstream/stats.hpp"

namespace fedstream {

/// Paired t-test outcome: +1 if a significantly beats b, -1 for the reverse,
/// 0 otherwise. Antisymmetric by construction.
inline int paired_t_test(std::span<const double> a, std::span<const double> b, double level = 0.05) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double m = mean_of(d);
    const double sd = std::sqrt(sample_variance(d));
    if (sd == 0.0) {
        if (m == 0.0) return 0;
        return m > 0.0 ? 1 : -1; // identical nonzero differences: degenerate certainty
    }
    const double t = m / (sd / std::sqrt(static_cast<double>(n)));
    const double p = student_t_two_sided_p(t, static_cast<double>(n - 1));
    if (p < level) return m > 0.0 ? 1 : -1;
    return 0;
}

struct GlobalMember {
    DeviceId device = 0;
    std::vector<TrainedModel> models; // the device's uploaded local ensemble
    double significance = 0.0;        // S from its latest DevRound
    double mean_accuracy = 0.0;
    std::uint64_t submitted_at = 0;   // admission order, used as final tie-break
    std::string blob;
};

struct GlobalEnsemble {
    std::vector<GlobalMember> members;
    int capacity = 5; // M_g

    bool empty() const { return members.empty(); }
    std::size_t size() const { return members.size(); }

    const GlobalMember* find(DeviceId device) const {
        for (const auto& m : members)
            if (m.device == device) return &m;
        return nullptr;
    }
};

inline PosteriorVector product_rule_predict(const GlobalEnsemble& ensemble,
                                            std::span<const double> x) {
    if (ensemble.empty()) throw std::invalid_argument("product_rule_predict: empty ensemble");
    std::vector<PosteriorVector> outputs;
    outputs.reserve(ensemble.size());
    for (const auto& member : ensemble.members) {
        std::vector<PosteriorVector> locals;
        locals.reserve(member.models.size());
        for (const auto& m : member.models) locals.push_back(predict_posterior(m, x));
        outputs.push_back(median_combine(locals));
    }
    return product_combine(outputs);
}

/// One Distributed Effective Voting round: a candidate and the current members
/// are evaluated by the same randomly chosen devices, paired per evaluator.
struct DevRound {
    std::uint64_t id = 0;
    DeviceId candidate = 0;
    std::vector<DeviceId> evaluators;              // the p polled devices
    std::vector<DeviceId> responders;              // the q that answered
    std::map<std::string, std::vector<double>> accuracies; // model_id -> per-responder accuracies
};

struct ServerConfig {
    int max_global_models = 5; // M_g
    int evaluators = 5;        // p
    int quorum = 5;            // q

    void validate() const {
        if (max_global_models < 1) throw std::invalid_argument("ServerConfig: M_g >= 1 required");
        if (quorum < 1 || evaluators < quorum)
            throw std::invalid_argument("ServerConfig: 1 <= q <= p required");
    }
};

enum class SubmitStatus { MemberReplaced, Admitted, Rejected, RoundAborted, Malformed };

struct SubmitOutcome {
    SubmitStatus status = SubmitStatus::Rejected;
    std::optional<DeviceId> evicted;
    std::string detail;
};

/// Cloud authority: global product-rule ensemble plus DEV membership
/// management. Submissions are processed as a serialized event stream.
class Server {
public:
    // Evaluator transport: returns nullopt when the device cannot respond.
    using Transport = std::function<std::optional<EvaluationResponse>(const EvaluationRequest&)>;

    Server(ServerConfig config, std::uint64_t seed) : config_(config), rng_(seed) {
        config_.validate();
        ensemble_.capacity = config_.max_global_models;
    }

    void register_device(DeviceId device) { devices_.push_back(device); }
    const std::vector<DeviceId>& devices() const { return devices_; }
    const GlobalEnsemble& ensemble() const { return ensemble_; }

    SubmitOutcome submit_model(const ModelUpload& upload, const Transport& transport) {
        ++submit_counter_;
        std::vector<TrainedModel> models;
        try {
            models = deserialize_ensemble(upload.blob);
        } catch (const std::exception& e) {
            return {SubmitStatus::Malformed, std::nullopt, e.what()};
        }

        for (auto& member : ensemble_.members) {
            if (member.device == upload.device) {
                // Known device: in-place replacement, scores retained.
                member.models = std::move(models);
                member.blob = upload.blob;
                return {SubmitStatus::MemberReplaced, std::nullopt, {}};
            }
        }

        GlobalMember candidate;
        candidate.device = upload.device;
        candidate.models = std::move(models);
        candidate.submitted_at = submit_counter_;
        candidate.blob = upload.blob;
        return run_dev_round(std::move(candidate), transport);
    }

    std::optional<GlobalModelBroadcast> make_broadcast() const {
        if (ensemble_.empty()) return std::nullopt;
        GlobalModelView view;
        for (const auto& member : ensemble_.members)
            view.members.push_back({member.device, member.significance, member.mean_accuracy,
                                    member.models});
        return GlobalModelBroadcast{serialize_global(view)};
    }

private:
    SubmitOutcome run_dev_round(GlobalMember candidate, const Transport& transport) {
        DevRound round;
        round.id = submit_counter_;
        round.candidate = candidate.device;
        round.evaluators = pick_evaluators();

        std::vector<std::pair<std::string, const GlobalMember*>> entrants;
        entrants.emplace_back("candidate:" + std::to_string(candidate.device), &candidate);
        for (const auto& member : ensemble_.members)
            entrants.emplace_back("member:" + std::to_string(member.device), &member);

        const int quorum = std::min<int>(config_.quorum, static_cast<int>(round.evaluators.size()));
        for (DeviceId evaluator : round.evaluators) {
            if (static_cast<int>(round.responders.size()) >= quorum) break;
            std::vector<double> row;
            row.reserve(entrants.size());
            bool complete = true;
            for (const auto& [model_id, entrant] : entrants) {
                const auto response =
                    transport(EvaluationRequest{round.id, evaluator, model_id, entrant->blob});
                if (!response) {
                    complete = false;
                    break;
                }
                row.push_back(response->accuracy);
            }
            if (!complete) continue; // non-response, poll the next evaluator
            round.responders.push_back(evaluator);
            for (std::size_t i = 0; i < entrants.size(); ++i)
                round.accuracies[entrants[i].first].push_back(row[i]);
        }

        if (static_cast<int>(round.responders.size()) < config_.quorum &&
            static_cast<int>(round.responders.size()) < static_cast<int>(round.evaluators.size())) {
            return {SubmitStatus::RoundAborted, std::nullopt, "quorum not reached"};
        }
        if (round.responders.empty())
            return {SubmitStatus::RoundAborted, std::nullopt, "no evaluators responded"};

        // Pairwise significance indices over the round's paired vectors.
        const std::size_t count = entrants.size();
        std::vector<double> significance(count, 0.0);
        std::vector<double> means(count, 0.0);
        for (std::size_t i = 0; i < count; ++i)
            means[i] = mean_of(round.accuracies[entrants[i].first]);
        if (round.responders.size() >= 2) {
            for (std::size_t i = 0; i < count; ++i) {
                for (std::size_t j = i + 1; j < count; ++j) {
                    const int t = paired_t_test(round.accuracies[entrants[i].first],
                                                round.accuracies[entrants[j].first]);
                    significance[i] += t;
                    significance[j] -= t;
                }
            }
        }

        std::vector<std::size_t> ranking(count);
        for (std::size_t i = 0; i < count; ++i) ranking[i] = i;
        std::sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
            if (significance[a] != significance[b]) return significance[a] > significance[b];
            if (means[a] != means[b]) return means[a] > means[b];
            return entrants[a].second->submitted_at < entrants[b].second->submitted_at;
        });

        const std::size_t keep = std::min<std::size_t>(count, ensemble_.capacity);
        bool candidate_kept = false;
        std::optional<DeviceId> evicted;
        std::vector<GlobalMember> next;
        next.reserve(keep);
        for (std::size_t r = 0; r < count; ++r) {
            const std::size_t i = ranking[r];
            if (r < keep) {
                GlobalMember kept = *entrants[i].second;
                kept.significance = significance[i];
                kept.mean_accuracy = means[i];
                if (i == 0) candidate_kept = true;
                next.push_back(std::move(kept));
            } else if (i != 0) {
                evicted = entrants[i].second->device;
            }
        }

        if (!candidate_kept)
            return {SubmitStatus::Rejected, std::nullopt, "outranked"};

        std::sort(next.begin(), next.end(),
                  [](const GlobalMember& a, const GlobalMember& b) {
                      return a.submitted_at < b.submitted_at;
                  });
        ensemble_.members = std::move(next);
        SubmitOutcome outcome{SubmitStatus::Admitted, evicted, {}};
        return outcome;
    }

    std::vector<DeviceId> pick_evaluators() {
        // Uniform draw of p distinct devices (partial Fisher-Yates).
        std::vector<DeviceId> pool = devices_;
        const std::size_t want = std::min<std::size_t>(config_.evaluators, pool.size());
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng_.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(want);
        return pool;
    }

    ServerConfig config_;
    GlobalEnsemble ensemble_;
    std::vector<DeviceId> devices_;
    Rng rng_;
    std::uint64_t submit_counter_ = 0;
};

} // namespace fedstream
