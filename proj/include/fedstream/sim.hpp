#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedstream/config.hpp"
#include "fedstream/core.hpp"
#include "fedstream/io.hpp"
#include "fedstream/local_node.hpp"
#include "fedstream/messages.hpp"
#include "fedstream/rng.hpp"
#include "fedstream/server.hpp"

namespace fedstream {

struct StreamEvent {
    long iteration = 0;
    DeviceId device = 0;
    Instance instance;
};

struct SynthData {
    std::vector<std::vector<Instance>> streams; // per device, ordered by seq
    std::vector<Instance> test;                 // offset-free, fully labeled
};

/// Deterministic synthetic streams: per-device Gaussian mixtures with a
/// per-device mean offset, labels hidden independently at the configured rate.
inline SynthData synth_generate(const ScenarioConfig& cfg) {
    SynthData data;
    data.streams.resize(cfg.devices);

    auto sigma_at = [&](int c, int j) {
        const auto& s = cfg.class_sigma[c];
        return s.size() == 1 ? s[0] : s[j];
    };

    for (int d = 0; d < cfg.devices; ++d) {
        const auto& spec = cfg.device_specs[d];
        Rng rng(derive_seed(cfg.seed, seed_tag::stream, static_cast<std::uint64_t>(d)));
        auto& stream = data.streams[d];
        for (long t = 1; t <= cfg.iterations; ++t) {
            if (!spec.active_at(t)) continue;
            const double u = rng.uniform();
            int c = 0;
            double acc = 0.0;
            for (int k = 0; k < cfg.classes; ++k) {
                acc += spec.priors[k];
                if (u < acc) {
                    c = k;
                    break;
                }
                c = k;
            }
            Instance inst;
            inst.device = d;
            inst.seq = t;
            inst.features.resize(cfg.dim);
            for (int j = 0; j < cfg.dim; ++j)
                inst.features[j] = cfg.class_means[c][j] + spec.offset[j] + sigma_at(c, j) * rng.normal();
            if (rng.uniform() < spec.labeled_fraction) inst.label = c;
            stream.push_back(std::move(inst));
        }
    }

    Rng rng(derive_seed(cfg.seed, seed_tag::test_set));
    data.test.reserve(cfg.test_size);
    for (int i = 0; i < cfg.test_size; ++i) {
        const double u = rng.uniform();
        int c = 0;
        double acc = 0.0;
        for (int k = 0; k < cfg.classes; ++k) {
            acc += cfg.priors[k];
            if (u < acc) {
                c = k;
                break;
            }
            c = k;
        }
        Instance inst;
        inst.device = -1;
        inst.seq = i;
        inst.features.resize(cfg.dim);
        for (int j = 0; j < cfg.dim; ++j)
            inst.features[j] = cfg.class_means[c][j] + sigma_at(c, j) * rng.normal();
        inst.label = c;
        data.test.push_back(std::move(inst));
    }
    return data;
}

/// Flip every labeled instance on the poisoned devices; unlabeled rows are
/// untouched. Binary tasks only.
inline void inject_label_inversion(std::vector<std::vector<Instance>>& streams,
                                   std::span<const DeviceId> poison, int classes) {
    if (classes != 2) throw std::invalid_argument("inject_label_inversion: binary task required");
    for (DeviceId d : poison) {
        if (d < 0 || d >= static_cast<DeviceId>(streams.size()))
            throw std::invalid_argument("inject_label_inversion: device out of range");
        for (auto& inst : streams[d])
            if (inst.label) inst.label = 1 - *inst.label;
    }
}

/// Total class-meaning inversion from iteration t onward, on every device.
inline void inject_global_drift(std::vector<std::vector<Instance>>& streams, long t, int classes) {
    if (classes != 2) throw std::invalid_argument("inject_global_drift: binary task required");
    for (auto& stream : streams)
        for (auto& inst : stream)
            if (inst.seq >= t && inst.label) inst.label = 1 - *inst.label;
}

struct RunResult {
    std::vector<MetricsRecord> metrics;
    std::vector<EventRecord> events;
    std::vector<DeviceId> final_members;
    std::vector<long> delivered; // instances ingested per device
    long first_broadcast_iteration = -1;
};

/// Scenario engine: one logical stream per iteration phase. Devices ingest
/// against the global model as of the iteration start; server traffic is
/// processed in device order afterwards, so the serial and parallel modes
/// produce identical outputs.
class Engine {
public:
    explicit Engine(ScenarioConfig cfg) : cfg_(std::move(cfg)), server_({}, 0) {
        cfg_.validate();
        if (!cfg_.data_dir.empty()) {
            const std::string dir = cfg_.data_dir.back() == '/' ? cfg_.data_dir : cfg_.data_dir + "/";
            auto rows = instances_from_csv(read_text_file(dir + "streams.csv"), cfg_.dim);
            data_.streams.resize(cfg_.devices);
            for (auto& inst : rows) {
                if (inst.device < 0 || inst.device >= cfg_.devices)
                    throw std::runtime_error("streams.csv: device id out of range");
                data_.streams[inst.device].push_back(std::move(inst));
            }
            data_.test = instances_from_csv(read_text_file(dir + "test.csv"), cfg_.dim);
            for (const auto& inst : data_.test)
                if (!inst.label) throw std::runtime_error("test.csv: unlabeled test row");
        } else {
            data_ = synth_generate(cfg_);
            if (!cfg_.poison.empty()) inject_label_inversion(data_.streams, cfg_.poison, cfg_.classes);
            if (cfg_.drift_at >= 0) inject_global_drift(data_.streams, cfg_.drift_at, cfg_.classes);
        }

        server_ = Server(ServerConfig{cfg_.max_global_models,
                                      std::min(cfg_.evaluators, cfg_.devices),
                                      std::min({cfg_.quorum, cfg_.evaluators, cfg_.devices})},
                         derive_seed(cfg_.seed, seed_tag::server));
        nodes_.reserve(cfg_.devices);
        for (int d = 0; d < cfg_.devices; ++d) {
            nodes_.emplace_back(d, cfg_.local,
                                derive_seed(cfg_.seed, seed_tag::node, static_cast<std::uint64_t>(d)));
            server_.register_device(d);
        }
    }

    const SynthData& data() const { return data_; }
    const Server& server() const { return server_; }
    const LocalNode& node(DeviceId d) const { return nodes_.at(d); }

    RunResult run() {
        RunResult result;
        result.delivered.assign(cfg_.devices, 0);
        std::vector<std::size_t> cursor(cfg_.devices, 0);
        std::vector<IngestResult> outcomes(cfg_.devices);
        std::vector<char> acted(cfg_.devices, 0);

        for (long t = 1; t <= cfg_.iterations; ++t) {
            auto ingest_device = [&](int d) {
                acted[d] = 0;
                auto& stream = data_.streams[d];
                if (cursor[d] < stream.size() && stream[cursor[d]].seq == t) {
                    outcomes[d] = nodes_[d].ingest(stream[cursor[d]]);
                    ++cursor[d];
                    ++result.delivered[d];
                    acted[d] = 1;
                }
            };
            if (cfg_.parallel && cfg_.devices > 1) {
                const int workers = std::min<int>(cfg_.devices,
                                                  std::max(2u, std::thread::hardware_concurrency()));
                std::vector<std::thread> pool;
                pool.reserve(workers);
                for (int w = 0; w < workers; ++w)
                    pool.emplace_back([&, w] {
                        for (int d = w; d < cfg_.devices; d += workers) ingest_device(d);
                    });
                for (auto& th : pool) th.join();
            } else {
                for (int d = 0; d < cfg_.devices; ++d) ingest_device(d);
            }

            for (int d = 0; d < cfg_.devices; ++d) {
                if (!acted[d]) continue;
                auto& out = outcomes[d];
                if (out.drift) {
                    std::string detail = "k_max=" + std::to_string(out.drift->change_point) +
                                         ";s_f=" + detail::format_double(out.drift->score);
                    if (out.retrain_skipped) detail += ";retrain=skipped";
                    result.events.push_back({t, d, "drift_fired", std::move(detail)});
                }
                if (out.trained)
                    result.events.push_back(
                        {t, d, "model_trained",
                         "ensemble_size=" + std::to_string(nodes_[d].ensemble().size())});
                for (auto& upload : out.uploads) {
                    result.events.push_back({t, d, "model_uploaded", "seq=" + std::to_string(upload.seq)});
                    process_upload(upload, t, result);
                }
            }

            if (t % cfg_.eval_interval == 0 || t == cfg_.iterations) evaluate(t, result);
        }

        if (server_.ensemble().empty())
            throw std::runtime_error(
                "run_scenario: no global model was formed by the final iteration; "
                "the configuration never satisfied the training gate or every DEV round aborted");
        for (const auto& member : server_.ensemble().members)
            result.final_members.push_back(member.device);
        return result;
    }

private:
    void process_upload(const ModelUpload& upload, long t, RunResult& result) {
        std::map<std::string, std::vector<TrainedModel>> cache;
        Server::Transport transport = [&](const EvaluationRequest& req)
            -> std::optional<EvaluationResponse> {
            auto it = cache.find(req.model_id);
            if (it == cache.end()) it = cache.emplace(req.model_id, deserialize_ensemble(req.blob)).first;
            const auto accuracy = nodes_[req.evaluator].evaluate_candidate(it->second);
            if (!accuracy) return std::nullopt;
            return EvaluationResponse{req.round, req.evaluator, req.model_id, *accuracy};
        };

        const auto outcome = server_.submit_model(upload, transport);
        bool changed = false;
        switch (outcome.status) {
            case SubmitStatus::MemberReplaced:
                result.events.push_back({t, upload.device, "member_replaced", ""});
                changed = true;
                break;
            case SubmitStatus::Admitted: {
                std::string detail = "evicted=";
                detail += outcome.evicted ? std::to_string(*outcome.evicted) : std::string("none");
                result.events.push_back({t, upload.device, "dev_admitted", std::move(detail)});
                changed = true;
                break;
            }
            case SubmitStatus::Rejected:
                result.events.push_back({t, upload.device, "dev_rejected", "reason=outranked"});
                break;
            case SubmitStatus::RoundAborted:
                result.events.push_back({t, upload.device, "dev_rejected", "reason=quorum"});
                break;
            case SubmitStatus::Malformed:
                result.events.push_back({t, upload.device, "dev_rejected", "reason=malformed"});
                break;
        }
        if (changed) {
            const auto broadcast = server_.make_broadcast();
            if (broadcast) {
                for (auto& node : nodes_) node.receive_broadcast(*broadcast);
                if (result.first_broadcast_iteration < 0) result.first_broadcast_iteration = t;
                std::string members;
                for (const auto& m : server_.ensemble().members) {
                    if (!members.empty()) members += '|';
                    members += std::to_string(m.device);
                }
                result.events.push_back({t, upload.device, "broadcast", "members=" + members});
            }
        }
    }

    /// Ground truth follows the active class meaning: from the drift point on,
    /// the test labels are read under the inverted mapping.
    ClassId truth_at(const Instance& inst, long t) const {
        if (cfg_.drift_at >= 0 && t >= cfg_.drift_at) return 1 - *inst.label;
        return *inst.label;
    }

    void evaluate(long t, RunResult& result) {
        const ClassId positive = 1;
        std::vector<ClassId> truths;
        truths.reserve(data_.test.size());
        for (const auto& inst : data_.test) truths.push_back(truth_at(inst, t));

        std::vector<ClassId> preds;
        preds.reserve(data_.test.size());
        if (!server_.ensemble().empty()) {
            preds.clear();
            for (const auto& inst : data_.test)
                preds.push_back(argmax_class(product_rule_predict(server_.ensemble(), inst.features)));
            auto rec = classification_metrics(preds, truths, positive);
            rec.iteration = t;
            rec.subject = "global";
            result.metrics.push_back(std::move(rec));
        }
        for (const auto& node : nodes_) {
            if (node.ensemble().empty()) continue;
            preds.clear();
            for (const auto& inst : data_.test)
                preds.push_back(argmax_class(median_rule_predict(node.ensemble(), inst.features)));
            auto rec = classification_metrics(preds, truths, positive);
            rec.iteration = t;
            rec.subject = std::to_string(node.device());
            result.metrics.push_back(std::move(rec));
        }
    }

    ScenarioConfig cfg_;
    SynthData data_;
    std::vector<LocalNode> nodes_;
    Server server_;
};

/// Run a full scenario from a resolved config.
inline RunResult run_scenario(const ScenarioConfig& cfg) { return Engine(cfg).run(); }

} // namespace fedstream
