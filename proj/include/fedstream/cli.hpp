#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fedstream/config.hpp"
#include "fedstream/io.hpp"
#include "fedstream/sim.hpp"

namespace fedstream {

struct RunOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::optional<bool> parallel;
    std::optional<long> eval_interval;
};

namespace detail {

inline std::optional<ScenarioConfig> load_and_resolve(const RunOptions& opt, std::ostream& err) {
    ScenarioConfig cfg;
    try {
        cfg = load_scenario_config(opt.config_path);
    } catch (const ConfigError& e) {
        err << opt.config_path << ":" << e.what() << "\n";
        return std::nullopt;
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return std::nullopt;
    }
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.parallel) cfg.parallel = *opt.parallel;
    if (opt.eval_interval) cfg.eval_interval = *opt.eval_interval;
    try {
        resolve_scenario(cfg);
    } catch (const std::exception& e) {
        err << opt.config_path << ": " << e.what() << "\n";
        return std::nullopt;
    }
    return cfg;
}

inline std::string manifest_text(const ScenarioConfig& cfg, const RunOptions& opt) {
    std::string out = "# run manifest: re-running with this file as --config reproduces the outputs\n";
    out += "# source config: " + opt.config_path + "\n";
    out += "# output dir: " + opt.out_dir + "\n";
    out += serialize_scenario(cfg);
    return out;
}

} // namespace detail

/// `run`: execute a scenario, writing manifest, metrics.csv and events.log.
inline int cmd_run(const RunOptions& opt, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    const auto cfg = detail::load_and_resolve(opt, err);
    if (!cfg) return 1;
    try {
        std::filesystem::create_directories(opt.out_dir);
        write_text_file(opt.out_dir + "/manifest", detail::manifest_text(*cfg, opt));
        const auto result = run_scenario(*cfg);
        write_text_file(opt.out_dir + "/metrics.csv", metrics_to_csv(result.metrics));
        write_text_file(opt.out_dir + "/events.log", events_to_csv(result.events));
        out << "wrote " << opt.out_dir << "/metrics.csv (" << result.metrics.size()
            << " rows), events.log (" << result.events.size() << " events)\n";
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return 1;
    }
    return 0;
}

/// `gen`: materialize the synthetic streams and test set without learning.
inline int cmd_gen(const RunOptions& opt, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    const auto cfg = detail::load_and_resolve(opt, err);
    if (!cfg) return 1;
    try {
        auto data = synth_generate(*cfg);
        if (!cfg->poison.empty()) inject_label_inversion(data.streams, cfg->poison, cfg->classes);
        if (cfg->drift_at >= 0) inject_global_drift(data.streams, cfg->drift_at, cfg->classes);
        std::vector<Instance> rows;
        for (const auto& stream : data.streams)
            rows.insert(rows.end(), stream.begin(), stream.end());
        std::filesystem::create_directories(opt.out_dir);
        write_text_file(opt.out_dir + "/manifest", detail::manifest_text(*cfg, opt));
        write_text_file(opt.out_dir + "/streams.csv", instances_to_csv(rows, cfg->dim));
        write_text_file(opt.out_dir + "/test.csv", instances_to_csv(data.test, cfg->dim));
        out << "wrote " << rows.size() << " stream rows and " << data.test.size()
            << " test rows to " << opt.out_dir << "\n";
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return 1;
    }
    return 0;
}

/// `drift-replay`: feed a file of confidences (one per line) through the
/// detector with gating disabled; print one line per fire.
inline int cmd_drift_replay(const std::string& path, int delta, double alpha,
                            std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::ifstream in(path);
    if (!in) {
        err << "cannot open confidence log: " << path << "\n";
        return 1;
    }
    DriftConfig config{delta, alpha, false};
    DriftWindow window(config.window_capacity(), 2);
    Rng rng(0);
    std::string line;
    long line_no = 0;
    long index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string value = detail::trim(line);
        if (value.empty()) continue;
        double confidence = 0.0;
        try {
            std::size_t pos = 0;
            confidence = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            err << path << ":" << line_no << ": malformed confidence '" << value << "'\n";
            return 1;
        }
        if (!(confidence > 0.0 && confidence < 1.0)) {
            err << path << ":" << line_no << ": confidence must be in (0,1)\n";
            return 1;
        }
        ++index;
        Instance inst;
        inst.seq = index;
        const auto decision = observe(window, std::move(inst), confidence, rng, config);
        if (decision.fired) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "fire index=%ld change_point=%d score=%.6f\n", index,
                          *decision.change_point, *decision.score);
            out << buf;
            window.clear();
        }
    }
    return 0;
}

} // namespace fedstream
