#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedstream/local_node.hpp"
#include "fedstream/rng.hpp"
#include "fedstream/server.hpp"

namespace fedstream {

struct ConfigError : std::runtime_error {
    ConfigError(int line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line(line) {}
    int line;
};

struct DeviceSpec {
    std::vector<double> offset; // empty until resolved
    double labeled_fraction = 0.5;
    std::vector<double> priors;
    std::vector<std::pair<long, long>> active; // inclusive iteration ranges; empty = always

    bool active_at(long t) const {
        if (active.empty()) return true;
        for (const auto& [lo, hi] : active)
            if (t >= lo && t <= hi) return true;
        return false;
    }
};

struct ScenarioConfig {
    int devices = 10;
    long iterations = 10000;
    int dim = 8;
    int classes = 2;
    std::uint64_t seed = 0;
    long eval_interval = 250;
    int test_size = 2000;
    bool parallel = false;
    std::string data_dir; // read pre-materialized streams instead of synthesizing

    LocalConfig local;            // delta, alpha, gamma, M_l, L, learner
    int max_global_models = 5;    // M_g
    int evaluators = -1;          // p, defaults to M_g
    int quorum = -1;              // q, defaults to M_g

    std::vector<std::vector<double>> class_means; // C x dim (empty = built-in defaults)
    std::vector<std::vector<double>> class_sigma; // C x (1 or dim)
    std::vector<double> priors;                   // C (empty = uniform)
    double labeled_fraction = 0.5;
    double offset_magnitude = 1.0;

    std::vector<DeviceId> poison;
    long drift_at = -1; // global class-meaning inversion iteration; < 0 disables

    std::vector<DeviceSpec> device_specs; // resolved per device
    bool min_labeled_set = false;         // L given explicitly (otherwise tracks 2*delta)
    std::map<int, DeviceSpec> device_overrides;
    std::map<int, bool> device_has_fraction, device_has_priors;

    void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(line, "expected a number, got '" + v + "'");
    }
}

inline long parse_long(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return n;
    } catch (const std::exception&) {
        throw ConfigError(line, "expected an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(line, "expected true/false, got '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& v, int line) {
    std::vector<double> out;
    std::istringstream in(v);
    std::string tok;
    while (in >> tok) out.push_back(parse_double(tok, line));
    return out;
}

inline std::vector<int> parse_int_list(const std::string& v, int line) {
    std::vector<int> out;
    std::string normalized = v;
    for (auto& c : normalized)
        if (c == ',') c = ' ';
    std::istringstream in(normalized);
    std::string tok;
    while (in >> tok) out.push_back(static_cast<int>(parse_long(tok, line)));
    return out;
}

inline std::vector<std::pair<long, long>> parse_ranges(const std::string& v, int line) {
    std::vector<std::pair<long, long>> out;
    std::istringstream in(v);
    std::string group;
    while (std::getline(in, group, ',')) {
        group = trim(group);
        if (group.empty()) continue;
        const auto dash = group.find('-', 1);
        if (dash == std::string::npos) {
            const long t = parse_long(group, line);
            out.emplace_back(t, t);
        } else {
            const long lo = parse_long(trim(group.substr(0, dash)), line);
            const long hi = parse_long(trim(group.substr(dash + 1)), line);
            if (hi < lo) throw ConfigError(line, "range '" + group + "' is reversed");
            out.emplace_back(lo, hi);
        }
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_double_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ' ';
        out += format_double(xs[i]);
    }
    return out;
}

} // namespace detail

inline void ScenarioConfig::validate() const {
    if (devices < 1) throw std::invalid_argument("config: devices >= 1 required");
    if (iterations < 1) throw std::invalid_argument("config: iterations >= 1 required");
    if (dim < 1) throw std::invalid_argument("config: dim >= 1 required");
    if (classes < 2) throw std::invalid_argument("config: classes >= 2 required");
    if (eval_interval < 1) throw std::invalid_argument("config: eval_interval >= 1 required");
    if (test_size < 1) throw std::invalid_argument("config: test_size >= 1 required");
    local.validate();
    if (max_global_models < 1) throw std::invalid_argument("config: max_global_models >= 1 required");
    if (quorum > evaluators) throw std::invalid_argument("config: quorum <= evaluators required");
    if (static_cast<int>(class_means.size()) != classes || static_cast<int>(class_sigma.size()) != classes)
        throw std::invalid_argument("config: class means/sigma must cover every class");
    for (const auto& m : class_means)
        if (static_cast<int>(m.size()) != dim)
            throw std::invalid_argument("config: class mean dimension mismatch");
    for (const auto& s : class_sigma) {
        if (s.size() != 1 && static_cast<int>(s.size()) != dim)
            throw std::invalid_argument("config: class sigma must be scalar or one value per dimension");
        for (double v : s)
            if (!(v > 0.0)) throw std::invalid_argument("config: sigma must be positive");
    }
    if (static_cast<int>(priors.size()) != classes)
        throw std::invalid_argument("config: priors must cover every class");
    double prior_sum = 0.0;
    for (double p : priors) {
        if (p < 0.0) throw std::invalid_argument("config: negative prior");
        prior_sum += p;
    }
    if (std::abs(prior_sum - 1.0) > 1e-9) throw std::invalid_argument("config: priors must sum to 1");
    if (static_cast<int>(device_specs.size()) != devices)
        throw std::invalid_argument("config: unresolved device specs");
    for (const auto& spec : device_specs) {
        if (static_cast<int>(spec.offset.size()) != dim)
            throw std::invalid_argument("config: device offset dimension mismatch");
        if (spec.labeled_fraction < 0.0 || spec.labeled_fraction > 1.0)
            throw std::invalid_argument("config: labeled_fraction must be in [0,1]");
        if (static_cast<int>(spec.priors.size()) != classes)
            throw std::invalid_argument("config: device priors must cover every class");
    }
    for (DeviceId p : poison)
        if (p < 0 || p >= devices) throw std::invalid_argument("config: poison device out of range");
    if (!poison.empty() && classes != 2)
        throw std::invalid_argument("config: label inversion requires a binary task");
    if (drift_at >= 0 && classes != 2)
        throw std::invalid_argument("config: global drift inversion requires a binary task");
    if (drift_at >= iterations)
        throw std::invalid_argument("config: drift_at must be before the last iteration");
    if (local.classes != classes)
        throw std::invalid_argument("config: local classes out of sync");
}

/// Fill every derived default: L = 2*delta, p = q = M_g, built-in class
/// geometry, and per-device specs (offsets drawn from the master seed when
/// not given explicitly).
inline void resolve_scenario(ScenarioConfig& cfg) {
    if (!cfg.min_labeled_set) cfg.local.min_labeled = 2 * cfg.local.delta;
    if (cfg.evaluators < 0) cfg.evaluators = cfg.max_global_models;
    if (cfg.quorum < 0) cfg.quorum = cfg.max_global_models;
    cfg.local.classes = cfg.classes;

    if (cfg.class_means.empty()) {
        // Default geometry: classes spread along the diagonal so that two
        // adjacent classes with unit sigma have Bayes accuracy 0.95.
        cfg.class_means.assign(cfg.classes, std::vector<double>(cfg.dim, 0.0));
        const double step = 2.0 * 1.6448536269514722 / std::sqrt(static_cast<double>(cfg.dim));
        for (int c = 1; c < cfg.classes; ++c)
            for (int j = 0; j < cfg.dim; ++j) cfg.class_means[c][j] = c * step;
    }
    if (cfg.class_sigma.empty()) cfg.class_sigma.assign(cfg.classes, {1.0});
    if (cfg.priors.empty())
        cfg.priors.assign(cfg.classes, 1.0 / static_cast<double>(cfg.classes));

    cfg.device_specs.assign(cfg.devices, DeviceSpec{});
    for (int d = 0; d < cfg.devices; ++d) {
        auto& spec = cfg.device_specs[d];
        spec.labeled_fraction = cfg.labeled_fraction;
        spec.priors = cfg.priors;
        const auto it = cfg.device_overrides.find(d);
        if (it != cfg.device_overrides.end()) {
            const auto& ov = it->second;
            if (!ov.offset.empty()) spec.offset = ov.offset;
            if (cfg.device_has_fraction.count(d)) spec.labeled_fraction = ov.labeled_fraction;
            if (cfg.device_has_priors.count(d)) spec.priors = ov.priors;
            spec.active = ov.active;
        }
        if (spec.offset.empty()) {
            spec.offset.assign(cfg.dim, 0.0);
            if (cfg.offset_magnitude > 0.0) {
                Rng rng(derive_seed(cfg.seed, seed_tag::offset, static_cast<std::uint64_t>(d)));
                double norm = 0.0;
                for (int j = 0; j < cfg.dim; ++j) {
                    spec.offset[j] = rng.normal();
                    norm += spec.offset[j] * spec.offset[j];
                }
                norm = std::sqrt(norm);
                if (norm > 0.0)
                    for (auto& v : spec.offset) v *= cfg.offset_magnitude / norm;
            }
        }
    }
    cfg.validate();
}

inline ScenarioConfig parse_scenario_config(const std::string& text) {
    ScenarioConfig cfg;
    using namespace detail;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        raw = trim(raw);
        if (raw.empty()) continue;
        const auto eq = raw.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
        const std::string key = trim(raw.substr(0, eq));
        const std::string value = trim(raw.substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "empty key");

        if (key == "devices") cfg.devices = static_cast<int>(parse_long(value, line));
        else if (key == "iterations") cfg.iterations = parse_long(value, line);
        else if (key == "dim") cfg.dim = static_cast<int>(parse_long(value, line));
        else if (key == "classes") cfg.classes = static_cast<int>(parse_long(value, line));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(value, line));
        else if (key == "eval_interval") cfg.eval_interval = parse_long(value, line);
        else if (key == "test_size") cfg.test_size = static_cast<int>(parse_long(value, line));
        else if (key == "parallel") cfg.parallel = parse_bool(value, line);
        else if (key == "data_dir") cfg.data_dir = value;
        else if (key == "learner") {
            try {
                cfg.local.learner.kind = learner_kind_from_name(value);
            } catch (const std::exception& e) {
                throw ConfigError(line, e.what());
            }
        } else if (key == "tree.max_depth") cfg.local.learner.tree.max_depth = static_cast<int>(parse_long(value, line));
        else if (key == "tree.min_leaf") cfg.local.learner.tree.min_leaf = static_cast<int>(parse_long(value, line));
        else if (key == "logistic.epochs") cfg.local.learner.logistic.epochs = static_cast<int>(parse_long(value, line));
        else if (key == "logistic.rate") cfg.local.learner.logistic.rate = parse_double(value, line);
        else if (key == "logistic.l2") cfg.local.learner.logistic.l2 = parse_double(value, line);
        else if (key == "delta") cfg.local.delta = static_cast<int>(parse_long(value, line));
        else if (key == "alpha") cfg.local.alpha = parse_double(value, line);
        else if (key == "gamma") cfg.local.gamma = parse_double(value, line);
        else if (key == "max_local_models") cfg.local.max_local_models = static_cast<int>(parse_long(value, line));
        else if (key == "min_labeled") {
            cfg.local.min_labeled = static_cast<int>(parse_long(value, line));
            cfg.min_labeled_set = true;
        } else if (key == "drift_gating") cfg.local.drift_gating = parse_bool(value, line);
        else if (key == "max_global_models") cfg.max_global_models = static_cast<int>(parse_long(value, line));
        else if (key == "evaluators") cfg.evaluators = static_cast<int>(parse_long(value, line));
        else if (key == "quorum") cfg.quorum = static_cast<int>(parse_long(value, line));
        else if (key == "labeled_fraction") cfg.labeled_fraction = parse_double(value, line);
        else if (key == "offset_magnitude") cfg.offset_magnitude = parse_double(value, line);
        else if (key == "priors") cfg.priors = parse_double_list(value, line);
        else if (key == "poison") {
            cfg.poison.clear();
            for (int id : parse_int_list(value, line)) cfg.poison.push_back(id);
        } else if (key == "drift_at") cfg.drift_at = parse_long(value, line);
        else if (key.rfind("class", 0) == 0 && key.find('.') != std::string::npos) {
            const auto dot = key.find('.');
            const std::string index_part = key.substr(5, dot - 5);
            const std::string field = key.substr(dot + 1);
            int c = -1;
            try {
                c = std::stoi(index_part);
            } catch (const std::exception&) {
                throw ConfigError(line, "unknown key '" + key + "'");
            }
            if (c < 0 || c >= 64) throw ConfigError(line, "class index out of range in '" + key + "'");
            if (field == "mean") {
                if (static_cast<int>(cfg.class_means.size()) <= c) cfg.class_means.resize(c + 1);
                cfg.class_means[c] = parse_double_list(value, line);
            } else if (field == "sigma") {
                if (static_cast<int>(cfg.class_sigma.size()) <= c) cfg.class_sigma.resize(c + 1);
                cfg.class_sigma[c] = parse_double_list(value, line);
            } else {
                throw ConfigError(line, "unknown key '" + key + "'");
            }
        } else if (key.rfind("device", 0) == 0 && key.find('.') != std::string::npos) {
            const auto dot = key.find('.');
            const std::string index_part = key.substr(6, dot - 6);
            const std::string field = key.substr(dot + 1);
            int d = -1;
            try {
                d = std::stoi(index_part);
            } catch (const std::exception&) {
                throw ConfigError(line, "unknown key '" + key + "'");
            }
            if (d < 0) throw ConfigError(line, "device index out of range in '" + key + "'");
            auto& ov = cfg.device_overrides[d];
            if (field == "offset") ov.offset = parse_double_list(value, line);
            else if (field == "labeled_fraction") {
                ov.labeled_fraction = parse_double(value, line);
                cfg.device_has_fraction[d] = true;
            } else if (field == "priors") {
                ov.priors = parse_double_list(value, line);
                cfg.device_has_priors[d] = true;
            } else if (field == "active") ov.active = parse_ranges(value, line);
            else throw ConfigError(line, "unknown key '" + key + "'");
        } else {
            throw ConfigError(line, "unknown key '" + key + "'");
        }
    }
    return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_config(buf.str());
}

/// Canonical echo of a resolved config; parsing it back reproduces the run.
inline std::string serialize_scenario(const ScenarioConfig& cfg) {
    using namespace detail;
    std::ostringstream out;
    out << "devices = " << cfg.devices << '\n';
    out << "iterations = " << cfg.iterations << '\n';
    out << "dim = " << cfg.dim << '\n';
    out << "classes = " << cfg.classes << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "eval_interval = " << cfg.eval_interval << '\n';
    out << "test_size = " << cfg.test_size << '\n';
    out << "parallel = " << (cfg.parallel ? "true" : "false") << '\n';
    if (!cfg.data_dir.empty()) out << "data_dir = " << cfg.data_dir << '\n';
    out << "learner = " << learner_kind_name(cfg.local.learner.kind) << '\n';
    out << "tree.max_depth = " << cfg.local.learner.tree.max_depth << '\n';
    out << "tree.min_leaf = " << cfg.local.learner.tree.min_leaf << '\n';
    out << "logistic.epochs = " << cfg.local.learner.logistic.epochs << '\n';
    out << "logistic.rate = " << format_double(cfg.local.learner.logistic.rate) << '\n';
    out << "logistic.l2 = " << format_double(cfg.local.learner.logistic.l2) << '\n';
    out << "delta = " << cfg.local.delta << '\n';
    out << "alpha = " << format_double(cfg.local.alpha) << '\n';
    out << "gamma = " << format_double(cfg.local.gamma) << '\n';
    out << "max_local_models = " << cfg.local.max_local_models << '\n';
    out << "min_labeled = " << cfg.local.min_labeled << '\n';
    out << "drift_gating = " << (cfg.local.drift_gating ? "true" : "false") << '\n';
    out << "max_global_models = " << cfg.max_global_models << '\n';
    out << "evaluators = " << cfg.evaluators << '\n';
    out << "quorum = " << cfg.quorum << '\n';
    out << "labeled_fraction = " << format_double(cfg.labeled_fraction) << '\n';
    out << "offset_magnitude = " << format_double(cfg.offset_magnitude) << '\n';
    out << "priors = " << format_double_list(cfg.priors) << '\n';
    for (std::size_t c = 0; c < cfg.class_means.size(); ++c) {
        out << "class" << c << ".mean = " << format_double_list(cfg.class_means[c]) << '\n';
        out << "class" << c << ".sigma = " << format_double_list(cfg.class_sigma[c]) << '\n';
    }
    if (!cfg.poison.empty()) {
        out << "poison =";
        for (DeviceId p : cfg.poison) out << ' ' << p;
        out << '\n';
    }
    out << "drift_at = " << cfg.drift_at << '\n';
    for (std::size_t d = 0; d < cfg.device_specs.size(); ++d) {
        const auto& spec = cfg.device_specs[d];
        out << "device" << d << ".offset = " << format_double_list(spec.offset) << '\n';
        out << "device" << d << ".labeled_fraction = " << format_double(spec.labeled_fraction) << '\n';
        out << "device" << d << ".priors = " << format_double_list(spec.priors) << '\n';
        if (!spec.active.empty()) {
            out << "device" << d << ".active = ";
            for (std::size_t i = 0; i < spec.active.size(); ++i) {
                if (i) out << ',';
                out << spec.active[i].first << '-' << spec.active[i].second;
            }
            out << '\n';
        }
    }
    return out.str();
}

} // namespace fedstream
