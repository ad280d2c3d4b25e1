#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedstream/core.hpp"

namespace fedstream {

struct EventRecord {
    long iteration = 0;
    DeviceId device = 0;
    std::string type;   // drift_fired, model_trained, model_uploaded, dev_admitted,
                        // dev_rejected, member_replaced, broadcast
    std::string detail; // semicolon-separated key=value pairs
};

namespace detail {

inline std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string format_feature(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

} // namespace detail

inline std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
    std::string out = "iteration,subject,balanced_accuracy,sensitivity,specificity\n";
    for (const auto& r : records) {
        out += std::to_string(r.iteration);
        out += ',';
        out += r.subject;
        out += ',';
        out += detail::format_metric(r.balanced_accuracy);
        out += ',';
        out += detail::format_metric(r.sensitivity);
        out += ',';
        out += detail::format_metric(r.specificity);
        out += '\n';
    }
    return out;
}

inline std::string events_to_csv(const std::vector<EventRecord>& events) {
    std::string out = "iteration,device,event_type,detail\n";
    for (const auto& e : events) {
        out += std::to_string(e.iteration);
        out += ',';
        out += std::to_string(e.device);
        out += ',';
        out += e.type;
        out += ',';
        out += e.detail;
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Dataset interchange: header device_id,seq,f1..fd,label with an empty label
/// field for unlabeled rows. Features print with 17 significant digits so a
/// materialize-then-run pipeline reproduces the direct run exactly.
inline std::string instances_to_csv(const std::vector<Instance>& rows, int dim) {
    std::string out = "device_id,seq";
    for (int j = 1; j <= dim; ++j) {
        out += ",f";
        out += std::to_string(j);
    }
    out += ",label\n";
    for (const auto& inst : rows) {
        out += std::to_string(inst.device);
        out += ',';
        out += std::to_string(inst.seq);
        for (double v : inst.features) {
            out += ',';
            out += detail::format_feature(v);
        }
        out += ',';
        if (inst.label) out += std::to_string(*inst.label);
        out += '\n';
    }
    return out;
}

inline std::vector<Instance> instances_from_csv(const std::string& text, int expected_dim) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("dataset: empty file");
    std::vector<Instance> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != expected_dim + 3)
            throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(expected_dim + 3) + " fields");
        Instance inst;
        try {
            inst.device = std::stoi(fields[0]);
            inst.seq = std::stol(fields[1]);
            inst.features.resize(expected_dim);
            for (int j = 0; j < expected_dim; ++j) inst.features[j] = std::stod(fields[2 + j]);
            const std::string& label = fields[expected_dim + 2];
            if (!label.empty()) inst.label = std::stoi(label);
        } catch (const std::exception&) {
            throw std::runtime_error("dataset line " + std::to_string(line_no) + ": malformed value");
        }
        rows.push_back(std::move(inst));
    }
    return rows;
}

} // namespace fedstream
