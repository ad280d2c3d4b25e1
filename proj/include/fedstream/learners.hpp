#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fedstream/core.hpp"

namespace fedstream {

enum class LearnerKind { GaussianNB, LinearLogistic, DecisionTree };

struct TreeParams {
    int max_depth = 8;
    int min_leaf = 5;
};

struct LogisticParams {
    int epochs = 200;
    double rate = 0.1;
    double l2 = 1e-4;
};

struct LearnerSpec {
    LearnerKind kind = LearnerKind::DecisionTree;
    TreeParams tree;
    LogisticParams logistic;

    void validate() const {
        if (tree.max_depth < 1 || tree.min_leaf < 1)
            throw std::invalid_argument("LearnerSpec: tree hyperparameters must be positive");
        if (logistic.epochs < 1 || logistic.rate <= 0.0 || logistic.l2 < 0.0)
            throw std::invalid_argument("LearnerSpec: logistic hyperparameters must be positive");
    }
};

inline const char* learner_kind_name(LearnerKind k) {
    switch (k) {
        case LearnerKind::GaussianNB: return "gaussian_nb";
        case LearnerKind::LinearLogistic: return "linear_logistic";
        case LearnerKind::DecisionTree: return "decision_tree";
    }
    throw std::logic_error("learner_kind_name: unknown kind");
}

inline LearnerKind learner_kind_from_name(const std::string& name) {
    if (name == "gaussian_nb") return LearnerKind::GaussianNB;
    if (name == "linear_logistic") return LearnerKind::LinearLogistic;
    if (name == "decision_tree") return LearnerKind::DecisionTree;
    throw std::invalid_argument("unknown learner kind: " + name);
}

// ---------------------------------------------------------------------------
// Learned parameter sets

struct NbModel {
    std::vector<double> log_prior;          // C (−inf for classes absent from training data)
    std::vector<std::vector<double>> mean;  // C x d
    std::vector<std::vector<double>> var;   // C x d, floored at 1e-9
};

struct LogisticModel {
    std::vector<double> feat_mean;          // d (standardization stats from the training split)
    std::vector<double> feat_scale;         // d
    std::vector<std::vector<double>> weights; // C x d
    std::vector<double> bias;               // C
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> posterior; // leaf only, Laplace smoothed
};

struct TreeModel {
    std::vector<TreeNode> nodes; // node 0 is the root
};

struct TrainedModel {
    LearnerSpec spec;
    int classes = 0;
    int dim = 0;
    std::variant<NbModel, LogisticModel, TreeModel> params;
};

namespace detail {

constexpr double kNbVarFloor = 1e-9;

inline void check_training_data(std::span<const Instance> data, int& classes, int& dim) {
    if (data.empty()) throw std::invalid_argument("train: empty training set");
    dim = static_cast<int>(data[0].features.size());
    int max_label = -1;
    int distinct = 0;
    std::vector<bool> seen;
    for (const auto& inst : data) {
        if (!inst.label) throw std::invalid_argument("train: unlabeled instance in training set");
        if (static_cast<int>(inst.features.size()) != dim)
            throw std::invalid_argument("train: feature dimension mismatch");
        const int c = *inst.label;
        if (c < 0) throw std::invalid_argument("train: negative class label");
        if (c > max_label) {
            max_label = c;
            seen.resize(max_label + 1, false);
        }
        if (!seen[c]) {
            seen[c] = true;
            ++distinct;
        }
    }
    if (distinct < 2) throw std::invalid_argument("train: need examples of at least two classes");
    classes = max_label + 1;
}

inline NbModel fit_gaussian_nb(std::span<const Instance> data, int classes, int dim) {
    NbModel m;
    m.log_prior.assign(classes, -std::numeric_limits<double>::infinity());
    m.mean.assign(classes, std::vector<double>(dim, 0.0));
    m.var.assign(classes, std::vector<double>(dim, kNbVarFloor));
    std::vector<long> counts(classes, 0);
    for (const auto& inst : data) ++counts[*inst.label];

    for (const auto& inst : data) {
        auto& mu = m.mean[*inst.label];
        for (int j = 0; j < dim; ++j) mu[j] += inst.features[j];
    }
    for (int c = 0; c < classes; ++c)
        if (counts[c] > 0)
            for (int j = 0; j < dim; ++j) m.mean[c][j] /= static_cast<double>(counts[c]);

    std::vector<std::vector<double>> ss(classes, std::vector<double>(dim, 0.0));
    for (const auto& inst : data) {
        const int c = *inst.label;
        for (int j = 0; j < dim; ++j) {
            const double dlt = inst.features[j] - m.mean[c][j];
            ss[c][j] += dlt * dlt;
        }
    }
    const double n = static_cast<double>(data.size());
    for (int c = 0; c < classes; ++c) {
        if (counts[c] == 0) continue;
        m.log_prior[c] = std::log(static_cast<double>(counts[c]) / n);
        for (int j = 0; j < dim; ++j)
            m.var[c][j] = std::max(ss[c][j] / static_cast<double>(counts[c]), kNbVarFloor);
    }
    return m;
}

inline void softmax_inplace(std::vector<double>& z) {
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - top);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

inline LogisticModel fit_logistic(std::span<const Instance> data, int classes, int dim,
                                  const LogisticParams& hp) {
    LogisticModel m;
    m.feat_mean.assign(dim, 0.0);
    m.feat_scale.assign(dim, 1.0);
    const double n = static_cast<double>(data.size());
    for (const auto& inst : data)
        for (int j = 0; j < dim; ++j) m.feat_mean[j] += inst.features[j];
    for (auto& v : m.feat_mean) v /= n;
    std::vector<double> var(dim, 0.0);
    for (const auto& inst : data)
        for (int j = 0; j < dim; ++j) {
            const double d = inst.features[j] - m.feat_mean[j];
            var[j] += d * d;
        }
    for (int j = 0; j < dim; ++j)
        m.feat_scale[j] = var[j] / n > 1e-18 ? std::sqrt(var[j] / n) : 1.0;

    std::vector<std::vector<double>> x(data.size(), std::vector<double>(dim));
    for (std::size_t i = 0; i < data.size(); ++i)
        for (int j = 0; j < dim; ++j)
            x[i][j] = (data[i].features[j] - m.feat_mean[j]) / m.feat_scale[j];

    m.weights.assign(classes, std::vector<double>(dim, 0.0));
    m.bias.assign(classes, 0.0);

    std::vector<double> logits(classes);
    std::vector<std::vector<double>> grad_w(classes, std::vector<double>(dim));
    std::vector<double> grad_b(classes);
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        for (auto& g : grad_w) std::fill(g.begin(), g.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (int c = 0; c < classes; ++c)
                logits[c] = std::inner_product(x[i].begin(), x[i].end(), m.weights[c].begin(),
                                               m.bias[c]);
            softmax_inplace(logits);
            const int y = *data[i].label;
            for (int c = 0; c < classes; ++c) {
                const double err = logits[c] - (c == y ? 1.0 : 0.0);
                grad_b[c] += err;
                for (int j = 0; j < dim; ++j) grad_w[c][j] += err * x[i][j];
            }
        }
        for (int c = 0; c < classes; ++c) {
            m.bias[c] -= hp.rate * grad_b[c] / n;
            for (int j = 0; j < dim; ++j)
                m.weights[c][j] -= hp.rate * (grad_w[c][j] / n + hp.l2 * m.weights[c][j]);
        }
    }
    return m;
}

inline double entropy_of_counts(const std::vector<long>& counts, long total) {
    if (total == 0) return 0.0;
    double h = 0.0;
    for (long c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

struct TreeBuilder {
    std::span<const Instance> data;
    int classes = 0;
    int dim = 0;
    TreeParams hp;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::uint32_t>& idx, int depth) {
        std::vector<long> counts(classes, 0);
        for (auto i : idx) ++counts[*data[i].label];
        const long total = static_cast<long>(idx.size());

        const bool pure = std::count_if(counts.begin(), counts.end(),
                                        [](long c) { return c > 0; }) <= 1;
        int best_feature = -1;
        double best_threshold = 0.0;
        double best_gain = -1.0;
        if (!pure && depth < hp.max_depth && total >= 2L * hp.min_leaf) {
            const double parent_h = entropy_of_counts(counts, total);
            std::vector<std::uint32_t> order;
            std::vector<long> left_counts(classes);
            for (int f = 0; f < dim; ++f) {
                order = idx;
                std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
                    return data[a].features[f] < data[b].features[f];
                });
                std::fill(left_counts.begin(), left_counts.end(), 0);
                for (long i = 0; i + 1 < total; ++i) {
                    ++left_counts[*data[order[i]].label];
                    const double lo = data[order[i]].features[f];
                    const double hi = data[order[i + 1]].features[f];
                    if (!(lo < hi)) continue;
                    const long nl = i + 1;
                    const long nr = total - nl;
                    if (nl < hp.min_leaf || nr < hp.min_leaf) continue;
                    double hl = entropy_of_counts(left_counts, nl);
                    std::vector<long> right_counts(classes);
                    for (int c = 0; c < classes; ++c) right_counts[c] = counts[c] - left_counts[c];
                    double hr = entropy_of_counts(right_counts, nr);
                    const double gain = parent_h - (nl * hl + nr * hr) / static_cast<double>(total);
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = f;
                        best_threshold = 0.5 * (lo + hi);
                    }
                }
            }
        }

        const int node_id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (best_feature < 0) {
            auto& leaf = nodes[node_id];
            leaf.posterior.resize(classes);
            for (int c = 0; c < classes; ++c)
                leaf.posterior[c] = (static_cast<double>(counts[c]) + 1.0) /
                                    (static_cast<double>(total) + static_cast<double>(classes));
            return node_id;
        }

        std::vector<std::uint32_t> left, right;
        left.reserve(idx.size());
        right.reserve(idx.size());
        for (auto i : idx)
            (data[i].features[best_feature] < best_threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        nodes[node_id].feature = best_feature;
        nodes[node_id].threshold = best_threshold;
        nodes[node_id].left = l;
        nodes[node_id].right = r;
        return node_id;
    }
};

inline TreeModel fit_tree(std::span<const Instance> data, int classes, int dim, const TreeParams& hp) {
    TreeBuilder builder{data, classes, dim, hp, {}};
    std::vector<std::uint32_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0u);
    builder.build(idx, 0);
    TreeModel m;
    m.nodes = std::move(builder.nodes);
    return m;
}

} // namespace detail

/// Fit a base model. Deterministic for a fixed (spec, data order, seed); the
/// seed is reserved for stochastic learners (the three shipped kinds are
/// deterministic and ignore it).
inline TrainedModel train(const LearnerSpec& spec, std::span<const Instance> data,
                          std::uint64_t seed) {
    (void)seed;
    spec.validate();
    TrainedModel model;
    model.spec = spec;
    detail::check_training_data(data, model.classes, model.dim);
    switch (spec.kind) {
        case LearnerKind::GaussianNB:
            model.params = detail::fit_gaussian_nb(data, model.classes, model.dim);
            break;
        case LearnerKind::LinearLogistic:
            model.params = detail::fit_logistic(data, model.classes, model.dim, spec.logistic);
            break;
        case LearnerKind::DecisionTree:
            model.params = detail::fit_tree(data, model.classes, model.dim, spec.tree);
            break;
    }
    return model;
}

inline PosteriorVector predict_posterior(const TrainedModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim)
        throw std::invalid_argument("predict_posterior: feature dimension mismatch");
    PosteriorVector out;
    out.probs.assign(model.classes, 0.0);

    if (const auto* nb = std::get_if<NbModel>(&model.params)) {
        std::vector<double> score(model.classes);
        for (int c = 0; c < model.classes; ++c) {
            double s = nb->log_prior[c];
            if (std::isfinite(s)) {
                for (int j = 0; j < model.dim; ++j) {
                    const double v = nb->var[c][j];
                    const double d = x[j] - nb->mean[c][j];
                    s += -0.5 * (std::log(2.0 * 3.14159265358979323846 * v) + d * d / v);
                }
            }
            score[c] = s;
        }
        detail::softmax_inplace(score);
        out.probs = std::move(score);
        return out;
    }
    if (const auto* lm = std::get_if<LogisticModel>(&model.params)) {
        std::vector<double> z(model.dim);
        for (int j = 0; j < model.dim; ++j)
            z[j] = (x[j] - lm->feat_mean[j]) / lm->feat_scale[j];
        std::vector<double> logits(model.classes);
        for (int c = 0; c < model.classes; ++c)
            logits[c] = std::inner_product(z.begin(), z.end(), lm->weights[c].begin(), lm->bias[c]);
        detail::softmax_inplace(logits);
        out.probs = std::move(logits);
        return out;
    }
    const auto& tree = std::get<TreeModel>(model.params);
    int node = 0;
    while (tree.nodes[node].feature >= 0)
        node = x[tree.nodes[node].feature] < tree.nodes[node].threshold ? tree.nodes[node].left
                                                                        : tree.nodes[node].right;
    out.probs = tree.nodes[node].posterior;
    return out;
}

/// L2-regularized mean NLL of a fitted logistic model on a labeled set,
/// using the model's own standardization.
inline double logistic_loss(const TrainedModel& model, std::span<const Instance> data) {
    const auto* lm = std::get_if<LogisticModel>(&model.params);
    if (!lm) throw std::invalid_argument("logistic_loss: not a logistic model");
    double nll = 0.0;
    for (const auto& inst : data) {
        const auto p = predict_posterior(model, inst.features);
        nll -= std::log(std::max(p[*inst.label], 1e-300));
    }
    double reg = 0.0;
    for (const auto& row : lm->weights)
        for (double w : row) reg += w * w;
    return nll / static_cast<double>(data.size()) + 0.5 * model.spec.logistic.l2 * reg;
}

// ---------------------------------------------------------------------------
// Serialization. JSON with exact double round-trip, so deserialized models
// predict bit-identically.

inline nlohmann::json model_to_json(const TrainedModel& model) {
    nlohmann::json j;
    j["kind"] = learner_kind_name(model.spec.kind);
    j["classes"] = model.classes;
    j["dim"] = model.dim;
    switch (model.spec.kind) {
        case LearnerKind::DecisionTree:
            j["hyper"] = {{"max_depth", model.spec.tree.max_depth},
                          {"min_leaf", model.spec.tree.min_leaf}};
            break;
        case LearnerKind::LinearLogistic:
            j["hyper"] = {{"epochs", model.spec.logistic.epochs},
                          {"rate", model.spec.logistic.rate},
                          {"l2", model.spec.logistic.l2}};
            break;
        case LearnerKind::GaussianNB:
            j["hyper"] = nlohmann::json::object();
            break;
    }
    if (const auto* nb = std::get_if<NbModel>(&model.params)) {
        nlohmann::json priors = nlohmann::json::array();
        for (double lp : nb->log_prior)
            priors.push_back(std::isfinite(lp) ? nlohmann::json(lp) : nlohmann::json());
        j["log_prior"] = std::move(priors);
        j["mean"] = nb->mean;
        j["var"] = nb->var;
    } else if (const auto* lm = std::get_if<LogisticModel>(&model.params)) {
        j["feat_mean"] = lm->feat_mean;
        j["feat_scale"] = lm->feat_scale;
        j["weights"] = lm->weights;
        j["bias"] = lm->bias;
    } else {
        const auto& tree = std::get<TreeModel>(model.params);
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : tree.nodes) {
            if (n.feature < 0)
                nodes.push_back({{"leaf", n.posterior}});
            else
                nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
        }
        j["nodes"] = std::move(nodes);
    }
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    TrainedModel model;
    model.spec.kind = learner_kind_from_name(j.at("kind").get<std::string>());
    model.classes = j.at("classes").get<int>();
    model.dim = j.at("dim").get<int>();
    if (model.classes < 2 || model.dim < 1)
        throw std::invalid_argument("model blob: invalid classes/dim");
    switch (model.spec.kind) {
        case LearnerKind::GaussianNB: {
            NbModel nb;
            for (const auto& lp : j.at("log_prior"))
                nb.log_prior.push_back(lp.is_null() ? -std::numeric_limits<double>::infinity()
                                                    : lp.get<double>());
            nb.mean = j.at("mean").get<std::vector<std::vector<double>>>();
            nb.var = j.at("var").get<std::vector<std::vector<double>>>();
            model.params = std::move(nb);
            break;
        }
        case LearnerKind::LinearLogistic: {
            const auto& h = j.at("hyper");
            model.spec.logistic.epochs = h.at("epochs").get<int>();
            model.spec.logistic.rate = h.at("rate").get<double>();
            model.spec.logistic.l2 = h.at("l2").get<double>();
            LogisticModel lm;
            lm.feat_mean = j.at("feat_mean").get<std::vector<double>>();
            lm.feat_scale = j.at("feat_scale").get<std::vector<double>>();
            lm.weights = j.at("weights").get<std::vector<std::vector<double>>>();
            lm.bias = j.at("bias").get<std::vector<double>>();
            model.params = std::move(lm);
            break;
        }
        case LearnerKind::DecisionTree: {
            const auto& h = j.at("hyper");
            model.spec.tree.max_depth = h.at("max_depth").get<int>();
            model.spec.tree.min_leaf = h.at("min_leaf").get<int>();
            TreeModel tree;
            for (const auto& n : j.at("nodes")) {
                TreeNode node;
                if (n.contains("leaf")) {
                    node.posterior = n.at("leaf").get<std::vector<double>>();
                } else {
                    node.feature = n.at("f").get<int>();
                    node.threshold = n.at("t").get<double>();
                    node.left = n.at("l").get<int>();
                    node.right = n.at("r").get<int>();
                }
                tree.nodes.push_back(std::move(node));
            }
            model.params = std::move(tree);
            break;
        }
    }
    return model;
}

inline std::string serialize_model(const TrainedModel& model) { return model_to_json(model).dump(); }

inline TrainedModel deserialize_model(const std::string& blob) {
    return model_from_json(nlohmann::json::parse(blob));
}

} // namespace fedstream
