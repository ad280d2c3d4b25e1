#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedstream/core.hpp"

namespace fedstream {

// Fixed posterior-combining rules. The median rule combines members operating
// in the same measure space (a device's base models); the product rule fuses
// members from different measure spaces (the global ensemble).

/// Per-class median of member posteriors, renormalized to a proper posterior.
/// Even member counts take the mean of the two central values. Renormalizing
/// is a positive scaling, so the argmax is unchanged.
inline PosteriorVector median_combine(std::span<const PosteriorVector> members) {
    if (members.empty()) throw std::invalid_argument("median_combine: empty ensemble");
    const std::size_t classes = members[0].size();
    for (const auto& m : members)
        if (m.size() != classes) throw std::invalid_argument("median_combine: class count mismatch");

    std::vector<double> column(members.size());
    PosteriorVector out;
    out.probs.resize(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < members.size(); ++i) column[i] = members[i][k];
        std::sort(column.begin(), column.end());
        const std::size_t n = column.size();
        out.probs[k] = (n % 2 == 1) ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
    double sum = 0.0;
    for (double v : out.probs) sum += v;
    if (sum <= 0.0) { // unreachable with smoothed learners, guarded anyway
        for (auto& v : out.probs) v = 1.0 / static_cast<double>(classes);
        return out;
    }
    for (auto& v : out.probs) v /= sum;
    return out;
}

/// Per-class product of member posteriors, computed as a log-sum with every
/// member probability floored at `floor` so one confident-but-wrong member
/// cannot annihilate a class.
inline PosteriorVector product_combine(std::span<const PosteriorVector> members, double floor = 1e-9) {
    if (members.empty()) throw std::invalid_argument("product_combine: empty ensemble");
    const std::size_t classes = members[0].size();
    for (const auto& m : members)
        if (m.size() != classes) throw std::invalid_argument("product_combine: class count mismatch");

    std::vector<double> log_sum(classes, 0.0);
    for (const auto& m : members)
        for (std::size_t k = 0; k < classes; ++k)
            log_sum[k] += std::log(std::max(m[k], floor));

    const double top = *std::max_element(log_sum.begin(), log_sum.end());
    PosteriorVector out;
    out.probs.resize(classes);
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        out.probs[k] = std::exp(log_sum[k] - top);
        sum += out.probs[k];
    }
    for (auto& v : out.probs) v /= sum;
    return out;
}

} // namespace fedstream
