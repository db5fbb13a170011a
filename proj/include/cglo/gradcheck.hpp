#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cglo/tensor.hpp"

namespace cglo {

/// One scalar coordinate inside a NamedTensors set.
struct Coordinate {
    std::size_t tensor = 0;
    std::size_t index = 0;
};

struct CoordinateCheck {
    std::string name;
    std::size_t index = 0;
    Real analytic = 0.0;
    Real numeric = 0.0;
    Real rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<CoordinateCheck> coords;
    Real max_rel_error = 0.0;
    Real max_abs_error = 0.0;
    bool passed = true;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// coordinates whose true derivative is ~0 from dividing rounding noise by
/// zero.
inline Real relative_error(Real analytic, Real numeric, Real floor = 1e-7) {
    const Real denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Draws `count` distinct coordinates uniformly over all scalars in `params`.
inline std::vector<Coordinate> random_coordinates(const NamedTensors& params, std::size_t count, std::uint64_t seed) {
    std::vector<Coordinate> all;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].second.size(); ++i) all.push_back({t, i});
    }
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(count, all.size()));
    return all;
}

/// Compares `analytic` against central differences of `loss` at `params`.
/// An empty `coords` span checks every coordinate.
template <class LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, NamedTensors params, const Gradients& analytic,
                                  std::span<const Coordinate> coords, Real h = 1e-5, Real tol = 1e-3) {
    if (!(h > 0.0)) throw NumericError("finite_diff_check: step must be positive");

    std::vector<Coordinate> chosen(coords.begin(), coords.end());
    if (chosen.empty()) {
        for (std::size_t t = 0; t < params.size(); ++t) {
            for (std::size_t i = 0; i < params[t].second.size(); ++i) chosen.push_back({t, i});
        }
    }

    GradCheckReport report;
    for (const auto& c : chosen) {
        auto& [name, tensor] = params[c.tensor];
        const Real saved = tensor[c.index];
        tensor[c.index] = saved + h;
        const Real up = loss(static_cast<const NamedTensors&>(params));
        tensor[c.index] = saved - h;
        const Real down = loss(static_cast<const NamedTensors&>(params));
        tensor[c.index] = saved;

        CoordinateCheck cc;
        cc.name = name;
        cc.index = c.index;
        cc.numeric = (up - down) / (2.0 * h);
        cc.analytic = analytic.at(name)[c.index];
        cc.rel_error = relative_error(cc.analytic, cc.numeric);
        report.max_rel_error = std::max(report.max_rel_error, cc.rel_error);
        report.max_abs_error = std::max(report.max_abs_error, std::abs(cc.analytic - cc.numeric));
        report.coords.push_back(std::move(cc));
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace cglo
