#pragma once

// Shared helpers for the test binaries.

#include <cmath>
#include <numeric>
#include <vector>

#include "hsr/autodiff.hpp"
#include "hsr/common.hpp"

namespace hsr::testsupport {

/// Finite-difference gradient check that skips coordinates sitting on a
/// non-smooth point (e.g. a ReLU kink): the central difference is computed at
/// two epsilons and a coordinate only counts when both agree, i.e. when the
/// numeric derivative is trustworthy. Returns the max relative error over the
/// counted coordinates.
template <class Fn>
double smooth_grad_err(Fn&& fn, const std::vector<ad::Ptr<double>>& inputs,
                       size_t max_per_tensor, uint64_t sample_seed, double eps = 1e-4) {
    for (auto& in : inputs) in->zero_grad();
    auto out = fn(inputs);
    ad::backward(out);
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        in->ensure_grad();
        analytic.push_back(in->g);
    }

    double f0 = out->v[0];
    auto eval_at = [&](const ad::Ptr<double>& in, size_t idx, double e) {
        const double saved = in->v[idx];
        in->v[idx] = saved + e;
        double f = fn(inputs)->v[0];
        in->v[idx] = saved;
        return f;
    };

    Rng rng(sample_seed);
    double max_err = 0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& in = inputs[t];
        if (!in->requires_grad) continue;
        std::vector<size_t> indices(in->numel());
        std::iota(indices.begin(), indices.end(), size_t(0));
        if (max_per_tensor < indices.size()) {
            rng.shuffle(indices.begin(), indices.end());
            indices.resize(max_per_tensor);
        }
        for (size_t idx : indices) {
            double fp = eval_at(in, idx, eps), fm = eval_at(in, idx, -eps);
            double fwd = (fp - f0) / eps, bwd = (f0 - fm) / eps;
            double central = (fp - fm) / (2 * eps);
            // the spread between one-sided slopes bounds how far the central
            // difference can sit from the true derivative (curvature, or a
            // kink inside [-eps, eps]); discount it from the discrepancy
            double uncertainty = std::abs(fwd - bwd);
            double a = analytic[t][idx];
            double denom = std::max({std::abs(a), std::abs(central), 1e-8});
            double err = (std::abs(a - central) - uncertainty) / denom;
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace hsr::testsupport
