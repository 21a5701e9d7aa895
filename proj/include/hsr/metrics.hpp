#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hsr/common.hpp"

namespace hsr {

// ---------------------------------------------------------------------------
// reconstruction metrics
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_length(size_t a, size_t b) {
    if (a != b)
        throw ShapeMismatch("arrays of length " + std::to_string(a) + " vs " + std::to_string(b));
    if (a == 0) throw ShapeMismatch("empty arrays");
}
}  // namespace detail

/// (1/N) sum |pred-gt| / max(gt, 1e-8)
inline double mrae(std::span<const float> pred, std::span<const float> gt, double eps = 1e-8) {
    detail::check_same_length(pred.size(), gt.size());
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(double(pred[i]) - double(gt[i])) / std::max(double(gt[i]), eps);
    return acc / double(pred.size());
}

/// Root outside the mean: sqrt((1/N) sum (pred-gt)^2).
inline double rmse(std::span<const float> pred, std::span<const float> gt) {
    detail::check_same_length(pred.size(), gt.size());
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = double(pred[i]) - double(gt[i]);
        acc += d * d;
    }
    return std::sqrt(acc / double(pred.size()));
}

/// (1/N) sum |pred-gt| — the value the root-inside-the-sum reading of the
/// squared-error formula collapses to; reported alongside rmse.
inline double mae(std::span<const float> pred, std::span<const float> gt) {
    detail::check_same_length(pred.size(), gt.size());
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(double(pred[i]) - double(gt[i]));
    return acc / double(pred.size());
}

/// 10 log10(R^2 / MSE) in dB; +infinity when pred == gt.
inline double psnr(std::span<const float> pred, std::span<const float> gt, double data_range = 1.0) {
    detail::check_same_length(pred.size(), gt.size());
    if (data_range <= 0) throw ShapeMismatch("data range must be positive");
    double mse = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = double(pred[i]) - double(gt[i]);
        mse += d * d;
    }
    mse /= double(pred.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

/// Per-image and aggregate reconstruction metrics. Aggregates are the mean of
/// per-image values; an all-exact image makes the aggregate PSNR infinite.
struct EvalReport {
    std::vector<double> per_image_mrae, per_image_rmse, per_image_mae, per_image_psnr;
    double mean_mrae = 0, mean_rmse = 0, mean_mae = 0, mean_psnr = 0;
    bool psnr_infinite = false;
    double data_range = 1.0;
    size_t n_images = 0;

    void add(std::span<const float> pred, std::span<const float> gt) {
        per_image_mrae.push_back(mrae(pred, gt));
        per_image_rmse.push_back(rmse(pred, gt));
        per_image_mae.push_back(mae(pred, gt));
        per_image_psnr.push_back(psnr(pred, gt, data_range));
        ++n_images;
    }

    void finalize() {
        auto mean_of = [](const std::vector<double>& v) {
            double acc = 0;
            for (double x : v) acc += x;
            return v.empty() ? 0.0 : acc / double(v.size());
        };
        mean_mrae = mean_of(per_image_mrae);
        mean_rmse = mean_of(per_image_rmse);
        mean_mae = mean_of(per_image_mae);
        psnr_infinite = false;
        for (double p : per_image_psnr)
            if (std::isinf(p)) psnr_infinite = true;
        mean_psnr = psnr_infinite ? std::numeric_limits<double>::infinity()
                                  : mean_of(per_image_psnr);
    }
};

// ---------------------------------------------------------------------------
// classification metrics
// ---------------------------------------------------------------------------

struct Confusion {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
    long long total() const { return tp + fp + tn + fn; }
};

inline Confusion confusion(std::span<const int> pred, std::span<const int> truth,
                           int positive = 1) {
    if (pred.size() != truth.size())
        throw LengthMismatch(std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " labels");
    Confusion c;
    for (size_t i = 0; i < pred.size(); ++i) {
        if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1))
            throw NonBinaryLabels("labels must be 0 or 1");
        bool p = pred[i] == positive, t = truth[i] == positive;
        if (p && t) ++c.tp;
        else if (p && !t) ++c.fp;
        else if (!p && t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// Accuracy, precision, recall, F1 as percentages. A zero denominator makes
/// the value 0 and clears the corresponding defined flag.
struct ClassMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;  // percent
    bool precision_defined = true, recall_defined = true, f1_defined = true;
};

inline ClassMetrics class_metrics(const Confusion& c) {
    if (c.total() == 0) throw EmptyConfusion("no samples counted");
    ClassMetrics m;
    m.accuracy = 100.0 * double(c.tp + c.tn) / double(c.total());
    if (c.tp + c.fp > 0) {
        m.precision = 100.0 * double(c.tp) / double(c.tp + c.fp);
    } else {
        m.precision_defined = false;
    }
    if (c.tp + c.fn > 0) {
        m.recall = 100.0 * double(c.tp) / double(c.tp + c.fn);
    } else {
        m.recall_defined = false;
    }
    if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.f1_defined = false;
    }
    return m;
}

}  // namespace hsr
