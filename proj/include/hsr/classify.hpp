#pragma once

// Imbalance handling (SMOTE), random forest, second-order gradient boosting,
// and stratified k-fold cross-validation over mean spectra.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hsr/common.hpp"
#include "hsr/metrics.hpp"

namespace hsr {

struct FeatureMatrix {
    size_t rows = 0, cols = 0;
    std::vector<double> x;  // row-major
    std::vector<int> y;

    double at(size_t r, size_t c) const { return x[r * cols + c]; }
    std::vector<double> row(size_t r) const {
        return {x.begin() + long(r * cols), x.begin() + long((r + 1) * cols)};
    }

    void validate() const {
        if (x.size() != rows * cols || y.size() != rows)
            throw ShapeMismatch("feature matrix storage does not match rows x cols");
        for (double v : x)
            if (!std::isfinite(v)) throw ShapeMismatch("non-finite feature value");
        for (int l : y)
            if (l != 0 && l != 1) throw NonBinaryLabels("labels must be 0 or 1");
    }
};

/// Per-feature zero-mean unit-variance scaling with statistics taken from the
/// rows used to fit (the training fold).
struct Standardizer {
    std::vector<double> mean, stdev;

    void fit(const FeatureMatrix& m, const std::vector<size_t>& idx) {
        mean.assign(m.cols, 0.0);
        stdev.assign(m.cols, 0.0);
        if (idx.empty()) throw TooFewItems("no rows to fit standardizer");
        for (size_t r : idx)
            for (size_t c = 0; c < m.cols; ++c) mean[c] += m.at(r, c);
        for (auto& v : mean) v /= double(idx.size());
        for (size_t r : idx)
            for (size_t c = 0; c < m.cols; ++c) {
                double d = m.at(r, c) - mean[c];
                stdev[c] += d * d;
            }
        for (auto& v : stdev) {
            v = std::sqrt(v / double(idx.size()));
            if (v < 1e-12) v = 1.0;  // constant feature: leave centered only
        }
    }

    FeatureMatrix transform(const FeatureMatrix& m, const std::vector<size_t>& idx) const {
        FeatureMatrix out;
        out.rows = idx.size();
        out.cols = m.cols;
        out.x.reserve(out.rows * out.cols);
        for (size_t r : idx) {
            out.y.push_back(m.y[r]);
            for (size_t c = 0; c < m.cols; ++c)
                out.x.push_back((m.at(r, c) - mean[c]) / stdev[c]);
        }
        return out;
    }
};

/// Oversamples the minority class to the majority count. Synthetic points are
/// x + u (x_nn - x) for a uniform u and one of x's k nearest minority
/// neighbors; originals are retained untouched.
inline FeatureMatrix smote(const FeatureMatrix& m, int k, uint64_t seed) {
    m.validate();
    if (k < 1) throw InvalidConfig("smote k must be >= 1");
    size_t n1 = size_t(std::count(m.y.begin(), m.y.end(), 1));
    size_t n0 = m.rows - n1;
    if (n0 == n1) return m;
    int minority = n1 < n0 ? 1 : 0;
    size_t n_min = std::min(n0, n1), n_maj = std::max(n0, n1);
    if (n_min < 2) throw SingletonMinority("minority class has " + std::to_string(n_min) +
                                           " sample(s)");
    std::vector<size_t> min_idx;
    for (size_t r = 0; r < m.rows; ++r)
        if (m.y[r] == minority) min_idx.push_back(r);

    size_t kk = std::min(size_t(k), n_min - 1);
    // k nearest minority neighbors of each minority sample (Euclidean)
    std::vector<std::vector<size_t>> nn(n_min);
    for (size_t i = 0; i < n_min; ++i) {
        std::vector<std::pair<double, size_t>> d;
        for (size_t j = 0; j < n_min; ++j) {
            if (j == i) continue;
            double acc = 0;
            for (size_t c = 0; c < m.cols; ++c) {
                double diff = m.at(min_idx[i], c) - m.at(min_idx[j], c);
                acc += diff * diff;
            }
            d.emplace_back(acc, j);
        }
        std::sort(d.begin(), d.end());
        for (size_t j = 0; j < kk; ++j) nn[i].push_back(d[j].second);
    }

    FeatureMatrix out = m;
    Rng rng(seed);
    for (size_t s = 0; s < n_maj - n_min; ++s) {
        size_t i = rng.below(n_min);
        size_t j = nn[i][rng.below(kk)];
        double u = rng.uniform();
        for (size_t c = 0; c < m.cols; ++c) {
            double a = m.at(min_idx[i], c), b = m.at(min_idx[j], c);
            out.x.push_back(a + u * (b - a));
        }
        out.y.push_back(minority);
        ++out.rows;
    }
    return out;
}

struct Fold {
    std::vector<size_t> train, test;
};

/// Splits indices into k folds preserving per-class proportions: each class is
/// shuffled and dealt round-robin, so per-fold class counts differ by at most 1.
inline std::vector<Fold> stratified_kfold(const std::vector<int>& labels, int k, uint64_t seed) {
    if (k < 2) throw InvalidConfig("need at least 2 folds");
    for (int cls : {0, 1}) {
        long long n = std::count(labels.begin(), labels.end(), cls);
        if (n < k)
            throw ClassTooSmall("class " + std::to_string(cls) + " has " + std::to_string(n) +
                                " samples for " + std::to_string(k) + " folds");
    }
    Rng rng(seed);
    std::vector<std::vector<size_t>> test_of(static_cast<size_t>(k));
    for (int cls : {0, 1}) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        rng.shuffle(idx.begin(), idx.end());
        for (size_t i = 0; i < idx.size(); ++i) test_of[i % size_t(k)].push_back(idx[i]);
    }
    std::vector<Fold> folds(static_cast<size_t>(k));
    for (int f = 0; f < k; ++f) {
        folds[f].test = test_of[f];
        std::sort(folds[f].test.begin(), folds[f].test.end());
        for (int g = 0; g < k; ++g)
            if (g != f)
                folds[f].train.insert(folds[f].train.end(), test_of[g].begin(), test_of[g].end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

// ---------------------------------------------------------------------------
// decision trees
// ---------------------------------------------------------------------------

namespace detail {

struct TreeNode {
    int feature = -1;
    double threshold = 0;
    int left = -1, right = -1;
    double value = 0;  // majority label (forest) or leaf weight (boost)
    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double eval(const double* row) const {
        int n = 0;
        while (!nodes[n].is_leaf())
            n = row[nodes[n].feature] < nodes[n].threshold ? nodes[n].left : nodes[n].right;
        return nodes[n].value;
    }
};

}  // namespace detail

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 1;
    uint64_t seed = 0;
};

struct BoostConfig {
    int n_rounds = 100;
    double learning_rate = 0.1;
    int max_depth = 4;
    double l2_lambda = 1.0;
    double gamma_min_gain = 0.0;
    uint64_t seed = 0;
};

inline void validate_forest_config(const ForestConfig& c) {
    if (c.n_trees < 1 || c.max_depth < 1 || c.min_leaf < 1)
        throw InvalidConfig("forest counts must be >= 1");
}

inline void validate_boost_config(const BoostConfig& c) {
    if (c.n_rounds < 1 || c.max_depth < 1) throw InvalidConfig("boost counts must be >= 1");
    if (!(c.learning_rate > 0) || c.learning_rate > 1)
        throw InvalidConfig("learning_rate must be in (0, 1]");
    if (c.l2_lambda < 0 || c.gamma_min_gain < 0)
        throw InvalidConfig("regularizers must be non-negative");
}

namespace detail {

inline void check_fit_input(const FeatureMatrix& m) {
    m.validate();
    if (m.rows == 0 || m.cols == 0) throw TooFewItems("empty feature matrix");
    long long n1 = std::count(m.y.begin(), m.y.end(), 1);
    if (n1 == 0 || size_t(n1) == m.rows) throw DegenerateLabels("training labels are one class");
}

/// Grows one Gini-impurity tree over the given rows, choosing each split from
/// a fresh random subset of ceil(sqrt(cols)) features.
inline Tree grow_gini_tree(const FeatureMatrix& m, const std::vector<size_t>& rows,
                           const ForestConfig& cfg, Rng& rng) {
    const size_t n_feat = size_t(std::ceil(std::sqrt(double(m.cols))));
    Tree tree;

    auto majority = [&](const std::vector<size_t>& rs) {
        long long ones = 0;
        for (size_t r : rs) ones += m.y[r];
        long long zeros = (long long)rs.size() - ones;
        return ones > zeros ? 1.0 : 0.0;  // tie -> 0
    };

    struct Job {
        std::vector<size_t> rows;
        int depth;
        int node;
    };
    tree.nodes.emplace_back();
    std::vector<Job> stack{{rows, 0, 0}};
    while (!stack.empty()) {
        Job job = std::move(stack.back());
        stack.pop_back();
        auto& rs = job.rows;
        long long ones = 0;
        for (size_t r : rs) ones += m.y[r];
        bool pure = ones == 0 || size_t(ones) == rs.size();
        if (pure || job.depth >= cfg.max_depth || rs.size() < size_t(2 * cfg.min_leaf)) {
            tree.nodes[job.node].value = majority(rs);
            continue;
        }

        // random distinct feature subset via partial Fisher-Yates
        std::vector<size_t> feats(m.cols);
        std::iota(feats.begin(), feats.end(), size_t(0));
        for (size_t i = 0; i < n_feat; ++i)
            std::swap(feats[i], feats[i + rng.below(m.cols - i)]);
        feats.resize(n_feat);

        double best_score = std::numeric_limits<double>::infinity();
        int best_feat = -1;
        double best_thr = 0;
        std::vector<std::pair<double, int>> vals(rs.size());
        for (size_t f : feats) {
            for (size_t i = 0; i < rs.size(); ++i) vals[i] = {m.at(rs[i], f), m.y[rs[i]]};
            std::sort(vals.begin(), vals.end());
            long long l1 = 0;
            for (size_t i = 1; i < vals.size(); ++i) {
                l1 += vals[i - 1].second;
                if (vals[i].first == vals[i - 1].first) continue;
                size_t nl = i, nr = vals.size() - i;
                if (nl < size_t(cfg.min_leaf) || nr < size_t(cfg.min_leaf)) continue;
                long long r1 = ones - l1;
                auto gini = [](long long pos, size_t n) {
                    double p = double(pos) / double(n);
                    return 2.0 * p * (1.0 - p);
                };
                double score = (double(nl) * gini(l1, nl) + double(nr) * gini(r1, nr)) /
                               double(vals.size());
                if (score < best_score) {
                    best_score = score;
                    best_feat = int(f);
                    best_thr = 0.5 * (vals[i - 1].first + vals[i].first);
                }
            }
        }
        if (best_feat < 0) {
            tree.nodes[job.node].value = majority(rs);
            continue;
        }
        std::vector<size_t> lrows, rrows;
        for (size_t r : rs)
            (m.at(r, size_t(best_feat)) < best_thr ? lrows : rrows).push_back(r);
        int left = int(tree.nodes.size());
        tree.nodes.emplace_back();
        int right = int(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[job.node].feature = best_feat;
        tree.nodes[job.node].threshold = best_thr;
        tree.nodes[job.node].left = left;
        tree.nodes[job.node].right = right;
        stack.push_back({std::move(rrows), job.depth + 1, tree.nodes[job.node].right});
        stack.push_back({std::move(lrows), job.depth + 1, tree.nodes[job.node].left});
    }
    return tree;
}

/// Exact-greedy second-order tree on gradient/hessian pairs with L2 leaf
/// regularization: leaf = -G/(H+lambda), split kept only when the gain
/// 0.5[GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] exceeds gamma.
inline Tree grow_boost_tree(const FeatureMatrix& m, const std::vector<double>& grad,
                            const std::vector<double>& hess, const BoostConfig& cfg) {
    Tree tree;
    struct Job {
        std::vector<size_t> rows;
        int depth;
        int node;
    };
    std::vector<size_t> all(m.rows);
    std::iota(all.begin(), all.end(), size_t(0));
    tree.nodes.emplace_back();
    std::vector<Job> stack{{std::move(all), 0, 0}};
    const double lam = cfg.l2_lambda;
    while (!stack.empty()) {
        Job job = std::move(stack.back());
        stack.pop_back();
        auto& rs = job.rows;
        double G = 0, H = 0;
        for (size_t r : rs) {
            G += grad[r];
            H += hess[r];
        }
        auto leaf_score = [&](double g, double h) { return g * g / (h + lam); };
        double best_gain = cfg.gamma_min_gain;
        int best_feat = -1;
        double best_thr = 0;
        if (job.depth < cfg.max_depth && rs.size() >= 2) {
            std::vector<std::pair<double, size_t>> vals(rs.size());
            for (size_t f = 0; f < m.cols; ++f) {
                for (size_t i = 0; i < rs.size(); ++i) vals[i] = {m.at(rs[i], f), rs[i]};
                std::sort(vals.begin(), vals.end());
                double GL = 0, HL = 0;
                for (size_t i = 1; i < vals.size(); ++i) {
                    GL += grad[vals[i - 1].second];
                    HL += hess[vals[i - 1].second];
                    if (vals[i].first == vals[i - 1].first) continue;
                    double gain =
                        0.5 * (leaf_score(GL, HL) + leaf_score(G - GL, H - HL) - leaf_score(G, H));
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feat = int(f);
                        best_thr = 0.5 * (vals[i - 1].first + vals[i].first);
                    }
                }
            }
        }
        if (best_feat < 0) {
            tree.nodes[job.node].value = -G / (H + lam);
            continue;
        }
        std::vector<size_t> lrows, rrows;
        for (size_t r : rs)
            (m.at(r, size_t(best_feat)) < best_thr ? lrows : rrows).push_back(r);
        int left = int(tree.nodes.size());
        tree.nodes.emplace_back();
        int right = int(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[job.node].feature = best_feat;
        tree.nodes[job.node].threshold = best_thr;
        tree.nodes[job.node].left = left;
        tree.nodes[job.node].right = right;
        stack.push_back({std::move(rrows), job.depth + 1, tree.nodes[job.node].right});
        stack.push_back({std::move(lrows), job.depth + 1, tree.nodes[job.node].left});
    }
    return tree;
}

}  // namespace detail

class ForestModel {
public:
    ForestModel(const FeatureMatrix& m, const ForestConfig& cfg) : cols_(m.cols) {
        validate_forest_config(cfg);
        detail::check_fit_input(m);
        // per-tree streams drawn from a root stream: parallel-safe determinism
        // without overlap between consecutive trees' state sequences
        Rng root(cfg.seed);
        std::vector<uint64_t> tree_seed(size_t(cfg.n_trees));
        for (auto& s : tree_seed) s = root.next_u64();
        for (int t = 0; t < cfg.n_trees; ++t) {
            Rng rng(tree_seed[size_t(t)]);
            std::vector<size_t> boot(m.rows);
            for (auto& r : boot) r = rng.below(m.rows);
            trees_.push_back(detail::grow_gini_tree(m, boot, cfg, rng));
        }
    }

    /// Fraction of trees voting class 1.
    double score(const double* row) const {
        long long ones = 0;
        for (const auto& t : trees_) ones += t.eval(row) > 0.5;
        return double(ones) / double(trees_.size());
    }

    std::vector<int> predict(const FeatureMatrix& m) const {
        if (m.cols != cols_)
            throw FeatureCountMismatch(std::to_string(m.cols) + " features, trained on " +
                                       std::to_string(cols_));
        std::vector<int> out(m.rows);
        for (size_t r = 0; r < m.rows; ++r)
            out[r] = score(&m.x[r * m.cols]) > 0.5 ? 1 : 0;  // vote tie -> 0
        return out;
    }

private:
    size_t cols_;
    std::vector<detail::Tree> trees_;
};

class BoostModel {
public:
    BoostModel(const FeatureMatrix& m, const BoostConfig& cfg) : cols_(m.cols) {
        validate_boost_config(cfg);
        detail::check_fit_input(m);
        std::vector<double> f(m.rows, 0.0), grad(m.rows), hess(m.rows);
        for (int round = 0; round < cfg.n_rounds; ++round) {
            for (size_t r = 0; r < m.rows; ++r) {
                double p = 1.0 / (1.0 + std::exp(-f[r]));
                grad[r] = p - double(m.y[r]);
                hess[r] = p * (1.0 - p);
            }
            auto tree = detail::grow_boost_tree(m, grad, hess, cfg);
            for (size_t r = 0; r < m.rows; ++r)
                f[r] += cfg.learning_rate * tree.eval(&m.x[r * m.cols]);
            trees_.push_back(std::move(tree));
            double loss = 0;
            for (size_t r = 0; r < m.rows; ++r) {
                double p = 1.0 / (1.0 + std::exp(-f[r]));
                p = std::clamp(p, 1e-15, 1.0 - 1e-15);
                loss -= m.y[r] ? std::log(p) : std::log(1.0 - p);
            }
            train_loss_.push_back(loss / double(m.rows));
        }
        lr_ = cfg.learning_rate;
    }

    const std::vector<double>& train_loss() const { return train_loss_; }

    /// Class-1 probability.
    double score(const double* row) const {
        double f = 0;
        for (const auto& t : trees_) f += lr_ * t.eval(row);
        return 1.0 / (1.0 + std::exp(-f));
    }

    std::vector<int> predict(const FeatureMatrix& m) const {
        if (m.cols != cols_)
            throw FeatureCountMismatch(std::to_string(m.cols) + " features, trained on " +
                                       std::to_string(cols_));
        std::vector<int> out(m.rows);
        for (size_t r = 0; r < m.rows; ++r)
            out[r] = score(&m.x[r * m.cols]) > 0.5 ? 1 : 0;
        return out;
    }

private:
    size_t cols_;
    double lr_ = 0.1;
    std::vector<detail::Tree> trees_;
    std::vector<double> train_loss_;
};

// ---------------------------------------------------------------------------
// cross-validation
// ---------------------------------------------------------------------------

enum class Method { forest, boost };

inline std::string to_string(Method m) { return m == Method::forest ? "rf" : "gbt"; }

inline Method method_from_string(const std::string& s) {
    if (s == "rf") return Method::forest;
    if (s == "gbt") return Method::boost;
    throw InvalidConfig("unknown method '" + s + "' (expected rf or gbt)");
}

struct CvOptions {
    Method method = Method::forest;
    int folds = 5;
    bool use_smote = true;
    bool smote_before_cv = false;  // leaky compatibility mode
    int smote_k = 5;
    ForestConfig forest;
    BoostConfig boost;
    uint64_t seed = 0;
};

struct ClassReport {
    std::string method;
    int folds = 0;
    bool used_smote = false, smote_before_cv = false;
    std::vector<ClassMetrics> per_fold;
    ClassMetrics mean;
};

namespace detail {

inline std::vector<int> fit_predict(const FeatureMatrix& train, const FeatureMatrix& test,
                                    const CvOptions& opt, uint64_t fold_seed) {
    if (opt.method == Method::forest) {
        ForestConfig cfg = opt.forest;
        cfg.seed = fold_seed;
        return ForestModel(train, cfg).predict(test);
    }
    BoostConfig cfg = opt.boost;
    cfg.seed = fold_seed;
    return BoostModel(train, cfg).predict(test);
}

}  // namespace detail

/// Stratified k-fold CV. Standardization statistics and SMOTE synthetics are
/// derived from each training fold only, unless smote_before_cv asks for the
/// leaky ordering some papers use.
inline ClassReport cross_validate(const FeatureMatrix& m, const CvOptions& opt) {
    m.validate();
    FeatureMatrix base = m;
    if (opt.use_smote && opt.smote_before_cv) {
        std::vector<size_t> all(m.rows);
        std::iota(all.begin(), all.end(), size_t(0));
        Standardizer st;
        st.fit(m, all);
        base = smote(st.transform(m, all), opt.smote_k, opt.seed ^ 0xabcdefull);
    }

    auto folds = stratified_kfold(base.y, opt.folds, opt.seed);
    ClassReport rep;
    rep.method = to_string(opt.method);
    rep.folds = opt.folds;
    rep.used_smote = opt.use_smote;
    rep.smote_before_cv = opt.use_smote && opt.smote_before_cv;

    double acc = 0, prec = 0, rec = 0, f1 = 0;
    for (size_t f = 0; f < folds.size(); ++f) {
        FeatureMatrix train, test;
        if (rep.smote_before_cv) {
            std::vector<size_t> tr = folds[f].train, te = folds[f].test;
            Standardizer id;  // already standardized above
            id.mean.assign(base.cols, 0.0);
            id.stdev.assign(base.cols, 1.0);
            train = id.transform(base, tr);
            test = id.transform(base, te);
        } else {
            Standardizer st;
            st.fit(base, folds[f].train);
            train = st.transform(base, folds[f].train);
            test = st.transform(base, folds[f].test);
            if (opt.use_smote)
                train = smote(train, opt.smote_k, opt.seed + 1000 * (f + 1));
        }
        auto pred = detail::fit_predict(train, test, opt, opt.seed + f + 1);
        auto conf = confusion(pred, test.y);
        auto met = class_metrics(conf);
        rep.per_fold.push_back(met);
        acc += met.accuracy;
        prec += met.precision;
        rec += met.recall;
        f1 += met.f1;
    }
    double n = double(folds.size());
    rep.mean.accuracy = acc / n;
    rep.mean.precision = prec / n;
    rep.mean.recall = rec / n;
    rep.mean.f1 = f1 / n;
    return rep;
}

}  // namespace hsr
