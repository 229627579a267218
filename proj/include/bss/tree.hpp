#pragma once

// Histogram-based regression trees with native categorical splits, and the
// three ensembles built from them: single CART, random forest, and
// squared-error gradient boosting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bss/core.hpp"

namespace bss::ml {

using FeatureMask = std::array<bool, kFeatureCount>;

inline FeatureMask all_features() {
    FeatureMask m;
    m.fill(true);
    return m;
}

/// Column-major training matrix: raw values plus per-feature histogram bins.
/// Numeric features use at most `max_bins` quantile cut points; categorical
/// features use their integer code as the bin.
class BinnedMatrix {
public:
    BinnedMatrix() = default;
    BinnedMatrix(std::span<const FeatureVector> rows, FeatureMask active, int max_bins = 255)
        : n_rows_(static_cast<int>(rows.size())), active_(active) {
        raw_.resize(std::size_t(kFeatureCount) * n_rows_);
        bins_.resize(raw_.size());
        for (int r = 0; r < n_rows_; ++r)
            for (int f = 0; f < kFeatureCount; ++f) raw_[std::size_t(f) * n_rows_ + r] = rows[r].values[f];
        for (int f = 0; f < kFeatureCount; ++f) {
            auto col = column(f);
            auto bcol = std::span<std::uint16_t>(bins_.data() + std::size_t(f) * n_rows_, n_rows_);
            if (!active_[f] || n_rows_ == 0) {
                n_bins_[f] = 1;
                continue;
            }
            if (is_categorical(static_cast<Feature>(f))) {
                int max_code = 0;
                for (int r = 0; r < n_rows_; ++r) {
                    double v = col[r];
                    if (v < 0 || v != std::floor(v) || v > 65535)
                        throw Error("categorical feature " + std::string(kFeatureNames[f]) + " needs non-negative integer codes");
                    bcol[r] = static_cast<std::uint16_t>(v);
                    max_code = std::max(max_code, static_cast<int>(v));
                }
                n_bins_[f] = max_code + 1;
            } else {
                std::vector<double> sorted(col.begin(), col.end());
                std::sort(sorted.begin(), sorted.end());
                sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
                auto& cuts = upper_[f];
                if (static_cast<int>(sorted.size()) <= max_bins) {
                    cuts = sorted;
                } else {
                    for (int b = 1; b <= max_bins; ++b) {
                        auto idx = std::size_t(std::ceil(double(b) * sorted.size() / max_bins)) - 1;
                        if (cuts.empty() || sorted[idx] > cuts.back()) cuts.push_back(sorted[idx]);
                    }
                }
                for (int r = 0; r < n_rows_; ++r)
                    bcol[r] = static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), col[r]) - cuts.begin());
                n_bins_[f] = static_cast<int>(cuts.size());
            }
        }
    }

    int rows() const { return n_rows_; }
    const FeatureMask& active() const { return active_; }
    int n_bins(int f) const { return n_bins_[f]; }
    double raw(int f, int r) const { return raw_[std::size_t(f) * n_rows_ + r]; }
    std::uint16_t bin(int f, int r) const { return bins_[std::size_t(f) * n_rows_ + r]; }
    /// Upper edge of numeric bin `b` (split "value <= edge" goes left).
    double upper(int f, int b) const { return upper_[f][b]; }

private:
    std::span<const double> column(int f) const { return {raw_.data() + std::size_t(f) * n_rows_, std::size_t(n_rows_)}; }

    int n_rows_ = 0;
    FeatureMask active_{};
    std::vector<double> raw_;
    std::vector<std::uint16_t> bins_;
    std::array<std::vector<double>, kFeatureCount> upper_;
    std::array<int, kFeatureCount> n_bins_{};
};

struct TreeParams {
    int max_depth = 6;
    int min_samples_leaf = 1;
    double feature_fraction = 1.0;  // share of candidate features examined
    bool sample_per_node = false;   // false: caller fixes the candidate set per tree
};

struct TreeNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;
    std::vector<std::uint8_t> left_codes;  // categorical: code -> goes left
    int left = -1;
    int right = -1;
    double value = 0.0;
    int n_samples = 0;

    bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
public:
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::vector<TreeNode>& nodes() { return nodes_; }

    /// Index of the leaf a row reaches; `value_of(f)` returns the raw feature value.
    template <class ValueOf>
    int leaf_of(ValueOf&& value_of) const {
        int i = 0;
        while (!nodes_[i].is_leaf()) {
            const auto& n = nodes_[i];
            double v = value_of(n.feature);
            bool left;
            if (n.left_codes.empty()) {
                left = v <= n.threshold;
            } else {
                auto code = static_cast<std::size_t>(v);
                left = v >= 0 && code < n.left_codes.size() && n.left_codes[code];
            }
            i = left ? n.left : n.right;
        }
        return i;
    }

    double predict(const FeatureVector& x) const {
        return nodes_[leaf_of([&](int f) { return x.values[f]; })].value;
    }
    double predict_row(const BinnedMatrix& m, int r) const {
        return nodes_[leaf_of([&](int f) { return m.raw(f, r); })].value;
    }

    void add_split_counts(std::array<long long, kFeatureCount>& counts) const {
        for (const auto& n : nodes_)
            if (!n.is_leaf()) ++counts[n.feature];
    }

    int depth() const { return depth_from(0); }

private:
    int depth_from(int i) const {
        if (nodes_[i].is_leaf()) return 0;
        return 1 + std::max(depth_from(nodes_[i].left), depth_from(nodes_[i].right));
    }

    std::vector<TreeNode> nodes_;
};

namespace detail {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;                        // numeric: last bin going left
    std::vector<std::uint8_t> left_codes;  // categorical
};

class TreeBuilder {
public:
    TreeBuilder(const BinnedMatrix& m, std::span<const double> y, const TreeParams& p, const FeatureMask& mask,
                std::mt19937_64& rng)
        : m_(m), y_(y), p_(p), rng_(rng) {
        for (int f = 0; f < kFeatureCount; ++f)
            if (mask[f] && m.active()[f] && m.n_bins(f) > 1) candidates_.push_back(f);
        int max_bins = 1;
        for (int f : candidates_) max_bins = std::max(max_bins, m.n_bins(f));
        hist_sum_.resize(max_bins);
        hist_cnt_.resize(max_bins);
    }

    RegressionTree build(std::vector<int> rows) {
        rows_ = std::move(rows);
        RegressionTree t;
        nodes_ = &t.nodes();
        grow(0, rows_.size(), 0);
        return t;
    }

private:
    int grow(std::size_t begin, std::size_t end, int depth) {
        int id = static_cast<int>(nodes_->size());
        nodes_->emplace_back();
        const int n = static_cast<int>(end - begin);
        double sum = 0;
        for (std::size_t k = begin; k < end; ++k) sum += y_[rows_[k]];
        (*nodes_)[id].n_samples = n;
        (*nodes_)[id].value = n > 0 ? sum / n : 0.0;
        if (depth >= p_.max_depth || n < 2 * std::max(1, p_.min_samples_leaf)) return id;

        auto best = best_split(begin, end, sum);
        if (best.feature < 0) return id;

        const int f = best.feature;
        auto mid = std::partition(rows_.begin() + begin, rows_.begin() + end, [&](int r) {
            auto b = m_.bin(f, r);
            return best.left_codes.empty() ? b <= best.bin : best.left_codes[b] != 0;
        });
        std::size_t split = static_cast<std::size_t>(mid - rows_.begin());
        {
            auto& node = (*nodes_)[id];
            node.feature = f;
            if (best.left_codes.empty())
                node.threshold = m_.upper(f, best.bin);
            else
                node.left_codes = std::move(best.left_codes);
        }
        int l = grow(begin, split, depth + 1);
        int r = grow(split, end, depth + 1);
        (*nodes_)[id].left = l;
        (*nodes_)[id].right = r;
        return id;
    }

    SplitCandidate best_split(std::size_t begin, std::size_t end, double sum) {
        const int n = static_cast<int>(end - begin);
        const int min_leaf = std::max(1, p_.min_samples_leaf);
        const double parent = sum * sum / n;
        SplitCandidate best;
        best.gain = 1e-9 * std::max(1.0, parent);  // ignore numerically-zero gains

        std::vector<int> feats = candidates_;
        if (p_.sample_per_node && p_.feature_fraction < 1.0 && !feats.empty()) {
            int k = std::max(1, static_cast<int>(std::ceil(p_.feature_fraction * feats.size())));
            std::shuffle(feats.begin(), feats.end(), rng_);
            feats.resize(k);
            std::sort(feats.begin(), feats.end());
        }

        for (int f : feats) {
            const int nb = m_.n_bins(f);
            std::fill_n(hist_sum_.begin(), nb, 0.0);
            std::fill_n(hist_cnt_.begin(), nb, 0);
            for (std::size_t k = begin; k < end; ++k) {
                int r = rows_[k];
                auto b = m_.bin(f, r);
                hist_sum_[b] += y_[r];
                hist_cnt_[b] += 1;
            }
            order_.clear();
            if (is_categorical(static_cast<Feature>(f))) {
                for (int b = 0; b < nb; ++b)
                    if (hist_cnt_[b] > 0) order_.push_back(b);
                // Group categories by ascending mean target.
                std::sort(order_.begin(), order_.end(), [&](int a, int b) {
                    double ma = hist_sum_[a] / hist_cnt_[a], mb = hist_sum_[b] / hist_cnt_[b];
                    return ma != mb ? ma < mb : a < b;
                });
            } else {
                for (int b = 0; b < nb; ++b)
                    if (hist_cnt_[b] > 0) order_.push_back(b);
            }
            double sl = 0;
            int nl = 0;
            for (std::size_t k = 0; k + 1 < order_.size(); ++k) {
                sl += hist_sum_[order_[k]];
                nl += hist_cnt_[order_[k]];
                int nr = n - nl;
                if (nl < min_leaf) continue;
                if (nr < min_leaf) break;
                double sr = sum - sl;
                double gain = sl * sl / nl + sr * sr / nr - parent;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.bin = order_[k];
                    best.left_codes.clear();
                    if (is_categorical(static_cast<Feature>(f))) {
                        best.left_codes.assign(nb, 0);
                        for (std::size_t j = 0; j <= k; ++j) best.left_codes[order_[j]] = 1;
                    }
                }
            }
        }
        return best;
    }

    const BinnedMatrix& m_;
    std::span<const double> y_;
    TreeParams p_;
    std::mt19937_64& rng_;
    std::vector<int> candidates_;
    std::vector<int> rows_;
    std::vector<TreeNode>* nodes_ = nullptr;
    std::vector<double> hist_sum_;
    std::vector<int> hist_cnt_;
    std::vector<int> order_;
};

}  // namespace detail

/// Fits one tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
inline RegressionTree fit_tree(const BinnedMatrix& m, std::span<const double> y, std::vector<int> rows,
                               const TreeParams& p, std::mt19937_64& rng, const FeatureMask& mask = all_features()) {
    detail::TreeBuilder b(m, y, p, mask, rng);
    return b.build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Ensembles

enum class EnsembleKind : int { Cart = 0, RandomForest = 1, GradientBoosting = 2 };

struct EnsembleParams {
    EnsembleKind kind = EnsembleKind::GradientBoosting;
    int n_estimators = 100;
    int max_depth = 6;
    int min_samples_leaf = 1;
    double learning_rate = 0.1;
    double subsample_fraction = 1.0;
    double feature_fraction = 1.0;
    bool bootstrap = true;
    std::uint64_t seed = 1;
};

class Ensemble {
public:
    Ensemble() = default;

    /// `loss_curve`, when given, receives the training MSE after the base
    /// score and after every boosting stage.
    static Ensemble fit(const BinnedMatrix& m, std::span<const double> y, const EnsembleParams& p,
                        std::vector<double>* loss_curve = nullptr) {
        if (m.rows() == 0) throw Error("cannot fit a tree model on zero rows");
        Ensemble e;
        e.kind_ = p.kind;
        TreeParams tp{p.max_depth, p.min_samples_leaf, 1.0, false};
        std::vector<int> all(m.rows());
        std::iota(all.begin(), all.end(), 0);
        switch (p.kind) {
            case EnsembleKind::Cart: {
                std::mt19937_64 rng(p.seed);
                e.trees_.push_back(fit_tree(m, y, all, tp, rng));
                break;
            }
            case EnsembleKind::RandomForest: {
                tp.feature_fraction = p.feature_fraction;
                tp.sample_per_node = true;
                for (int t = 0; t < p.n_estimators; ++t) {
                    std::mt19937_64 rng(p.seed + 0x9E3779B97F4A7C15ULL * (t + 1));
                    std::vector<int> rows;
                    if (p.bootstrap) {
                        rows.resize(m.rows());
                        std::uniform_int_distribution<int> pick(0, m.rows() - 1);
                        for (auto& r : rows) r = pick(rng);
                    } else {
                        rows = all;
                    }
                    e.trees_.push_back(fit_tree(m, y, std::move(rows), tp, rng));
                }
                break;
            }
            case EnsembleKind::GradientBoosting: {
                e.learning_rate_ = p.learning_rate;
                e.base_ = std::accumulate(y.begin(), y.end(), 0.0) / m.rows();
                std::vector<double> fitted(m.rows(), e.base_), residual(m.rows());
                auto record = [&] {
                    if (!loss_curve) return;
                    double s = 0;
                    for (int r = 0; r < m.rows(); ++r) s += (y[r] - fitted[r]) * (y[r] - fitted[r]);
                    loss_curve->push_back(s / m.rows());
                };
                record();
                std::mt19937_64 rng(p.seed);
                std::vector<int> active;
                for (int f = 0; f < kFeatureCount; ++f)
                    if (m.active()[f]) active.push_back(f);
                for (int t = 0; t < p.n_estimators; ++t) {
                    for (int r = 0; r < m.rows(); ++r) residual[r] = y[r] - fitted[r];
                    std::vector<int> rows = all;
                    if (p.subsample_fraction < 1.0) {
                        std::shuffle(rows.begin(), rows.end(), rng);
                        rows.resize(std::max<std::size_t>(1, std::size_t(p.subsample_fraction * m.rows())));
                        std::sort(rows.begin(), rows.end());
                    }
                    FeatureMask mask{};
                    if (p.feature_fraction < 1.0 && !active.empty()) {
                        auto pool = active;
                        std::shuffle(pool.begin(), pool.end(), rng);
                        pool.resize(std::max(1, static_cast<int>(std::ceil(p.feature_fraction * pool.size()))));
                        for (int f : pool) mask[f] = true;
                    } else {
                        mask = all_features();
                    }
                    auto tree = fit_tree(m, residual, std::move(rows), tp, rng, mask);
                    for (int r = 0; r < m.rows(); ++r) fitted[r] += p.learning_rate * tree.predict_row(m, r);
                    e.trees_.push_back(std::move(tree));
                    record();
                }
                break;
            }
        }
        return e;
    }

    double predict(const FeatureVector& x) const {
        switch (kind_) {
            case EnsembleKind::Cart:
                return trees_.front().predict(x);
            case EnsembleKind::RandomForest: {
                if (trees_.empty()) return 0.0;
                double s = 0;
                for (const auto& t : trees_) s += t.predict(x);
                return s / trees_.size();
            }
            case EnsembleKind::GradientBoosting: {
                double s = 0;
                for (const auto& t : trees_) s += t.predict(x);
                return base_ + learning_rate_ * s;
            }
        }
        return 0.0;
    }

    std::array<long long, kFeatureCount> split_counts() const {
        std::array<long long, kFeatureCount> c{};
        for (const auto& t : trees_) t.add_split_counts(c);
        return c;
    }

    EnsembleKind kind() const { return kind_; }
    double base_score() const { return base_; }
    double learning_rate() const { return learning_rate_; }
    const std::vector<RegressionTree>& trees() const { return trees_; }

    // Used by model deserialization.
    static Ensemble from_parts(EnsembleKind k, double base, double lr, std::vector<RegressionTree> trees) {
        Ensemble e;
        e.kind_ = k;
        e.base_ = base;
        e.learning_rate_ = lr;
        e.trees_ = std::move(trees);
        return e;
    }

private:
    EnsembleKind kind_ = EnsembleKind::Cart;
    double base_ = 0.0;
    double learning_rate_ = 0.0;
    std::vector<RegressionTree> trees_;
};

}  // namespace bss::ml
