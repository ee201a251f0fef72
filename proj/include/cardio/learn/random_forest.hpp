#pragma once

// Random forest of Gini-grown CART trees on bootstrap samples. Leaves keep
// raw class counts; predictions average the normalized leaf distributions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/learn/data.hpp"
#include "cardio/parallel.hpp"
#include "cardio/rng.hpp"
#include "json.hpp"

namespace cardio::learn {

struct ForestParams {
    std::size_t trees = 100;
    std::size_t max_depth = 0;  // 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t mtry = 0;       // features tried per split, 0 = floor(sqrt(p))

    bool operator==(const ForestParams&) const = default;
};

/// Flat node arrays. Internal nodes have feature >= 0; leaves have feature -1 and class counts.
struct DecisionTree {
    std::vector<int> feature;
    std::vector<double> threshold;  // go left when x[feature] <= threshold
    std::vector<int> left;
    std::vector<int> right;
    std::vector<std::vector<double>> counts;  // empty for internal nodes

    [[nodiscard]] std::size_t leaf_of(std::span<const double> x) const {
        std::size_t n = 0;
        while (feature[n] >= 0) n = static_cast<std::size_t>(x[feature[n]] <= threshold[n] ? left[n] : right[n]);
        return n;
    }

    bool operator==(const DecisionTree&) const = default;
};

struct RandomForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    std::size_t features = 0;
    std::size_t classes = 0;
    std::vector<DecisionTree> trees;

    bool operator==(const RandomForestModel&) const = default;
};

namespace detail {

struct TreeBuilder {
    const Matrix& x;
    const std::vector<int>& y;
    const ForestParams& params;
    std::size_t classes;
    std::size_t mtry;
    Rng& rng;
    DecisionTree tree;

    int make_leaf(const std::vector<std::size_t>& idx) {
        std::vector<double> c(classes, 0.0);
        for (auto i : idx) c[static_cast<std::size_t>(y[i])] += 1.0;
        tree.feature.push_back(-1);
        tree.threshold.push_back(0.0);
        tree.left.push_back(-1);
        tree.right.push_back(-1);
        tree.counts.push_back(std::move(c));
        return static_cast<int>(tree.feature.size() - 1);
    }

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = -1.0;  // sum over children of |child|^-1 * sum_c count_c^2, larger is purer
    };

    // Best threshold on one feature. Only strictly better scores replace the
    // incumbent, so ties keep the lowest threshold.
    void scan_feature(const std::vector<std::size_t>& idx, int f, Split& best) const {
        std::vector<std::pair<double, int>> v;
        v.reserve(idx.size());
        for (auto i : idx) v.emplace_back(x(i, static_cast<std::size_t>(f)), y[i]);
        std::sort(v.begin(), v.end());
        std::vector<double> lc(classes, 0.0), rc(classes, 0.0);
        for (const auto& e : v) rc[static_cast<std::size_t>(e.second)] += 1.0;
        const std::size_t n = v.size();
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const auto c = static_cast<std::size_t>(v[k].second);
            lc[c] += 1.0;
            rc[c] -= 1.0;
            if (v[k].first == v[k + 1].first) continue;
            const std::size_t nl = k + 1, nr = n - nl;
            if (nl < params.min_leaf || nr < params.min_leaf) continue;
            double sl = 0.0, sr = 0.0;
            for (std::size_t j = 0; j < classes; ++j) {
                sl += lc[j] * lc[j];
                sr += rc[j] * rc[j];
            }
            const double score = sl / static_cast<double>(nl) + sr / static_cast<double>(nr);
            if (score > best.score) {
                double t = v[k].first + (v[k + 1].first - v[k].first) / 2.0;
                if (!(t < v[k + 1].first)) t = v[k].first;
                best = {f, t, score};
            }
        }
    }

    int grow(std::vector<std::size_t> idx, std::size_t depth) {
        bool pure = true;
        for (auto i : idx) pure = pure && y[i] == y[idx.front()];
        if (pure || idx.size() < 2 * params.min_leaf || (params.max_depth > 0 && depth >= params.max_depth))
            return make_leaf(idx);

        // Random feature order; the first mtry are tried, then the rest only if
        // none of those admits a split (all constant on this node).
        std::vector<int> order(x.cols);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t k = 0; k < order.size(); ++k) std::swap(order[k], order[k + rng.index(order.size() - k)]);
        Split best;
        for (std::size_t start = 0; start < order.size() && best.feature < 0; start += mtry) {
            const std::size_t stop = std::min(order.size(), start + mtry);
            std::vector<int> batch(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(stop));
            std::sort(batch.begin(), batch.end());  // equal gains resolve to the lowest feature index
            for (int f : batch) scan_feature(idx, f, best);
        }
        if (best.feature < 0) return make_leaf(idx);

        std::vector<std::size_t> li, ri;
        for (auto i : idx) (x(i, static_cast<std::size_t>(best.feature)) <= best.threshold ? li : ri).push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        const auto node = static_cast<std::size_t>(tree.feature.size());
        tree.feature.push_back(best.feature);
        tree.threshold.push_back(best.threshold);
        tree.left.push_back(-1);
        tree.right.push_back(-1);
        tree.counts.emplace_back();
        const int l = grow(std::move(li), depth + 1);
        const int r = grow(std::move(ri), depth + 1);
        tree.left[node] = l;
        tree.right[node] = r;
        return static_cast<int>(node);
    }
};

}  // namespace detail

inline RandomForestModel train_random_forest(const Matrix& x, const std::vector<int>& y, std::size_t classes,
                                             const ForestParams& params, std::uint64_t seed, std::size_t workers = 1) {
    detail::check_training_set(x, y, classes, "random forest");
    require(params.trees > 0 && params.min_leaf > 0, Errc::InvalidArgument, "random forest: trees and min_leaf must be > 0");
    RandomForestModel m;
    m.params = params;
    m.seed = seed;
    m.features = x.cols;
    m.classes = classes;
    const std::size_t mtry = params.mtry > 0
                                 ? std::min(params.mtry, x.cols)
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(x.cols)))));
    m.trees.resize(params.trees);
    parallel_for(params.trees, workers, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::size_t> boot(x.rows);
        for (auto& b : boot) b = rng.index(x.rows);
        detail::TreeBuilder b{x, y, params, classes, mtry, rng, {}};
        b.grow(std::move(boot), 0);
        m.trees[t] = std::move(b.tree);
    });
    return m;
}

/// Normalized class distribution of the leaf reached by `x` in one tree.
inline std::vector<double> tree_predict_proba(const DecisionTree& t, std::span<const double> x) {
    const auto& c = t.counts[t.leaf_of(x)];
    const double n = std::accumulate(c.begin(), c.end(), 0.0);
    std::vector<double> p(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) p[k] = c[k] / n;
    return p;
}

inline ProbRows rf_predict_proba(const RandomForestModel& m, const Matrix& x) {
    detail::check_width(x, m.features, "random forest");
    ProbRows out(x.rows, std::vector<double>(m.classes, 0.0));
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (const auto& t : m.trees) {
            const auto p = tree_predict_proba(t, x.row(i));
            for (std::size_t k = 0; k < m.classes; ++k) out[i][k] += p[k];
        }
        for (auto& v : out[i]) v /= static_cast<double>(m.trees.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const RandomForestModel& m) {
    nlohmann::ordered_json j;
    j["trees_requested"] = m.params.trees;
    j["max_depth"] = m.params.max_depth;
    j["min_leaf"] = m.params.min_leaf;
    j["mtry"] = m.params.mtry;
    j["seed"] = m.seed;
    j["features"] = m.features;
    j["classes"] = m.classes;
    auto& ts = j["trees"] = nlohmann::ordered_json::array();
    for (const auto& t : m.trees) {
        nlohmann::ordered_json o;
        o["feature"] = t.feature;
        o["threshold"] = t.threshold;
        o["left"] = t.left;
        o["right"] = t.right;
        o["counts"] = t.counts;
        ts.push_back(std::move(o));
    }
    return j;
}

inline RandomForestModel random_forest_from_json(const nlohmann::ordered_json& j) {
    RandomForestModel m;
    m.params.trees = j.at("trees_requested").get<std::size_t>();
    m.params.max_depth = j.at("max_depth").get<std::size_t>();
    m.params.min_leaf = j.at("min_leaf").get<std::size_t>();
    m.params.mtry = j.at("mtry").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.features = j.at("features").get<std::size_t>();
    m.classes = j.at("classes").get<std::size_t>();
    for (const auto& o : j.at("trees")) {
        DecisionTree t;
        o.at("feature").get_to(t.feature);
        o.at("threshold").get_to(t.threshold);
        o.at("left").get_to(t.left);
        o.at("right").get_to(t.right);
        o.at("counts").get_to(t.counts);
        const auto n = t.feature.size();
        require(n > 0 && t.threshold.size() == n && t.left.size() == n && t.right.size() == n && t.counts.size() == n,
                Errc::Integrity, "random forest: inconsistent tree arrays");
        for (std::size_t k = 0; k < n; ++k) {
            if (t.feature[k] < 0) {
                require(t.counts[k].size() == m.classes, Errc::Integrity, "random forest: bad leaf");
            } else {
                require(static_cast<std::size_t>(t.feature[k]) < m.features && t.left[k] > static_cast<int>(k) &&
                            t.right[k] > static_cast<int>(k) && static_cast<std::size_t>(t.left[k]) < n &&
                            static_cast<std::size_t>(t.right[k]) < n,
                        Errc::Integrity, "random forest: bad node");
            }
        }
        m.trees.push_back(std::move(t));
    }
    return m;
}

}  // namespace cardio::learn
