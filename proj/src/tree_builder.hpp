#pragma once

// Level-wise regression tree builder shared by the forest and boosting
// learners. Feature columns are pre-sorted once per fit; every tree level
// then costs one linear pass per feature, with per-node split candidates
// evaluated on the fly. Ties between equal-gain splits resolve to the lowest
// feature index and then the lowest threshold, so rebuilding a tree from the
// same inputs is bit-reproducible.

#include <cstdint>
#include <limits>
#include <vector>

#include "etax/common.hpp"

namespace etax::learners::detail {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double route(std::span<const double> x) const {
        std::int32_t i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    // Leaf id instead of value, for residual updates during boosting.
    std::int32_t route_leaf(std::span<const double> x) const {
        std::int32_t i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        return i;
    }
};

// Column indices of rows ordered by feature value (ties by row id). Shared
// across all trees of a fit since weights never change the ordering.
std::vector<std::vector<std::int32_t>> presort_columns(const Matrix& X);

// Split statistics policy for variance-reduction (CART) splits.
struct VarianceStats {
    double w = 0.0, wy = 0.0, wy2 = 0.0;

    void add(double weight, double y, double /*unused*/) {
        w += weight;
        wy += weight * y;
        wy2 += weight * y * y;
    }
    VarianceStats operator-(const VarianceStats& o) const { return {w - o.w, wy - o.wy, wy2 - o.wy2}; }

    double sse() const { return w > 0.0 ? wy2 - wy * wy / w : 0.0; }
};

struct VariancePolicy {
    using Stats = VarianceStats;
    double min_leaf_weight = 1.0;

    bool feasible(const Stats& l, const Stats& r) const {
        return l.w >= min_leaf_weight && r.w >= min_leaf_weight;
    }
    double gain(const Stats& l, const Stats& r, const Stats& t) const {
        return t.sse() - l.sse() - r.sse();
    }
    double min_gain(const Stats& t) const { return 1e-12 * std::max(1.0, std::fabs(t.sse())); }
    double leaf_value(const Stats& t) const { return t.w > 0.0 ? t.wy / t.w : 0.0; }
};

// Second-order (gradient/hessian) policy used by the boosting learner.
struct GradStats {
    double g = 0.0, h = 0.0;

    void add(double weight, double grad, double hess) {
        g += weight * grad;
        h += weight * hess;
    }
    GradStats operator-(const GradStats& o) const { return {g - o.g, h - o.h}; }
};

struct GradPolicy {
    using Stats = GradStats;
    double reg_lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 0.0;

    double score(const Stats& s) const { return s.g * s.g / (s.h + reg_lambda); }
    bool feasible(const Stats& l, const Stats& r) const {
        return l.h >= min_child_weight && r.h >= min_child_weight;
    }
    double gain(const Stats& l, const Stats& r, const Stats& t) const {
        return 0.5 * (score(l) + score(r) - score(t)) - gamma;
    }
    double min_gain(const Stats& t) const { return 1e-12 * std::max(1.0, score(t)); }
    double leaf_value(const Stats& t) const { return -t.g / (t.h + reg_lambda); }
};

struct BuildParams {
    int max_depth = 1;
    double min_split_weight = 2.0;  // weighted row count needed to try a split
    int features_per_node = 0;      // 0 = all available features
    std::uint64_t feature_allowed = ~0ULL;  // column-subsampling mask
};

template <class Policy>
class LevelwiseBuilder {
public:
    // `target` and `hess` are the per-row values fed to Stats::add (y and a
    // dummy for variance splits; gradient and hessian for boosting).
    LevelwiseBuilder(const Matrix& X, const std::vector<std::vector<std::int32_t>>& sorted,
                     std::span<const double> weights, std::span<const double> target,
                     std::span<const double> hess, const Policy& policy, const BuildParams& params)
        : x_(X), sorted_(sorted), w_(weights), target_(target), hess_(hess), policy_(policy),
          params_(params) {
        if (X.cols() > 64) throw Error("tree builder supports at most 64 features");
    }

    Tree build(Rng& rng, std::vector<std::int32_t>* leaf_of_row = nullptr) {
        using Stats = typename Policy::Stats;
        const std::size_t n = x_.rows();
        const int m = static_cast<int>(x_.cols());

        struct BNode {
            Stats stats{};
            int depth = 0;
        };

        Tree tree;
        std::vector<BNode> meta;
        std::vector<std::int32_t> node_of_row(n, 0);

        Stats root{};
        for (std::size_t r = 0; r < n; ++r)
            if (w_[r] > 0.0) root.add(w_[r], target_[r], hess_[r]);
        tree.nodes.push_back({});
        meta.push_back({root, 0});

        std::vector<std::int32_t> frontier;
        if (splittable(root, 0)) frontier.push_back(0);

        std::vector<std::int32_t> slot_of_node;
        struct ScanState {
            Stats left{};
            double prev_val = 0.0;
            bool has_prev = false;
        };
        struct BestSplit {
            double gain = -std::numeric_limits<double>::infinity();
            int feature = -1;
            double threshold = 0.0;
        };

        while (!frontier.empty()) {
            const std::size_t k = frontier.size();
            slot_of_node.assign(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < k; ++s)
                slot_of_node[static_cast<std::size_t>(frontier[s])] = static_cast<std::int32_t>(s);

            // per-node candidate feature masks, drawn in node-id order
            std::vector<std::uint64_t> feat_mask(k, 0);
            for (std::size_t s = 0; s < k; ++s) feat_mask[s] = draw_features(m, rng);

            std::vector<ScanState> scan(k);
            std::vector<BestSplit> best(k);

            for (int f = 0; f < m; ++f) {
                if (!(params_.feature_allowed >> f & 1ULL)) continue;
                for (std::size_t s = 0; s < k; ++s) scan[s] = ScanState{};
                const auto& order = sorted_[static_cast<std::size_t>(f)];
                for (const std::int32_t r : order) {
                    const std::int32_t nd = node_of_row[static_cast<std::size_t>(r)];
                    const std::int32_t s = slot_of_node[static_cast<std::size_t>(nd)];
                    if (s < 0) continue;
                    if (!(feat_mask[static_cast<std::size_t>(s)] >> f & 1ULL)) continue;
                    const double wr = w_[static_cast<std::size_t>(r)];
                    if (wr <= 0.0) continue;
                    ScanState& st = scan[static_cast<std::size_t>(s)];
                    const double v = x_(static_cast<std::size_t>(r), static_cast<std::size_t>(f));
                    if (st.has_prev && v > st.prev_val) {
                        const Stats& total = meta[static_cast<std::size_t>(nd)].stats;
                        const Stats right = total - st.left;
                        if (policy_.feasible(st.left, right)) {
                            const double g = policy_.gain(st.left, right, total);
                            BestSplit& b = best[static_cast<std::size_t>(s)];
                            if (g > b.gain) {
                                b.gain = g;
                                b.feature = f;
                                b.threshold = 0.5 * (st.prev_val + v);
                            }
                        }
                    }
                    st.left.add(wr, target_[static_cast<std::size_t>(r)],
                                hess_[static_cast<std::size_t>(r)]);
                    st.prev_val = v;
                    st.has_prev = true;
                }
            }

            // commit splits / finalize leaves for this level
            std::vector<std::int32_t> next_frontier;
            for (std::size_t s = 0; s < k; ++s) {
                const std::int32_t nd = frontier[s];
                const BestSplit& b = best[s];
                const typename Policy::Stats node_stats = meta[static_cast<std::size_t>(nd)].stats;
                const int node_depth = meta[static_cast<std::size_t>(nd)].depth;
                if (b.feature >= 0 && b.gain > policy_.min_gain(node_stats)) {
                    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
                    tree.nodes.push_back({});
                    tree.nodes.push_back({});
                    meta.push_back({Stats{}, node_depth + 1});
                    meta.push_back({Stats{}, node_depth + 1});
                    TreeNode& node = tree.nodes[static_cast<std::size_t>(nd)];
                    node.feature = b.feature;
                    node.threshold = b.threshold;
                    node.left = left_id;
                    node.right = left_id + 1;
                } else {
                    tree.nodes[static_cast<std::size_t>(nd)].value =
                        policy_.leaf_value(node_stats);
                }
            }

            // route rows into children and collect child stats
            for (std::size_t r = 0; r < n; ++r) {
                const std::int32_t nd = node_of_row[r];
                if (slot_of_node[static_cast<std::size_t>(nd)] < 0) continue;
                const TreeNode& node = tree.nodes[static_cast<std::size_t>(nd)];
                if (node.is_leaf()) continue;
                const std::int32_t child =
                    x_(r, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left
                                                                                   : node.right;
                node_of_row[r] = child;
                if (w_[r] > 0.0)
                    meta[static_cast<std::size_t>(child)].stats.add(w_[r], target_[r], hess_[r]);
            }

            for (std::size_t s = 0; s < k; ++s) {
                const TreeNode& node = tree.nodes[static_cast<std::size_t>(frontier[s])];
                if (node.is_leaf()) continue;
                for (const std::int32_t child : {node.left, node.right}) {
                    const BNode& info = meta[static_cast<std::size_t>(child)];
                    if (splittable(info.stats, info.depth))
                        next_frontier.push_back(child);
                    else
                        tree.nodes[static_cast<std::size_t>(child)].value =
                            policy_.leaf_value(info.stats);
                }
            }
            frontier = std::move(next_frontier);
        }

        if (leaf_of_row) {
            leaf_of_row->assign(n, -1);
            for (std::size_t r = 0; r < n; ++r) (*leaf_of_row)[r] = tree.route_leaf(x_.row(r));
        }
        return tree;
    }

private:
    template <class Stats>
    bool splittable(const Stats& stats, int depth) const {
        return depth < params_.max_depth && node_weight(stats) >= params_.min_split_weight;
    }
    static double node_weight(const VarianceStats& s) { return s.w; }
    static double node_weight(const GradStats& s) { return s.h; }

    std::uint64_t draw_features(int m, Rng& rng) {
        std::vector<int> allowed;
        for (int f = 0; f < m; ++f)
            if (params_.feature_allowed >> f & 1ULL) allowed.push_back(f);
        const int k = params_.features_per_node;
        if (k <= 0 || k >= static_cast<int>(allowed.size())) {
            std::uint64_t all = 0;
            for (int f : allowed) all |= 1ULL << f;
            return all;
        }
        std::uint64_t mask = 0;
        const auto picks = rng.sample_indices(allowed.size(), static_cast<std::size_t>(k));
        for (int p : picks) mask |= 1ULL << allowed[static_cast<std::size_t>(p)];
        return mask;
    }

    const Matrix& x_;
    const std::vector<std::vector<std::int32_t>>& sorted_;
    std::span<const double> w_;
    std::span<const double> target_;
    std::span<const double> hess_;
    Policy policy_;
    BuildParams params_;
};

}  // namespace etax::learners::detail
