#include <algorithm>
#include <cmath>
#include <numeric>

#include "models_detail.hpp"

namespace etax::learners {

namespace detail {

std::vector<std::vector<std::int32_t>> presort_columns(const Matrix& X) {
    std::vector<std::vector<std::int32_t>> sorted(X.cols());
    parallel_for(X.cols(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t f = begin; f < end; ++f) {
            auto& order = sorted[f];
            order.resize(X.rows());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
                return X(static_cast<std::size_t>(a), f) < X(static_cast<std::size_t>(b), f);
            });
        }
    });
    return sorted;
}

json ForestModel::to_json() const {
    json j = header_json("forest");
    json trees = json::array();
    for (const Tree& t : trees_) trees.push_back(tree_to_json(t));
    j["trees"] = trees;
    return j;
}

std::unique_ptr<Regressor> ForestModel::load(const json& j) {
    RegressorSpec spec = RegressorSpec::from_json(j.at("spec"));
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
    return std::make_unique<ForestModel>(std::move(spec),
                                         j.at("mask_cols").get<std::vector<int>>(),
                                         j.at("input_width").get<std::size_t>(), std::move(trees));
}

json BoostModel::to_json() const {
    json j = header_json("boost");
    j["base_score"] = base_score_;
    json trees = json::array();
    for (const Tree& t : trees_) trees.push_back(tree_to_json(t));
    j["trees"] = trees;
    return j;
}

std::unique_ptr<Regressor> BoostModel::load(const json& j) {
    RegressorSpec spec = RegressorSpec::from_json(j.at("spec"));
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
    return std::make_unique<BoostModel>(std::move(spec),
                                        j.at("mask_cols").get<std::vector<int>>(),
                                        j.at("input_width").get<std::size_t>(),
                                        j.at("base_score").get<double>(), std::move(trees));
}

}  // namespace detail

using namespace detail;

std::unique_ptr<Regressor> fit_random_forest(const Dataset& train,
                                             const std::vector<std::string>& schema_names,
                                             const RegressorSpec& spec_in) {
    RegressorSpec spec = spec_in;
    const auto& cfg = std::get<ForestConfig>(spec.params);
    if (cfg.trees < 1) throw ConfigError("forest needs at least one tree");
    if (cfg.max_depth < 1) throw ConfigError("forest max_depth must be >= 1");
    if (cfg.min_samples_leaf < 1 || cfg.min_samples_split < 1)
        throw ConfigError("forest minimum sample counts must be >= 1");

    const std::vector<int> mask_cols = resolve_mask(spec.mask, schema_names);
    const Matrix Xm = gather_columns(train.X, mask_cols);
    const std::size_t n = Xm.rows();
    const int m = static_cast<int>(Xm.cols());
    if (n < static_cast<std::size_t>(cfg.min_samples_split))
        throw Error("forest: fewer training rows (" + std::to_string(n) +
                    ") than min samples per split (" + std::to_string(cfg.min_samples_split) + ")");

    const int max_features =
        cfg.max_features > 0 ? std::min(cfg.max_features, m)
                             : static_cast<int>(std::ceil(static_cast<double>(m) / 3.0));

    const auto sorted = presort_columns(Xm);

    BuildParams params;
    params.max_depth = cfg.max_depth;
    params.min_split_weight = static_cast<double>(cfg.min_samples_split);
    params.features_per_node = max_features;

    VariancePolicy policy;
    policy.min_leaf_weight = static_cast<double>(cfg.min_samples_leaf);

    std::vector<Tree> trees(static_cast<std::size_t>(cfg.trees));
    parallel_for_each(trees.size(), [&](std::size_t t) {
        Rng rng(mix_seed(spec.seed, 0xf000 + static_cast<std::uint64_t>(t)));
        std::vector<double> weights(n, 1.0);
        if (cfg.bootstrap) {
            std::fill(weights.begin(), weights.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) weights[rng.below(n)] += 1.0;
        }
        LevelwiseBuilder<VariancePolicy> builder(Xm, sorted, weights, train.y, train.y, policy,
                                                 params);
        trees[t] = builder.build(rng);
    });

    auto model = std::make_unique<ForestModel>(std::move(spec), mask_cols, train.X.cols(),
                                               std::move(trees));
    model->bind_schema(schema_names);
    return model;
}

std::unique_ptr<Regressor> fit_gradient_boosting(const Dataset& train,
                                                 const std::vector<std::string>& schema_names,
                                                 const RegressorSpec& spec_in) {
    RegressorSpec spec = spec_in;
    const auto& cfg = std::get<BoostConfig>(spec.params);
    if (cfg.trees < 0) throw ConfigError("boosting tree count must be >= 0");
    if (cfg.learning_rate <= 0.0 || cfg.learning_rate > 1.0)
        throw ConfigError("boosting learning rate must lie in (0, 1]");
    if (cfg.max_depth < 1) throw ConfigError("boosting max_depth must be >= 1");
    if (cfg.subsample <= 0.0 || cfg.subsample > 1.0 || cfg.colsample <= 0.0 || cfg.colsample > 1.0)
        throw ConfigError("subsample ratios must lie in (0, 1]");

    const std::vector<int> mask_cols = resolve_mask(spec.mask, schema_names);
    const Matrix Xm = gather_columns(train.X, mask_cols);
    const std::size_t n = Xm.rows();
    const int m = static_cast<int>(Xm.cols());
    if (n == 0) throw Error("boosting: empty training set");

    const double base = std::accumulate(train.y.begin(), train.y.end(), 0.0) /
                        static_cast<double>(n);

    const auto sorted = presort_columns(Xm);

    GradPolicy policy;
    policy.reg_lambda = cfg.reg_lambda;
    policy.gamma = cfg.gamma;
    policy.min_child_weight = cfg.min_child_weight;

    BuildParams params;
    params.max_depth = cfg.max_depth;
    params.min_split_weight = std::max(2.0 * cfg.min_child_weight, 2.0);

    std::vector<double> pred(n, base);
    std::vector<double> grad(n, 0.0);
    std::vector<double> hess(n, 1.0);
    std::vector<double> weights(n, 1.0);
    std::vector<std::int32_t> leaf_of_row;
    std::vector<Tree> trees;
    trees.reserve(static_cast<std::size_t>(cfg.trees));

    const int cols_per_tree =
        cfg.colsample < 1.0
            ? std::max(1, static_cast<int>(std::ceil(cfg.colsample * static_cast<double>(m))))
            : m;

    for (int t = 0; t < cfg.trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] = pred[i] - train.y[i];  // squared-loss gradient; hessian is 1
            if (!std::isfinite(grad[i]))
                throw Error("boosting: non-finite residual at row " + std::to_string(i) +
                            " before tree " + std::to_string(t));
        }

        Rng rng(mix_seed(spec.seed, 0x6b00 + static_cast<std::uint64_t>(t)));
        if (cfg.subsample < 1.0) {
            for (std::size_t i = 0; i < n; ++i)
                weights[i] = rng.uniform() < cfg.subsample ? 1.0 : 0.0;
        }
        if (cols_per_tree < m) {
            params.feature_allowed = 0;
            for (int f : rng.sample_indices(static_cast<std::size_t>(m),
                                            static_cast<std::size_t>(cols_per_tree)))
                params.feature_allowed |= 1ULL << f;
        }

        LevelwiseBuilder<GradPolicy> builder(Xm, sorted, weights, grad, hess, policy, params);
        Tree tree = builder.build(rng, &leaf_of_row);
        for (TreeNode& nd : tree.nodes)
            if (nd.is_leaf()) nd.value *= cfg.learning_rate;

        double probe = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] += tree.nodes[static_cast<std::size_t>(leaf_of_row[i])].value;
            probe += pred[i];
        }
        if (!std::isfinite(probe))
            throw Error("boosting: predictions became non-finite after tree " + std::to_string(t));
        trees.push_back(std::move(tree));
    }

    auto model = std::make_unique<BoostModel>(std::move(spec), mask_cols, train.X.cols(), base,
                                              std::move(trees));
    model->bind_schema(schema_names);
    return model;
}

}  // namespace etax::learners
