#include "etax/learners.hpp"

#include <algorithm>

#include "models_detail.hpp"

namespace etax::learners {

using detail::Tree;

std::string family_name(Family f) {
    switch (f) {
        case Family::random_forest: return "random_forest";
        case Family::gradient_boosting: return "gradient_boosting";
        case Family::feedforward_net: return "feedforward_net";
        case Family::linear: return "linear";
    }
    throw Error("unreachable family");
}

Family family_from_name(const std::string& name) {
    if (name == "random_forest") return Family::random_forest;
    if (name == "gradient_boosting") return Family::gradient_boosting;
    if (name == "feedforward_net") return Family::feedforward_net;
    if (name == "linear") return Family::linear;
    throw ConfigError("unknown model family: " + name);
}

json RegressorSpec::to_json() const {
    json j;
    j["name"] = name;
    j["family"] = family_name(family());
    j["seed"] = seed;
    j["mask"] = mask.empty() ? json("all") : json(mask);
    json p;
    switch (family()) {
        case Family::random_forest: {
            const auto& c = std::get<ForestConfig>(params);
            p = {{"trees", c.trees},
                 {"max_depth", c.max_depth},
                 {"min_samples_leaf", c.min_samples_leaf},
                 {"min_samples_split", c.min_samples_split},
                 {"max_features", c.max_features},
                 {"bootstrap", c.bootstrap}};
            break;
        }
        case Family::gradient_boosting: {
            const auto& c = std::get<BoostConfig>(params);
            p = {{"trees", c.trees},
                 {"max_depth", c.max_depth},
                 {"learning_rate", c.learning_rate},
                 {"min_child_weight", c.min_child_weight},
                 {"subsample", c.subsample},
                 {"gamma", c.gamma},
                 {"colsample", c.colsample},
                 {"reg_lambda", c.reg_lambda}};
            break;
        }
        case Family::feedforward_net: {
            const auto& c = std::get<NetConfig>(params);
            p = {{"hidden", c.hidden},
                 {"batch_size", c.batch_size},
                 {"learning_rate", c.learning_rate},
                 {"epochs", c.epochs}};
            break;
        }
        case Family::linear: {
            const auto& c = std::get<LinearConfig>(params);
            p = {{"condition_limit", c.condition_limit}, {"ridge", c.ridge}};
            break;
        }
    }
    j["params"] = p;
    return j;
}

RegressorSpec RegressorSpec::from_json(const json& j) {
    RegressorSpec s;
    s.name = j.value("name", "");
    s.seed = j.value("seed", 0ULL);
    if (j.contains("mask") && j.at("mask").is_array())
        s.mask = j.at("mask").get<std::vector<std::string>>();
    const Family family = family_from_name(j.at("family").get<std::string>());
    const json p = j.value("params", json::object());
    switch (family) {
        case Family::random_forest: {
            ForestConfig c;
            c.trees = p.value("trees", c.trees);
            c.max_depth = p.value("max_depth", c.max_depth);
            c.min_samples_leaf = p.value("min_samples_leaf", c.min_samples_leaf);
            c.min_samples_split = p.value("min_samples_split", c.min_samples_split);
            c.max_features = p.value("max_features", c.max_features);
            c.bootstrap = p.value("bootstrap", c.bootstrap);
            s.params = c;
            break;
        }
        case Family::gradient_boosting: {
            BoostConfig c;
            c.trees = p.value("trees", c.trees);
            c.max_depth = p.value("max_depth", c.max_depth);
            c.learning_rate = p.value("learning_rate", c.learning_rate);
            c.min_child_weight = p.value("min_child_weight", c.min_child_weight);
            c.subsample = p.value("subsample", c.subsample);
            c.gamma = p.value("gamma", c.gamma);
            c.colsample = p.value("colsample", c.colsample);
            c.reg_lambda = p.value("reg_lambda", c.reg_lambda);
            s.params = c;
            break;
        }
        case Family::feedforward_net: {
            NetConfig c;
            if (p.contains("hidden")) c.hidden = p.at("hidden").get<std::vector<int>>();
            c.batch_size = p.value("batch_size", c.batch_size);
            c.learning_rate = p.value("learning_rate", c.learning_rate);
            c.epochs = p.value("epochs", c.epochs);
            s.params = c;
            break;
        }
        case Family::linear: {
            LinearConfig c;
            c.condition_limit = p.value("condition_limit", c.condition_limit);
            c.ridge = p.value("ridge", c.ridge);
            s.params = c;
            break;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Regressor base
// ---------------------------------------------------------------------------

double Regressor::predict_row(std::span<const double> full_row) const {
    if (full_row.size() != input_width_)
        throw Error("predict: expected " + std::to_string(input_width_) + " columns, got " +
                    std::to_string(full_row.size()));
    std::vector<double> masked(mask_cols_.size());
    for (std::size_t i = 0; i < mask_cols_.size(); ++i)
        masked[i] = full_row[static_cast<std::size_t>(mask_cols_[i])];
    return predict_masked_row(masked);
}

std::vector<double> Regressor::predict(const Matrix& X) const {
    if (X.cols() != input_width_)
        throw Error("predict: expected " + std::to_string(input_width_) + " columns, got " +
                    std::to_string(X.cols()));
    std::vector<double> out(X.rows());
    parallel_for(X.rows(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> masked(mask_cols_.size());
        for (std::size_t r = begin; r < end; ++r) {
            const auto row = X.row(r);
            for (std::size_t i = 0; i < mask_cols_.size(); ++i)
                masked[i] = row[static_cast<std::size_t>(mask_cols_[i])];
            out[r] = predict_masked_row(masked);
        }
    });
    return out;
}

void Regressor::predict_masked(const Matrix& Xmask, std::span<double> out) const {
    if (Xmask.cols() != mask_cols_.size())
        throw Error("predict_masked: expected " + std::to_string(mask_cols_.size()) +
                    " columns, got " + std::to_string(Xmask.cols()));
    if (out.size() != Xmask.rows()) throw Error("predict_masked: output size mismatch");
    parallel_for(Xmask.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) out[r] = predict_masked_row(Xmask.row(r));
    });
}

std::string schema_names_fingerprint(const std::vector<std::string>& names) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : names) {
        h = fnv1a64(n, h);
        h = fnv1a64("|", h);
    }
    return to_hex(h);
}

json Regressor::header_json(const char* kind) const {
    json j;
    j["kind"] = kind;
    j["format_version"] = 1;
    j["spec"] = spec_.to_json();
    j["mask"] = spec_.mask;
    j["mask_cols"] = mask_cols_;
    j["input_width"] = input_width_;
    j["schema_fingerprint"] = schema_fingerprint_;
    return j;
}

std::unique_ptr<Regressor> Regressor::from_json(const json& j) {
    const std::string kind = j.value("kind", "");
    if (j.value("format_version", 0) != 1)
        throw Error("unsupported model document version for kind '" + kind + "'");
    std::unique_ptr<Regressor> model;
    if (kind == "forest")
        model = detail::ForestModel::load(j);
    else if (kind == "boost")
        model = detail::BoostModel::load(j);
    else if (kind == "net")
        model = detail::NetModel::load(j);
    else if (kind == "linear")
        model = detail::LinearModel::load(j);
    else
        throw Error("unknown model kind: '" + kind + "'");
    model->schema_fingerprint_ = j.value("schema_fingerprint", "");
    return model;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace detail {

std::vector<int> resolve_mask(std::vector<std::string>& mask_names,
                              const std::vector<std::string>& schema_names) {
    if (mask_names.empty()) mask_names = schema_names;  // default: full schema
    std::vector<int> cols;
    cols.reserve(mask_names.size());
    for (const auto& name : mask_names) {
        const auto it = std::find(schema_names.begin(), schema_names.end(), name);
        if (it == schema_names.end())
            throw ConfigError("feature mask names unknown column '" + name + "'");
        cols.push_back(static_cast<int>(it - schema_names.begin()));
    }
    return cols;
}

Matrix gather_columns(const Matrix& X, const std::vector<int>& cols) {
    Matrix out(X.rows(), cols.size());
    for (std::size_t r = 0; r < X.rows(); ++r) {
        const auto row = X.row(r);
        auto dst = out.row(r);
        for (std::size_t i = 0; i < cols.size(); ++i)
            dst[i] = row[static_cast<std::size_t>(cols[i])];
    }
    return out;
}

json tree_to_json(const Tree& tree) {
    // nested node document; iterative to keep deep trees off the call stack
    std::vector<json*> slot(tree.nodes.size(), nullptr);
    json root;
    std::vector<std::int32_t> stack = {0};
    slot[0] = &root;
    while (!stack.empty()) {
        const std::int32_t id = stack.back();
        stack.pop_back();
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(id)];
        json& out = *slot[static_cast<std::size_t>(id)];
        if (nd.is_leaf()) {
            out = json{{"v", nd.value}};
        } else {
            out = json{{"f", nd.feature}, {"t", nd.threshold}, {"l", nullptr}, {"r", nullptr}};
            slot[static_cast<std::size_t>(nd.left)] = &out["l"];
            slot[static_cast<std::size_t>(nd.right)] = &out["r"];
            stack.push_back(nd.left);
            stack.push_back(nd.right);
        }
    }
    return root;
}

Tree tree_from_json(const json& j) {
    Tree tree;
    std::vector<const json*> stack;
    tree.nodes.push_back({});
    std::vector<std::int32_t> ids;
    stack.push_back(&j);
    ids.push_back(0);
    while (!stack.empty()) {
        const json& node = *stack.back();
        stack.pop_back();
        const std::int32_t id = ids.back();
        ids.pop_back();
        TreeNode& nd = tree.nodes[static_cast<std::size_t>(id)];
        if (node.contains("v")) {
            nd.feature = -1;
            nd.value = node.at("v").get<double>();
        } else {
            nd.feature = node.at("f").get<int>();
            nd.threshold = node.at("t").get<double>();
            nd.left = static_cast<std::int32_t>(tree.nodes.size());
            nd.right = nd.left + 1;
            const std::int32_t left = nd.left;
            tree.nodes.push_back({});
            tree.nodes.push_back({});
            stack.push_back(&node.at("l"));
            ids.push_back(left);
            stack.push_back(&node.at("r"));
            ids.push_back(left + 1);
        }
    }
    return tree;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// fit dispatch and accessors
// ---------------------------------------------------------------------------

std::unique_ptr<Regressor> fit(const RegressorSpec& spec, const Dataset& train,
                               const Dataset* validation,
                               const std::vector<std::string>& schema_names) {
    switch (spec.family()) {
        case Family::random_forest: return fit_random_forest(train, schema_names, spec);
        case Family::gradient_boosting: return fit_gradient_boosting(train, schema_names, spec);
        case Family::feedforward_net: {
            if (validation) return fit_mlp(train, *validation, schema_names, spec);
            // No validation split available: the best-epoch rule still needs
            // one, so carve a seeded 10% holdout out of the training rows.
            const std::size_t n = train.rows();
            if (n < 10) throw Error("too few rows to carve a net holdout");
            Rng rng(mix_seed(spec.seed, 0x401d));
            std::vector<int> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
            rng.shuffle(order);
            const std::size_t n_hold = std::max<std::size_t>(1, n / 10);
            Dataset fit_part, hold_part;
            auto fill = [&](Dataset& d, std::size_t begin, std::size_t end) {
                d.split = train.split;
                d.X = Matrix(0, train.X.cols());
                for (std::size_t i = begin; i < end; ++i) {
                    const auto r = static_cast<std::size_t>(order[i]);
                    d.X.append_row(train.X.row(r));
                    d.y.push_back(train.y[r]);
                    d.ids.push_back(train.ids[r]);
                }
            };
            fill(hold_part, 0, n_hold);
            fill(fit_part, n_hold, n);
            return fit_mlp(fit_part, hold_part, schema_names, spec);
        }
        case Family::linear: return fit_mlr(train, schema_names, spec);
    }
    throw Error("unreachable family");
}

const NetTrainingInfo* net_training_info(const Regressor& model) {
    const auto* net = dynamic_cast<const detail::NetModel*>(&model);
    return net ? &net->info() : nullptr;
}

bool linear_ridge_fallback_engaged(const Regressor& model) {
    const auto* lin = dynamic_cast<const detail::LinearModel*>(&model);
    if (!lin) throw Error("not a linear model");
    return lin->ridge_fallback();
}

std::vector<double> linear_coefficients(const Regressor& model) {
    const auto* lin = dynamic_cast<const detail::LinearModel*>(&model);
    if (!lin) throw Error("not a linear model");
    std::vector<double> out = lin->coef();
    out.push_back(lin->intercept());
    return out;
}

}  // namespace etax::learners
