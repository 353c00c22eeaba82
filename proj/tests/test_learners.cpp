#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "etax/learners.hpp"
#include "helpers.hpp"

using namespace etax;
using namespace etax::learners;
using etax::testing::feature_names;
using etax::testing::make_dataset;
using etax::testing::random_dataset;

namespace {

RegressorSpec forest_spec(ForestConfig cfg, std::uint64_t seed = 1) {
    RegressorSpec s;
    s.params = cfg;
    s.seed = seed;
    return s;
}

RegressorSpec boost_spec(BoostConfig cfg, std::uint64_t seed = 1) {
    RegressorSpec s;
    s.params = cfg;
    s.seed = seed;
    return s;
}

RegressorSpec net_spec(NetConfig cfg, std::uint64_t seed = 1) {
    RegressorSpec s;
    s.params = cfg;
    s.seed = seed;
    return s;
}

RegressorSpec mlr_spec(std::uint64_t seed = 1) {
    RegressorSpec s;
    s.params = LinearConfig{};
    s.seed = seed;
    return s;
}

double train_mae(const Regressor& model, const ingest::Dataset& d) {
    const auto pred = model.predict(d.X);
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += std::fabs(pred[i] - d.y[i]);
    return mae / static_cast<double>(pred.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// random forest
// ---------------------------------------------------------------------------

TEST_CASE("forest on a constant target predicts the constant") {
    const auto d = make_dataset({{1, 0}, {2, 1}, {3, 0}, {4, 1}, {5, 0}, {6, 1}},
                                {7.5, 7.5, 7.5, 7.5, 7.5, 7.5});
    ForestConfig cfg;
    cfg.trees = 10;
    cfg.max_depth = 4;
    cfg.min_samples_leaf = 1;
    cfg.min_samples_split = 2;
    const auto model = fit_random_forest(d, feature_names(2), forest_spec(cfg));
    for (std::size_t r = 0; r < d.rows(); ++r) CHECK(model->predict_row(d.X.row(r)) == 7.5);
}

TEST_CASE("single depth-1 tree reproduces the hand-computed two-leaf split") {
    // best split is between 3 and 10 (threshold 6.5): leaf means 12 and 42
    const auto d = make_dataset({{1}, {2}, {3}, {10}, {11}, {12}}, {10, 12, 14, 40, 44, 42});
    ForestConfig cfg;
    cfg.trees = 1;
    cfg.max_depth = 1;
    cfg.min_samples_leaf = 1;
    cfg.min_samples_split = 2;
    cfg.bootstrap = false;
    cfg.max_features = 1;
    const auto model = fit_random_forest(d, feature_names(1), forest_spec(cfg));
    const std::vector<double> lo = {5.0}, hi = {8.0};
    CHECK(model->predict_masked_row(lo) == 12.0);
    CHECK(model->predict_masked_row(hi) == 42.0);
}

TEST_CASE("forest predictions stay inside the training target range") {
    const auto d = random_dataset(300, 5, 77, 0.5);
    ForestConfig cfg;
    cfg.trees = 25;
    cfg.max_depth = 9;
    cfg.min_samples_leaf = 1;
    cfg.min_samples_split = 2;
    const auto model = fit_random_forest(d, feature_names(5), forest_spec(cfg));
    const auto [lo_it, hi_it] = std::minmax_element(d.y.begin(), d.y.end());
    const auto probe = random_dataset(200, 5, 78, 0.0);
    for (const double p : model->predict(probe.X)) {
        CHECK(p >= *lo_it - 1e-9);
        CHECK(p <= *hi_it + 1e-9);
    }
}

TEST_CASE("forest refuses fewer rows than the split minimum") {
    const auto d = make_dataset({{1}, {2}}, {1, 2});
    ForestConfig cfg;
    cfg.min_samples_split = 4;
    cfg.trees = 1;
    CHECK_THROWS_AS(fit_random_forest(d, feature_names(1), forest_spec(cfg)), Error);
}

TEST_CASE("same spec, seed and data give bit-identical predictions") {
    const auto d = random_dataset(200, 4, 79, 1.0);
    ForestConfig cfg;
    cfg.trees = 12;
    cfg.max_depth = 6;
    const auto a = fit_random_forest(d, feature_names(4), forest_spec(cfg, 5));
    const auto b = fit_random_forest(d, feature_names(4), forest_spec(cfg, 5));
    const auto pa = a->predict(d.X);
    const auto pb = b->predict(d.X);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    // a different seed gives a different forest
    const auto c = fit_random_forest(d, feature_names(4), forest_spec(cfg, 6));
    const auto pc = c->predict(d.X);
    CHECK(pa != pc);
}

// ---------------------------------------------------------------------------
// gradient boosting
// ---------------------------------------------------------------------------

TEST_CASE("boosting with one full tree memorizes distinct rows") {
    const auto d = make_dataset({{1}, {2}, {3}, {4}}, {10, -3, 25, 8});
    BoostConfig cfg;
    cfg.trees = 1;
    cfg.learning_rate = 1.0;
    cfg.max_depth = 10;
    cfg.min_child_weight = 0.0;
    cfg.reg_lambda = 0.0;
    const auto model = fit_gradient_boosting(d, feature_names(1), boost_spec(cfg));
    CHECK(train_mae(*model, d) < 1e-9);
}

TEST_CASE("boosting with zero trees predicts the target mean") {
    const auto d = make_dataset({{1}, {2}, {3}, {4}}, {10, 20, 30, 60});
    BoostConfig cfg;
    cfg.trees = 0;
    const auto model = fit_gradient_boosting(d, feature_names(1), boost_spec(cfg));
    const std::vector<double> x = {2.5};
    CHECK(model->predict_masked_row(x) == 30.0);
}

TEST_CASE("boosting training loss never increases with more trees") {
    const auto d = random_dataset(400, 4, 91, 2.0, true);
    BoostConfig cfg;
    cfg.max_depth = 3;
    cfg.learning_rate = 0.3;
    cfg.min_child_weight = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int trees : {0, 1, 2, 4, 8, 16, 32, 64}) {
        BoostConfig c = cfg;
        c.trees = trees;
        const auto model = fit_gradient_boosting(d, feature_names(4), boost_spec(c, 3));
        const auto pred = model->predict(d.X);
        double sse = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            sse += (pred[i] - d.y[i]) * (pred[i] - d.y[i]);
        CHECK(sse <= prev + 1e-9 * std::max(1.0, prev));
        prev = sse;
    }
}

TEST_CASE("boosting validates its configuration") {
    const auto d = make_dataset({{1}, {2}}, {1, 2});
    BoostConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(fit_gradient_boosting(d, feature_names(1), boost_spec(cfg)), ConfigError);
    cfg.learning_rate = 1.5;
    CHECK_THROWS_AS(fit_gradient_boosting(d, feature_names(1), boost_spec(cfg)), ConfigError);
}

// ---------------------------------------------------------------------------
// feedforward net
// ---------------------------------------------------------------------------

TEST_CASE("net with no hidden layers recovers an exact linear relation") {
    Rng rng(101);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 256; ++i) {
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        rows.push_back({a, b});
        y.push_back(3.0 * a - 2.0 * b + 1.0);
    }
    const auto train = make_dataset(rows, y);
    const auto val = make_dataset({rows[0], rows[1], rows[2], rows[3]},
                                  {y[0], y[1], y[2], y[3]}, "validation");
    NetConfig cfg;
    cfg.hidden = {};
    cfg.batch_size = 32;
    cfg.learning_rate = 0.02;
    cfg.epochs = 200;
    const auto model = fit_mlp(train, val, feature_names(2), net_spec(cfg));

    double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double y_var = 0.0;
    for (double v : y) y_var += (v - y_mean) * (v - y_mean);
    const double y_std = std::sqrt(y_var / y.size());
    CHECK(train_mae(*model, train) < 1e-3 * y_std);
}

TEST_CASE("net keeps the parameters of the best validation epoch") {
    const auto train = random_dataset(300, 3, 103, 1.0, true);
    const auto val = random_dataset(100, 3, 104, 1.0, true);
    NetConfig cfg;
    cfg.hidden = {16, 8};
    cfg.epochs = 8;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    const auto model = fit_mlp(train, val, feature_names(3), net_spec(cfg));
    const NetTrainingInfo* info = net_training_info(*model);
    REQUIRE(info != nullptr);
    REQUIRE(info->validation_mae_per_epoch.size() == 8);
    const auto best = std::min_element(info->validation_mae_per_epoch.begin(),
                                       info->validation_mae_per_epoch.end());
    // first minimum wins, and the returned parameters reproduce it
    CHECK(info->best_epoch ==
          static_cast<int>(best - info->validation_mae_per_epoch.begin()) + 1);
    CHECK(info->best_validation_mae == *best);
    CHECK(train_mae(*model, val) == doctest::Approx(*best).epsilon(1e-12));
}

TEST_CASE("net analytic gradients match central finite differences") {
    const auto batch = random_dataset(24, 3, 107, 0.5, true);
    NetConfig cfg;
    cfg.hidden = {8, 6};
    cfg.epochs = 1;
    cfg.batch_size = 8;
    const auto val = random_dataset(10, 3, 108);
    auto model = fit_mlp(batch, val, feature_names(3), net_spec(cfg, 9));

    const Matrix& Xm = batch.X;
    std::vector<double> grad;
    net_loss_and_gradient(*model, Xm, batch.y, &grad);
    std::vector<double> params = net_parameters(*model);
    REQUIRE(grad.size() == params.size());

    const double step = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double> p = params;
        p[i] = params[i] + step;
        net_set_parameters(*model, p);
        const double up = net_loss_and_gradient(*model, Xm, batch.y, nullptr);
        p[i] = params[i] - step;
        net_set_parameters(*model, p);
        const double down = net_loss_and_gradient(*model, Xm, batch.y, nullptr);
        const double numeric = (up - down) / (2.0 * step);
        const double rel = std::fabs(numeric - grad[i]) /
                           std::max({std::fabs(numeric), std::fabs(grad[i]), 1e-8});
        worst = std::max(worst, rel);
    }
    net_set_parameters(*model, params);
    CHECK(worst < 1e-4);
}

TEST_CASE("net divergence is reported as fatal") {
    const auto train = random_dataset(64, 2, 111, 0.0);
    const auto val = random_dataset(16, 2, 112);
    NetConfig cfg;
    cfg.hidden = {};
    cfg.epochs = 3;
    cfg.learning_rate = 1e200;  // squared residuals overflow immediately
    CHECK_THROWS_AS(fit_mlp(train, val, feature_names(2), net_spec(cfg)), Error);
}

// ---------------------------------------------------------------------------
// linear regression
// ---------------------------------------------------------------------------

TEST_CASE("ols recovers an exact line") {
    Rng rng(113);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-5, 5);
        rows.push_back({x});
        y.push_back(3.0 * x + 1.0);
    }
    const auto d = make_dataset(rows, y);
    const auto model = fit_mlr(d, feature_names(1), mlr_spec());
    const auto coef = linear_coefficients(*model);
    REQUIRE(coef.size() == 2);
    CHECK(coef[0] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(coef[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(linear_ridge_fallback_engaged(*model));
}

TEST_CASE("duplicate columns engage the ridge fallback but keep the fit") {
    Rng rng(117);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 60; ++i) {
        const double x = rng.uniform(-2, 2);
        rows.push_back({x, x});
        y.push_back(4.0 * x + 0.5);
    }
    const auto d = make_dataset(rows, y);
    const auto model = fit_mlr(d, feature_names(2), mlr_spec());
    CHECK(linear_ridge_fallback_engaged(*model));
    CHECK(train_mae(*model, d) < 1e-4);
}

TEST_CASE("mlr matches a hand-solved 3x3 normal equations system") {
    // X columns (1, x1, x2) with rows x1 = (0,1,2,3), x2 = (1,0,1,0) and
    // y = (1,2,4,4) give X'X = [[4,6,2],[6,14,2],[2,2,2]], X'y = (11,22,5);
    // eliminating by hand: intercept 0.5, b1 1.25, b2 0.75.
    const auto d = make_dataset({{0, 1}, {1, 0}, {2, 1}, {3, 0}}, {1, 2, 4, 4});
    const auto model = fit_mlr(d, feature_names(2), mlr_spec());
    const auto coef = linear_coefficients(*model);
    REQUIRE(coef.size() == 3);
    CHECK(coef[0] == doctest::Approx(1.25).epsilon(1e-10));
    CHECK(coef[1] == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(coef[2] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("ols residuals are orthogonal to the design columns") {
    const auto d = random_dataset(200, 4, 119, 3.0);
    const auto model = fit_mlr(d, feature_names(4), mlr_spec());
    const auto pred = model->predict(d.X);
    double y_mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / d.y.size();
    double y_var = 0.0;
    for (double v : d.y) y_var += (v - y_mean) * (v - y_mean);
    const double y_std = std::sqrt(y_var / d.y.size());

    for (std::size_t c = 0; c < d.X.cols(); ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < d.rows(); ++r) dot += d.X(r, c) * (d.y[r] - pred[r]);
        CHECK(std::fabs(dot) < 1e-6 * static_cast<double>(d.rows()) * y_std);
    }
}

// ---------------------------------------------------------------------------
// masks, prediction contracts, persistence
// ---------------------------------------------------------------------------

TEST_CASE("feature masks restrict what a model sees") {
    auto d = random_dataset(150, 3, 131, 0.1);
    // make column 2 pure noise and mask it away
    RegressorSpec spec = mlr_spec();
    spec.mask = {"f0", "f1"};
    const auto model = fit_mlr(d, feature_names(3), spec);
    CHECK(model->mask_cols() == std::vector<int>{0, 1});
    // prediction from a full row equals prediction from the masked pair
    const std::vector<double> masked = {d.X(0, 0), d.X(0, 1)};
    CHECK(model->predict_row(d.X.row(0)) == model->predict_masked_row(masked));
    // unknown mask names are fatal
    RegressorSpec bad = mlr_spec();
    bad.mask = {"f0", "nope"};
    CHECK_THROWS_AS(fit_mlr(d, feature_names(3), bad), ConfigError);
}

TEST_CASE("batch prediction equals the map of single-row predictions") {
    const auto d = random_dataset(100, 4, 137, 1.0, true);
    BoostConfig cfg;
    cfg.trees = 20;
    cfg.max_depth = 4;
    cfg.min_child_weight = 1.0;
    const auto model = fit_gradient_boosting(d, feature_names(4), boost_spec(cfg));
    const auto batch = model->predict(d.X);
    for (std::size_t r = 0; r < d.rows(); ++r) CHECK(batch[r] == model->predict_row(d.X.row(r)));
}

TEST_CASE("model documents round-trip through json with identical predictions") {
    const auto d = random_dataset(120, 3, 139, 1.0, true);
    const auto probe = random_dataset(50, 3, 140);

    std::vector<std::unique_ptr<Regressor>> models;
    ForestConfig fc;
    fc.trees = 8;
    fc.max_depth = 5;
    models.push_back(fit_random_forest(d, feature_names(3), forest_spec(fc)));
    BoostConfig bc;
    bc.trees = 12;
    bc.max_depth = 3;
    bc.min_child_weight = 1.0;
    models.push_back(fit_gradient_boosting(d, feature_names(3), boost_spec(bc)));
    NetConfig nc;
    nc.hidden = {6};
    nc.epochs = 3;
    const auto val = random_dataset(30, 3, 141);
    models.push_back(fit_mlp(d, val, feature_names(3), net_spec(nc)));
    models.push_back(fit_mlr(d, feature_names(3), mlr_spec()));

    for (const auto& model : models) {
        const auto doc = model->to_json();
        const auto loaded = Regressor::from_json(doc);
        const auto before = model->predict(probe.X);
        const auto after = loaded->predict(probe.X);
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
    }
}

TEST_CASE("prediction rejects rows of the wrong width") {
    const auto d = random_dataset(50, 3, 149);
    const auto model = fit_mlr(d, feature_names(3), mlr_spec());
    const std::vector<double> short_row = {1.0, 2.0};
    CHECK_THROWS_AS(model->predict_row(short_row), Error);
}
