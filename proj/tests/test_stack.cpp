#include <doctest.h>

#include <cmath>
#include <set>

#include "etax/stack.hpp"
#include "helpers.hpp"

using namespace etax;
using namespace etax::stack;
using namespace etax::learners;
using etax::testing::trip_fixture;

namespace {

RegressorSpec small_forest(const char* name, std::uint64_t seed) {
    RegressorSpec s;
    s.name = name;
    ForestConfig cfg;
    cfg.trees = 8;
    cfg.max_depth = 6;
    cfg.min_samples_leaf = 2;
    cfg.min_samples_split = 4;
    s.params = cfg;
    s.seed = seed;
    return s;
}

RegressorSpec small_boost(const char* name, std::uint64_t seed) {
    RegressorSpec s;
    s.name = name;
    BoostConfig cfg;
    cfg.trees = 15;
    cfg.max_depth = 4;
    cfg.min_child_weight = 2.0;
    s.params = cfg;
    s.seed = seed;
    return s;
}

RegressorSpec mlr(const char* name) {
    RegressorSpec s;
    s.name = name;
    s.params = LinearConfig{};
    return s;
}

// Hand-written level-two linear model through the public document path.
std::shared_ptr<const Regressor> identity_l2(std::size_t n_inputs, std::size_t keep) {
    learners::json doc;
    doc["kind"] = "linear";
    doc["format_version"] = 1;
    learners::json spec;
    spec["name"] = "L2-passthrough";
    spec["family"] = "linear";
    spec["seed"] = 0;
    learners::json mask = learners::json::array();
    std::vector<int> cols;
    for (std::size_t i = 0; i < n_inputs; ++i) {
        mask.push_back("m" + std::to_string(i));
        cols.push_back(static_cast<int>(i));
    }
    spec["mask"] = mask;
    spec["params"] = {{"condition_limit", 1e10}, {"ridge", 1e-8}};
    doc["spec"] = spec;
    doc["mask_cols"] = cols;
    doc["input_width"] = n_inputs;
    std::vector<double> coef(n_inputs, 0.0);
    coef[keep] = 1.0;
    doc["coef"] = coef;
    doc["intercept"] = 0.0;
    doc["ridge_fallback"] = false;
    doc["condition"] = 1.0;
    doc["ridge_used"] = 0.0;
    return std::shared_ptr<const Regressor>(Regressor::from_json(doc));
}

}  // namespace

TEST_CASE("level-two training matrix has one column per level-one model") {
    const auto fx = trip_fixture(400, 401);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    const Matrix P = l1_prediction_matrix(set.l1, fx.splits.validation.X);
    CHECK(P.rows() == fx.splits.validation.rows());
    CHECK(P.cols() == 2);
}

TEST_CASE("an identity-like level-two model passes the first model through") {
    const auto fx = trip_fixture(300, 403);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    StackedEnsemble e = set.variant(0);
    e.l2 = NamedModel{"L2-passthrough", identity_l2(2, 0)};

    for (std::size_t r = 0; r < 20; ++r) {
        const StackPrediction p = predict_stacked(e, fx.splits.test.X.row(r));
        CHECK(p.l2 == p.l1[0]);
        // determinism: a second call gives identical numbers
        const StackPrediction q = predict_stacked(e, fx.splits.test.X.row(r));
        CHECK(q.l2 == p.l2);
        CHECK(q.l1 == p.l1);
    }

    // batch prediction reproduces the per-row calls
    const StackBatchPrediction batch = predict_stacked_batch(e, fx.splits.test.X);
    for (std::size_t r = 0; r < fx.splits.test.rows(); ++r)
        CHECK(batch.l2[r] == predict_stacked(e, fx.splits.test.X.row(r)).l2);
}

TEST_CASE("no training row leaks into the level-two training set") {
    const auto fx = trip_fixture(300, 407);
    auto per_row_hashes = [](const ingest::Dataset& d) {
        std::set<std::uint64_t> hashes;
        for (std::size_t r = 0; r < d.rows(); ++r) hashes.insert(fnv1a64(d.X.row(r)));
        return hashes;
    };
    const auto train_hashes = per_row_hashes(fx.splits.train);
    const auto val_hashes = per_row_hashes(fx.splits.validation);
    for (const auto h : val_hashes) CHECK(train_hashes.count(h) == 0);

    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    CHECK(set.provenance.train_hash == fx.splits.train.row_hash());
    CHECK(set.provenance.validation_hash == fx.splits.validation.row_hash());
    CHECK(set.provenance.train_hash != set.provenance.validation_hash);
}

TEST_CASE("two perfect level-one models make a perfect linear stack") {
    // noiseless step target every tree family represents exactly
    const auto fx = trip_fixture(500, 409, [](std::span<const double> row) {
        return row[11] < 144.0 ? 600.0 : 1200.0;  // column 11 is the time bin
    });
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);

    RegressorSpec m1 = small_boost("L1-a", 3);
    std::get<BoostConfig>(m1.params).learning_rate = 1.0;
    std::get<BoostConfig>(m1.params).min_child_weight = 0.0;
    std::get<BoostConfig>(m1.params).reg_lambda = 0.0;
    std::get<BoostConfig>(m1.params).trees = 3;
    RegressorSpec m2 = m1;
    m2.name = "L1-b";
    m2.seed = 4;

    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation, {m1, m2},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    // both level-one models are exact on validation, so the level-two design
    // has duplicate columns and the ridge fallback engages
    CHECK(linear_ridge_fallback_engaged(*set.l2[0].model));

    const StackedEnsemble e = set.variant(0);
    const StackBatchPrediction p = predict_stacked_batch(e, fx.splits.test.X);
    double mae = 0.0;
    for (std::size_t r = 0; r < fx.splits.test.rows(); ++r)
        mae += std::fabs(p.l2[r] - fx.splits.test.y[r]);
    mae /= static_cast<double>(fx.splits.test.rows());
    CHECK(mae < 1e-6);
}

TEST_CASE("stacking requires at least two level-one models") {
    const auto fx = trip_fixture(200, 411);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    CHECK_THROWS_AS(train_ensemble_set(fx.splits.train, fx.splits.validation,
                                       {small_forest("L1-rf", 1)}, {mlr("L2-mlr")}, engineer, 9,
                                       "h"),
                    ConfigError);
}

TEST_CASE("ensemble persistence round-trips bit-exactly") {
    testing::TempDir tmp("stack");
    const auto fx = trip_fixture(400, 413);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(
        fx.splits.train, fx.splits.validation,
        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
        {mlr("L2-mlr"), small_forest("L2-rf", 5)}, engineer, 9, "confighash");

    const std::string path = tmp.path() + "/ensemble.json";
    save_ensemble(set, path);
    const EnsembleSet loaded = load_ensemble(path);
    CHECK(loaded.l2_names() == set.l2_names());
    CHECK(loaded.provenance.config_hash == "confighash");

    const auto probe = trip_fixture(150, 414);
    for (std::size_t v = 0; v < set.l2.size(); ++v) {
        const auto before = predict_stacked_batch(set.variant(v), probe.splits.test.X);
        const auto after = predict_stacked_batch(loaded.variant(v), probe.splits.test.X);
        for (std::size_t r = 0; r < before.l2.size(); ++r) CHECK(before.l2[r] == after.l2[r]);
    }
}

TEST_CASE("a truncated ensemble document fails to load") {
    testing::TempDir tmp("stack2");
    const auto fx = trip_fixture(200, 417);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    const std::string path = tmp.path() + "/ensemble.json";
    save_ensemble(set, path);
    std::string text = testing::read_file(path);
    testing::write_file(path, text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_ensemble(path), Error);
}

TEST_CASE("a schema fingerprint mismatch is refused with both prints") {
    testing::TempDir tmp("stack3");
    const auto fx = trip_fixture(200, 419);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    const std::string path = tmp.path() + "/ensemble.json";
    save_ensemble(set, path);

    // a different grid changes the engineered schema, hence the fingerprint
    stack::json doc;
    {
        std::ifstream in(path);
        in >> doc;
    }
    doc["engineer"]["grid"]["cell_m"] = 100.0;
    testing::write_file(path, doc.dump());
    try {
        load_ensemble(path);
        FAIL("expected a fingerprint mismatch");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("fingerprint") != std::string::npos);
        CHECK(msg.find(engineer->fingerprint()) != std::string::npos);
    }

    // missing file is an artifact error
    CHECK_THROWS_AS(load_ensemble(tmp.path() + "/gone.json"), ArtifactError);
}

TEST_CASE("models refuse to bind against a renamed input layout") {
    testing::TempDir tmp("stack4");
    const auto fx = trip_fixture(200, 423);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    const std::string path = tmp.path() + "/ensemble.json";
    save_ensemble(set, path);

    // renaming the level-one members changes the level-two input space, so
    // the embedded model fingerprints no longer match
    stack::json doc;
    {
        std::ifstream in(path);
        in >> doc;
    }
    doc["l1"][0]["name"] = "L1-renamed";
    testing::write_file(path, doc.dump());
    try {
        load_ensemble(path);
        FAIL("expected a model fingerprint mismatch");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("level-one outputs") != std::string::npos);
    }
}

TEST_CASE("variant lookup by name validates the name") {
    const auto fx = trip_fixture(200, 421);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(fx.engineer);
    const auto set = train_ensemble_set(fx.splits.train, fx.splits.validation,
                                        {small_forest("L1-rf", 1), small_boost("L1-gbt", 2)},
                                        {mlr("L2-mlr")}, engineer, 9, "h");
    CHECK(set.variant("L2-mlr").l2.name == "L2-mlr");
    CHECK_THROWS_AS(set.variant("L2-missing"), Error);
}
