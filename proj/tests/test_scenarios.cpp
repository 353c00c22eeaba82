#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "etax/scenarios.hpp"
#include "helpers.hpp"

using namespace etax;
using namespace etax::scenarios;
using etax::testing::trip_fixture;

namespace {

// Streaming statistics oracle (Welford) for the separation report.
struct Streaming {
    std::size_t n = 0;
    double mean = 0.0, m2 = 0.0;

    void push(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double stddev() const { return n ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }
};

AttributionSet attr_set(const std::vector<std::vector<double>>& rows,
                        std::vector<std::string> names) {
    AttributionSet s;
    s.features = std::move(names);
    s.values = Matrix(0, s.features.size());
    for (const auto& r : rows) s.values.append_row(r);
    return s;
}

}  // namespace

TEST_CASE("built-in scenarios carry the documented definitions") {
    const auto all = builtin_scenarios();
    REQUIRE(all.size() == 4);
    CHECK(all[0].id == "SC1");
    CHECK_FALSE(all[0].ordered);
    const ScenarioSpec sc2_spec = builtin_scenario("SC2");
    const auto sc2 = std::get<BinRangePredicate>(sc2_spec.lower);
    CHECK(sc2.lo == 36);
    CHECK(sc2.hi == 60);
    const auto sc2h = std::get<BinRangePredicate>(sc2_spec.higher);
    CHECK(sc2h.lo == 192);
    CHECK(sc2h.hi == 216);
    const ScenarioSpec sc1_spec = builtin_scenario("SC1");
    const auto sc1lo = std::get<RectPredicate>(sc1_spec.lower);
    CHECK(sc1lo.min_lat == 40.7975);
    CHECK(sc1lo.max_lon == -73.9356);
    CHECK_THROWS_AS(builtin_scenario("SC9"), ConfigError);
}

TEST_CASE("quantile interpolation matches hand values") {
    // for (1,2,3,4): q25 sits at position 0.75 -> 1.75
    CHECK(quantile({4, 2, 1, 3}, 0.25) == doctest::Approx(1.75).epsilon(1e-12));
    CHECK(quantile({4, 2, 1, 3}, 0.5) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(quantile({4, 2, 1, 3}, 0.0) == 1.0);
    CHECK(quantile({4, 2, 1, 3}, 1.0) == 4.0);
}

TEST_CASE("scenario sampling is deterministic and predicate-sound") {
    const auto fx = trip_fixture(3000, 501);
    const auto names = fx.engineer.schema().names();

    for (const std::string id : {"SC2", "SC3", "SC4"}) {
        ScenarioSpec spec = builtin_scenario(id);
        spec.per_side = 8;
        const ScenarioSamples s = select_scenario_samples(fx.splits.test, names, spec, 7);
        REQUIRE(s.lower_rows.size() == 8);
        REQUIRE(s.higher_rows.size() == 8);

        const ScenarioSamples again = select_scenario_samples(fx.splits.test, names, spec, 7);
        CHECK(again.lower_rows == s.lower_rows);
        CHECK(again.higher_rows == s.higher_rows);

        for (std::size_t r : s.lower_rows)
            CHECK(predicate_holds(spec.lower, fx.splits.test, names, r));
        for (std::size_t r : s.higher_rows)
            CHECK(predicate_holds(spec.higher, fx.splits.test, names, r));
    }
}

TEST_CASE("quantile-band sampling stays inside the band bounds") {
    const auto fx = trip_fixture(4000, 503);
    const auto names = fx.engineer.schema().names();
    ScenarioSpec spec = builtin_scenario("SC4");
    spec.per_side = 10;
    const ScenarioSamples s = select_scenario_samples(fx.splits.test, names, spec, 11);

    // oracle bounds from an independent sort
    const int col = fx.engineer.schema().index_of(ingest::feat::kDistance);
    std::vector<double> values;
    for (std::size_t r = 0; r < fx.splits.test.rows(); ++r)
        values.push_back(fx.splits.test.X(r, static_cast<std::size_t>(col)));
    std::sort(values.begin(), values.end());
    auto q = [&](double level) {
        const double pos = level * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - std::floor(pos);
        return values[lo] * (1 - frac) + values[std::min(values.size() - 1, lo + 1)] * frac;
    };
    for (std::size_t r : s.lower_rows) {
        const double v = fx.splits.test.X(r, static_cast<std::size_t>(col));
        CHECK(v > q(0.10));
        CHECK(v <= q(0.25));
    }
    for (std::size_t r : s.higher_rows) {
        const double v = fx.splits.test.X(r, static_cast<std::size_t>(col));
        CHECK(v >= q(0.75));
        CHECK(v < q(0.90));
    }
}

TEST_CASE("too few qualifying rows fail with both counts") {
    const auto fx = trip_fixture(60, 507);
    const auto names = fx.engineer.schema().names();
    ScenarioSpec spec = builtin_scenario("SC2");
    spec.per_side = 50;
    try {
        select_scenario_samples(fx.splits.test, names, spec, 1);
        FAIL("expected a shortage error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("lower") != std::string::npos);
        CHECK(msg.find("higher") != std::string::npos);
    }
}

TEST_CASE("identical sides give zero margins") {
    ScenarioSpec spec = builtin_scenario("SC4");
    spec.features_of_interest = {"d"};
    const auto side = attr_set({{1, 2}, {3, 4}, {5, 6}}, {"d", "t"});
    const SeparationReport rep = scenario_separation_report(side, side, spec);
    CHECK(rep.margins.at("d") == 0.0);
    REQUIRE(rep.sign_correct.has_value());
    CHECK_FALSE(*rep.sign_correct);
}

TEST_CASE("a constructed +-1 separation is sign-correct with margin two") {
    ScenarioSpec spec = builtin_scenario("SC2");
    spec.features_of_interest = {"x"};
    const auto lower = attr_set({{-1, 0}, {-1, 5}, {-1, -5}}, {"x", "other"});
    const auto higher = attr_set({{1, 2}, {1, -2}, {1, 0}}, {"x", "other"});
    const SeparationReport rep = scenario_separation_report(lower, higher, spec);
    CHECK(rep.margins.at("x") == doctest::Approx(2.0).epsilon(1e-12));
    REQUIRE(rep.sign_correct.has_value());
    CHECK(*rep.sign_correct);
    // features outside the interest list get stats but no margin
    CHECK(rep.margins.count("other") == 0);
}

TEST_CASE("report statistics match a streaming oracle") {
    Rng rng(509);
    std::vector<std::vector<double>> lo_rows, hi_rows;
    for (int i = 0; i < 40; ++i) {
        lo_rows.push_back({rng.normal(0, 2), rng.uniform(-3, 3)});
        hi_rows.push_back({rng.normal(1.5, 2), rng.uniform(-3, 3)});
    }
    ScenarioSpec spec = builtin_scenario("SC4");
    spec.features_of_interest = {"a"};
    const SeparationReport rep =
        scenario_separation_report(attr_set(lo_rows, {"a", "b"}), attr_set(hi_rows, {"a", "b"}), spec);

    for (std::size_t c = 0; c < 2; ++c) {
        Streaming lo, hi;
        for (const auto& r : lo_rows) lo.push(r[c]);
        for (const auto& r : hi_rows) hi.push(r[c]);
        CHECK(std::fabs(rep.lower[c].mean - lo.mean) < 1e-12);
        CHECK(std::fabs(rep.higher[c].mean - hi.mean) < 1e-12);
        CHECK(std::fabs(rep.lower[c].stddev - lo.stddev()) < 1e-12);
        CHECK(std::fabs(rep.higher[c].stddev - hi.stddev()) < 1e-12);
    }
    CHECK(rep.margins.at("a") ==
          doctest::Approx(rep.higher[0].mean - rep.lower[0].mean).epsilon(1e-15));
}

TEST_CASE("a missing feature of interest is fatal") {
    ScenarioSpec spec = builtin_scenario("SC3");
    const auto side = attr_set({{1.0}}, {"not_temperature"});
    CHECK_THROWS_AS(scenario_separation_report(side, side, spec), Error);
}
