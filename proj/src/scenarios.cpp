#include "etax/scenarios.hpp"

#include <algorithm>
#include <cmath>

namespace etax::scenarios {

using ingest::feat::kDistance;
using ingest::feat::kPickupLat;
using ingest::feat::kPickupLon;
using ingest::feat::kTemperature;
using ingest::feat::kTimeBin;

std::vector<ScenarioSpec> builtin_scenarios() {
    std::vector<ScenarioSpec> out;
    {
        ScenarioSpec s;
        s.id = "SC1";
        s.description = "off city-center vs city-center pickup";
        s.lower = RectPredicate{40.7975, -73.9619, 40.8186, -73.9356};
        s.higher = RectPredicate{40.7361, -73.9980, 40.7644, -73.9770};
        s.features_of_interest = {kPickupLat, kPickupLon};
        s.ordered = false;
        out.push_back(s);
    }
    {
        ScenarioSpec s;
        s.id = "SC2";
        s.description = "night-time vs rush-hour start";
        s.lower = BinRangePredicate{36, 60};     // 03:00-05:00
        s.higher = BinRangePredicate{192, 216};  // 16:00-18:00
        s.features_of_interest = {kTimeBin};
        s.ordered = true;
        out.push_back(s);
    }
    {
        ScenarioSpec s;
        s.id = "SC3";
        s.description = "low vs high temperature";
        s.lower = QuantileBandPredicate{kTemperature, 0.10, 0.25, false};
        s.higher = QuantileBandPredicate{kTemperature, 0.75, 0.90, true};
        s.features_of_interest = {kTemperature};
        s.ordered = true;
        out.push_back(s);
    }
    {
        ScenarioSpec s;
        s.id = "SC4";
        s.description = "low vs high straight-line distance";
        s.lower = QuantileBandPredicate{kDistance, 0.10, 0.25, false};
        s.higher = QuantileBandPredicate{kDistance, 0.75, 0.90, true};
        s.features_of_interest = {kDistance};
        s.ordered = true;
        out.push_back(s);
    }
    return out;
}

ScenarioSpec builtin_scenario(const std::string& id) {
    for (const auto& s : builtin_scenarios())
        if (s.id == id) return s;
    throw ConfigError("unknown scenario id: " + id);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error("quantile of empty set");
    if (q < 0.0 || q > 1.0) throw Error("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - std::floor(pos);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

int required_column(const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("scenario references unknown feature '" + name + "'");
    return static_cast<int>(it - names.begin());
}

struct BandBounds {
    double lo = 0.0, hi = 0.0;
};

BandBounds band_bounds(const QuantileBandPredicate& p, const Dataset& data, int col) {
    std::vector<double> column(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) column[r] = data.X(r, static_cast<std::size_t>(col));
    BandBounds b;
    b.lo = quantile(column, p.lo_q);
    b.hi = quantile(std::move(column), p.hi_q);
    return b;
}

}  // namespace

bool predicate_holds(const Predicate& p, const Dataset& data,
                     const std::vector<std::string>& schema_names, std::size_t row) {
    if (const auto* rect = std::get_if<RectPredicate>(&p)) {
        const auto lat_col = static_cast<std::size_t>(required_column(schema_names, kPickupLat));
        const auto lon_col = static_cast<std::size_t>(required_column(schema_names, kPickupLon));
        const double lat = data.X(row, lat_col);
        const double lon = data.X(row, lon_col);
        return lat >= rect->min_lat && lat <= rect->max_lat && lon >= rect->min_lon &&
               lon <= rect->max_lon;
    }
    if (const auto* bins = std::get_if<BinRangePredicate>(&p)) {
        const auto col = static_cast<std::size_t>(required_column(schema_names, kTimeBin));
        const double v = data.X(row, col);
        return v >= bins->lo && v < bins->hi;
    }
    const auto& band = std::get<QuantileBandPredicate>(p);
    const int col = required_column(schema_names, band.feature);
    const BandBounds b = band_bounds(band, data, col);
    const double v = data.X(row, static_cast<std::size_t>(col));
    return band.closed_low ? (v >= b.lo && v < b.hi) : (v > b.lo && v <= b.hi);
}

ScenarioSamples select_scenario_samples(const Dataset& data,
                                        const std::vector<std::string>& schema_names,
                                        const ScenarioSpec& spec, std::uint64_t seed) {
    if (spec.per_side < 1) throw ConfigError("scenario needs at least one sample per side");

    // Quantile bands are resolved once against the sampling population.
    auto qualifying = [&](const Predicate& p) {
        std::vector<std::size_t> rows;
        if (const auto* band = std::get_if<QuantileBandPredicate>(&p)) {
            const int col = required_column(schema_names, band->feature);
            const BandBounds b = band_bounds(*band, data, col);
            for (std::size_t r = 0; r < data.rows(); ++r) {
                const double v = data.X(r, static_cast<std::size_t>(col));
                const bool in = band->closed_low ? (v >= b.lo && v < b.hi) : (v > b.lo && v <= b.hi);
                if (in) rows.push_back(r);
            }
        } else {
            for (std::size_t r = 0; r < data.rows(); ++r)
                if (predicate_holds(p, data, schema_names, r)) rows.push_back(r);
        }
        return rows;
    };

    const std::vector<std::size_t> lower_pool = qualifying(spec.lower);
    const std::vector<std::size_t> higher_pool = qualifying(spec.higher);
    const auto need = static_cast<std::size_t>(spec.per_side);
    if (lower_pool.size() < need || higher_pool.size() < need)
        throw Error("scenario " + spec.id + ": not enough qualifying rows (lower " +
                    std::to_string(lower_pool.size()) + ", higher " +
                    std::to_string(higher_pool.size()) + ", need " + std::to_string(need) +
                    " per side)");

    auto draw = [&](const std::vector<std::size_t>& pool, std::uint64_t salt) {
        Rng rng(mix_seed(seed, salt));
        const std::vector<int> picks = rng.sample_indices(pool.size(), need);
        std::vector<std::size_t> rows;
        rows.reserve(need);
        for (int p : picks) rows.push_back(pool[static_cast<std::size_t>(p)]);
        return rows;
    };

    ScenarioSamples out;
    const std::uint64_t scenario_salt = fnv1a64(spec.id);
    out.lower_rows = draw(lower_pool, scenario_salt);
    out.higher_rows = draw(higher_pool, scenario_salt ^ 0xffff);
    return out;
}

// ---------------------------------------------------------------------------
// Separation report
// ---------------------------------------------------------------------------

namespace {

SideStats column_side_stats(const Matrix& values, std::size_t col) {
    SideStats s;
    s.n = values.rows();
    if (s.n == 0) return s;
    std::vector<double> v(s.n);
    double sum = 0.0;
    for (std::size_t r = 0; r < s.n; ++r) {
        v[r] = values(r, col);
        sum += v[r];
    }
    s.mean = sum / static_cast<double>(s.n);
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(s.n));
    s.q25 = quantile(v, 0.25);
    s.median = quantile(v, 0.50);
    s.q75 = quantile(v, 0.75);
    return s;
}

}  // namespace

json SeparationReport::to_json() const {
    json j;
    json feats = json::array();
    for (std::size_t i = 0; i < features.size(); ++i) {
        auto side = [](const SideStats& s) {
            return json{{"mean", s.mean}, {"stddev", s.stddev}, {"q25", s.q25},
                        {"median", s.median}, {"q75", s.q75}, {"n", s.n}};
        };
        feats.push_back({{"feature", features[i]}, {"lower", side(lower[i])},
                         {"higher", side(higher[i])}});
    }
    j["features"] = feats;
    json m = json::object();
    for (const auto& [name, margin] : margins) m[name] = margin;
    j["margins"] = m;
    if (sign_correct) j["sign_correct"] = *sign_correct;
    return j;
}

SeparationReport scenario_separation_report(const AttributionSet& lower,
                                            const AttributionSet& higher,
                                            const ScenarioSpec& spec) {
    if (lower.values.rows() == 0 || higher.values.rows() == 0)
        throw Error("separation report needs explanations on both sides");
    if (lower.features != higher.features)
        throw Error("separation report: the two sides list different features");

    SeparationReport rep;
    rep.features = lower.features;
    for (std::size_t c = 0; c < rep.features.size(); ++c) {
        rep.lower.push_back(column_side_stats(lower.values, c));
        rep.higher.push_back(column_side_stats(higher.values, c));
    }

    for (const std::string& name : spec.features_of_interest) {
        const auto it = std::find(rep.features.begin(), rep.features.end(), name);
        if (it == rep.features.end())
            throw Error("feature of interest '" + name + "' missing from the explanations");
        const auto c = static_cast<std::size_t>(it - rep.features.begin());
        rep.margins[name] = rep.higher[c].mean - rep.lower[c].mean;
    }

    if (spec.ordered) {
        bool ok = true;
        for (const auto& [name, margin] : rep.margins) ok = ok && margin > 0.0;
        rep.sign_correct = ok;
    }
    return rep;
}

}  // namespace etax::scenarios
