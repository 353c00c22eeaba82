#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "etax/common.hpp"
#include "etax/ingest.hpp"

namespace etax::scenarios {

using json = nlohmann::ordered_json;
using ingest::Dataset;

// Membership tests over feature rows. Rectangles bound the pickup location
// (edges closed); bin ranges are half-open; quantile bands select between two
// quantiles computed on the sampling population.
struct RectPredicate {
    double min_lat, min_lon, max_lat, max_lon;
};

struct BinRangePredicate {
    int lo, hi;  // time_bin in [lo, hi)
};

struct QuantileBandPredicate {
    std::string feature;
    double lo_q, hi_q;
    bool closed_low;  // [lo, hi) for the upper band; (lo, hi] for the lower band
};

using Predicate = std::variant<RectPredicate, BinRangePredicate, QuantileBandPredicate>;

struct ScenarioSpec {
    std::string id;           // SC1..SC4 for the built-ins
    std::string description;
    Predicate lower;
    Predicate higher;
    std::vector<std::string> features_of_interest;
    int per_side = 10;
    bool ordered = false;  // margin sign is meaningful (value-ordered characteristics)
};

// The four built-in scenario definitions: pickup area pair, night vs rush
// hour, temperature band pair, distance band pair.
std::vector<ScenarioSpec> builtin_scenarios();
ScenarioSpec builtin_scenario(const std::string& id);

// Linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct ScenarioSamples {
    std::vector<std::size_t> lower_rows;   // row indices into the dataset
    std::vector<std::size_t> higher_rows;
};

// Seeded sampling without replacement from the rows satisfying each
// characteristic; fails with both counts when a side is short.
ScenarioSamples select_scenario_samples(const Dataset& data,
                                        const std::vector<std::string>& schema_names,
                                        const ScenarioSpec& spec, std::uint64_t seed);

bool predicate_holds(const Predicate& p, const Dataset& data,
                     const std::vector<std::string>& schema_names, std::size_t row);

struct SideStats {
    double mean = 0.0;
    double stddev = 0.0;
    double q25 = 0.0, median = 0.0, q75 = 0.0;
    std::size_t n = 0;
};

struct SeparationReport {
    std::vector<std::string> features;
    std::vector<SideStats> lower;   // aligned to features
    std::vector<SideStats> higher;
    std::map<std::string, double> margins;  // features of interest: mean_higher - mean_lower
    std::optional<bool> sign_correct;       // ordered scenarios only: all margins positive

    json to_json() const;
};

// Attribution vectors ready for aggregation (one per sampled trip).
struct AttributionSet {
    std::vector<std::string> features;
    Matrix values;  // samples x features
};

SeparationReport scenario_separation_report(const AttributionSet& lower,
                                            const AttributionSet& higher,
                                            const ScenarioSpec& spec);

}  // namespace etax::scenarios
