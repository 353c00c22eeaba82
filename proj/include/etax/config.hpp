#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etax/ingest.hpp"
#include "etax/joining.hpp"
#include "etax/learners.hpp"

namespace etax::cli {

using json = nlohmann::ordered_json;

struct DataConfig {
    std::string trips_csv;
    std::string weather_csv;
    ingest::TripFormat format = ingest::TripFormat::generic();
    double max_weather_gap_hours = 3.0;
};

struct XaiConfig {
    std::vector<std::string> methods = {"lime", "shap"};
    explain::LimeConfig lime;
    explain::ShapConfig shap;
    std::size_t background = 100;
};

struct SyntheticConfig {
    std::size_t rows = 5000;
    std::string start = "2015-01-05 00:00:00";
    int days = 56;
    double base_s = 240.0;
    double distance_rate_s_per_km = 90.0;
    double zone_effect_s = 180.0;
    double temperature_effect_s_per_c = 0.05;
    double noise_sd_s = 45.0;
    double max_trip_km = 8.0;

    json to_json() const;
};

struct ExplainSelection {
    std::vector<std::int64_t> samples;
    std::string l2_variant = "best";  // name or "best" (lowest validation MAE)
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    std::string dataset_name = "synthetic";

    DataConfig data;
    ingest::GridSpec grid;              // study area box + cell size
    ingest::OutlierCriteria outliers;   // box mirrors the study area by default
    ingest::SplitSpec split;

    std::string profile = "paper-nyc";  // paper-nyc | desk | tiny
    std::vector<learners::RegressorSpec> l1;  // non-empty overrides the profile
    std::vector<learners::RegressorSpec> l2;

    XaiConfig xai;
    joining::JoinConfig joining;
    std::vector<std::string> scenario_ids = {"SC1", "SC2", "SC3", "SC4"};
    int scenario_per_side = 10;
    ExplainSelection explain_sel;
    SyntheticConfig synthetic;

    // Resolved model lists (profile applied when l1/l2 are empty).
    std::vector<learners::RegressorSpec> l1_specs() const;
    std::vector<learners::RegressorSpec> l2_specs() const;

    // Canonical resolved document; its FNV hash stamps every artifact.
    json to_json() const;
    std::string config_hash() const;

    static RunConfig defaults();
    static RunConfig from_json(const json& j);
    static RunConfig load(const std::string& path);
};

// Hyperparameter profiles. "paper-nyc" carries the full-scale settings,
// "desk" a reduced set for laptop-scale runs, "tiny" a fast test profile.
std::vector<learners::RegressorSpec> profile_l1(const std::string& name);
std::vector<learners::RegressorSpec> profile_l2(const std::string& name);

}  // namespace etax::cli
