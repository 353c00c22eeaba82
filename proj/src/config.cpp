#include "etax/config.hpp"

#include <fstream>

namespace etax::cli {

namespace {

using learners::BoostConfig;
using learners::ForestConfig;
using learners::LinearConfig;
using learners::NetConfig;
using learners::RegressorSpec;

ingest::BoundingBox default_box() {
    // Manhattan plus the airport corridor
    ingest::BoundingBox b;
    b.min_lat = 40.63;
    b.max_lat = 40.85;
    b.min_lon = -74.03;
    b.max_lon = -73.75;
    return b;
}

RegressorSpec make_spec(std::string name,
                        std::variant<ForestConfig, BoostConfig, NetConfig, LinearConfig> params) {
    RegressorSpec s;
    s.name = std::move(name);
    s.params = std::move(params);
    return s;
}

}  // namespace

std::vector<RegressorSpec> profile_l1(const std::string& name) {
    if (name == "paper-nyc") {
        ForestConfig rf;  // 300 trees, depth 89, four samples per leaf/split
        BoostConfig gbt;  // 300 trees, depth 11, min child weight 7
        NetConfig nn;     // 300/150/50/25, batch 128, lr 1e-3, 25 epochs
        return {make_spec("L1-rf", rf), make_spec("L1-gbt", gbt), make_spec("L1-nn", nn)};
    }
    if (name == "desk") {
        ForestConfig rf;
        rf.trees = 50;
        rf.max_depth = 12;
        BoostConfig gbt;
        gbt.trees = 100;
        NetConfig nn;
        nn.hidden = {64, 32};
        nn.epochs = 10;
        return {make_spec("L1-rf", rf), make_spec("L1-gbt", gbt), make_spec("L1-nn", nn)};
    }
    if (name == "tiny") {
        ForestConfig rf;
        rf.trees = 15;
        rf.max_depth = 8;
        rf.min_samples_leaf = 2;
        BoostConfig gbt;
        gbt.trees = 25;
        gbt.max_depth = 5;
        gbt.min_child_weight = 2;
        NetConfig nn;
        nn.hidden = {16, 8};
        nn.epochs = 5;
        nn.batch_size = 64;
        return {make_spec("L1-rf", rf), make_spec("L1-gbt", gbt), make_spec("L1-nn", nn)};
    }
    throw ConfigError("unknown model profile: " + name);
}

std::vector<RegressorSpec> profile_l2(const std::string& name) {
    if (name == "paper-nyc") {
        ForestConfig rf;  // trees cut to 100, the rest as on level one
        rf.trees = 100;
        BoostConfig gbt;
        gbt.trees = 100;
        NetConfig nn;  // two hidden layers on level two
        nn.hidden = {50, 25};
        return {make_spec("L2-mlr", LinearConfig{}), make_spec("L2-rf", rf),
                make_spec("L2-gbt", gbt), make_spec("L2-nn", nn)};
    }
    if (name == "desk") {
        ForestConfig rf;
        rf.trees = 50;
        rf.max_depth = 12;
        BoostConfig gbt;
        gbt.trees = 50;
        gbt.max_depth = 6;
        NetConfig nn;
        nn.hidden = {32, 16};
        nn.epochs = 10;
        return {make_spec("L2-mlr", LinearConfig{}), make_spec("L2-rf", rf),
                make_spec("L2-gbt", gbt), make_spec("L2-nn", nn)};
    }
    if (name == "tiny") {
        ForestConfig rf;
        rf.trees = 10;
        rf.max_depth = 6;
        rf.min_samples_leaf = 2;
        BoostConfig gbt;
        gbt.trees = 10;
        gbt.max_depth = 4;
        gbt.min_child_weight = 2;
        NetConfig nn;
        nn.hidden = {8, 4};
        nn.epochs = 5;
        nn.batch_size = 64;
        return {make_spec("L2-mlr", LinearConfig{}), make_spec("L2-rf", rf),
                make_spec("L2-gbt", gbt), make_spec("L2-nn", nn)};
    }
    throw ConfigError("unknown model profile: " + name);
}

json SyntheticConfig::to_json() const {
    json j;
    j["rows"] = rows;
    j["start"] = start;
    j["days"] = days;
    j["base_s"] = base_s;
    j["distance_rate_s_per_km"] = distance_rate_s_per_km;
    j["zone_effect_s"] = zone_effect_s;
    j["temperature_effect_s_per_c"] = temperature_effect_s_per_c;
    j["noise_sd_s"] = noise_sd_s;
    j["max_trip_km"] = max_trip_km;
    return j;
}

std::vector<RegressorSpec> RunConfig::l1_specs() const {
    return l1.empty() ? profile_l1(profile) : l1;
}

std::vector<RegressorSpec> RunConfig::l2_specs() const {
    return l2.empty() ? profile_l2(profile) : l2;
}

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.grid.box = default_box();
    c.grid.cell_m = 50.0;
    c.outliers.box = c.grid.box;
    c.split.mode = ingest::SplitSpec::Mode::random;
    c.split.train_frac = 0.65;
    c.split.validation_frac = 0.20;
    c.split.test_frac = 0.15;
    return c;
}

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["dataset_name"] = dataset_name;
    j["data"] = {{"trips_csv", data.trips_csv},
                 {"weather_csv", data.weather_csv},
                 {"format", data.format.to_json()},
                 {"max_weather_gap_hours", data.max_weather_gap_hours}};
    j["area"] = grid.to_json();
    j["outliers"] = outliers.to_json();
    j["split"] = split.to_json();
    json models;
    models["profile"] = profile;
    json l1_arr = json::array();
    for (const auto& s : l1_specs()) l1_arr.push_back(s.to_json());
    json l2_arr = json::array();
    for (const auto& s : l2_specs()) l2_arr.push_back(s.to_json());
    models["l1"] = l1_arr;
    models["l2"] = l2_arr;
    j["models"] = models;
    j["xai"] = {{"methods", xai.methods},
                {"n_samples", xai.lime.n_samples},
                {"kernel_width", xai.lime.kernel_width},
                {"ridge", xai.lime.ridge},
                {"n_coalitions", xai.shap.n_coalitions},
                {"background", xai.background}};
    j["joining"] = {
        {"beta", joining.beta},
        {"shrink",
         joining.shrink == joining::JoinConfig::Shrink::subtractive ? "subtractive"
                                                                    : "multiplicative"},
        {"redistribute", joining.redistribute == joining::JoinConfig::Redistribute::proportional
                             ? "proportional"
                             : "equal"}};
    j["scenarios"] = {{"ids", scenario_ids}, {"per_side", scenario_per_side}};
    j["explain"] = {{"samples", explain_sel.samples}, {"l2_variant", explain_sel.l2_variant}};
    j["synthetic"] = synthetic.to_json();
    return j;
}

std::string RunConfig::config_hash() const { return to_hex(fnv1a64(to_json().dump())); }

namespace {

void check_known_keys(const json& j, const std::vector<std::string>& known,
                      const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + key + "' in " + where);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c = defaults();
    check_known_keys(j, {"seed", "out_dir", "dataset_name", "data", "area", "outliers", "split",
                         "models", "xai", "joining", "scenarios", "explain", "synthetic"},
                     "config root");
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.dataset_name = j.value("dataset_name", c.dataset_name);

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_known_keys(d, {"trips_csv", "weather_csv", "format", "max_weather_gap_hours"},
                         "data");
        c.data.trips_csv = d.value("trips_csv", "");
        c.data.weather_csv = d.value("weather_csv", "");
        if (d.contains("format")) {
            if (d.at("format").is_string())
                c.data.format = ingest::TripFormat::named(d.at("format").get<std::string>());
            else
                c.data.format = ingest::TripFormat::from_json(d.at("format"));
        }
        c.data.max_weather_gap_hours = d.value("max_weather_gap_hours", 3.0);
        if (c.data.max_weather_gap_hours <= 0)
            throw ConfigError("max_weather_gap_hours must be positive");
    }
    if (j.contains("area")) c.grid = ingest::GridSpec::from_json(j.at("area"));
    c.outliers.box = c.grid.box;
    if (j.contains("outliers")) {
        json o = j.at("outliers");
        if (!o.contains("box")) o["box"] = c.grid.box.to_json();
        c.outliers = ingest::OutlierCriteria::from_json(o);
    }
    if (j.contains("split")) c.split = ingest::SplitSpec::from_json(j.at("split"));

    if (j.contains("models")) {
        const json& m = j.at("models");
        check_known_keys(m, {"profile", "l1", "l2"}, "models");
        c.profile = m.value("profile", c.profile);
        profile_l1(c.profile);  // validate the name early
        if (m.contains("l1"))
            for (const auto& s : m.at("l1")) c.l1.push_back(RegressorSpec::from_json(s));
        if (m.contains("l2"))
            for (const auto& s : m.at("l2")) c.l2.push_back(RegressorSpec::from_json(s));
        if (!c.l1.empty() && c.l1.size() < 2)
            throw ConfigError("need at least two level-one models");
    }

    if (j.contains("xai")) {
        const json& x = j.at("xai");
        check_known_keys(x, {"methods", "n_samples", "kernel_width", "ridge", "n_coalitions",
                             "background"},
                         "xai");
        if (x.contains("methods")) c.xai.methods = x.at("methods").get<std::vector<std::string>>();
        for (const auto& m : c.xai.methods)
            if (m != "lime" && m != "shap")
                throw ConfigError("xai method must be lime or shap, got '" + m + "'");
        c.xai.lime.n_samples = x.value("n_samples", c.xai.lime.n_samples);
        c.xai.lime.kernel_width = x.value("kernel_width", c.xai.lime.kernel_width);
        c.xai.lime.ridge = x.value("ridge", c.xai.lime.ridge);
        c.xai.shap.n_coalitions = x.value("n_coalitions", c.xai.shap.n_coalitions);
        c.xai.background = x.value("background", c.xai.background);
        if (c.xai.background == 0) throw ConfigError("xai background must be >= 1");
    }

    if (j.contains("joining")) {
        const json& jo = j.at("joining");
        check_known_keys(jo, {"beta", "shrink", "redistribute"}, "joining");
        c.joining.beta = jo.value("beta", c.joining.beta);
        if (c.joining.beta < 0) throw ConfigError("joining beta must be >= 0");
        const std::string shrink = jo.value("shrink", "subtractive");
        if (shrink == "subtractive")
            c.joining.shrink = joining::JoinConfig::Shrink::subtractive;
        else if (shrink == "multiplicative")
            c.joining.shrink = joining::JoinConfig::Shrink::multiplicative;
        else
            throw ConfigError("joining shrink must be subtractive or multiplicative");
        const std::string red = jo.value("redistribute", "proportional");
        if (red == "proportional")
            c.joining.redistribute = joining::JoinConfig::Redistribute::proportional;
        else if (red == "equal")
            c.joining.redistribute = joining::JoinConfig::Redistribute::equal;
        else
            throw ConfigError("joining redistribute must be proportional or equal");
    }

    if (j.contains("scenarios")) {
        const json& s = j.at("scenarios");
        check_known_keys(s, {"ids", "per_side"}, "scenarios");
        if (s.contains("ids")) c.scenario_ids = s.at("ids").get<std::vector<std::string>>();
        c.scenario_per_side = s.value("per_side", c.scenario_per_side);
        if (c.scenario_per_side < 1) throw ConfigError("scenarios per_side must be >= 1");
    }

    if (j.contains("explain")) {
        const json& e = j.at("explain");
        check_known_keys(e, {"samples", "l2_variant"}, "explain");
        if (e.contains("samples"))
            c.explain_sel.samples = e.at("samples").get<std::vector<std::int64_t>>();
        c.explain_sel.l2_variant = e.value("l2_variant", c.explain_sel.l2_variant);
    }

    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        check_known_keys(s, {"rows", "start", "days", "base_s", "distance_rate_s_per_km",
                             "zone_effect_s", "temperature_effect_s_per_c", "noise_sd_s",
                             "max_trip_km"},
                         "synthetic");
        c.synthetic.rows = s.value("rows", c.synthetic.rows);
        c.synthetic.start = s.value("start", c.synthetic.start);
        c.synthetic.days = s.value("days", c.synthetic.days);
        c.synthetic.base_s = s.value("base_s", c.synthetic.base_s);
        c.synthetic.distance_rate_s_per_km =
            s.value("distance_rate_s_per_km", c.synthetic.distance_rate_s_per_km);
        c.synthetic.zone_effect_s = s.value("zone_effect_s", c.synthetic.zone_effect_s);
        c.synthetic.temperature_effect_s_per_c =
            s.value("temperature_effect_s_per_c", c.synthetic.temperature_effect_s_per_c);
        c.synthetic.noise_sd_s = s.value("noise_sd_s", c.synthetic.noise_sd_s);
        c.synthetic.max_trip_km = s.value("max_trip_km", c.synthetic.max_trip_km);
        if (c.synthetic.rows < 10) throw ConfigError("synthetic rows must be >= 10");
        if (c.synthetic.days < 1) throw ConfigError("synthetic days must be >= 1");
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

}  // namespace etax::cli
