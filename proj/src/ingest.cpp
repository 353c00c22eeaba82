#include "etax/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "etax/calendar.hpp"
#include "etax/csv.hpp"

namespace etax::ingest {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// TripFormat
// ---------------------------------------------------------------------------

TripFormat TripFormat::nyc_yellow() {
    TripFormat f;
    f.pickup_time = "tpep_pickup_datetime";
    f.dropoff_time = "tpep_dropoff_datetime";
    f.pickup_lat = "pickup_latitude";
    f.pickup_lon = "pickup_longitude";
    f.dropoff_lat = "dropoff_latitude";
    f.dropoff_lon = "dropoff_longitude";
    return f;
}

TripFormat TripFormat::generic() {
    TripFormat f;
    f.pickup_time = "pickup_time";
    f.pickup_lat = "plat";
    f.pickup_lon = "plon";
    f.dropoff_lat = "dlat";
    f.dropoff_lon = "dlon";
    f.duration = "duration";
    return f;
}

TripFormat TripFormat::named(const std::string& name) {
    if (name == "nyc-yellow") return nyc_yellow();
    if (name == "generic") return generic();
    throw ConfigError("unknown trip format name: " + name + " (expected nyc-yellow or generic)");
}

json TripFormat::to_json() const {
    json j;
    j["timestamp_format"] = timestamp_format;
    j["pickup_time"] = pickup_time;
    j["pickup_lat"] = pickup_lat;
    j["pickup_lon"] = pickup_lon;
    j["dropoff_lat"] = dropoff_lat;
    j["dropoff_lon"] = dropoff_lon;
    if (!duration.empty()) j["duration"] = duration;
    if (!dropoff_time.empty()) j["dropoff_time"] = dropoff_time;
    return j;
}

TripFormat TripFormat::from_json(const json& j) {
    TripFormat f;
    f.timestamp_format = j.value("timestamp_format", f.timestamp_format);
    f.pickup_time = j.at("pickup_time").get<std::string>();
    f.pickup_lat = j.at("pickup_lat").get<std::string>();
    f.pickup_lon = j.at("pickup_lon").get<std::string>();
    f.dropoff_lat = j.at("dropoff_lat").get<std::string>();
    f.dropoff_lon = j.at("dropoff_lon").get<std::string>();
    f.duration = j.value("duration", "");
    f.dropoff_time = j.value("dropoff_time", "");
    return f;
}

json RejectReport::to_json() const {
    json j;
    j["total"] = entries.size();
    json by_reason = json::object();
    for (const auto& [reason, count] : counts) by_reason[reason] = count;
    j["by_reason"] = by_reason;
    json rows = json::array();
    for (const auto& e : entries) rows.push_back({{"row", e.row}, {"reason", e.reason}});
    j["entries"] = rows;
    return j;
}

// ---------------------------------------------------------------------------
// parse_trips
// ---------------------------------------------------------------------------

ParseResult parse_trips(const std::string& csv_path, const TripFormat& format) {
    if (format.duration.empty() && format.dropoff_time.empty())
        throw ConfigError("trip format must map either a duration column or a dropoff time column");

    csv::Reader reader(csv_path);

    auto require_column = [&](const std::string& name) {
        const int idx = reader.column(name);
        if (idx < 0) throw ConfigError("mapped column '" + name + "' missing from " + csv_path);
        return idx;
    };

    const int c_ptime = require_column(format.pickup_time);
    const int c_plat = require_column(format.pickup_lat);
    const int c_plon = require_column(format.pickup_lon);
    const int c_dlat = require_column(format.dropoff_lat);
    const int c_dlon = require_column(format.dropoff_lon);
    const int c_dur = format.duration.empty() ? -1 : require_column(format.duration);
    const int c_dtime = format.dropoff_time.empty() ? -1 : require_column(format.dropoff_time);

    const int max_col = std::max({c_ptime, c_plat, c_plon, c_dlat, c_dlon, c_dur, c_dtime});

    ParseResult result;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        const std::int64_t row = reader.row_number();
        if (static_cast<int>(fields.size()) <= max_col) {
            result.rejects.add(row, "too few columns");
            continue;
        }

        TripRecord t;
        t.id = row;

        std::string reason;
        auto number = [&](int col, const char* label, double& out) {
            if (!reason.empty()) return;
            bool ok = false;
            out = parse_double_strict(fields[static_cast<std::size_t>(col)], ok);
            if (!ok) reason = std::string("non-numeric ") + label;
        };

        if (!cal::parse_timestamp(fields[static_cast<std::size_t>(c_ptime)], format.timestamp_format,
                                  t.pickup_time)) {
            result.rejects.add(row, "unparseable pickup time");
            continue;
        }
        number(c_plat, "latitude", t.pickup_lat);
        number(c_plon, "longitude", t.pickup_lon);
        number(c_dlat, "latitude", t.dropoff_lat);
        number(c_dlon, "longitude", t.dropoff_lon);

        if (reason.empty()) {
            // explicit duration column wins over the timestamp difference
            if (c_dur >= 0 && !fields[static_cast<std::size_t>(c_dur)].empty()) {
                number(c_dur, "duration", t.duration_s);
            } else if (c_dtime >= 0) {
                std::int64_t dropoff = 0;
                if (!cal::parse_timestamp(fields[static_cast<std::size_t>(c_dtime)],
                                          format.timestamp_format, dropoff)) {
                    reason = "unparseable dropoff time";
                } else {
                    t.duration_s = static_cast<double>(dropoff - t.pickup_time);
                }
            } else {
                reason = "missing duration";
            }
        }
        if (reason.empty() && (std::fabs(t.pickup_lat) > 90 || std::fabs(t.dropoff_lat) > 90))
            reason = "latitude out of range";
        if (reason.empty() && (std::fabs(t.pickup_lon) > 180 || std::fabs(t.dropoff_lon) > 180))
            reason = "longitude out of range";

        if (!reason.empty()) {
            result.rejects.add(row, reason);
            continue;
        }
        result.trips.push_back(t);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Geometry / time
// ---------------------------------------------------------------------------

namespace {
constexpr double kDegToRad = 0.017453292519943295;
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    const double phi1 = lat1 * kDegToRad;
    const double phi2 = lat2 * kDegToRad;
    const double dphi = (lat2 - lat1) * kDegToRad;
    const double dlam = (lon2 - lon1) * kDegToRad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlam / 2.0);
    const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    const double c = 2.0 * std::atan2(std::sqrt(a), std::sqrt(std::max(0.0, 1.0 - a)));
    return kEarthRadiusM * c;
}

json BoundingBox::to_json() const {
    return json{{"min_lat", min_lat}, {"max_lat", max_lat}, {"min_lon", min_lon}, {"max_lon", max_lon}};
}

BoundingBox BoundingBox::from_json(const json& j) {
    BoundingBox b;
    b.min_lat = j.at("min_lat").get<double>();
    b.max_lat = j.at("max_lat").get<double>();
    b.min_lon = j.at("min_lon").get<double>();
    b.max_lon = j.at("max_lon").get<double>();
    if (b.min_lat >= b.max_lat || b.min_lon >= b.max_lon)
        throw ConfigError("bounding box must have min < max on both axes");
    return b;
}

json GridSpec::to_json() const { return json{{"box", box.to_json()}, {"cell_m", cell_m}}; }

GridSpec GridSpec::from_json(const json& j) {
    GridSpec g;
    g.box = BoundingBox::from_json(j.at("box"));
    g.cell_m = j.at("cell_m").get<double>();
    if (g.cell_m <= 0.0) throw ConfigError("grid cell size must be positive");
    return g;
}

GridIndex grid_index(double lat, double lon, const GridSpec& grid) {
    if (!grid.box.contains(lat, lon))
        throw Error("grid_index: point (" + format_double(lat) + ", " + format_double(lon) +
                    ") outside the study area");
    const double east_m =
        kEarthRadiusM * std::cos(grid.origin_lat() * kDegToRad) * (lon - grid.origin_lon()) * kDegToRad;
    const double north_m = kEarthRadiusM * (lat - grid.origin_lat()) * kDegToRad;
    GridIndex g;
    g.ix = static_cast<long long>(std::floor(east_m / grid.cell_m));
    g.iy = static_cast<long long>(std::floor(north_m / grid.cell_m));
    return g;
}

TimeParts time_features(std::int64_t pickup_epoch) {
    const cal::Civil c = cal::from_epoch(pickup_epoch);
    TimeParts p;
    p.month = c.month;
    p.week = cal::iso_week(c.year, c.month, c.day);
    p.weekday = cal::weekday_from_days(cal::days_from_civil(c.year, c.month, c.day));
    p.time_bin = (c.hour * 60 + c.minute) / 5;
    return p;
}

// ---------------------------------------------------------------------------
// Weather
// ---------------------------------------------------------------------------

WeatherSeries WeatherSeries::load_csv(const std::string& path) {
    csv::Reader reader(path);
    const int c_time = reader.column("timestamp");
    const int c_temp = reader.column("temperature_c");
    if (c_time < 0 || c_temp < 0)
        throw ConfigError("weather CSV needs 'timestamp' and 'temperature_c' columns: " + path);

    WeatherSeries w;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        std::int64_t t = 0;
        bool ok = false;
        // accept either a formatted timestamp or raw epoch seconds
        if (!cal::parse_timestamp(fields[static_cast<std::size_t>(c_time)], "%Y-%m-%d %H:%M:%S", t)) {
            t = parse_int_strict(fields[static_cast<std::size_t>(c_time)], ok);
            if (!ok)
                throw Error("weather row " + std::to_string(reader.row_number()) +
                            ": unparseable timestamp");
        }
        const double temp = parse_double_strict(fields[static_cast<std::size_t>(c_temp)], ok);
        if (!ok)
            throw Error("weather row " + std::to_string(reader.row_number()) +
                        ": unparseable temperature");
        if (!w.times.empty() && t <= w.times.back())
            throw Error("weather timestamps must be strictly increasing (row " +
                        std::to_string(reader.row_number()) + ")");
        w.times.push_back(t);
        w.temps_c.push_back(temp);
    }
    if (w.times.empty()) throw Error("weather series is empty: " + path);
    return w;
}

std::size_t WeatherSeries::nearest(std::int64_t t) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0;
    if (it == times.end()) return times.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const std::int64_t d_lo = t - times[lo];
    const std::int64_t d_hi = times[hi] - t;
    return d_lo <= d_hi ? lo : hi;  // tie toward the earlier reading
}

AttachResult attach_temperature(const std::vector<TripRecord>& trips, const WeatherSeries& weather,
                                std::int64_t max_gap_s) {
    AttachResult out;
    out.trips.reserve(trips.size());
    for (const TripRecord& trip : trips) {
        const std::size_t i = weather.nearest(trip.pickup_time);
        const std::int64_t gap = std::llabs(trip.pickup_time - weather.times[i]);
        if (gap > max_gap_s) {
            out.rejects.add(trip.id, reject_reason::kNoWeather);
            continue;
        }
        TripRecord t = trip;
        t.temperature_c = weather.temps_c[i];
        out.trips.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Outlier filter
// ---------------------------------------------------------------------------

json OutlierCriteria::to_json() const {
    json j;
    j["box"] = box.to_json();
    j["min_duration_s"] = min_duration_s;
    j["max_duration_s"] = max_duration_s;
    j["min_speed_kmh"] = min_speed_kmh;
    j["max_speed_kmh"] = max_speed_kmh;
    j["min_distance_m"] = min_distance_m;
    return j;
}

OutlierCriteria OutlierCriteria::from_json(const json& j) {
    OutlierCriteria c;
    c.box = BoundingBox::from_json(j.at("box"));
    c.min_duration_s = j.value("min_duration_s", c.min_duration_s);
    c.max_duration_s = j.value("max_duration_s", c.max_duration_s);
    c.min_speed_kmh = j.value("min_speed_kmh", c.min_speed_kmh);
    c.max_speed_kmh = j.value("max_speed_kmh", c.max_speed_kmh);
    c.min_distance_m = j.value("min_distance_m", c.min_distance_m);
    if (c.min_duration_s >= c.max_duration_s) throw ConfigError("duration bounds inverted");
    if (c.min_speed_kmh >= c.max_speed_kmh) throw ConfigError("speed bounds inverted");
    if (c.min_distance_m < 0) throw ConfigError("minimum distance must be >= 0");
    return c;
}

// A trip is attributed to the first criterion it violates, in this fixed
// order: study area, duration bounds, distance, implied speed. Kept trips
// satisfy all of them.
FilterResult filter_outliers(const std::vector<TripRecord>& trips, const OutlierCriteria& criteria) {
    FilterResult out;
    out.kept.reserve(trips.size());
    for (const TripRecord& t : trips) {
        const char* reason = nullptr;
        const double dist_m = haversine_m(t.pickup_lat, t.pickup_lon, t.dropoff_lat, t.dropoff_lon);

        if (!criteria.box.contains(t.pickup_lat, t.pickup_lon) ||
            !criteria.box.contains(t.dropoff_lat, t.dropoff_lon))
            reason = reject_reason::kOutOfArea;
        else if (t.duration_s < criteria.min_duration_s)
            reason = reject_reason::kDurationLow;
        else if (t.duration_s > criteria.max_duration_s)
            reason = reject_reason::kDurationHigh;
        else if (dist_m <= criteria.min_distance_m)
            reason = reject_reason::kZeroDistance;
        else {
            const double speed_kmh = (dist_m / 1000.0) / (t.duration_s / 3600.0);
            if (speed_kmh < criteria.min_speed_kmh)
                reason = reject_reason::kSpeedLow;
            else if (speed_kmh > criteria.max_speed_kmh)
                reason = reject_reason::kSpeedHigh;
        }

        if (reason)
            out.rejects.add(t.id, reason);
        else
            out.kept.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schema / engineering
// ---------------------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<Feature> features) : features_(std::move(features)) {
    for (std::size_t i = 0; i < features_.size(); ++i) {
        for (std::size_t j = i + 1; j < features_.size(); ++j)
            if (features_[i].name == features_[j].name)
                throw Error("duplicate feature name: " + features_[i].name);
        if (features_[i].kind == FeatureKind::derived && features_[i].parents.empty())
            throw Error("derived feature without lineage: " + features_[i].name);
    }
}

int FeatureSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return static_cast<int>(i);
    return -1;
}

std::vector<std::string> FeatureSchema::names() const {
    std::vector<std::string> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.name);
    return out;
}

json FeatureSchema::to_json() const {
    json arr = json::array();
    for (const auto& f : features_) {
        json e;
        e["name"] = f.name;
        e["kind"] = f.kind == FeatureKind::base ? "base" : "derived";
        e["parents"] = f.parents;
        e["regenerate_in_baseline"] = f.regenerate_in_baseline;
        arr.push_back(e);
    }
    return arr;
}

FeatureSchema FeatureSchema::from_json(const json& j) {
    std::vector<Feature> feats;
    for (const auto& e : j) {
        Feature f;
        f.name = e.at("name").get<std::string>();
        f.kind = e.at("kind").get<std::string>() == "derived" ? FeatureKind::derived : FeatureKind::base;
        f.parents = e.at("parents").get<std::vector<std::string>>();
        f.regenerate_in_baseline = e.at("regenerate_in_baseline").get<bool>();
        feats.push_back(std::move(f));
    }
    return FeatureSchema(std::move(feats));
}

namespace {

FeatureSchema canonical_schema() {
    using namespace feat;
    const std::vector<std::string> coords = {kPickupLat, kPickupLon, kDropoffLat, kDropoffLon};
    std::vector<Feature> f;
    f.push_back({kPickupLat, FeatureKind::base, {}, false});
    f.push_back({kPickupLon, FeatureKind::base, {}, false});
    f.push_back({kDropoffLat, FeatureKind::base, {}, false});
    f.push_back({kDropoffLon, FeatureKind::base, {}, false});
    f.push_back({kPickupGridX, FeatureKind::derived, {kPickupLat, kPickupLon}, true});
    f.push_back({kPickupGridY, FeatureKind::derived, {kPickupLat, kPickupLon}, true});
    f.push_back({kDropoffGridX, FeatureKind::derived, {kDropoffLat, kDropoffLon}, true});
    f.push_back({kDropoffGridY, FeatureKind::derived, {kDropoffLat, kDropoffLon}, true});
    f.push_back({kMonth, FeatureKind::base, {}, false});
    f.push_back({kWeek, FeatureKind::base, {}, false});
    f.push_back({kWeekday, FeatureKind::base, {}, false});
    f.push_back({kTimeBin, FeatureKind::base, {}, false});
    f.push_back({kTemperature, FeatureKind::base, {}, false});
    f.push_back({kDistance, FeatureKind::derived, coords, false});
    return FeatureSchema(std::move(f));
}

}  // namespace

FeatureEngineer::FeatureEngineer(GridSpec grid) : grid_(grid), schema_(canonical_schema()) {}

std::vector<double> FeatureEngineer::row(const TripRecord& trip) const {
    if (!trip.temperature_c.has_value())
        throw Error("trip " + std::to_string(trip.id) + " has no temperature attached");
    const GridIndex pg = grid_index(trip.pickup_lat, trip.pickup_lon, grid_);
    const GridIndex dg = grid_index(trip.dropoff_lat, trip.dropoff_lon, grid_);
    const TimeParts tp = time_features(trip.pickup_time);
    return {
        trip.pickup_lat,
        trip.pickup_lon,
        trip.dropoff_lat,
        trip.dropoff_lon,
        static_cast<double>(pg.ix),
        static_cast<double>(pg.iy),
        static_cast<double>(dg.ix),
        static_cast<double>(dg.iy),
        static_cast<double>(tp.month),
        static_cast<double>(tp.week),
        static_cast<double>(tp.weekday),
        static_cast<double>(tp.time_bin),
        *trip.temperature_c,
        haversine_m(trip.pickup_lat, trip.pickup_lon, trip.dropoff_lat, trip.dropoff_lon),
    };
}

std::vector<int> FeatureEngineer::baseline_columns() const {
    std::vector<int> cols;
    for (std::size_t i = 0; i < schema_.size(); ++i)
        if (!schema_.at(i).regenerate_in_baseline) cols.push_back(static_cast<int>(i));
    return cols;
}

std::vector<double> FeatureEngineer::expand_baseline(std::span<const double> baseline_row,
                                                     bool clamp_to_box) const {
    const std::vector<int> cols = baseline_columns();
    if (baseline_row.size() != cols.size())
        throw Error("expand_baseline: expected " + std::to_string(cols.size()) + " values, got " +
                    std::to_string(baseline_row.size()));
    std::vector<double> full(schema_.size(), 0.0);
    for (std::size_t i = 0; i < cols.size(); ++i)
        full[static_cast<std::size_t>(cols[i])] = baseline_row[i];

    const auto value_of = [&](const char* name, bool is_lat) {
        double v = full[static_cast<std::size_t>(schema_.index_of(name))];
        if (clamp_to_box) {
            if (is_lat)
                v = std::clamp(v, grid_.box.min_lat, grid_.box.max_lat);
            else
                v = std::clamp(v, grid_.box.min_lon, grid_.box.max_lon);
        }
        return v;
    };
    const GridIndex pg =
        grid_index(value_of(feat::kPickupLat, true), value_of(feat::kPickupLon, false), grid_);
    const GridIndex dg =
        grid_index(value_of(feat::kDropoffLat, true), value_of(feat::kDropoffLon, false), grid_);
    full[static_cast<std::size_t>(schema_.index_of(feat::kPickupGridX))] = static_cast<double>(pg.ix);
    full[static_cast<std::size_t>(schema_.index_of(feat::kPickupGridY))] = static_cast<double>(pg.iy);
    full[static_cast<std::size_t>(schema_.index_of(feat::kDropoffGridX))] = static_cast<double>(dg.ix);
    full[static_cast<std::size_t>(schema_.index_of(feat::kDropoffGridY))] = static_cast<double>(dg.iy);
    return full;
}

std::string FeatureEngineer::fingerprint() const {
    std::string canon;
    for (const auto& f : schema_.features()) {
        canon += f.name;
        canon += '|';
        canon += f.kind == FeatureKind::base ? 'b' : 'd';
        for (const auto& p : f.parents) {
            canon += '<';
            canon += p;
        }
        canon += f.regenerate_in_baseline ? "|r;" : ";";
    }
    canon += "grid:";
    canon += format_double(grid_.origin_lat()) + "," + format_double(grid_.origin_lon()) + "," +
             format_double(grid_.cell_m);
    return to_hex(fnv1a64(canon));
}

json FeatureEngineer::to_json() const {
    json j;
    j["grid"] = grid_.to_json();
    j["features"] = schema_.to_json();
    j["fingerprint"] = fingerprint();
    return j;
}

FeatureEngineer FeatureEngineer::from_json(const json& j) {
    FeatureEngineer e(GridSpec::from_json(j.at("grid")));
    // the schema layout is fixed by construction; verify the document matches
    const FeatureSchema stored = FeatureSchema::from_json(j.at("features"));
    if (stored.names() != e.schema_.names())
        throw Error("snapshot schema does not match this build's feature layout");
    return e;
}

// ---------------------------------------------------------------------------
// Datasets / splits
// ---------------------------------------------------------------------------

std::string Dataset::row_hash() const {
    std::vector<std::uint64_t> hashes(rows());
    for (std::size_t r = 0; r < rows(); ++r) {
        std::uint64_t h = fnv1a64(X.row(r));
        h = fnv1a64(std::span<const double>(&y[r], 1), h);
        hashes[r] = h;
    }
    std::sort(hashes.begin(), hashes.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint64_t v : hashes) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return to_hex(h);
}

json SplitSpec::to_json() const {
    json j;
    j["mode"] = mode == Mode::random ? "random" : "time";
    if (mode == Mode::random) {
        j["train_frac"] = train_frac;
        j["validation_frac"] = validation_frac;
        j["test_frac"] = test_frac;
    } else {
        j["test_boundary"] = cal::format_timestamp(test_boundary_epoch);
        j["train_share"] = train_share;
    }
    return j;
}

SplitSpec SplitSpec::from_json(const json& j) {
    SplitSpec s;
    const std::string mode = j.value("mode", "random");
    if (mode == "random") {
        s.mode = Mode::random;
        s.train_frac = j.value("train_frac", s.train_frac);
        s.validation_frac = j.value("validation_frac", s.validation_frac);
        s.test_frac = j.value("test_frac", s.test_frac);
        if (s.train_frac <= 0 || s.validation_frac <= 0 || s.test_frac <= 0)
            throw ConfigError("split fractions must be positive");
        if (s.train_frac + s.validation_frac + s.test_frac > 1.0 + 1e-9)
            throw ConfigError("split fractions exceed 1");
    } else if (mode == "time") {
        s.mode = Mode::time;
        if (j.contains("test_boundary_epoch")) {
            s.test_boundary_epoch = j.at("test_boundary_epoch").get<std::int64_t>();
        } else {
            const std::string b = j.at("test_boundary").get<std::string>();
            if (!cal::parse_timestamp(b, "%Y-%m-%d %H:%M:%S", s.test_boundary_epoch))
                throw ConfigError("unparseable test_boundary: " + b);
        }
        s.train_share = j.value("train_share", s.train_share);
        if (s.train_share <= 0 || s.train_share >= 1)
            throw ConfigError("train_share must lie in (0, 1)");
    } else {
        throw ConfigError("unknown split mode: " + mode);
    }
    return s;
}

namespace {

Dataset make_dataset(const std::vector<TripRecord>& trips, const std::vector<int>& rows,
                     const FeatureEngineer& engineer, const std::string& label) {
    Dataset d;
    d.split = label;
    d.X = Matrix(rows.size(), engineer.schema().size());
    d.y.resize(rows.size());
    d.ids.resize(rows.size());
    parallel_for(rows.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const TripRecord& t = trips[static_cast<std::size_t>(rows[i])];
            const std::vector<double> r = engineer.row(t);
            std::copy(r.begin(), r.end(), d.X.row(i).begin());
            d.y[i] = t.duration_s;
            d.ids[i] = t.id;
        }
    });
    return d;
}

}  // namespace

SplitDatasets build_dataset(const std::vector<TripRecord>& trips, const FeatureEngineer& engineer,
                            const SplitSpec& split, std::uint64_t seed) {
    const std::size_t n = trips.size();
    std::vector<int> train_rows, val_rows, test_rows;

    if (split.mode == SplitSpec::Mode::random) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, 0x51));
        rng.shuffle(order);
        const auto n_train = static_cast<std::size_t>(std::floor(split.train_frac * n));
        const auto n_val = static_cast<std::size_t>(std::floor(split.validation_frac * n));
        auto n_test = static_cast<std::size_t>(std::floor(split.test_frac * n));
        if (split.train_frac + split.validation_frac + split.test_frac > 1.0 - 1e-12)
            n_test = n - n_train - n_val;  // fractions cover everything: keep the union exact
        train_rows.assign(order.begin(), order.begin() + n_train);
        val_rows.assign(order.begin() + n_train, order.begin() + n_train + n_val);
        test_rows.assign(order.begin() + n_train + n_val,
                         order.begin() + n_train + n_val + n_test);
    } else {
        std::vector<int> early;
        for (std::size_t i = 0; i < n; ++i) {
            if (trips[i].pickup_time >= split.test_boundary_epoch)
                test_rows.push_back(static_cast<int>(i));
            else
                early.push_back(static_cast<int>(i));
        }
        Rng rng(mix_seed(seed, 0x51));
        rng.shuffle(early);
        const auto n_train = static_cast<std::size_t>(std::floor(split.train_share * early.size()));
        train_rows.assign(early.begin(), early.begin() + n_train);
        val_rows.assign(early.begin() + n_train, early.end());
    }

    // stable row order inside each split regardless of shuffle order
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(test_rows.begin(), test_rows.end());

    if (train_rows.empty() || val_rows.empty() || test_rows.empty())
        throw Error("empty split (train " + std::to_string(train_rows.size()) + ", validation " +
                    std::to_string(val_rows.size()) + ", test " + std::to_string(test_rows.size()) +
                    ")");

    SplitDatasets out;
    out.train = make_dataset(trips, train_rows, engineer, "train");
    out.validation = make_dataset(trips, val_rows, engineer, "validation");
    out.test = make_dataset(trips, test_rows, engineer, "test");
    return out;
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

namespace {

void write_split_csv(const std::string& path, const Dataset& d, const FeatureSchema& schema) {
    csv::Writer w(path);
    std::vector<std::string> row;
    row.push_back("trip_id");
    for (const auto& name : schema.names()) row.push_back(name);
    row.push_back("duration_s");
    w.write_row(row);
    for (std::size_t r = 0; r < d.rows(); ++r) {
        row.clear();
        row.push_back(std::to_string(d.ids[r]));
        for (double v : d.X.row(r)) row.push_back(format_double(v));
        row.push_back(format_double(d.y[r]));
        w.write_row(row);
    }
    w.close();
}

Dataset read_split_csv(const std::string& path, const FeatureSchema& schema,
                       const std::string& label) {
    csv::Reader reader(path);
    const auto names = schema.names();
    if (reader.header().size() != names.size() + 2)
        throw ArtifactError("snapshot CSV has unexpected column count: " + path);

    Dataset d;
    d.split = label;
    d.X = Matrix(0, names.size());
    std::vector<std::string> fields;
    std::vector<double> row(names.size());
    while (reader.next(fields)) {
        bool ok = false;
        d.ids.push_back(parse_int_strict(fields[0], ok));
        if (!ok) throw ArtifactError("bad trip id in " + path);
        for (std::size_t c = 0; c < names.size(); ++c) {
            row[c] = parse_double_strict(fields[c + 1], ok);
            if (!ok) throw ArtifactError("bad numeric value in " + path);
        }
        d.X.append_row(row);
        d.y.push_back(parse_double_strict(fields[names.size() + 1], ok));
        if (!ok) throw ArtifactError("bad duration in " + path);
    }
    return d;
}

}  // namespace

void write_snapshot(const std::string& dir, const FeatureEngineer& engineer,
                    const SplitDatasets& splits, const json& sidecar_extra) {
    fs::create_directories(dir);
    write_split_csv(dir + "/train.csv", splits.train, engineer.schema());
    write_split_csv(dir + "/validation.csv", splits.validation, engineer.schema());
    write_split_csv(dir + "/test.csv", splits.test, engineer.schema());

    json sidecar;
    sidecar["format"] = "etax-snapshot";
    sidecar["version"] = 1;
    sidecar["engineer"] = engineer.to_json();
    sidecar["rows"] = {{"train", splits.train.rows()},
                       {"validation", splits.validation.rows()},
                       {"test", splits.test.rows()}};
    sidecar["split_hashes"] = {{"train", splits.train.row_hash()},
                               {"validation", splits.validation.row_hash()},
                               {"test", splits.test.row_hash()}};
    for (const auto& [key, value] : sidecar_extra.items()) sidecar[key] = value;

    std::ofstream out(dir + "/dataset.json", std::ios::binary);
    out << sidecar.dump(2) << '\n';
    if (!out) throw Error("failed writing snapshot sidecar");
}

Snapshot read_snapshot(const std::string& dir) {
    std::ifstream in(dir + "/dataset.json");
    if (!in) throw ArtifactError("missing dataset snapshot: " + dir + "/dataset.json (run prepare first)");
    json sidecar;
    try {
        in >> sidecar;
    } catch (const std::exception& e) {
        throw ArtifactError("unreadable snapshot sidecar: " + std::string(e.what()));
    }
    if (sidecar.value("format", "") != "etax-snapshot")
        throw ArtifactError("not a dataset snapshot: " + dir);

    FeatureEngineer engineer = FeatureEngineer::from_json(sidecar.at("engineer"));
    Snapshot snap{engineer,
                  SplitDatasets{read_split_csv(dir + "/train.csv", engineer.schema(), "train"),
                                read_split_csv(dir + "/validation.csv", engineer.schema(), "validation"),
                                read_split_csv(dir + "/test.csv", engineer.schema(), "test")},
                  sidecar};
    return snap;
}

}  // namespace etax::ingest
