#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etax/common.hpp"

namespace etax::ingest {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Raw trip records and CSV parsing
// ---------------------------------------------------------------------------

struct TripRecord {
    std::int64_t id = 0;  // 1-based source row number, stable across the pipeline
    std::int64_t pickup_time = 0;  // seconds since epoch, dataset-local clock
    double pickup_lat = 0.0;
    double pickup_lon = 0.0;
    double dropoff_lat = 0.0;
    double dropoff_lon = 0.0;
    double duration_s = 0.0;  // target y
    std::optional<double> temperature_c;
};

// Maps CSV columns onto TripRecord fields. `duration` may be omitted when
// `dropoff_time` is mapped; the duration is then the timestamp difference.
struct TripFormat {
    std::string timestamp_format = "%Y-%m-%d %H:%M:%S";
    std::string pickup_time;
    std::string pickup_lat;
    std::string pickup_lon;
    std::string dropoff_lat;
    std::string dropoff_lon;
    std::string duration;      // optional
    std::string dropoff_time;  // optional

    static TripFormat nyc_yellow();  // 2015/2016 Yellow trip layout
    static TripFormat generic();     // pickup_time, plat, plon, dlat, dlon, duration
    static TripFormat named(const std::string& name);

    json to_json() const;
    static TripFormat from_json(const json& j);
};

struct RejectEntry {
    std::int64_t row = 0;  // source row number (or trip id for post-parse stages)
    std::string reason;
};

struct RejectReport {
    std::vector<RejectEntry> entries;
    std::map<std::string, std::size_t> counts;  // per reason

    void add(std::int64_t row, const std::string& reason) {
        entries.push_back({row, reason});
        ++counts[reason];
    }
    json to_json() const;
};

struct ParseResult {
    std::vector<TripRecord> trips;
    RejectReport rejects;
};

// One TripRecord per well-formed data row; malformed rows land in the reject
// report with their row number and a reason. A mapped column missing from the
// header is fatal.
ParseResult parse_trips(const std::string& csv_path, const TripFormat& format);

// ---------------------------------------------------------------------------
// Geometry and time features
// ---------------------------------------------------------------------------

inline constexpr double kEarthRadiusM = 6371000.0;

// Great-circle distance in meters.
double haversine_m(double lat1, double lon1, double lat2, double lon2);

struct BoundingBox {
    double min_lat = 0.0, max_lat = 0.0;
    double min_lon = 0.0, max_lon = 0.0;

    bool contains(double lat, double lon) const {
        return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
    }
    json to_json() const;
    static BoundingBox from_json(const json& j);
};

// Square grid over the study area. The origin is the bottom-left corner of
// the box; meter offsets use the equirectangular approximation at the origin
// latitude, which is accurate to well under a cell over a city-scale box.
struct GridSpec {
    BoundingBox box;
    double cell_m = 50.0;

    double origin_lat() const { return box.min_lat; }
    double origin_lon() const { return box.min_lon; }

    json to_json() const;
    static GridSpec from_json(const json& j);
};

struct GridIndex {
    long long ix = 0;  // west -> east
    long long iy = 0;  // south -> north
};

// Throws Error for points outside the study box (they should have been
// filtered beforehand).
GridIndex grid_index(double lat, double lon, const GridSpec& grid);

struct TimeParts {
    int month = 1;    // 1-12
    int week = 1;     // ISO-8601, 1-53
    int weekday = 0;  // 0 = Monday
    int time_bin = 0; // 5-minute bin, 0-287
};

TimeParts time_features(std::int64_t pickup_epoch);

// ---------------------------------------------------------------------------
// Weather
// ---------------------------------------------------------------------------

struct WeatherSeries {
    std::vector<std::int64_t> times;  // strictly increasing
    std::vector<double> temps_c;

    static WeatherSeries load_csv(const std::string& path);
    // Index of the reading nearest to t, ties toward the earlier one.
    std::size_t nearest(std::int64_t t) const;
};

struct AttachResult {
    std::vector<TripRecord> trips;  // temperature set
    RejectReport rejects;           // reason "no weather"
};

AttachResult attach_temperature(const std::vector<TripRecord>& trips, const WeatherSeries& weather,
                                std::int64_t max_gap_s = 3 * 3600);

// ---------------------------------------------------------------------------
// Outlier filtering
// ---------------------------------------------------------------------------

struct OutlierCriteria {
    BoundingBox box;
    double min_duration_s = 60.0;
    double max_duration_s = 7200.0;
    double min_speed_kmh = 0.5;
    double max_speed_kmh = 110.0;
    double min_distance_m = 0.0;  // exclusive

    json to_json() const;
    static OutlierCriteria from_json(const json& j);
};

struct FilterResult {
    std::vector<TripRecord> kept;
    RejectReport rejects;  // one entry per violated criterion per trip
};

// Reason strings used by the filter, in evaluation order.
namespace reject_reason {
inline constexpr const char* kOutOfArea = "outside study area";
inline constexpr const char* kDurationLow = "duration too low";
inline constexpr const char* kDurationHigh = "duration too high";
inline constexpr const char* kZeroDistance = "zero distance";
inline constexpr const char* kSpeedLow = "speed too low";
inline constexpr const char* kSpeedHigh = "speed too high";
inline constexpr const char* kNoWeather = "no weather";
}  // namespace reject_reason

FilterResult filter_outliers(const std::vector<TripRecord>& trips, const OutlierCriteria& criteria);

// ---------------------------------------------------------------------------
// Feature schema and engineering
// ---------------------------------------------------------------------------

enum class FeatureKind { base, derived };

struct Feature {
    std::string name;
    FeatureKind kind = FeatureKind::base;
    std::vector<std::string> parents;    // schema ancestors for derived features
    bool regenerate_in_baseline = false; // recomputed inside the whole-ensemble wrapper
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    explicit FeatureSchema(std::vector<Feature> features);

    std::size_t size() const { return features_.size(); }
    const Feature& at(std::size_t i) const { return features_[i]; }
    const std::vector<Feature>& features() const { return features_; }

    int index_of(std::string_view name) const;  // -1 when absent
    std::vector<std::string> names() const;

    json to_json() const;
    static FeatureSchema from_json(const json& j);

private:
    std::vector<Feature> features_;
};

// Engineered input layout: coordinates, grid cells, calendar fields,
// temperature and straight-line distance.
namespace feat {
inline constexpr const char* kPickupLat = "pickup_lat";
inline constexpr const char* kPickupLon = "pickup_lon";
inline constexpr const char* kDropoffLat = "dropoff_lat";
inline constexpr const char* kDropoffLon = "dropoff_lon";
inline constexpr const char* kPickupGridX = "pickup_grid_x";
inline constexpr const char* kPickupGridY = "pickup_grid_y";
inline constexpr const char* kDropoffGridX = "dropoff_grid_x";
inline constexpr const char* kDropoffGridY = "dropoff_grid_y";
inline constexpr const char* kMonth = "month";
inline constexpr const char* kWeek = "week";
inline constexpr const char* kWeekday = "weekday";
inline constexpr const char* kTimeBin = "time_bin";
inline constexpr const char* kTemperature = "temperature_c";
inline constexpr const char* kDistance = "distance_m";
}  // namespace feat

// Computes feature rows from trip records and can redo the grid features from
// raw coordinates, which the whole-ensemble explanation wrapper relies on.
class FeatureEngineer {
public:
    explicit FeatureEngineer(GridSpec grid);

    const FeatureSchema& schema() const { return schema_; }
    const GridSpec& grid() const { return grid_; }

    std::vector<double> row(const TripRecord& trip) const;

    // Column indices of features kept as explicit wrapper inputs (everything
    // not flagged regenerate_in_baseline), in schema order.
    std::vector<int> baseline_columns() const;
    // Expand a wrapper-input row back to the full schema row. With
    // clamp_to_box, coordinates are clamped into the study area for the grid
    // regeneration only, so perturbed inputs never fault.
    std::vector<double> expand_baseline(std::span<const double> baseline_row,
                                        bool clamp_to_box = false) const;

    // Fingerprint over feature names, kinds, lineage and grid parameters.
    std::string fingerprint() const;

    json to_json() const;
    static FeatureEngineer from_json(const json& j);

private:
    GridSpec grid_;
    FeatureSchema schema_;
};

// ---------------------------------------------------------------------------
// Datasets and splits
// ---------------------------------------------------------------------------

struct Dataset {
    Matrix X;
    std::vector<double> y;          // seconds
    std::vector<std::int64_t> ids;  // trip ids aligned to rows
    std::string split;              // train | validation | test

    std::size_t rows() const { return y.size(); }
    // Order-independent content hash used in provenance and leak checks.
    std::string row_hash() const;
};

struct SplitSpec {
    enum class Mode { random, time };
    Mode mode = Mode::random;
    // random mode: fractions over the full record set
    double train_frac = 0.65;
    double validation_frac = 0.20;
    double test_frac = 0.15;
    // time mode: records at or after the boundary become the test split; the
    // earlier period is divided train/validation by train_share
    std::int64_t test_boundary_epoch = 0;
    double train_share = 0.8;

    json to_json() const;
    static SplitSpec from_json(const json& j);
};

struct SplitDatasets {
    Dataset train;
    Dataset validation;
    Dataset test;
};

SplitDatasets build_dataset(const std::vector<TripRecord>& trips, const FeatureEngineer& engineer,
                            const SplitSpec& split, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Snapshot artifacts: one CSV per split (trip_id, features..., duration_s)
// plus a sidecar with the schema, grid, split spec, seed and filter report.
// ---------------------------------------------------------------------------

struct Snapshot {
    FeatureEngineer engineer;
    SplitDatasets splits;
    json sidecar;
};

void write_snapshot(const std::string& dir, const FeatureEngineer& engineer,
                    const SplitDatasets& splits, const json& sidecar_extra);
Snapshot read_snapshot(const std::string& dir);

}  // namespace etax::ingest
