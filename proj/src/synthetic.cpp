#include "etax/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "etax/calendar.hpp"
#include "etax/csv.hpp"

namespace etax::cli {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMPerDegLat = 111320.0;

double bump(double x, double center, double width) {
    const double d = (x - center) / width;
    return std::exp(-0.5 * d * d);
}

}  // namespace

double synthetic_congestion(int weekday, int time_bin) {
    const auto b = static_cast<double>(time_bin);
    if (weekday < 5)
        return 1.0 + 0.65 * bump(b, 96.0, 16.0) + 1.0 * bump(b, 204.0, 20.0);
    return 1.0 + 0.45 * bump(b, 168.0, 30.0);
}

SyntheticArtifacts generate_synthetic(const SyntheticConfig& config,
                                      const ingest::BoundingBox& box, std::uint64_t seed,
                                      const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::int64_t start_epoch = 0;
    if (!cal::parse_timestamp(config.start, "%Y-%m-%d %H:%M:%S", start_epoch))
        throw ConfigError("synthetic start is not a timestamp: " + config.start);
    const std::int64_t span_s = static_cast<std::int64_t>(config.days) * 86400;

    const double center_lat = 40.754, center_lon = -73.984;

    Rng rng(mix_seed(seed, 0x57d7));

    // hourly temperatures over the whole period: seasonal plus diurnal swing
    SyntheticArtifacts art;
    art.weather_csv = dir + "/weather.csv";
    {
        csv::Writer w(art.weather_csv);
        w.write_row({"timestamp", "temperature_c"});
        Rng wrng(mix_seed(seed, 0x7e39));
        for (std::int64_t t = start_epoch - 3600; t <= start_epoch + span_s + 3600; t += 3600) {
            const cal::Civil c = cal::from_epoch(t);
            const int doy_approx = (c.month - 1) * 30 + c.day;
            const double temp = 4.0 + 14.0 * std::sin(2.0 * kPi * (doy_approx - 105) / 365.0) +
                                1.0 * std::sin(2.0 * kPi * (c.hour - 14) / 24.0) +
                                wrng.normal(0.0, 0.8);
            w.write_row({cal::format_timestamp(t), format_double(temp)});
        }
        w.close();
    }

    // trips: uniform pickups over the study box, radial dropoff offsets
    art.trips_csv = dir + "/trips.csv";
    {
        csv::Writer w(art.trips_csv);
        w.write_row({"pickup_time", "plat", "plon", "dlat", "dlon", "duration"});
        const double lat_margin = 0.001;
        const double lon_margin = 0.001;
        // pickups cluster in two dense core areas with a uniform remainder,
        // so small landmark rectangles still collect enough trips
        const double core_a[4] = {40.72, 40.78, -74.01, -73.95};
        const double core_b[4] = {40.79, 40.83, -73.97, -73.92};
        for (std::size_t i = 0; i < config.rows; ++i) {
            const std::int64_t t =
                start_epoch + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(span_s));
            double plat = 0.0, plon = 0.0;
            const double mix = rng.uniform();
            if (mix < 0.45 && box.contains(core_a[0], core_a[2]) && box.contains(core_a[1], core_a[3])) {
                plat = rng.uniform(core_a[0], core_a[1]);
                plon = rng.uniform(core_a[2], core_a[3]);
            } else if (mix < 0.70 && box.contains(core_b[0], core_b[2]) &&
                       box.contains(core_b[1], core_b[3])) {
                plat = rng.uniform(core_b[0], core_b[1]);
                plon = rng.uniform(core_b[2], core_b[3]);
            } else {
                plat = rng.uniform(box.min_lat + lat_margin, box.max_lat - lat_margin);
                plon = rng.uniform(box.min_lon + lon_margin, box.max_lon - lon_margin);
            }

            double dlat = plat, dlon = plon, dist_km = 0.0;
            for (int attempt = 0; attempt < 64; ++attempt) {
                const double r_km = rng.uniform(0.1, config.max_trip_km);
                const double angle = rng.uniform(0.0, 2.0 * kPi);
                const double cos_lat = std::cos(plat * kPi / 180.0);
                dlat = plat + r_km * 1000.0 * std::cos(angle) / kMPerDegLat;
                dlon = plon + r_km * 1000.0 * std::sin(angle) / (kMPerDegLat * cos_lat);
                if (box.contains(dlat, dlon)) {
                    dist_km = r_km;
                    break;
                }
                dlat = plat;
                dlon = plon;
            }
            if (dist_km == 0.0) {
                dist_km = 0.15;
                dlat = plat + 0.15 * 1000.0 / kMPerDegLat;  // short hop north as a fallback
            }

            const cal::Civil c = cal::from_epoch(t);
            const int weekday = cal::weekday_from_days(cal::days_from_civil(c.year, c.month, c.day));
            const int bin = (c.hour * 60 + c.minute) / 5;
            const double congestion = synthetic_congestion(weekday, bin);

            const double zone_d_m = ingest::haversine_m(plat, plon, center_lat, center_lon);
            const double zone = std::exp(-(zone_d_m / 2500.0) * (zone_d_m / 2500.0));

            const int doy_approx = (c.month - 1) * 30 + c.day;
            const double temp = 4.0 + 14.0 * std::sin(2.0 * kPi * (doy_approx - 105) / 365.0) +
                                1.0 * std::sin(2.0 * kPi * (c.hour - 14) / 24.0);

            double duration = config.base_s + config.distance_rate_s_per_km * dist_km * congestion +
                              config.zone_effect_s * zone +
                              config.temperature_effect_s_per_c * temp +
                              rng.normal(0.0, config.noise_sd_s);
            if (duration < 65.0) duration = 65.0 + (config.base_s - duration) * 0.01;

            w.write_row({cal::format_timestamp(t), format_double(plat), format_double(plon),
                         format_double(dlat), format_double(dlon), format_double(duration)});
        }
        w.close();
    }

    art.truth_json = dir + "/truth.json";
    {
        json truth;
        truth["generator"] = config.to_json();
        truth["seed"] = seed;
        truth["zone_center"] = {center_lat, center_lon};
        truth["congestion"] = {
            {"weekday", "1 + 0.65*exp(-0.5*((bin-96)/16)^2) + 1.0*exp(-0.5*((bin-204)/20)^2)"},
            {"weekend", "1 + 0.45*exp(-0.5*((bin-168)/30)^2)"}};
        truth["duration"] =
            "base_s + distance_rate_s_per_km*dist_km*congestion + zone_effect_s*exp(-(d_center/2500m)^2)"
            " + temperature_effect_s_per_c*temp_c + noise";
        std::ofstream out(art.truth_json, std::ios::binary);
        out << truth.dump(2) << '\n';
        if (!out) throw Error("failed writing synthetic truth document");
    }
    return art;
}

}  // namespace etax::cli
