#pragma once

#include <string>

#include "etax/config.hpp"

namespace etax::cli {

// Deterministic trip generator so the whole pipeline runs without any
// external dataset. Durations follow
//   base + rate * distance_km * congestion(time_bin, weekday)
//        + zone_effect * zone(pickup) + temp_effect * temperature + noise,
// with a two-peak weekday congestion curve and a deliberately tiny
// temperature coefficient. Every constant lands in the truth document.
struct SyntheticArtifacts {
    std::string trips_csv;
    std::string weather_csv;
    std::string truth_json;
};

SyntheticArtifacts generate_synthetic(const SyntheticConfig& config,
                                      const ingest::BoundingBox& box, std::uint64_t seed,
                                      const std::string& dir);

// The congestion multiplier, exposed so tests can probe the generator's
// mechanism directly.
double synthetic_congestion(int weekday, int time_bin);

}  // namespace etax::cli
