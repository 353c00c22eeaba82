#pragma once

// Shared fixtures for the test suites.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <span>

#include "etax/common.hpp"
#include "etax/ingest.hpp"

namespace etax::testing {

inline ingest::Dataset make_dataset(const std::vector<std::vector<double>>& rows,
                                    const std::vector<double>& y,
                                    const std::string& split = "train") {
    ingest::Dataset d;
    d.split = split;
    d.X = Matrix(0, rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d.X.append_row(rows[i]);
        d.ids.push_back(static_cast<std::int64_t>(i + 1));
    }
    d.y = y;
    return d;
}

inline std::vector<std::string> feature_names(std::size_t m) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < m; ++i) names.push_back("f" + std::to_string(i));
    return names;
}

// Random regression fixture: y = w.x + b + optional nonlinearity + noise.
inline ingest::Dataset random_dataset(std::size_t n, std::size_t m, std::uint64_t seed,
                                      double noise_sd = 0.0, bool nonlinear = false) {
    Rng rng(seed);
    std::vector<double> w(m);
    for (auto& v : w) v = rng.uniform(-3.0, 3.0);
    std::vector<std::vector<double>> rows(n, std::vector<double>(m));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 1.5;
        for (std::size_t j = 0; j < m; ++j) {
            rows[i][j] = rng.uniform(-2.0, 2.0);
            s += w[j] * rows[i][j];
        }
        if (nonlinear && m >= 2) s += rows[i][0] * rows[i][1];
        y[i] = s + (noise_sd > 0.0 ? rng.normal(0.0, noise_sd) : 0.0);
    }
    return make_dataset(rows, y);
}

// Trip-backed splits over the real feature schema. `target` maps an
// engineered feature row to y; the default keeps the synthetic duration.
struct TripFixture {
    ingest::FeatureEngineer engineer;
    ingest::SplitDatasets splits;
};

inline TripFixture trip_fixture(std::size_t n, std::uint64_t seed,
                                const std::function<double(std::span<const double>)>& target = {}) {
    ingest::GridSpec grid;
    grid.box = ingest::BoundingBox{40.70, 40.85, -74.02, -73.75};
    grid.cell_m = 50.0;

    Rng rng(seed);
    std::vector<ingest::TripRecord> trips;
    for (std::size_t i = 0; i < n; ++i) {
        ingest::TripRecord t;
        t.id = static_cast<std::int64_t>(i + 1);
        t.pickup_time = 1421348739 + static_cast<std::int64_t>(rng.below(50 * 86400));
        t.pickup_lat = rng.uniform(40.72, 40.83);
        t.pickup_lon = rng.uniform(-74.0, -73.80);
        t.dropoff_lat = t.pickup_lat + rng.uniform(-0.015, 0.015);
        t.dropoff_lon = t.pickup_lon + rng.uniform(-0.015, 0.015);
        t.duration_s = rng.uniform(120.0, 1800.0);
        t.temperature_c = rng.uniform(-5.0, 25.0);
        trips.push_back(t);
    }

    ingest::FeatureEngineer engineer(grid);
    if (target) {
        for (auto& t : trips) {
            const std::vector<double> row = engineer.row(t);
            t.duration_s = target(row);
        }
    }
    ingest::SplitSpec spec;
    spec.train_frac = 0.6;
    spec.validation_frac = 0.2;
    spec.test_frac = 0.2;
    TripFixture fx{engineer, ingest::build_dataset(trips, engineer, spec, seed)};
    return fx;
}

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 ("etax_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++)))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace etax::testing
