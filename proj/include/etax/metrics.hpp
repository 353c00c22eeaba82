#pragma once

#include <span>
#include <string>
#include <vector>

#include "etax/common.hpp"

namespace etax::metrics {

// MAPE is held as a ratio internally; reports render it times 100 so the
// three columns sit on their conventional scales (seconds, ratio, percent).
struct MetricsReport {
    double mae = 0.0;   // seconds
    double mre = 0.0;   // ratio
    double mape = 0.0;  // ratio
    std::size_t n = 0;

    double mape_percent() const { return mape * 100.0; }
};

// Requires equal lengths and every y > 0 (outlier filtering guarantees it
// upstream); violations are fatal.
MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat);

struct LabeledReport {
    std::string model;
    std::string dataset;
    MetricsReport report;
};

// Aligned text table: model, dataset, MAE [seconds], MRE, MAPE.
std::string render_table(const std::vector<LabeledReport>& rows);

// CSV with header model,dataset,mae_s,mre,mape_pct.
std::string render_csv(const std::vector<LabeledReport>& rows);

}  // namespace etax::metrics
