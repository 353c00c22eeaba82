#include "etax/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "etax/csv.hpp"

namespace etax::metrics {

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size())
        throw Error("compute_metrics: length mismatch (" + std::to_string(y.size()) + " vs " +
                    std::to_string(y_hat.size()) + ")");
    if (y.empty()) throw Error("compute_metrics: empty input");

    double abs_sum = 0.0, y_sum = 0.0, ratio_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0))
            throw Error("compute_metrics: y must be positive at index " + std::to_string(i));
        const double err = std::fabs(y[i] - y_hat[i]);
        abs_sum += err;
        y_sum += y[i];
        ratio_sum += err / y[i];
    }

    MetricsReport r;
    r.n = y.size();
    r.mae = abs_sum / static_cast<double>(y.size());
    r.mre = abs_sum / y_sum;
    r.mape = ratio_sum / static_cast<double>(y.size());
    return r;
}

std::string render_table(const std::vector<LabeledReport>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "model" << std::setw(16) << "dataset" << std::right
        << std::setw(14) << "MAE [seconds]" << std::setw(10) << "MRE" << std::setw(10) << "MAPE"
        << '\n';
    for (const auto& row : rows) {
        out << std::left << std::setw(14) << row.model << std::setw(16) << row.dataset
            << std::right << std::fixed << std::setprecision(4) << std::setw(14)
            << row.report.mae << std::setw(10) << row.report.mre << std::setw(10)
            << row.report.mape_percent() << '\n';
        out.unsetf(std::ios::fixed);
    }
    return out.str();
}

std::string render_csv(const std::vector<LabeledReport>& rows) {
    std::string out = "model,dataset,mae_s,mre,mape_pct\n";
    for (const auto& row : rows) {
        out += csv::join_fields({row.model, row.dataset, format_double(row.report.mae),
                                 format_double(row.report.mre),
                                 format_double(row.report.mape_percent())});
        out += '\n';
    }
    return out;
}

}  // namespace etax::metrics
