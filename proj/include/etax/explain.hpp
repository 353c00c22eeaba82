#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etax/common.hpp"
#include "etax/ingest.hpp"
#include "etax/learners.hpp"

namespace etax::explain {

using json = nlohmann::ordered_json;

// Batch view of the function under explanation: fills `out` with one
// prediction per row. Everything in this module talks to models through it.
using BatchFn = std::function<void(const Matrix&, std::span<double>)>;

BatchFn make_model_fn(const learners::Regressor& model);

double eval_one(const BatchFn& f, std::span<const double> x);

// Per-feature attribution vector for one prediction.
struct Explanation {
    std::string method;  // "lime" | "shap" | "shap-exact"
    std::int64_t sample_id = 0;
    std::optional<double> base_value;  // expected output over the background (shap)
    std::vector<std::string> feature_names;
    std::vector<double> values;        // feature values at the explained point
    std::vector<double> attributions;  // output units (seconds)
    std::optional<std::vector<double>> coefficients;  // local surrogate slope (lime)

    json to_json() const;
    static Explanation from_json(const json& j);
};

// Reference rows for perturbations and coalition masking plus summary
// statistics of the population they were drawn from.
struct BackgroundSet {
    Matrix rows;
    std::vector<double> mean, stddev, q25, q50, q75;

    std::size_t size() const { return rows.rows(); }
    std::size_t width() const { return rows.cols(); }

    // k seeded rows sampled without replacement; statistics from the whole
    // population matrix.
    static BackgroundSet build(const Matrix& population, std::size_t k, std::uint64_t seed);
    // Background whose statistics come from the rows themselves.
    static BackgroundSet from_rows(Matrix rows);
    // Restriction to a column subset (mask order).
    BackgroundSet project(const std::vector<int>& cols) const;
};

struct LimeConfig {
    int n_samples = 5000;
    double kernel_width = 0.0;  // 0 = 0.75 * sqrt(m), in standardized units
    double ridge = 1.0;         // surrogate complexity penalty
};

// Local surrogate explanation: Gaussian perturbations around x scaled by the
// background spread, exponentially kernel-weighted ridge regression, and
// attributions reported as coefficient * (x - background mean) so they live
// in output units.
Explanation lime_explain(const BatchFn& f, std::span<const double> x, const BackgroundSet& background,
                         const LimeConfig& config, std::uint64_t seed,
                         const std::vector<std::string>& feature_names, std::int64_t sample_id);

struct ShapConfig {
    int n_coalitions = 2048;
};

// Shapley-kernel weighted least squares with the efficiency constraint.
// Coalition values replace absent features with background rows and average
// the model output. Runs exhaustively over all coalitions when m <= 12 and
// the budget covers 2^m; otherwise samples coalitions.
Explanation kernel_shap(const BatchFn& f, std::span<const double> x, const BackgroundSet& background,
                        const ShapConfig& config, std::uint64_t seed,
                        const std::vector<std::string>& feature_names, std::int64_t sample_id);

// Literal evaluation of the Shapley sum over every feature subset, with the
// same interventional masking as kernel_shap. Verification oracle; refuses
// more than 12 features.
Explanation exact_shap_oracle(const BatchFn& f, std::span<const double> x,
                              const BackgroundSet& background,
                              const std::vector<std::string>& feature_names,
                              std::int64_t sample_id);

// Long-format CSV rows (sample, method, model, feature, value, attribution).
std::string explanation_csv_header();
void append_explanation_csv(std::string& out, const Explanation& e, const std::string& model);

}  // namespace etax::explain
