#pragma once

#include <optional>
#include <string>
#include <vector>

#include "etax/explain.hpp"
#include "etax/stack.hpp"

namespace etax::joining {

using explain::BackgroundSet;
using explain::Explanation;
using explain::LimeConfig;
using explain::ShapConfig;

// Per-model influence derived from the level-two explanation, normalized so
// the weights sum to one. When the signed sum nearly cancels, the absolute
// sum takes over as divisor and the guard is recorded.
struct LevelTwoWeights {
    std::vector<double> w;    // ensemble order
    std::vector<double> raw;  // the level-two attributions before division
    double divisor = 0.0;
    bool guard_applied = false;
};

LevelTwoWeights normalize_level2(const Explanation& level2_explanation);

enum class JoinMethod { jm1, jm2, jm3, bl };
std::string join_method_name(JoinMethod m);

// jm1 keeps one weighted attribution row per level-one model; jm2/jm3/bl
// collapse to a single vector over the union feature list.
struct JoinedExplanation {
    JoinMethod method = JoinMethod::jm2;
    std::int64_t sample_id = 0;
    std::vector<std::string> features;  // union feature list
    std::vector<std::string> models;    // row labels (jm1); single empty label otherwise
    Matrix rows;                        // jm1: n x m, else 1 x m
    bool degraded_to_jm2 = false;       // jm3 fallback when no weight reaches the threshold

    std::span<const double> vector() const { return rows.row(0); }

    explain::json to_json() const;
    static JoinedExplanation from_json(const explain::json& j);
};

// Weighted per-model rows over the union feature list; features a model never
// saw contribute zero. Nothing is aggregated, so each level-one explanation
// can be recovered from its row wherever its weight is nonzero.
JoinedExplanation join_jm1(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w);

// Per-feature dot product between level-one attributions and level-two
// weights; identical to the column sums of jm1.
JoinedExplanation join_jm2(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w);

struct JoinConfig {
    double beta = 0.5;
    enum class Shrink { subtractive, multiplicative } shrink = Shrink::subtractive;
    enum class Redistribute { proportional, equal } redistribute = Redistribute::proportional;
};

struct DiversifiedWeights {
    std::vector<double> w;
    bool degraded = false;  // no weight at or above the threshold
};

// Weights below the mean are shrunk by beta (clipped at zero) and the pooled
// mass moves to the weights at or above the mean.
DiversifiedWeights diversify_weights(const std::vector<double>& w, const JoinConfig& config);

// jm2 on diversified weights.
JoinedExplanation join_jm3(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w,
                           const JoinConfig& config);

// Whole-ensemble baseline: explains a wrapper around the full two-level
// prediction whose input omits the grid features and regenerates them from
// the coordinates internally.
Explanation baseline_explain(const stack::StackedEnsemble& ensemble,
                             const ingest::FeatureEngineer& engineer,
                             std::span<const double> x_full, const std::string& method,
                             const LimeConfig& lime_config, const ShapConfig& shap_config,
                             const BackgroundSet& background_full, std::uint64_t seed,
                             std::int64_t sample_id);

// Batch prediction function over the baseline feature space (exposed for
// local-accuracy checks against predict_stacked).
explain::BatchFn make_baseline_fn(const stack::StackedEnsemble& ensemble,
                                  const ingest::FeatureEngineer& engineer);

// Long-format CSV rows (sample, method, model, feature, value).
std::string joined_csv_header();
void append_joined_csv(std::string& out, const JoinedExplanation& e);

}  // namespace etax::joining
