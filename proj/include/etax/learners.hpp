#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "etax/common.hpp"
#include "etax/ingest.hpp"

namespace etax::learners {

using json = nlohmann::ordered_json;
using ingest::Dataset;

enum class Family { random_forest, gradient_boosting, feedforward_net, linear };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Bagged CART regression trees with variance-reduction splits.
struct ForestConfig {
    int trees = 300;
    int max_depth = 89;
    int min_samples_leaf = 4;
    int min_samples_split = 4;
    int max_features = 0;  // 0 = automatic, ceil(m / 3)
    bool bootstrap = true;
};

// Additive regression trees on squared-loss residuals with second-order
// split gain, shrinkage and pruning.
struct BoostConfig {
    int trees = 300;
    int max_depth = 11;
    double learning_rate = 0.3;
    double min_child_weight = 7.0;
    double subsample = 1.0;
    double gamma = 0.0;
    double colsample = 1.0;
    double reg_lambda = 1.0;
};

// Fully-connected net: ReLU hidden layers, linear output, squared loss,
// Adam updates, best epoch kept by validation MAE.
struct NetConfig {
    std::vector<int> hidden = {300, 150, 50, 25};
    int batch_size = 128;
    double learning_rate = 0.001;
    int epochs = 25;
};

// Ordinary least squares with a tiny ridge fallback for ill-conditioned
// normal equations.
struct LinearConfig {
    double condition_limit = 1e10;
    double ridge = 1e-8;
};

struct RegressorSpec {
    std::string name;  // display/report name, e.g. "L1-rf"
    std::variant<ForestConfig, BoostConfig, NetConfig, LinearConfig> params = ForestConfig{};
    std::vector<std::string> mask;  // feature names; empty = full schema
    std::uint64_t seed = 0;

    Family family() const { return static_cast<Family>(params.index()); }
    json to_json() const;
    static RegressorSpec from_json(const json& j);
};

// Hash over an ordered feature-name list; stamps model documents so a model
// cannot be rebound to a different input layout unnoticed.
std::string schema_names_fingerprint(const std::vector<std::string>& names);

// Immutable fitted model. Prediction is deterministic and safe to call from
// multiple threads.
class Regressor {
public:
    virtual ~Regressor() = default;

    const RegressorSpec& spec() const { return spec_; }
    const std::vector<std::string>& mask_names() const { return spec_.mask; }
    const std::vector<int>& mask_cols() const { return mask_cols_; }
    std::size_t input_width() const { return input_width_; }
    const std::string& schema_fingerprint() const { return schema_fingerprint_; }
    void bind_schema(const std::vector<std::string>& names) {
        schema_fingerprint_ = schema_names_fingerprint(names);
    }

    // Full-schema entry points; the feature mask is applied internally.
    double predict_row(std::span<const double> full_row) const;
    std::vector<double> predict(const Matrix& X) const;

    // Masked-space entry points (columns in mask order), used by the
    // explanation methods which perturb exactly the model's inputs.
    virtual double predict_masked_row(std::span<const double> masked) const = 0;
    virtual void predict_masked(const Matrix& Xmask, std::span<double> out) const;

    virtual json to_json() const = 0;
    static std::unique_ptr<Regressor> from_json(const json& j);

protected:
    Regressor(RegressorSpec spec, std::vector<int> mask_cols, std::size_t input_width)
        : spec_(std::move(spec)), mask_cols_(std::move(mask_cols)), input_width_(input_width) {}

    json header_json(const char* kind) const;

    RegressorSpec spec_;
    std::vector<int> mask_cols_;
    std::size_t input_width_ = 0;
    std::string schema_fingerprint_;
};

// Net training diagnostics surfaced via the trained model.
struct NetTrainingInfo {
    int epochs_run = 0;
    int best_epoch = 0;  // 1-based
    double best_validation_mae = 0.0;
    std::vector<double> validation_mae_per_epoch;
};

std::unique_ptr<Regressor> fit_random_forest(const Dataset& train,
                                             const std::vector<std::string>& schema_names,
                                             const RegressorSpec& spec);

std::unique_ptr<Regressor> fit_gradient_boosting(const Dataset& train,
                                                 const std::vector<std::string>& schema_names,
                                                 const RegressorSpec& spec);

std::unique_ptr<Regressor> fit_mlp(const Dataset& train, const Dataset& validation,
                                   const std::vector<std::string>& schema_names,
                                   const RegressorSpec& spec);

std::unique_ptr<Regressor> fit_mlr(const Dataset& train,
                                   const std::vector<std::string>& schema_names,
                                   const RegressorSpec& spec);

// Dispatch on spec.family(). `validation` is only consulted by the net.
std::unique_ptr<Regressor> fit(const RegressorSpec& spec, const Dataset& train,
                               const Dataset* validation,
                               const std::vector<std::string>& schema_names);

// Accessors for model internals needed by reports and tests.
const NetTrainingInfo* net_training_info(const Regressor& model);
bool linear_ridge_fallback_engaged(const Regressor& model);
std::vector<double> linear_coefficients(const Regressor& model);  // intercept last

// Test/diagnostic hooks into the net: flattened parameter vector and the
// internal squared loss (standardized units) with its analytic gradient.
std::vector<double> net_parameters(const Regressor& model);
void net_set_parameters(Regressor& model, std::span<const double> params);
double net_loss_and_gradient(const Regressor& model, const Matrix& Xmask,
                             std::span<const double> y_seconds, std::vector<double>* grad_out);

}  // namespace etax::learners
