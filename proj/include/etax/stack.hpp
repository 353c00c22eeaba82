#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "etax/ingest.hpp"
#include "etax/learners.hpp"

namespace etax::stack {

using json = nlohmann::ordered_json;
using ingest::Dataset;
using ingest::FeatureEngineer;
using learners::Regressor;
using learners::RegressorSpec;

struct NamedModel {
    std::string name;
    std::shared_ptr<const Regressor> model;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string train_hash;
    std::string validation_hash;
    json l1_specs = json::array();
    json l2_specs = json::array();

    json to_json() const;
    static Provenance from_json(const json& j);
};

// Two-level ensemble: the level-two model consumes one column per level-one
// model, in a fixed order shared by predictions, explanations and joining.
struct StackedEnsemble {
    std::vector<NamedModel> l1;
    NamedModel l2;
    std::string schema_fingerprint;
    Provenance provenance;

    std::size_t n_l1() const { return l1.size(); }
    std::vector<std::string> l1_names() const;
};

// Trained bundle holding the shared level-one models plus every level-two
// alternative; `variant` selects one as a StackedEnsemble view.
struct EnsembleSet {
    std::vector<NamedModel> l1;
    std::vector<NamedModel> l2;
    std::shared_ptr<const FeatureEngineer> engineer;
    Provenance provenance;

    StackedEnsemble variant(const std::string& l2_name) const;
    StackedEnsemble variant(std::size_t index) const;
    std::vector<std::string> l2_names() const;
};

struct StackPrediction {
    double l2 = 0.0;
    std::vector<double> l1;
};

// Level-one models fit on the training split; the level-two model fits on
// their predictions over the validation split, never on training rows.
EnsembleSet train_ensemble_set(const Dataset& train, const Dataset& validation,
                               const std::vector<RegressorSpec>& l1_specs,
                               const std::vector<RegressorSpec>& l2_specs,
                               std::shared_ptr<const FeatureEngineer> engineer,
                               std::uint64_t seed, const std::string& config_hash);

StackedEnsemble train_stacked_ensemble(const Dataset& train, const Dataset& validation,
                                       const std::vector<RegressorSpec>& l1_specs,
                                       const RegressorSpec& l2_spec,
                                       std::shared_ptr<const FeatureEngineer> engineer,
                                       std::uint64_t seed = 0);

StackPrediction predict_stacked(const StackedEnsemble& ensemble, std::span<const double> row);

// Column-per-model predictions of the level-one models (rows x n_l1).
Matrix l1_prediction_matrix(const std::vector<NamedModel>& l1, const Matrix& X);

// Batch variant returning the final prediction per row plus the level-one
// matrix the level-two model consumed.
struct StackBatchPrediction {
    std::vector<double> l2;
    Matrix l1;
};
StackBatchPrediction predict_stacked_batch(const StackedEnsemble& ensemble, const Matrix& X);

// Versioned JSON persistence. Loading verifies the format version and the
// schema fingerprint; a truncated or inconsistent document never yields a
// partially constructed set.
void save_ensemble(const EnsembleSet& set, const std::string& path);
EnsembleSet load_ensemble(const std::string& path);

}  // namespace etax::stack
