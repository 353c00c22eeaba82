#include "etax/stack.hpp"

#include <algorithm>
#include <fstream>

namespace etax::stack {

json Provenance::to_json() const {
    json j;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["split_hashes"] = {{"train", train_hash}, {"validation", validation_hash}};
    j["l1_specs"] = l1_specs;
    j["l2_specs"] = l2_specs;
    return j;
}

Provenance Provenance::from_json(const json& j) {
    Provenance p;
    p.seed = j.value("seed", 0ULL);
    p.config_hash = j.value("config_hash", "");
    if (j.contains("split_hashes")) {
        p.train_hash = j.at("split_hashes").value("train", "");
        p.validation_hash = j.at("split_hashes").value("validation", "");
    }
    p.l1_specs = j.value("l1_specs", json::array());
    p.l2_specs = j.value("l2_specs", json::array());
    return p;
}

std::vector<std::string> StackedEnsemble::l1_names() const {
    std::vector<std::string> out;
    out.reserve(l1.size());
    for (const auto& m : l1) out.push_back(m.name);
    return out;
}

StackedEnsemble EnsembleSet::variant(const std::string& l2_name) const {
    for (std::size_t i = 0; i < l2.size(); ++i)
        if (l2[i].name == l2_name) return variant(i);
    throw Error("ensemble has no level-two model named '" + l2_name + "'");
}

StackedEnsemble EnsembleSet::variant(std::size_t index) const {
    if (index >= l2.size()) throw Error("level-two variant index out of range");
    StackedEnsemble e;
    e.l1 = l1;
    e.l2 = l2[index];
    e.schema_fingerprint = engineer->fingerprint();
    e.provenance = provenance;
    return e;
}

std::vector<std::string> EnsembleSet::l2_names() const {
    std::vector<std::string> out;
    out.reserve(l2.size());
    for (const auto& m : l2) out.push_back(m.name);
    return out;
}

Matrix l1_prediction_matrix(const std::vector<NamedModel>& l1, const Matrix& X) {
    Matrix P(X.rows(), l1.size());
    for (std::size_t c = 0; c < l1.size(); ++c) {
        const std::vector<double> pred = l1[c].model->predict(X);
        for (std::size_t r = 0; r < X.rows(); ++r) P(r, c) = pred[r];
    }
    return P;
}

namespace {

std::string default_name(const RegressorSpec& spec, const char* level) {
    if (!spec.name.empty()) return spec.name;
    std::string family;
    switch (spec.family()) {
        case learners::Family::random_forest: family = "rf"; break;
        case learners::Family::gradient_boosting: family = "gbt"; break;
        case learners::Family::feedforward_net: family = "nn"; break;
        case learners::Family::linear: family = "mlr"; break;
    }
    return std::string(level) + "-" + family;
}

Dataset l2_training_set(const Matrix& P, const Dataset& validation) {
    Dataset d;
    d.split = "l2-train";
    d.X = P;
    d.y = validation.y;
    d.ids = validation.ids;
    return d;
}

}  // namespace

EnsembleSet train_ensemble_set(const Dataset& train, const Dataset& validation,
                               const std::vector<RegressorSpec>& l1_specs,
                               const std::vector<RegressorSpec>& l2_specs,
                               std::shared_ptr<const FeatureEngineer> engineer,
                               std::uint64_t seed, const std::string& config_hash) {
    if (l1_specs.size() < 2)
        throw ConfigError("a stacked ensemble needs at least two level-one models");
    if (l2_specs.empty()) throw ConfigError("at least one level-two model is required");
    if (!engineer) throw Error("train_ensemble_set: missing feature engineer");

    const std::vector<std::string> schema_names = engineer->schema().names();

    EnsembleSet set;
    set.engineer = std::move(engineer);
    set.provenance.seed = seed;
    set.provenance.config_hash = config_hash;
    set.provenance.train_hash = train.row_hash();
    set.provenance.validation_hash = validation.row_hash();

    // level one: fit on the training split only
    for (std::size_t i = 0; i < l1_specs.size(); ++i) {
        RegressorSpec spec = l1_specs[i];
        if (spec.seed == 0) spec.seed = mix_seed(seed, 0x1100 + i);
        const std::string name = default_name(spec, "L1");
        try {
            std::shared_ptr<const Regressor> model =
                learners::fit(spec, train, &validation, schema_names);
            set.provenance.l1_specs.push_back(model->spec().to_json());
            set.l1.push_back({name, std::move(model)});
        } catch (const std::exception& e) {
            throw Error("level-one fit failed for '" + name + "': " + e.what());
        }
    }

    // level two: train on level-one predictions over the validation split
    const Matrix P = l1_prediction_matrix(set.l1, validation.X);
    const Dataset l2_train = l2_training_set(P, validation);
    std::vector<std::string> l1_names;
    for (const auto& m : set.l1) l1_names.push_back(m.name);

    for (std::size_t i = 0; i < l2_specs.size(); ++i) {
        RegressorSpec spec = l2_specs[i];
        if (spec.seed == 0) spec.seed = mix_seed(seed, 0x2200 + i);
        const std::string name = default_name(spec, "L2");
        try {
            // nets carve their own holdout for best-epoch selection; other
            // families consume the full level-two set
            std::shared_ptr<const Regressor> model =
                learners::fit(spec, l2_train, nullptr, l1_names);
            set.provenance.l2_specs.push_back(model->spec().to_json());
            set.l2.push_back({name, std::move(model)});
        } catch (const std::exception& e) {
            throw Error("level-two fit failed for '" + name + "': " + e.what());
        }
    }
    return set;
}

StackedEnsemble train_stacked_ensemble(const Dataset& train, const Dataset& validation,
                                       const std::vector<RegressorSpec>& l1_specs,
                                       const RegressorSpec& l2_spec,
                                       std::shared_ptr<const FeatureEngineer> engineer,
                                       std::uint64_t seed) {
    return train_ensemble_set(train, validation, l1_specs, {l2_spec}, std::move(engineer), seed, "")
        .variant(0);
}

StackPrediction predict_stacked(const StackedEnsemble& ensemble, std::span<const double> row) {
    StackPrediction out;
    out.l1.resize(ensemble.l1.size());
    for (std::size_t i = 0; i < ensemble.l1.size(); ++i)
        out.l1[i] = ensemble.l1[i].model->predict_row(row);
    out.l2 = ensemble.l2.model->predict_masked_row(out.l1);
    return out;
}

StackBatchPrediction predict_stacked_batch(const StackedEnsemble& ensemble, const Matrix& X) {
    StackBatchPrediction out;
    out.l1 = l1_prediction_matrix(ensemble.l1, X);
    out.l2.resize(X.rows());
    ensemble.l2.model->predict_masked(out.l1, out.l2);
    return out;
}

void save_ensemble(const EnsembleSet& set, const std::string& path) {
    json doc;
    doc["format"] = "etax-ensemble";
    doc["version"] = 1;
    doc["engineer"] = set.engineer->to_json();
    doc["schema_fingerprint"] = set.engineer->fingerprint();
    json l1 = json::array();
    for (const auto& m : set.l1) l1.push_back({{"name", m.name}, {"model", m.model->to_json()}});
    json l2 = json::array();
    for (const auto& m : set.l2) l2.push_back({{"name", m.name}, {"model", m.model->to_json()}});
    doc["l1"] = l1;
    doc["l2"] = l2;
    doc["provenance"] = set.provenance.to_json();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write ensemble document: " + path);
    out << doc.dump() << '\n';
    if (!out) throw Error("failed writing ensemble document: " + path);
}

EnsembleSet load_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("missing ensemble document: " + path + " (run train first)");
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error("unreadable ensemble document " + path + ": " + e.what());
    }
    if (doc.value("format", "") != "etax-ensemble")
        throw Error("not an ensemble document: " + path);
    if (doc.value("version", 0) != 1)
        throw Error("unsupported ensemble document version in " + path);

    EnsembleSet set;
    set.engineer =
        std::make_shared<const FeatureEngineer>(FeatureEngineer::from_json(doc.at("engineer")));
    const std::string stored = doc.value("schema_fingerprint", "");
    const std::string rebuilt = set.engineer->fingerprint();
    if (stored != rebuilt)
        throw Error("schema fingerprint mismatch in " + path + ": document has " + stored +
                    ", this build computes " + rebuilt);
    for (const auto& e : doc.at("l1"))
        set.l1.push_back({e.at("name").get<std::string>(),
                          std::shared_ptr<const Regressor>(Regressor::from_json(e.at("model")))});
    for (const auto& e : doc.at("l2"))
        set.l2.push_back({e.at("name").get<std::string>(),
                          std::shared_ptr<const Regressor>(Regressor::from_json(e.at("model")))});
    if (set.l1.empty() || set.l2.empty())
        throw Error("ensemble document has no models: " + path);

    // each model must have been fitted against the input layout this document
    // declares: the engineered schema for level one, the level-one output
    // columns for level two
    const std::string l1_space = learners::schema_names_fingerprint(set.engineer->schema().names());
    std::vector<std::string> l1_names;
    for (const auto& m : set.l1) l1_names.push_back(m.name);
    const std::string l2_space = learners::schema_names_fingerprint(l1_names);
    for (const auto& m : set.l1)
        if (!m.model->schema_fingerprint().empty() && m.model->schema_fingerprint() != l1_space)
            throw Error("model '" + m.name + "' was fitted against a different schema (" +
                        m.model->schema_fingerprint() + " vs " + l1_space + ") in " + path);
    for (const auto& m : set.l2)
        if (!m.model->schema_fingerprint().empty() && m.model->schema_fingerprint() != l2_space)
            throw Error("model '" + m.name + "' was fitted against different level-one outputs (" +
                        m.model->schema_fingerprint() + " vs " + l2_space + ") in " + path);
    for (const auto& m : set.l2)
        if (m.model->input_width() != set.l1.size())
            throw Error("level-two input width does not match the level-one count in " + path);
    set.provenance = Provenance::from_json(doc.value("provenance", json::object()));
    return set;
}

}  // namespace etax::stack
