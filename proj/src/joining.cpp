#include "etax/joining.hpp"

#include <algorithm>
#include <cmath>

namespace etax::joining {

LevelTwoWeights normalize_level2(const Explanation& level2_explanation) {
    const std::vector<double>& e = level2_explanation.attributions;
    if (e.empty()) throw Error("normalize_level2: empty explanation");

    double signed_sum = 0.0, abs_sum = 0.0;
    for (double v : e) {
        signed_sum += v;
        abs_sum += std::fabs(v);
    }
    if (abs_sum == 0.0)
        throw Error("normalize_level2: uninformative second-level explanation (all zero)");

    LevelTwoWeights out;
    out.raw = e;
    out.guard_applied = std::fabs(signed_sum) < 1e-6 * abs_sum;
    out.divisor = out.guard_applied ? abs_sum : signed_sum;
    out.w.resize(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out.w[i] = e[i] / out.divisor;
    return out;
}

std::string join_method_name(JoinMethod m) {
    switch (m) {
        case JoinMethod::jm1: return "jm1";
        case JoinMethod::jm2: return "jm2";
        case JoinMethod::jm3: return "jm3";
        case JoinMethod::bl: return "bl";
    }
    throw Error("unreachable join method");
}

explain::json JoinedExplanation::to_json() const {
    explain::json j;
    j["method"] = join_method_name(method);
    j["sample_id"] = sample_id;
    j["features"] = features;
    if (degraded_to_jm2) j["degraded_to_jm2"] = true;
    explain::json out_rows = explain::json::array();
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        explain::json row;
        row["model"] = models.size() == rows.rows() ? models[i] : "";
        explain::json attrs = explain::json::array();
        for (std::size_t f = 0; f < features.size(); ++f) attrs.push_back(rows(i, f));
        row["attributions"] = attrs;
        out_rows.push_back(row);
    }
    j["rows"] = out_rows;
    return j;
}

JoinedExplanation JoinedExplanation::from_json(const explain::json& j) {
    JoinedExplanation e;
    const std::string m = j.at("method").get<std::string>();
    if (m == "jm1")
        e.method = JoinMethod::jm1;
    else if (m == "jm2")
        e.method = JoinMethod::jm2;
    else if (m == "jm3")
        e.method = JoinMethod::jm3;
    else if (m == "bl")
        e.method = JoinMethod::bl;
    else
        throw Error("unknown join method tag: " + m);
    e.sample_id = j.at("sample_id").get<std::int64_t>();
    e.features = j.at("features").get<std::vector<std::string>>();
    e.degraded_to_jm2 = j.value("degraded_to_jm2", false);
    const auto& in_rows = j.at("rows");
    e.rows = Matrix(in_rows.size(), e.features.size());
    std::size_t i = 0;
    for (const auto& row : in_rows) {
        e.models.push_back(row.value("model", ""));
        const auto attrs = row.at("attributions").get<std::vector<double>>();
        if (attrs.size() != e.features.size())
            throw Error("joined explanation row width mismatch");
        std::copy(attrs.begin(), attrs.end(), e.rows.row(i).begin());
        ++i;
    }
    return e;
}

namespace {

// Union feature list in first-seen order across the level-one explanations
// (schema order when every model shares the full schema).
std::vector<std::string> union_features(const std::vector<Explanation>& expls) {
    std::vector<std::string> out;
    for (const Explanation& e : expls)
        for (const std::string& name : e.feature_names)
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    return out;
}

void check_join_inputs(const std::vector<Explanation>& expls,
                       const std::vector<std::string>& model_names, const LevelTwoWeights& w) {
    if (expls.empty()) throw Error("join: no level-one explanations");
    if (expls.size() != w.w.size())
        throw Error("join: got " + std::to_string(expls.size()) + " explanations for " +
                    std::to_string(w.w.size()) + " level-two weights");
    if (model_names.size() != expls.size())
        throw Error("join: model name count does not match the explanation count");
}

}  // namespace

JoinedExplanation join_jm1(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w) {
    check_join_inputs(l1_explanations, model_names, w);
    JoinedExplanation out;
    out.method = JoinMethod::jm1;
    out.sample_id = l1_explanations.front().sample_id;
    out.features = union_features(l1_explanations);
    out.models = model_names;
    out.rows = Matrix(l1_explanations.size(), out.features.size(), 0.0);
    for (std::size_t i = 0; i < l1_explanations.size(); ++i) {
        const Explanation& e = l1_explanations[i];
        for (std::size_t j = 0; j < e.feature_names.size(); ++j) {
            const auto it = std::find(out.features.begin(), out.features.end(), e.feature_names[j]);
            out.rows(i, static_cast<std::size_t>(it - out.features.begin())) =
                w.w[i] * e.attributions[j];
        }
    }
    return out;
}

namespace {

JoinedExplanation weighted_sum(const std::vector<Explanation>& l1_explanations,
                               const std::vector<double>& weights, JoinMethod method) {
    JoinedExplanation out;
    out.method = method;
    out.sample_id = l1_explanations.front().sample_id;
    out.features = union_features(l1_explanations);
    out.models = {""};
    out.rows = Matrix(1, out.features.size(), 0.0);
    // accumulate in model order so the result is bit-identical to summing the
    // jm1 rows columnwise
    for (std::size_t i = 0; i < l1_explanations.size(); ++i) {
        const Explanation& e = l1_explanations[i];
        for (std::size_t j = 0; j < e.feature_names.size(); ++j) {
            const auto it = std::find(out.features.begin(), out.features.end(), e.feature_names[j]);
            out.rows(0, static_cast<std::size_t>(it - out.features.begin())) +=
                weights[i] * e.attributions[j];
        }
    }
    return out;
}

}  // namespace

JoinedExplanation join_jm2(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w) {
    check_join_inputs(l1_explanations, model_names, w);
    return weighted_sum(l1_explanations, w.w, JoinMethod::jm2);
}

DiversifiedWeights diversify_weights(const std::vector<double>& w, const JoinConfig& config) {
    if (config.beta < 0.0) throw Error("diversify_weights: beta must be >= 0");
    const std::size_t n = w.size();
    if (n == 0) throw Error("diversify_weights: empty weights");

    double alpha = 0.0;
    for (double v : w) alpha += v;
    alpha /= static_cast<double>(n);

    DiversifiedWeights out;
    out.w = w;

    std::vector<std::size_t> recipients;
    for (std::size_t i = 0; i < n; ++i)
        if (w[i] >= alpha) recipients.push_back(i);
    if (recipients.empty()) {
        out.degraded = true;  // nothing to redistribute to
        return out;
    }

    double pool = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (w[i] >= alpha) continue;
        double d = 0.0;
        if (config.shrink == JoinConfig::Shrink::subtractive)
            d = std::min(config.beta, w[i]);  // clipped so the weight stops at zero
        else
            d = config.beta * w[i];
        out.w[i] -= d;
        pool += d;
    }
    if (pool == 0.0) return out;

    double magnitude = 0.0;
    for (std::size_t i : recipients) magnitude += std::fabs(w[i]);
    if (config.redistribute == JoinConfig::Redistribute::proportional && magnitude > 0.0) {
        for (std::size_t i : recipients) out.w[i] += pool * std::fabs(w[i]) / magnitude;
    } else {
        for (std::size_t i : recipients) out.w[i] += pool / static_cast<double>(recipients.size());
    }
    return out;
}

JoinedExplanation join_jm3(const std::vector<Explanation>& l1_explanations,
                           const std::vector<std::string>& model_names, const LevelTwoWeights& w,
                           const JoinConfig& config) {
    check_join_inputs(l1_explanations, model_names, w);
    const DiversifiedWeights dw = diversify_weights(w.w, config);
    JoinedExplanation out = weighted_sum(l1_explanations, dw.w, JoinMethod::jm3);
    out.degraded_to_jm2 = dw.degraded;
    return out;
}

// ---------------------------------------------------------------------------
// Whole-ensemble baseline
// ---------------------------------------------------------------------------

explain::BatchFn make_baseline_fn(const stack::StackedEnsemble& ensemble,
                                  const ingest::FeatureEngineer& engineer) {
    const std::vector<int> bl_cols = engineer.baseline_columns();
    return [&ensemble, &engineer, bl_cols](const Matrix& Xbl, std::span<double> out) {
        Matrix full(Xbl.rows(), engineer.schema().size());
        for (std::size_t r = 0; r < Xbl.rows(); ++r) {
            const std::vector<double> row = engineer.expand_baseline(Xbl.row(r), true);
            std::copy(row.begin(), row.end(), full.row(r).begin());
        }
        const stack::StackBatchPrediction pred = stack::predict_stacked_batch(ensemble, full);
        std::copy(pred.l2.begin(), pred.l2.end(), out.begin());
    };
}

Explanation baseline_explain(const stack::StackedEnsemble& ensemble,
                             const ingest::FeatureEngineer& engineer,
                             std::span<const double> x_full, const std::string& method,
                             const LimeConfig& lime_config, const ShapConfig& shap_config,
                             const BackgroundSet& background_full, std::uint64_t seed,
                             std::int64_t sample_id) {
    if (x_full.size() != engineer.schema().size())
        throw Error("baseline_explain: expected a full schema row");
    const std::vector<int> bl_cols = engineer.baseline_columns();
    std::vector<std::string> bl_names;
    for (int c : bl_cols) bl_names.push_back(engineer.schema().at(static_cast<std::size_t>(c)).name);

    std::vector<double> x_bl;
    x_bl.reserve(bl_cols.size());
    for (int c : bl_cols) x_bl.push_back(x_full[static_cast<std::size_t>(c)]);
    const BackgroundSet bg_bl = background_full.project(bl_cols);

    const explain::BatchFn f = make_baseline_fn(ensemble, engineer);
    Explanation e;
    if (method == "lime") {
        e = explain::lime_explain(f, x_bl, bg_bl, lime_config, seed, bl_names, sample_id);
    } else if (method == "shap") {
        e = explain::kernel_shap(f, x_bl, bg_bl, shap_config, seed, bl_names, sample_id);
    } else {
        throw ConfigError("baseline_explain: unknown method '" + method + "'");
    }
    return e;
}

std::string joined_csv_header() { return "sample,method,model,feature,value\n"; }

void append_joined_csv(std::string& out, const JoinedExplanation& e) {
    const std::string method = join_method_name(e.method);
    for (std::size_t i = 0; i < e.rows.rows(); ++i) {
        const std::string& model = e.models.size() == e.rows.rows() ? e.models[i] : e.models[0];
        for (std::size_t j = 0; j < e.features.size(); ++j) {
            out += std::to_string(e.sample_id);
            out += ',';
            out += method;
            out += ',';
            out += model;
            out += ',';
            out += e.features[j];
            out += ',';
            out += format_double(e.rows(i, j));
            out += '\n';
        }
    }
}

}  // namespace etax::joining
