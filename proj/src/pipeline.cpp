#include "etax/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "etax/csv.hpp"
#include "etax/explain.hpp"
#include "etax/joining.hpp"
#include "etax/metrics.hpp"
#include "etax/scenarios.hpp"
#include "etax/stack.hpp"
#include "etax/synthetic.hpp"

namespace etax::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Output-directory plumbing
// ---------------------------------------------------------------------------

class OutputLock {
public:
    explicit OutputLock(const std::string& out_dir) : path_(out_dir + "/.lock") {
        fs::create_directories(out_dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw Error("output directory is locked by " + path_ +
                        " (another run in progress, or remove the stale lock)");
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

// Removes everything written by a failed command so no partial artifacts
// survive.
class ArtifactGuard {
public:
    ~ArtifactGuard() {
        if (committed_) return;
        for (const auto& p : files_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

    std::string track(const std::string& path) {
        files_.push_back(path);
        return path;
    }
    Artifacts commit() {
        committed_ = true;
        return Artifacts{files_};
    }

private:
    std::vector<std::string> files_;
    bool committed_ = false;
};

void write_text(ArtifactGuard& guard, const std::string& path, const std::string& text) {
    guard.track(path);
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("failed writing " + path);
}

void write_json_doc(ArtifactGuard& guard, const std::string& path, const json& doc) {
    write_text(guard, path, doc.dump(2) + "\n");
}

std::string data_dir(const RunConfig& c) { return c.out_dir + "/data"; }

ingest::Snapshot load_snapshot_or_fail(const RunConfig& c) {
    return ingest::read_snapshot(data_dir(c));
}

stack::EnsembleSet load_ensemble_or_fail(const RunConfig& c) {
    return stack::load_ensemble(c.out_dir + "/ensemble.json");
}

// ---------------------------------------------------------------------------
// Explanation context shared by explain / scenario / export
// ---------------------------------------------------------------------------

struct XaiContext {
    stack::StackedEnsemble ensemble;
    std::string l2_name;
    explain::BackgroundSet bg_full;                 // full schema space
    std::vector<explain::BackgroundSet> bg_l1;      // one per level-one model
    explain::BackgroundSet bg_l2;                   // level-one output space
    std::vector<std::string> l1_names;
};

std::string resolve_l2_variant(const RunConfig& c, const stack::EnsembleSet& set,
                               const ingest::SplitDatasets& splits) {
    if (c.explain_sel.l2_variant != "best") {
        set.variant(c.explain_sel.l2_variant);  // validates the name
        return c.explain_sel.l2_variant;
    }
    const Matrix P = stack::l1_prediction_matrix(set.l1, splits.validation.X);
    std::string best_name;
    double best_mae = std::numeric_limits<double>::infinity();
    for (const auto& m : set.l2) {
        std::vector<double> pred(P.rows());
        m.model->predict_masked(P, pred);
        const double mae = metrics::compute_metrics(splits.validation.y, pred).mae;
        if (mae < best_mae) {
            best_mae = mae;
            best_name = m.name;
        }
    }
    return best_name;
}

XaiContext make_xai_context(const RunConfig& c, const stack::EnsembleSet& set,
                            const ingest::SplitDatasets& splits) {
    XaiContext ctx;
    ctx.l2_name = resolve_l2_variant(c, set, splits);
    ctx.ensemble = set.variant(ctx.l2_name);
    ctx.bg_full = explain::BackgroundSet::build(splits.train.X, c.xai.background, c.seed);
    for (const auto& m : ctx.ensemble.l1) {
        ctx.bg_l1.push_back(ctx.bg_full.project(m.model->mask_cols()));
        ctx.l1_names.push_back(m.name);
    }
    ctx.bg_l2 =
        explain::BackgroundSet::from_rows(stack::l1_prediction_matrix(ctx.ensemble.l1, ctx.bg_full.rows));
    return ctx;
}

std::uint64_t explanation_seed(const RunConfig& c, const std::string& method,
                               std::int64_t sample_id, std::size_t slot) {
    return mix_seed(mix_seed(c.seed, fnv1a64(method)),
                    static_cast<std::uint64_t>(sample_id) * 131 + slot);
}

struct SampleExplanations {
    std::int64_t id = 0;
    stack::StackPrediction prediction;
    double actual = 0.0;
    std::vector<explain::Explanation> l1;  // ensemble order, masked feature spaces
    explain::Explanation l2;               // level-one output space
    explain::Explanation bl;               // whole-ensemble wrapper
};

SampleExplanations explain_sample(const RunConfig& c, const ingest::FeatureEngineer& engineer,
                                  const XaiContext& ctx, std::span<const double> x,
                                  std::int64_t sample_id, double actual,
                                  const std::string& method) {
    SampleExplanations out;
    out.id = sample_id;
    out.actual = actual;
    out.prediction = stack::predict_stacked(ctx.ensemble, x);

    for (std::size_t i = 0; i < ctx.ensemble.l1.size(); ++i) {
        const auto& model = *ctx.ensemble.l1[i].model;
        std::vector<double> x_masked(model.mask_cols().size());
        for (std::size_t j = 0; j < x_masked.size(); ++j)
            x_masked[j] = x[static_cast<std::size_t>(model.mask_cols()[j])];
        const explain::BatchFn f = explain::make_model_fn(model);
        const std::uint64_t seed = explanation_seed(c, method, sample_id, i);
        if (method == "lime")
            out.l1.push_back(explain::lime_explain(f, x_masked, ctx.bg_l1[i], c.xai.lime, seed,
                                                   model.mask_names(), sample_id));
        else
            out.l1.push_back(explain::kernel_shap(f, x_masked, ctx.bg_l1[i], c.xai.shap, seed,
                                                  model.mask_names(), sample_id));
    }

    const auto& l2_model = *ctx.ensemble.l2.model;
    const explain::BatchFn f_l2 = explain::make_model_fn(l2_model);
    const std::uint64_t l2_seed = explanation_seed(c, method, sample_id, 100);
    if (method == "lime")
        out.l2 = explain::lime_explain(f_l2, out.prediction.l1, ctx.bg_l2, c.xai.lime, l2_seed,
                                       ctx.l1_names, sample_id);
    else
        out.l2 = explain::kernel_shap(f_l2, out.prediction.l1, ctx.bg_l2, c.xai.shap, l2_seed,
                                      ctx.l1_names, sample_id);

    out.bl = joining::baseline_explain(ctx.ensemble, engineer, x, method, c.xai.lime, c.xai.shap,
                                       ctx.bg_full, explanation_seed(c, method, sample_id, 200),
                                       sample_id);
    return out;
}

std::vector<std::string> methods_for(const RunConfig& c, const std::string& override_method) {
    if (override_method.empty()) return c.xai.methods;
    if (override_method != "lime" && override_method != "shap")
        throw ConfigError("--method must be lime or shap");
    return {override_method};
}

}  // namespace

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

Artifacts cmd_prepare(const RunConfig& config, bool synthetic) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    std::string trips_csv = config.data.trips_csv;
    std::string weather_csv = config.data.weather_csv;
    ingest::TripFormat format = config.data.format;
    json synthetic_block;

    if (synthetic) {
        const SyntheticArtifacts art = generate_synthetic(config.synthetic, config.grid.box,
                                                          config.seed, config.out_dir + "/synthetic");
        guard.track(art.trips_csv);
        guard.track(art.weather_csv);
        guard.track(art.truth_json);
        trips_csv = art.trips_csv;
        weather_csv = art.weather_csv;
        format = ingest::TripFormat::generic();
        synthetic_block = config.synthetic.to_json();
    }
    if (trips_csv.empty())
        throw ConfigError("no trips CSV configured (set data.trips_csv or pass --synthetic)");
    if (weather_csv.empty())
        throw ConfigError("no weather CSV configured (set data.weather_csv or pass --synthetic)");

    const ingest::ParseResult parsed = ingest::parse_trips(trips_csv, format);
    if (parsed.trips.empty()) throw Error("no parseable trips in " + trips_csv);

    const ingest::WeatherSeries weather = ingest::WeatherSeries::load_csv(weather_csv);
    const auto max_gap = static_cast<std::int64_t>(config.data.max_weather_gap_hours * 3600.0);
    const ingest::AttachResult attached =
        ingest::attach_temperature(parsed.trips, weather, max_gap);

    const ingest::FilterResult filtered = ingest::filter_outliers(attached.trips, config.outliers);
    if (filtered.kept.empty()) throw Error("outlier filtering removed every trip");

    const ingest::FeatureEngineer engineer(config.grid);
    const ingest::SplitDatasets splits =
        ingest::build_dataset(filtered.kept, engineer, config.split, config.seed);

    // full reject listing as CSV; the sidecar carries the counts
    {
        fs::create_directories(data_dir(config));
        std::string rejects = "stage,row,reason\n";
        for (const auto& e : parsed.rejects.entries)
            rejects += csv::join_fields({"parse", std::to_string(e.row), e.reason}) + "\n";
        for (const auto& e : attached.rejects.entries)
            rejects += csv::join_fields({"weather", std::to_string(e.row), e.reason}) + "\n";
        for (const auto& e : filtered.rejects.entries)
            rejects += csv::join_fields({"filter", std::to_string(e.row), e.reason}) + "\n";
        write_text(guard, data_dir(config) + "/rejects.csv", rejects);
    }

    json sidecar_extra;
    sidecar_extra["dataset_name"] = config.dataset_name;
    sidecar_extra["seed"] = config.seed;
    sidecar_extra["config_hash"] = config.config_hash();
    sidecar_extra["config"] = config.to_json();  // fully resolved, defaults included
    sidecar_extra["split_spec"] = config.split.to_json();
    sidecar_extra["outlier_criteria"] = config.outliers.to_json();
    auto counts_only = [](const ingest::RejectReport& r) {
        json j;
        j["total"] = r.entries.size();
        json by = json::object();
        for (const auto& [reason, count] : r.counts) by[reason] = count;
        j["by_reason"] = by;
        return j;
    };
    sidecar_extra["parse_rejects"] = counts_only(parsed.rejects);
    sidecar_extra["weather_rejects"] = counts_only(attached.rejects);
    sidecar_extra["filter_rejects"] = counts_only(filtered.rejects);
    sidecar_extra["kept_trips"] = filtered.kept.size();
    if (!synthetic_block.is_null()) sidecar_extra["synthetic"] = synthetic_block;

    ingest::write_snapshot(data_dir(config), engineer, splits, sidecar_extra);
    guard.track(data_dir(config) + "/train.csv");
    guard.track(data_dir(config) + "/validation.csv");
    guard.track(data_dir(config) + "/test.csv");
    guard.track(data_dir(config) + "/dataset.json");

    return guard.commit();
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

Artifacts cmd_train(const RunConfig& config) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const ingest::Snapshot snap = load_snapshot_or_fail(config);
    auto engineer = std::make_shared<const ingest::FeatureEngineer>(snap.engineer);

    const stack::EnsembleSet set =
        stack::train_ensemble_set(snap.splits.train, snap.splits.validation, config.l1_specs(),
                                  config.l2_specs(), engineer, config.seed, config.config_hash());

    const std::string ensemble_path = config.out_dir + "/ensemble.json";
    guard.track(ensemble_path);
    stack::save_ensemble(set, ensemble_path);

    // per-model metrics on the validation split (the level-two models see
    // their own training data here; the test split is the real gauge)
    std::vector<metrics::LabeledReport> rows;
    for (const auto& m : set.l1) {
        const std::vector<double> pred = m.model->predict(snap.splits.validation.X);
        rows.push_back({m.name, "validation",
                        metrics::compute_metrics(snap.splits.validation.y, pred)});
    }
    const Matrix P = stack::l1_prediction_matrix(set.l1, snap.splits.validation.X);
    for (const auto& m : set.l2) {
        std::vector<double> pred(P.rows());
        m.model->predict_masked(P, pred);
        rows.push_back({m.name, "validation",
                        metrics::compute_metrics(snap.splits.validation.y, pred)});
    }
    std::string csv_text = metrics::render_csv(rows);
    write_text(guard, config.out_dir + "/training_report.csv", csv_text);

    json report;
    report["config_hash"] = config.config_hash();
    report["seed"] = config.seed;
    json net_info = json::object();
    for (const auto& m : set.l1)
        if (const auto* info = learners::net_training_info(*m.model))
            net_info[m.name] = {{"epochs_run", info->epochs_run},
                                {"best_epoch", info->best_epoch},
                                {"best_validation_mae", info->best_validation_mae}};
    for (const auto& m : set.l2)
        if (const auto* info = learners::net_training_info(*m.model))
            net_info[m.name] = {{"epochs_run", info->epochs_run},
                                {"best_epoch", info->best_epoch},
                                {"best_validation_mae", info->best_validation_mae}};
    report["net_training"] = net_info;
    write_json_doc(guard, config.out_dir + "/training_report.json", report);

    return guard.commit();
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

Artifacts cmd_evaluate(const RunConfig& config) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const ingest::Snapshot snap = load_snapshot_or_fail(config);
    const stack::EnsembleSet set = load_ensemble_or_fail(config);

    std::vector<metrics::LabeledReport> rows;
    for (const auto& m : set.l1) {
        const std::vector<double> pred = m.model->predict(snap.splits.test.X);
        rows.push_back({m.name, config.dataset_name,
                        metrics::compute_metrics(snap.splits.test.y, pred)});
    }
    const Matrix P = stack::l1_prediction_matrix(set.l1, snap.splits.test.X);
    for (const auto& m : set.l2) {
        std::vector<double> pred(P.rows());
        m.model->predict_masked(P, pred);
        rows.push_back({m.name, config.dataset_name,
                        metrics::compute_metrics(snap.splits.test.y, pred)});
    }

    write_text(guard, config.out_dir + "/metrics.csv", metrics::render_csv(rows));
    write_text(guard, config.out_dir + "/metrics.txt", metrics::render_table(rows));

    json doc;
    doc["config_hash"] = config.config_hash();
    doc["seed"] = config.seed;
    json entries = json::array();
    for (const auto& row : rows)
        entries.push_back({{"model", row.model},
                           {"dataset", row.dataset},
                           {"mae_s", row.report.mae},
                           {"mre", row.report.mre},
                           {"mape_pct", row.report.mape_percent()},
                           {"n", row.report.n}});
    doc["rows"] = entries;
    write_json_doc(guard, config.out_dir + "/metrics.json", doc);
    return guard.commit();
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

namespace {

std::size_t test_row_for_id(const ingest::Dataset& test, std::int64_t id) {
    for (std::size_t r = 0; r < test.rows(); ++r)
        if (test.ids[r] == id) return r;
    throw Error("sample id " + std::to_string(id) + " is not in the test split");
}

json sample_block_json(const SampleExplanations& s, const std::string& method) {
    json j;
    j["id"] = s.id;
    j["method"] = method;
    j["prediction"] = {{"l2", s.prediction.l2}, {"l1", s.prediction.l1}, {"actual", s.actual}};
    json l1 = json::array();
    for (const auto& e : s.l1) l1.push_back(e.to_json());
    j["l1"] = l1;
    j["l2_explanation"] = s.l2.to_json();
    j["bl"] = s.bl.to_json();
    return j;
}

}  // namespace

Artifacts cmd_explain(const RunConfig& config, const std::vector<std::int64_t>& sample_override,
                      const std::string& method_override) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const ingest::Snapshot snap = load_snapshot_or_fail(config);
    const stack::EnsembleSet set = load_ensemble_or_fail(config);
    const XaiContext ctx = make_xai_context(config, set, snap.splits);

    std::vector<std::int64_t> samples =
        sample_override.empty() ? config.explain_sel.samples : sample_override;
    if (samples.empty())
        throw ConfigError("no samples requested (pass --sample or set explain.samples)");
    const std::vector<std::string> methods = methods_for(config, method_override);

    json doc;
    doc["format"] = "etax-explanations";
    doc["version"] = 1;
    doc["config_hash"] = config.config_hash();
    doc["seed"] = config.seed;
    doc["l2_variant"] = ctx.l2_name;
    doc["l1_names"] = ctx.l1_names;
    doc["methods"] = methods;
    json blocks = json::array();

    std::string csv_text = explain::explanation_csv_header();
    for (const std::int64_t id : samples) {
        const std::size_t row = test_row_for_id(snap.splits.test, id);
        for (const std::string& method : methods) {
            const SampleExplanations s =
                explain_sample(config, snap.engineer, ctx, snap.splits.test.X.row(row), id,
                               snap.splits.test.y[row], method);
            blocks.push_back(sample_block_json(s, method));
            for (std::size_t i = 0; i < s.l1.size(); ++i)
                explain::append_explanation_csv(csv_text, s.l1[i], ctx.l1_names[i]);
            explain::append_explanation_csv(csv_text, s.l2, ctx.l2_name);
            explain::append_explanation_csv(csv_text, s.bl, "ensemble");
        }
    }
    doc["samples"] = blocks;

    fs::create_directories(config.out_dir + "/explanations");
    write_json_doc(guard, config.out_dir + "/explanations/explanations.json", doc);
    write_text(guard, config.out_dir + "/explanations/explanations.csv", csv_text);
    return guard.commit();
}

// ---------------------------------------------------------------------------
// join
// ---------------------------------------------------------------------------

Artifacts cmd_join(const RunConfig& config, const std::vector<std::string>& methods) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const std::string expl_path = config.out_dir + "/explanations/explanations.json";
    std::ifstream in(expl_path);
    if (!in) throw ArtifactError("missing explanations: " + expl_path + " (run explain first)");
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error("unreadable explanations document: " + std::string(e.what()));
    }
    if (doc.value("format", "") != "etax-explanations")
        throw ArtifactError("not an explanations document: " + expl_path);

    std::vector<std::string> wanted = methods;
    if (wanted.empty()) wanted = {"jm1", "jm2", "jm3", "bl"};
    for (const auto& w : wanted)
        if (w != "jm1" && w != "jm2" && w != "jm3" && w != "bl")
            throw ConfigError("--jm must be one of 1, 2, 3, bl");

    const std::vector<std::string> l1_names = doc.at("l1_names").get<std::vector<std::string>>();
    std::map<std::string, std::string> outputs;
    for (const auto& w : wanted) outputs[w] = joining::joined_csv_header();
    json joined_doc;
    joined_doc["config_hash"] = config.config_hash();
    joined_doc["seed"] = config.seed;
    json joined_samples = json::array();

    for (const auto& block : doc.at("samples")) {
        const std::string xai_method = block.at("method").get<std::string>();
        std::vector<explain::Explanation> l1;
        for (const auto& e : block.at("l1")) l1.push_back(explain::Explanation::from_json(e));
        const explain::Explanation l2 =
            explain::Explanation::from_json(block.at("l2_explanation"));
        const joining::LevelTwoWeights w = joining::normalize_level2(l2);

        json sample_entry;
        sample_entry["method"] = xai_method;

        // the CSV method column carries the XAI method; the join method names
        // the file
        if (outputs.count("jm1")) {
            const auto je = joining::join_jm1(l1, l1_names, w);
            sample_entry["jm1"] = je.to_json();
            std::string& out = outputs["jm1"];
            for (std::size_t i = 0; i < je.rows.rows(); ++i)
                for (std::size_t j = 0; j < je.features.size(); ++j)
                    out += std::to_string(je.sample_id) + "," + xai_method + "," + je.models[i] +
                           "," + je.features[j] + "," + format_double(je.rows(i, j)) + "\n";
        }
        if (outputs.count("jm2")) {
            const auto je = joining::join_jm2(l1, l1_names, w);
            sample_entry["jm2"] = je.to_json();
            std::string& out = outputs["jm2"];
            for (std::size_t j = 0; j < je.features.size(); ++j)
                out += std::to_string(je.sample_id) + "," + xai_method + ",," + je.features[j] +
                       "," + format_double(je.rows(0, j)) + "\n";
        }
        if (outputs.count("jm3")) {
            const auto je = joining::join_jm3(l1, l1_names, w, config.joining);
            sample_entry["jm3"] = je.to_json();
            std::string& out = outputs["jm3"];
            for (std::size_t j = 0; j < je.features.size(); ++j)
                out += std::to_string(je.sample_id) + "," + xai_method + ",," + je.features[j] +
                       "," + format_double(je.rows(0, j)) + "\n";
        }
        if (outputs.count("bl")) {
            const explain::Explanation bl = explain::Explanation::from_json(block.at("bl"));
            sample_entry["bl"] = bl.to_json();
            std::string& out = outputs["bl"];
            for (std::size_t j = 0; j < bl.feature_names.size(); ++j)
                out += std::to_string(bl.sample_id) + "," + xai_method + ",," +
                       bl.feature_names[j] + "," + format_double(bl.attributions[j]) + "\n";
        }
        joined_samples.push_back(sample_entry);
    }

    fs::create_directories(config.out_dir + "/join");
    for (const auto& [name, text] : outputs)
        write_text(guard, config.out_dir + "/join/" + name + ".csv", text);
    joined_doc["samples"] = joined_samples;
    write_json_doc(guard, config.out_dir + "/join/joined.json", joined_doc);
    return guard.commit();
}

// ---------------------------------------------------------------------------
// scenario / export
// ---------------------------------------------------------------------------

namespace {

struct ScenarioSideData {
    std::vector<std::int64_t> ids;
    std::vector<std::size_t> rows;
};

struct ScenarioOutputs {
    // stats rows: scenario, xai, target, feature, side, n, mean, stddev, q25, median, q75
    std::string stats_csv;
    // margin rows: scenario, xai, target, feature, margin, sign_correct
    std::string margins_csv;
    json reports = json::array();
    // per-trip long data for the figure exports
    std::string fig_l1_csv;
    std::string fig_joined_csv;
    std::string fig_box_csv;
};

scenarios::AttributionSet to_attribution_set(const std::vector<explain::Explanation>& expls) {
    scenarios::AttributionSet set;
    if (expls.empty()) return set;
    set.features = expls.front().feature_names;
    set.values = Matrix(expls.size(), set.features.size());
    for (std::size_t i = 0; i < expls.size(); ++i) {
        if (expls[i].feature_names != set.features)
            throw Error("attribution sets must share one feature list");
        for (std::size_t j = 0; j < set.features.size(); ++j)
            set.values(i, j) = expls[i].attributions[j];
    }
    return set;
}

scenarios::AttributionSet to_attribution_set_joined(
    const std::vector<joining::JoinedExplanation>& joined) {
    scenarios::AttributionSet set;
    if (joined.empty()) return set;
    set.features = joined.front().features;
    set.values = Matrix(joined.size(), set.features.size());
    for (std::size_t i = 0; i < joined.size(); ++i) {
        for (std::size_t j = 0; j < set.features.size(); ++j)
            set.values(i, j) = joined[i].rows(0, j);
    }
    return set;
}

void append_stats(ScenarioOutputs& out, const std::string& scenario, const std::string& xai,
                  const std::string& target, const scenarios::SeparationReport& rep,
                  const scenarios::ScenarioSpec& spec) {
    auto side_row = [&](const std::string& side, const std::string& feature,
                        const scenarios::SideStats& s) {
        out.stats_csv += csv::join_fields({scenario, xai, target, feature, side,
                                           std::to_string(s.n), format_double(s.mean),
                                           format_double(s.stddev), format_double(s.q25),
                                           format_double(s.median), format_double(s.q75)}) +
                         "\n";
    };
    for (std::size_t i = 0; i < rep.features.size(); ++i) {
        side_row("lower", rep.features[i], rep.lower[i]);
        side_row("higher", rep.features[i], rep.higher[i]);
    }
    for (const auto& [feature, margin] : rep.margins) {
        const std::string sign =
            rep.sign_correct ? (*rep.sign_correct ? "true" : "false") : "";
        out.margins_csv +=
            csv::join_fields({scenario, xai, target, feature, format_double(margin), sign}) +
            "\n";
    }
    json r;
    r["scenario"] = scenario;
    r["xai"] = xai;
    r["target"] = target;
    r["ordered"] = spec.ordered;
    r["report"] = rep.to_json();
    out.reports.push_back(r);
}

// Runs every configured scenario: per (xai method, level-one model) reports,
// joined-method reports, and optionally the per-trip long-format rows the
// figure exports are built from.
ScenarioOutputs compute_scenarios(const RunConfig& config, const ingest::Snapshot& snap,
                                  const XaiContext& ctx, ArtifactGuard& guard,
                                  const std::string& samples_dir, bool want_fig_data) {
    const ingest::Dataset& test = snap.splits.test;
    const std::vector<std::string> schema_names = snap.engineer.schema().names();

    ScenarioOutputs out;
    out.stats_csv = "scenario,xai,target,feature,side,n,mean,stddev,q25,median,q75\n";
    out.margins_csv = "scenario,xai,target,feature,margin,sign_correct\n";
    out.fig_l1_csv = "scenario,characteristic,sample,method,model,feature,value\n";
    out.fig_joined_csv = "scenario,characteristic,sample,method,join,model,feature,value\n";
    out.fig_box_csv = "scenario,characteristic,method,join,feature,mean,q25,median,q75\n";

    for (const std::string& id : config.scenario_ids) {
        scenarios::ScenarioSpec spec = scenarios::builtin_scenario(id);
        spec.per_side = config.scenario_per_side;
        const scenarios::ScenarioSamples samples =
            scenarios::select_scenario_samples(test, schema_names, spec, config.seed);

        // sample listing: trip id, characteristic, feature values
        {
            std::string listing = "trip_id,characteristic";
            for (const auto& n : schema_names) listing += "," + n;
            listing += ",duration_s\n";
            auto add_rows = [&](const std::vector<std::size_t>& rows, const char* side) {
                for (std::size_t r : rows) {
                    listing += std::to_string(test.ids[r]);
                    listing += ",";
                    listing += side;
                    for (double v : test.X.row(r)) listing += "," + format_double(v);
                    listing += "," + format_double(test.y[r]) + "\n";
                }
            };
            add_rows(samples.lower_rows, "lower");
            add_rows(samples.higher_rows, "higher");
            write_text(guard, samples_dir + "/" + id + "_samples.csv", listing);
        }

        for (const std::string& method : methods_for(config, "")) {
            // full explanations for every sampled trip on both sides
            std::vector<SampleExplanations> lower, higher;
            auto explain_side = [&](const std::vector<std::size_t>& rows,
                                    std::vector<SampleExplanations>& into) {
                for (std::size_t r : rows)
                    into.push_back(explain_sample(config, snap.engineer, ctx, test.X.row(r),
                                                  test.ids[r], test.y[r], method));
            };
            explain_side(samples.lower_rows, lower);
            explain_side(samples.higher_rows, higher);

            // per level-one model
            for (std::size_t mi = 0; mi < ctx.l1_names.size(); ++mi) {
                std::vector<explain::Explanation> lo, hi;
                for (const auto& s : lower) lo.push_back(s.l1[mi]);
                for (const auto& s : higher) hi.push_back(s.l1[mi]);
                const auto rep = scenarios::scenario_separation_report(
                    to_attribution_set(lo), to_attribution_set(hi), spec);
                append_stats(out, id, method, ctx.l1_names[mi], rep, spec);
            }

            // joined methods plus the whole-ensemble wrapper
            struct JoinedSides {
                std::vector<joining::JoinedExplanation> lower, higher;
            };
            std::map<std::string, JoinedSides> joined;
            std::vector<explain::Explanation> bl_lower, bl_higher;
            auto join_all = [&](const std::vector<SampleExplanations>& side,
                                std::vector<joining::JoinedExplanation>& jm1_rows,
                                std::vector<joining::JoinedExplanation>& jm2_rows,
                                std::vector<joining::JoinedExplanation>& jm3_rows) {
                for (const auto& s : side) {
                    const joining::LevelTwoWeights w = joining::normalize_level2(s.l2);
                    jm1_rows.push_back(joining::join_jm1(s.l1, ctx.l1_names, w));
                    jm2_rows.push_back(joining::join_jm2(s.l1, ctx.l1_names, w));
                    jm3_rows.push_back(joining::join_jm3(s.l1, ctx.l1_names, w, config.joining));
                }
            };
            std::vector<joining::JoinedExplanation> jm1_lo, jm1_hi;
            join_all(lower, jm1_lo, joined["jm2"].lower, joined["jm3"].lower);
            join_all(higher, jm1_hi, joined["jm2"].higher, joined["jm3"].higher);
            for (const auto& s : lower) bl_lower.push_back(s.bl);
            for (const auto& s : higher) bl_higher.push_back(s.bl);

            for (const auto& jm : {"jm2", "jm3"}) {
                const auto rep = scenarios::scenario_separation_report(
                    to_attribution_set_joined(joined[jm].lower),
                    to_attribution_set_joined(joined[jm].higher), spec);
                append_stats(out, id, method, jm, rep, spec);
            }
            {
                const auto rep = scenarios::scenario_separation_report(
                    to_attribution_set(bl_lower), to_attribution_set(bl_higher), spec);
                append_stats(out, id, method, "bl", rep, spec);
            }

            if (want_fig_data) {
                auto emit_l1 = [&](const std::vector<SampleExplanations>& side,
                                   const char* characteristic) {
                    for (const auto& s : side)
                        for (std::size_t mi = 0; mi < s.l1.size(); ++mi)
                            for (std::size_t j = 0; j < s.l1[mi].feature_names.size(); ++j)
                                out.fig_l1_csv += csv::join_fields(
                                                      {id, characteristic, std::to_string(s.id),
                                                       method, ctx.l1_names[mi],
                                                       s.l1[mi].feature_names[j],
                                                       format_double(s.l1[mi].attributions[j])}) +
                                                  "\n";
                };
                emit_l1(lower, "lower");
                emit_l1(higher, "higher");

                auto emit_joined_rows = [&](const joining::JoinedExplanation& je,
                                            const char* characteristic) {
                    const std::string join_name = joining::join_method_name(je.method);
                    for (std::size_t i = 0; i < je.rows.rows(); ++i)
                        for (std::size_t j = 0; j < je.features.size(); ++j)
                            out.fig_joined_csv +=
                                csv::join_fields({id, characteristic, std::to_string(je.sample_id),
                                                  method, join_name,
                                                  je.models.size() > 1 ? je.models[i] : "",
                                                  je.features[j],
                                                  format_double(je.rows(i, j))}) +
                                "\n";
                };
                for (std::size_t i = 0; i < jm1_lo.size(); ++i) {
                    emit_joined_rows(jm1_lo[i], "lower");
                    emit_joined_rows(joined["jm2"].lower[i], "lower");
                    emit_joined_rows(joined["jm3"].lower[i], "lower");
                }
                for (std::size_t i = 0; i < jm1_hi.size(); ++i) {
                    emit_joined_rows(jm1_hi[i], "higher");
                    emit_joined_rows(joined["jm2"].higher[i], "higher");
                    emit_joined_rows(joined["jm3"].higher[i], "higher");
                }
                auto emit_bl = [&](const std::vector<explain::Explanation>& side,
                                   const char* characteristic) {
                    for (const auto& e : side)
                        for (std::size_t j = 0; j < e.feature_names.size(); ++j)
                            out.fig_joined_csv +=
                                csv::join_fields({id, characteristic, std::to_string(e.sample_id),
                                                  method, "bl", "", e.feature_names[j],
                                                  format_double(e.attributions[j])}) +
                                "\n";
                };
                emit_bl(bl_lower, "lower");
                emit_bl(bl_higher, "higher");

                // box data: features of interest per join method and side
                auto emit_box = [&](const scenarios::AttributionSet& set, const char* join_name,
                                    const char* characteristic) {
                    for (const std::string& feat : spec.features_of_interest) {
                        const auto it =
                            std::find(set.features.begin(), set.features.end(), feat);
                        if (it == set.features.end()) continue;
                        const auto c = static_cast<std::size_t>(it - set.features.begin());
                        std::vector<double> v(set.values.rows());
                        for (std::size_t r = 0; r < set.values.rows(); ++r)
                            v[r] = set.values(r, c);
                        double mean = 0.0;
                        for (double x : v) mean += x;
                        mean /= static_cast<double>(v.size());
                        out.fig_box_csv +=
                            csv::join_fields({id, characteristic, method, join_name, feat,
                                              format_double(mean),
                                              format_double(scenarios::quantile(v, 0.25)),
                                              format_double(scenarios::quantile(v, 0.50)),
                                              format_double(scenarios::quantile(v, 0.75))}) +
                            "\n";
                    }
                };
                emit_box(to_attribution_set_joined(joined["jm2"].lower), "jm2", "lower");
                emit_box(to_attribution_set_joined(joined["jm2"].higher), "jm2", "higher");
                emit_box(to_attribution_set_joined(joined["jm3"].lower), "jm3", "lower");
                emit_box(to_attribution_set_joined(joined["jm3"].higher), "jm3", "higher");
                emit_box(to_attribution_set(bl_lower), "bl", "lower");
                emit_box(to_attribution_set(bl_higher), "bl", "higher");
            }
        }
    }
    return out;
}

}  // namespace

Artifacts cmd_scenario(const RunConfig& config) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const ingest::Snapshot snap = load_snapshot_or_fail(config);
    const stack::EnsembleSet set = load_ensemble_or_fail(config);
    const XaiContext ctx = make_xai_context(config, set, snap.splits);

    const std::string dir = config.out_dir + "/scenarios";
    fs::create_directories(dir);
    const ScenarioOutputs out = compute_scenarios(config, snap, ctx, guard, dir, false);

    write_text(guard, dir + "/separation_stats.csv", out.stats_csv);
    write_text(guard, dir + "/separation_margins.csv", out.margins_csv);
    json doc;
    doc["config_hash"] = config.config_hash();
    doc["seed"] = config.seed;
    doc["l2_variant"] = ctx.l2_name;
    doc["reports"] = out.reports;
    write_json_doc(guard, dir + "/separation.json", doc);
    return guard.commit();
}

Artifacts cmd_export(const RunConfig& config) {
    OutputLock lock(config.out_dir);
    ArtifactGuard guard;

    const ingest::Snapshot snap = load_snapshot_or_fail(config);
    const stack::EnsembleSet set = load_ensemble_or_fail(config);
    const XaiContext ctx = make_xai_context(config, set, snap.splits);

    const std::string dir = config.out_dir + "/export";
    fs::create_directories(dir);
    const ScenarioOutputs out = compute_scenarios(config, snap, ctx, guard, dir, true);

    write_text(guard, dir + "/fig_l1.csv", out.fig_l1_csv);
    write_text(guard, dir + "/fig_joined.csv", out.fig_joined_csv);
    write_text(guard, dir + "/fig_box.csv", out.fig_box_csv);
    write_text(guard, dir + "/separation_stats.csv", out.stats_csv);
    write_text(guard, dir + "/separation_margins.csv", out.margins_csv);

    json doc;
    doc["config_hash"] = config.config_hash();
    doc["seed"] = config.seed;
    doc["l2_variant"] = ctx.l2_name;
    doc["files"] = {"fig_l1.csv", "fig_joined.csv", "fig_box.csv", "separation_stats.csv",
                    "separation_margins.csv"};
    write_json_doc(guard, dir + "/export.json", doc);
    return guard.commit();
}

}  // namespace etax::cli
