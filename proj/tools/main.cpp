// etax: train, evaluate and explain a two-level stacked ensemble for
// route-free taxi trip duration prediction.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "etax/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitMissingArtifact = 4;

struct GlobalOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

etax::cli::RunConfig resolve_config(const GlobalOptions& opt) {
    etax::cli::RunConfig cfg = opt.config_path.empty()
                                   ? etax::cli::RunConfig::defaults()
                                   : etax::cli::RunConfig::load(opt.config_path);
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (opt.seed_set) cfg.seed = opt.seed;
    return cfg;
}

void report(const etax::cli::Artifacts& artifacts) {
    for (const auto& f : artifacts.files) std::cout << "wrote " << f << '\n';
}

}  // namespace

namespace {

int run(int argc, char** argv) {
    CLI::App app{"stacked-ensemble ETA training and explanation pipeline"};
    app.require_subcommand(1);

    GlobalOptions opt;
    app.add_option("--config", opt.config_path, "run configuration file (JSON)");
    app.add_option("--out", opt.out_dir, "output directory (overrides the config)");
    app.add_option("--seed", opt.seed, "seed override")->each([&](const std::string&) {
        opt.seed_set = true;
    });

    bool synthetic = false;
    auto* prepare = app.add_subcommand(
        "prepare", "parse trips, join weather, filter outliers, engineer features, split");
    prepare->add_flag("--synthetic", synthetic,
                      "generate the bundled synthetic fixture instead of reading data CSVs");

    app.add_subcommand("train", "fit the level-one models and every level-two alternative");
    app.add_subcommand("evaluate", "test-split metrics for all models");

    std::vector<std::int64_t> samples;
    std::string method;
    auto* explain_cmd = app.add_subcommand("explain", "explain predictions for selected samples");
    explain_cmd->add_option("--sample", samples, "test-split trip id (repeatable)");
    explain_cmd->add_option("--method", method, "lime or shap (default: both from config)");

    std::vector<std::string> jms;
    auto* join_cmd =
        app.add_subcommand("join", "derive joined explanations from an explain run");
    join_cmd->add_option("--jm", jms, "joining method: 1, 2, 3 or bl (repeatable; default all)");

    app.add_subcommand("scenario", "sample the evaluation scenarios and report separation");
    app.add_subcommand("export", "emit plot-ready long-format explanation data");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        const etax::cli::RunConfig cfg = resolve_config(opt);
        if (app.got_subcommand("prepare")) {
            report(etax::cli::cmd_prepare(cfg, synthetic));
        } else if (app.got_subcommand("train")) {
            report(etax::cli::cmd_train(cfg));
        } else if (app.got_subcommand("evaluate")) {
            report(etax::cli::cmd_evaluate(cfg));
        } else if (app.got_subcommand("explain")) {
            report(etax::cli::cmd_explain(cfg, samples, method));
        } else if (app.got_subcommand("join")) {
            for (std::string& v : jms)
                if (v == "1" || v == "2" || v == "3") v = "jm" + v;
            report(etax::cli::cmd_join(cfg, jms));
        } else if (app.got_subcommand("scenario")) {
            report(etax::cli::cmd_scenario(cfg));
        } else if (app.got_subcommand("export")) {
            report(etax::cli::cmd_export(cfg));
        } else {
            std::cerr << "unknown command\n";
            return kExitUsage;
        }
    } catch (const etax::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const etax::ArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return kExitMissingArtifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (...) {
        std::cerr << "error: unknown failure\n";
        return kExitRuntime;
    }
}
