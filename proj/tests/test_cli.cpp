#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "etax/calendar.hpp"
#include "etax/csv.hpp"
#include "etax/pipeline.hpp"
#include "etax/synthetic.hpp"
#include "helpers.hpp"

using namespace etax;
using namespace etax::cli;
using etax::testing::TempDir;

namespace {

RunConfig tiny_config(const std::string& out_dir) {
    RunConfig cfg = RunConfig::defaults();
    cfg.seed = 5;
    cfg.out_dir = out_dir;
    cfg.profile = "tiny";
    cfg.synthetic.rows = 1200;
    cfg.synthetic.days = 28;
    cfg.xai.lime.n_samples = 400;
    cfg.xai.shap.n_coalitions = 128;
    cfg.xai.background = 20;
    cfg.scenario_ids = {"SC2", "SC4"};
    cfg.scenario_per_side = 3;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ETAX_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys and bad values") {
    CHECK_THROWS_AS(RunConfig::from_json({{"nonsense", 1}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"models", {{"profile", "nope"}}}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"xai", {{"methods", {"deeplift"}}}}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"joining", {{"beta", -0.5}}}}), ConfigError);
    const RunConfig ok = RunConfig::from_json({{"seed", 9}});
    CHECK(ok.seed == 9);
}

TEST_CASE("the full-scale profile carries the documented hyperparameters") {
    const auto l1 = profile_l1("paper-nyc");
    REQUIRE(l1.size() == 3);
    const auto& rf = std::get<learners::ForestConfig>(l1[0].params);
    CHECK(rf.trees == 300);
    CHECK(rf.max_depth == 89);
    CHECK(rf.min_samples_leaf == 4);
    CHECK(rf.min_samples_split == 4);
    CHECK(rf.max_features == 0);  // automatic: ceil(m / 3)
    const auto& gbt = std::get<learners::BoostConfig>(l1[1].params);
    CHECK(gbt.trees == 300);
    CHECK(gbt.max_depth == 11);
    CHECK(gbt.min_child_weight == 7.0);
    CHECK(gbt.subsample == 1.0);
    CHECK(gbt.gamma == 0.0);
    CHECK(gbt.colsample == 1.0);
    const auto& nn = std::get<learners::NetConfig>(l1[2].params);
    CHECK(nn.hidden == std::vector<int>{300, 150, 50, 25});
    CHECK(nn.batch_size == 128);
    CHECK(nn.learning_rate == 0.001);
    CHECK(nn.epochs == 25);

    const auto l2 = profile_l2("paper-nyc");
    REQUIRE(l2.size() == 4);
    CHECK(l2[0].family() == learners::Family::linear);
    CHECK(std::get<learners::ForestConfig>(l2[1].params).trees == 100);
    CHECK(std::get<learners::BoostConfig>(l2[2].params).trees == 100);
    CHECK(std::get<learners::NetConfig>(l2[3].params).hidden == std::vector<int>{50, 25});
}

TEST_CASE("config hash is stable and sensitive") {
    const RunConfig a = tiny_config("x");
    RunConfig b = tiny_config("x");
    CHECK(a.config_hash() == b.config_hash());
    b.seed += 1;
    CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("synthetic congestion has weekday peaks and a quiet night") {
    const double night = synthetic_congestion(2, 48);
    const double morning = synthetic_congestion(2, 96);
    const double evening = synthetic_congestion(2, 204);
    CHECK(night < 1.1);
    CHECK(morning > 1.5);
    CHECK(evening > morning);
    // weekends lose the morning peak
    CHECK(synthetic_congestion(6, 96) < 1.2);
}

TEST_CASE("synthetic artifacts parse back through the ingest path") {
    TempDir tmp("synth");
    SyntheticConfig cfg;
    cfg.rows = 400;
    cfg.days = 14;
    ingest::BoundingBox box{40.63, 40.85, -74.03, -73.75};
    const SyntheticArtifacts art = generate_synthetic(cfg, box, 3, tmp.path());

    const auto parsed = ingest::parse_trips(art.trips_csv, ingest::TripFormat::generic());
    CHECK(parsed.trips.size() == 400);
    CHECK(parsed.rejects.entries.empty());
    const auto weather = ingest::WeatherSeries::load_csv(art.weather_csv);
    CHECK(weather.times.size() > 14 * 24);
    const auto attached = ingest::attach_temperature(parsed.trips, weather);
    CHECK(attached.trips.size() == 400);
    for (const auto& t : attached.trips) {
        CHECK(box.contains(t.pickup_lat, t.pickup_lon));
        CHECK(box.contains(t.dropoff_lat, t.dropoff_lon));
        CHECK(t.duration_s >= 60.0);
    }
}

TEST_CASE("prepare is byte-identical for the same config and seed") {
    TempDir a("prep_a"), b("prep_b");
    RunConfig ca = tiny_config(a.path() + "/out");
    RunConfig cb = tiny_config(b.path() + "/out");
    cmd_prepare(ca, true);
    cmd_prepare(cb, true);
    for (const char* f : {"/data/train.csv", "/data/validation.csv", "/data/test.csv"}) {
        const std::string fa = testing::read_file(ca.out_dir + f);
        CHECK(fa == testing::read_file(cb.out_dir + f));
        CHECK(!fa.empty());
    }
}

TEST_CASE("the pipeline runs end to end on the tiny fixture") {
    TempDir tmp("pipe");
    RunConfig cfg = tiny_config(tmp.path() + "/out");
    cmd_prepare(cfg, true);
    cmd_train(cfg);
    cmd_evaluate(cfg);

    // seven model rows in table-one order
    const std::string metrics = testing::read_file(cfg.out_dir + "/metrics.csv");
    CHECK(metrics.find("model,dataset,mae_s,mre,mape_pct") == 0);
    std::size_t lines = 0;
    for (char ch : metrics)
        if (ch == '\n') ++lines;
    CHECK(lines == 8);  // header + 3 level-one + 4 level-two
    CHECK(metrics.find("L1-rf") != std::string::npos);
    CHECK(metrics.find("L2-nn") != std::string::npos);

    // explain two test samples with both methods
    std::ifstream test_csv(cfg.out_dir + "/data/test.csv");
    std::string header, row;
    std::getline(test_csv, header);
    std::getline(test_csv, row);
    const std::int64_t id = std::stoll(row.substr(0, row.find(',')));
    cmd_explain(cfg, {id}, "");

    const std::string expl = testing::read_file(cfg.out_dir + "/explanations/explanations.csv");
    CHECK(expl.find("lime") != std::string::npos);
    CHECK(expl.find("shap") != std::string::npos);

    cmd_join(cfg, {});
    for (const char* f : {"/join/jm1.csv", "/join/jm2.csv", "/join/jm3.csv", "/join/bl.csv"})
        CHECK(!testing::read_file(cfg.out_dir + f).empty());

    // cross-artifact identity: jm2 values equal the jm1 column sums
    {
        std::ifstream jm1(cfg.out_dir + "/join/jm1.csv");
        std::map<std::string, double> sums;  // key: sample|method|feature
        std::string line;
        std::getline(jm1, line);
        std::vector<std::string> fields;
        while (std::getline(jm1, line)) {
            csv::split_line(line, fields);
            sums[fields[0] + "|" + fields[1] + "|" + fields[3]] += std::stod(fields[4]);
        }
        std::ifstream jm2(cfg.out_dir + "/join/jm2.csv");
        std::getline(jm2, line);
        std::size_t checked = 0;
        while (std::getline(jm2, line)) {
            csv::split_line(line, fields);
            const double expected = sums.at(fields[0] + "|" + fields[1] + "|" + fields[3]);
            CHECK(std::stod(fields[4]) == doctest::Approx(expected).epsilon(1e-9));
            ++checked;
        }
        CHECK(checked > 0);
    }

    cmd_scenario(cfg);
    CHECK(!testing::read_file(cfg.out_dir + "/scenarios/separation_margins.csv").empty());
    cmd_export(cfg);
    CHECK(!testing::read_file(cfg.out_dir + "/export/fig_box.csv").empty());
}

TEST_CASE("missing upstream artifacts raise artifact errors") {
    TempDir tmp("missing");
    RunConfig cfg = tiny_config(tmp.path() + "/out");
    CHECK_THROWS_AS(cmd_train(cfg), ArtifactError);
    CHECK_THROWS_AS(cmd_join(cfg, {}), ArtifactError);
}

TEST_CASE("the binary maps failures onto distinct exit codes") {
    TempDir tmp("exit");
    // unknown command -> usage error
    CHECK(run_cli("frobnicate") == 2);
    // invalid config -> 3
    testing::write_file(tmp.path() + "/bad.json", "{\"nonsense\": 1}");
    CHECK(run_cli("--config " + tmp.path() + "/bad.json prepare --synthetic") == 3);
    // missing upstream artifact -> 4
    testing::write_file(tmp.path() + "/ok.json",
                        "{\"out_dir\": \"" + tmp.path() + "/out\", \"models\": {\"profile\": \"tiny\"}}");
    CHECK(run_cli("--config " + tmp.path() + "/ok.json train") == 4);
    // happy path -> 0
    testing::write_file(tmp.path() + "/tiny.json",
                        "{\"out_dir\": \"" + tmp.path() +
                            "/out\", \"models\": {\"profile\": \"tiny\"}, "
                            "\"synthetic\": {\"rows\": 300, \"days\": 14}}");
    CHECK(run_cli("--config " + tmp.path() + "/tiny.json prepare --synthetic") == 0);
}

TEST_CASE("a failing command removes its partial artifacts") {
    TempDir tmp("cleanup");
    RunConfig cfg = tiny_config(tmp.path() + "/out");
    cmd_prepare(cfg, true);
    cmd_train(cfg);
    // corrupt the explanations document so join fails after opening it
    std::filesystem::create_directories(cfg.out_dir + "/explanations");
    testing::write_file(cfg.out_dir + "/explanations/explanations.json", "{\"format\":\"junk\"}");
    CHECK_THROWS(cmd_join(cfg, {}));
    CHECK_FALSE(std::filesystem::exists(cfg.out_dir + "/join/jm1.csv"));
    CHECK_FALSE(std::filesystem::exists(cfg.out_dir + "/join/joined.json"));
}

TEST_CASE("the bundled synthetic fixture runs the whole pipeline inside the budget") {
    TempDir tmp("e2e");
    RunConfig cfg = RunConfig::defaults();  // 5000-row synthetic fixture
    cfg.seed = 21;
    cfg.out_dir = tmp.path() + "/out";
    cfg.profile = "desk";
    cfg.xai.lime.n_samples = 2000;
    cfg.xai.shap.n_coalitions = 512;
    cfg.xai.background = 40;
    cfg.scenario_per_side = 5;
    const std::string cfg_path = tmp.path() + "/run.json";
    testing::write_file(cfg_path, cfg.to_json().dump());

    const auto start = std::chrono::steady_clock::now();
    CHECK(run_cli("--config " + cfg_path + " prepare --synthetic") == 0);
    CHECK(run_cli("--config " + cfg_path + " train") == 0);
    CHECK(run_cli("--config " + cfg_path + " evaluate") == 0);

    std::ifstream test_csv(cfg.out_dir + "/data/test.csv");
    std::string header, row;
    std::getline(test_csv, header);
    std::getline(test_csv, row);
    const std::string id = row.substr(0, row.find(','));
    CHECK(run_cli("--config " + cfg_path + " explain --sample " + id) == 0);
    CHECK(run_cli("--config " + cfg_path + " join") == 0);
    CHECK(run_cli("--config " + cfg_path + " scenario") == 0);
    CHECK(run_cli("--config " + cfg_path + " export") == 0);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed < 300.0);
    MESSAGE("full pipeline on the bundled fixture took ", elapsed, " s");

    for (const char* f :
         {"/metrics.csv", "/metrics.json", "/join/joined.json", "/scenarios/separation.json",
          "/export/fig_box.csv", "/export/export.json"})
        CHECK(std::filesystem::exists(cfg.out_dir + f));
}

TEST_CASE("the output lock refuses concurrent runs") {
    TempDir tmp("lock");
    RunConfig cfg = tiny_config(tmp.path() + "/out");
    std::filesystem::create_directories(cfg.out_dir);
    testing::write_file(cfg.out_dir + "/.lock", "");
    CHECK_THROWS_AS(cmd_prepare(cfg, true), Error);
    std::filesystem::remove(cfg.out_dir + "/.lock");
    cmd_prepare(cfg, true);  // and succeeds once the lock is gone
}
