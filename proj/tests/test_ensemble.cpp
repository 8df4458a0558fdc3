#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qsk/ensemble.hpp"

using namespace qsk;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

fs::path fresh_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "qsk_ensemble_tests" / leaf;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::vector<double> fields(const std::string& line) {
    std::vector<double> out;
    std::istringstream in(line);
    for (std::string cell; std::getline(in, cell, ',');) out.push_back(std::stod(cell));
    return out;
}

ExperimentConfig small_benchmark(const std::string& leaf) {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::EnergyBenchmark;
    cfg.n_list = {4, 5};
    cfg.g_grid = {0.5, 1.0};
    cfg.realizations = 2;
    cfg.master_seed = 71;
    cfg.workers = 1;
    cfg.optimizer.restarts_at_g0 = 4;
    cfg.optimizer.sweep_step = 0.25;
    cfg.output_directory = fresh_dir(leaf).string();
    return cfg;
}

}  // namespace

TEST_CASE("experiment modes round-trip through their names") {
    for (ExperimentMode mode :
         {ExperimentMode::EnergyBenchmark, ExperimentMode::Sweep,
          ExperimentMode::Susceptibility, ExperimentMode::EntropyProfile,
          ExperimentMode::WgsEnsemble, ExperimentMode::LevelRatio})
        REQUIRE(experiment_mode_from_string(to_string(mode)) == mode);
    REQUIRE_THROWS_WITH(experiment_mode_from_string("anneal"),
                        ContainsSubstring("unknown mode 'anneal'"));
}

TEST_CASE("configs reject malformed input before any work happens") {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::Sweep;
    cfg.n_list = {6};
    cfg.g_grid = {0.5, 1.0};
    cfg.output_directory = "unused";
    REQUIRE_NOTHROW(cfg.validate());

    SECTION("system sizes") {
        cfg.n_list = {};
        REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.n_list = {1};
        REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("grids") {
        cfg.g_grid = {};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("g_grid"));
        cfg.g_grid = {1.0, 0.5};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("ascending"));
        cfg.g_grid = {-0.5, 1.0};
        REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.g_grid = {0.5};
        cfg.h_list = {};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("h_list"));
        cfg.h_list = {-0.1};
        REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("counts") {
        cfg.realizations = 0;
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("realizations"));
        cfg.realizations = 1;
        cfg.workers = -1;
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("workers"));
    }
    SECTION("nested optimizer settings are vetted too") {
        cfg.optimizer.sweep_step = 0.0;
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("sweep_step"));
    }
    SECTION("the exact oracle cap is spelled out") {
        cfg.mode = ExperimentMode::EnergyBenchmark;
        cfg.n_list = {30};
        REQUIRE_THROWS_WITH(cfg.validate(),
                            ContainsSubstring("capped at n = 16"));
        cfg.mode = ExperimentMode::Susceptibility;
        cfg.with_exact = true;
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("n = 30"));
        cfg.n_list = {16};
        REQUIRE_NOTHROW(cfg.validate());
    }
    SECTION("with_exact only makes sense when a sweep is compared to ED") {
        cfg.mode = ExperimentMode::EntropyProfile;
        cfg.with_exact = true;
        cfg.entropy.subsystem_sizes = {1, 2};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("with_exact"));
        cfg.mode = ExperimentMode::LevelRatio;
        REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("entropy settings") {
        cfg.mode = ExperimentMode::EntropyProfile;
        cfg.entropy.subsystem_sizes = {};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("subsystem_sizes"));
        cfg.entropy.subsystem_sizes = {6};  // == n: no complement left
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("1 <= L <= n-1"));
        cfg.entropy.subsystem_sizes = {1, 2};
        cfg.entropy.samples = 0;
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("samples"));
    }
    SECTION("level statistics need at least three eigenvalues") {
        cfg.mode = ExperimentMode::LevelRatio;
        cfg.n_list = {2};
        REQUIRE_THROWS_WITH(cfg.validate(), ContainsSubstring("n must be >= 3"));
    }
}

TEST_CASE("raw JSON documents are parsed strictly") {
    REQUIRE_THROWS_WITH(validate_config("{not json"),
                        ContainsSubstring("config is not valid JSON"));
    REQUIRE_THROWS_WITH(
        validate_config(R"({"mode": "sweep", "n_list": [4], "g_grid": [0.5],
                            "gg_grid": [1.0]})"),
        ContainsSubstring("unknown key 'gg_grid'"));
    REQUIRE_THROWS_WITH(
        validate_config(R"({"mode": "sweep", "n_list": [4], "g_grid": [0.5],
                            "entropy": {"samples": 10, "sizes": [1]}})"),
        ContainsSubstring("unknown key 'sizes'"));
    REQUIRE_THROWS_WITH(
        validate_config(R"({"mode": "sweep", "n_list": [4], "g_grid": []})"),
        ContainsSubstring("g_grid"));

    // output_directory may be deferred to the command line
    const ExperimentConfig cfg =
        validate_config(R"({"mode": "sweep", "n_list": [4], "g_grid": [0.5]})");
    REQUIRE(cfg.output_directory.empty());
    REQUIRE(cfg.h_list == std::vector<double>{0.0});
}

TEST_CASE("the fingerprint tracks physics, not execution details") {
    ExperimentConfig cfg = small_benchmark("fingerprint");
    const std::string base = config_fingerprint(cfg);

    ExperimentConfig moved = cfg;
    moved.workers = 7;
    moved.output_directory = "/somewhere/else";
    REQUIRE(config_fingerprint(moved) == base);

    ExperimentConfig reseeded = cfg;
    reseeded.master_seed = 72;
    REQUIRE(config_fingerprint(reseeded) != base);

    // round-trip through JSON preserves the fingerprint
    const ExperimentConfig parsed = experiment_config_from_json(to_json(cfg));
    REQUIRE(config_fingerprint(parsed) == base);
}

TEST_CASE("an energy benchmark produces every derived table") {
    ExperimentConfig cfg = small_benchmark("benchmark");
    const RunManifest manifest = run_experiment(cfg);
    REQUIRE(manifest.total == 4);  // 2 sizes x 2 realizations
    REQUIRE(manifest.completed == 4);
    REQUIRE(manifest.failed == 0);
    REQUIRE(manifest.all_done());

    const fs::path dir = cfg.output_directory;
    for (const char* name :
         {"config.json", "manifest.json", "sweep_energy.csv", "energy_error.csv",
          "susceptibility_cs.csv", "susceptibility_gcs.csv", "susceptibility_ed.csv",
          "magnetization_cs.csv", "magnetization_gcs.csv", "magnetization_ed.csv"})
        REQUIRE(fs::exists(dir / name));

    const auto energy = lines(slurp(dir / "sweep_energy.csv"));
    REQUIRE(energy.size() == 5);  // header + 2 sizes x 2 couplings
    REQUIRE(energy[0] == "N,g,h,e_cs_mean,e_cs_stderr,e_gcs_mean,e_gcs_stderr");
    for (std::size_t i = 1; i < energy.size(); ++i) {
        const auto row = fields(energy[i]);
        REQUIRE(row.size() == 7);
        REQUIRE(row[5] <= row[3] + 1e-9);  // entangled family never loses
    }

    const auto err = lines(slurp(dir / "energy_error.csv"));
    REQUIRE(err.size() == 5);
    for (std::size_t i = 1; i < err.size(); ++i) {
        const auto row = fields(err[i]);
        REQUIRE(row.size() == 7);
        REQUIRE(row[3] >= 0.0);              // eps_cs
        REQUIRE(row[5] >= 0.0);              // eps_gcs
        REQUIRE(row[5] <= row[3] + 1e-12);   // and it never increases the error
    }

    // every task file carries the fingerprint that guards aggregation
    for (const auto& task : manifest.tasks) {
        const auto payload = nlohmann::json::parse(slurp(dir / task.path));
        REQUIRE(payload.at("config_hash").get<std::string>() == manifest.config_hash);
        REQUIRE(payload.at("points").size() == cfg.g_grid.size());
    }
}

TEST_CASE("plain sweeps skip the exact-only tables") {
    ExperimentConfig cfg = small_benchmark("plain");
    cfg.mode = ExperimentMode::Sweep;
    cfg.n_list = {5};
    const RunManifest manifest = run_experiment(cfg);
    REQUIRE(manifest.completed == 2);
    const fs::path dir = cfg.output_directory;
    REQUIRE(fs::exists(dir / "sweep_energy.csv"));
    REQUIRE(fs::exists(dir / "susceptibility_gcs.csv"));
    REQUIRE_FALSE(fs::exists(dir / "energy_error.csv"));
    REQUIRE_FALSE(fs::exists(dir / "susceptibility_ed.csv"));
}

TEST_CASE("aggregates are byte-identical for any worker count") {
    std::string first;
    for (int workers : {1, 4}) {
        ExperimentConfig cfg = small_benchmark(workers == 1 ? "w1" : "w4");
        cfg.mode = ExperimentMode::Susceptibility;
        cfg.with_exact = true;
        cfg.h_list = {0.0, 0.3};
        cfg.workers = workers;
        run_experiment(cfg);
        std::string text;
        for (const char* name : {"sweep_energy.csv", "susceptibility_gcs.csv",
                                 "magnetization_ed.csv", "energy_error.csv"})
            text += slurp(fs::path(cfg.output_directory) / name);
        if (workers == 1)
            first = text;
        else
            REQUIRE(text == first);
    }
}

TEST_CASE("interrupted runs resume without recomputing finished tasks") {
    ExperimentConfig cfg = small_benchmark("resume");
    const RunManifest full = run_experiment(cfg);
    REQUIRE(full.completed == 4);
    const fs::path dir = cfg.output_directory;
    const std::string before = slurp(dir / "sweep_energy.csv");

    SECTION("a clean re-run reuses everything") {
        const RunManifest again = run_experiment(cfg);
        REQUIRE(again.completed == 4);
        REQUIRE(again.reused == 4);
        REQUIRE(slurp(dir / "sweep_energy.csv") == before);
    }
    SECTION("lost and corrupted task files are the only ones recomputed") {
        fs::remove(dir / "tasks/task_000002.json");
        {
            std::ofstream bad(dir / "tasks/task_000001.json", std::ios::trunc);
            bad << "{\"task\": 1, \"config_hash\": \"stale\"}";
        }
        const RunManifest resumed = run_experiment(cfg);
        REQUIRE(resumed.completed == 4);
        REQUIRE(resumed.reused == 2);
        REQUIRE(slurp(dir / "sweep_energy.csv") == before);
    }
    SECTION("a different experiment refuses to reuse the directory") {
        ExperimentConfig other = cfg;
        other.master_seed = 99;
        REQUIRE_THROWS_WITH(run_experiment(other),
                            ContainsSubstring("fingerprint mismatch"));
    }
    SECTION("report rebuilds aggregates from task files alone") {
        fs::remove(dir / "sweep_energy.csv");
        fs::remove(dir / "energy_error.csv");
        const RunManifest reported = report(cfg.output_directory);
        REQUIRE(reported.completed == 4);
        REQUIRE(slurp(dir / "sweep_energy.csv") == before);
        REQUIRE(fs::exists(dir / "energy_error.csv"));
    }
}

TEST_CASE("a task failure is recorded without sinking the run") {
    ExperimentConfig cfg = small_benchmark("failure");
    cfg.n_list = {4};  // tasks 0 and 1
    const fs::path dir = cfg.output_directory;
    // Block one task's output path: the atomic write cannot open a stream
    // where a directory is squatting on its temp name.
    fs::create_directories(dir / "tasks/task_000001.json.tmp");
    const RunManifest manifest = run_experiment(cfg);
    REQUIRE(manifest.total == 2);
    REQUIRE(manifest.completed == 1);
    REQUIRE(manifest.failed == 1);
    REQUIRE(manifest.tasks[1].state == TaskState::Failed);
    REQUIRE_FALSE(manifest.tasks[1].error.empty());
    REQUIRE(fs::exists(dir / "sweep_energy.csv"));  // reduced from the survivor

    // clearing the blockage and resuming completes the run
    fs::remove_all(dir / "tasks/task_000001.json.tmp");
    const RunManifest resumed = run_experiment(cfg);
    REQUIRE(resumed.completed == 2);
    REQUIRE(resumed.reused == 1);
}

TEST_CASE("entropy profiles aggregate per subsystem size and fit the crossover") {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::EntropyProfile;
    cfg.n_list = {6};
    cfg.g_grid = {1.0};
    cfg.realizations = 2;
    cfg.entropy.samples = 500;
    cfg.entropy.subsystem_sizes = {1, 2, 3};
    cfg.master_seed = 31;
    cfg.workers = 1;
    cfg.optimizer.restarts_at_g0 = 2;
    cfg.optimizer.sweep_step = 0.25;
    cfg.output_directory = fresh_dir("entropy").string();

    const RunManifest manifest = run_experiment(cfg);
    REQUIRE(manifest.completed == 2);
    const fs::path dir = cfg.output_directory;
    REQUIRE_FALSE(fs::exists(dir / "sweep_energy.csv"));

    const auto profile = lines(slurp(dir / "entropy_profile.csv"));
    REQUIRE(profile[0] == "N,L,g,h,realization_seed,s2,stderr,samples");
    REQUIRE(profile.size() == 1 + 2 * 3);  // realizations x subsystem sizes
    for (std::size_t i = 1; i < profile.size(); ++i) {
        const auto row = fields(profile[i]);
        REQUIRE(row[0] == 6.0);
        REQUIRE(row[5] >= 0.0);  // Renyi-2 entropy is nonnegative
    }

    const auto fit = lines(slurp(dir / "entropy_fit.csv"));
    REQUIRE(fit[0] == "N,g,h,a,b,c,residual");
    REQUIRE(fit.size() == 2);  // one (N, g, h) cell
    const auto row = fields(fit[1]);
    REQUIRE(row[3] > 0.0);                              // a
    REQUIRE(row[5] == Catch::Approx(row[3] * row[4] / 6.0));  // c = a b / N
}

TEST_CASE("graph-state ensembles and level statistics reduce to one-line tables") {
    ExperimentConfig wgs;
    wgs.mode = ExperimentMode::WgsEnsemble;
    wgs.n_list = {10};
    wgs.realizations = 4;
    wgs.entropy.samples = 400;
    wgs.entropy.subsystem_sizes = {1, 2, 4};
    wgs.master_seed = 13;
    wgs.workers = 1;
    wgs.output_directory = fresh_dir("wgs").string();
    REQUIRE(run_experiment(wgs).completed == 4);
    const auto fit = lines(slurp(fs::path(wgs.output_directory) / "entropy_fit.csv"));
    REQUIRE(fit.size() == 2);
    const auto frow = fields(fit[1]);
    REQUIRE(frow[0] == 10.0);
    REQUIRE(frow[1] == 0.0);  // graph states carry no transverse field

    // two subsystem sizes are enough for profiles but not for the fit
    ExperimentConfig thin = wgs;
    thin.entropy.subsystem_sizes = {2, 4};
    thin.output_directory = fresh_dir("wgs_thin").string();
    REQUIRE(run_experiment(thin).completed == 4);
    REQUIRE(lines(slurp(fs::path(thin.output_directory) / "entropy_profile.csv")).size() ==
            1 + 4 * 2);
    REQUIRE(lines(slurp(fs::path(thin.output_directory) / "entropy_fit.csv")).size() == 1);

    ExperimentConfig lr;
    lr.mode = ExperimentMode::LevelRatio;
    lr.n_list = {40};
    lr.realizations = 12;
    lr.master_seed = 17;
    lr.workers = 1;
    lr.output_directory = fresh_dir("ratio").string();
    REQUIRE(run_experiment(lr).completed == 12);
    const auto table = lines(slurp(fs::path(lr.output_directory) / "level_ratio.csv"));
    REQUIRE(table[0] == "n,draws,r_mean,r_stderr");
    REQUIRE(table.size() == 2);
    const auto row = fields(table[1]);
    REQUIRE(row[1] == 12.0);
    REQUIRE(row[2] > 0.40);  // mixing matrices are GOE-like, far from Poisson
    REQUIRE(row[2] < 0.65);
}
