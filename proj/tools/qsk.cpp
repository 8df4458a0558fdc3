// Command-line driver for disorder-ensemble experiments.
//
//   qsk validate --config experiment.json
//   qsk run      --config experiment.json [--out DIR] [--workers K] [--seed S]
//   qsk resume   --out DIR [--workers K]
//   qsk report   --out DIR
//
// Exit codes: 0 on success, 1 when tasks failed or results are incomplete,
// 2 for configuration or usage errors (rejected before any work starts).

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "qsk/ensemble.hpp"

namespace {

// precedence: --workers flag, then QSK_WORKERS, then the config file
void apply_workers(qsk::ExperimentConfig& cfg, int flag_workers) {
    if (flag_workers >= 0) {
        cfg.workers = flag_workers;
        return;
    }
    if (const char* env = std::getenv("QSK_WORKERS")) {
        try {
            std::size_t used = 0;
            const int value = std::stoi(env, &used);
            if (used != std::string(env).size() || value < 0)
                throw std::invalid_argument("");
            cfg.workers = value;
        } catch (const std::exception&) {
            throw std::invalid_argument(
                std::string("QSK_WORKERS must be a nonnegative integer, got '") +
                env + "'");
        }
    }
}

void print_manifest(const qsk::RunManifest& m, const std::string& dir) {
    std::printf("mode:      %s\n", qsk::to_string(m.mode));
    std::printf("tasks:     %d total, %d completed (%d reused), %d failed\n",
                m.total, m.completed, m.reused, m.failed);
    std::printf("artifacts: %s\n", dir.c_str());
    int shown = 0;
    for (const auto& t : m.tasks) {
        if (t.state != qsk::TaskState::Failed) continue;
        if (++shown > 5) {
            std::printf("  ... and %d more failures\n", m.failed - 5);
            break;
        }
        std::printf("  task %d failed: %s\n", t.index, t.error.c_str());
    }
}

qsk::ExperimentConfig load_config(const std::string& path) {
    return qsk::validate_config(qsk::detail::read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational ground-state ensembles for all-to-all spin glasses"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int workers = -1;
    std::optional<std::uint64_t> seed;

    auto* validate = app.add_subcommand("validate", "check a configuration file");
    validate->add_option("--config", config_path, "experiment JSON")->required();

    auto* run = app.add_subcommand("run", "run an experiment (continues partial runs)");
    run->add_option("--config", config_path, "experiment JSON")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    run->add_option("--workers", workers, "worker threads (0 = all hardware)");
    run->add_option("--seed", seed, "master seed (overrides the config)");

    auto* resume = app.add_subcommand("resume", "continue a run from its directory");
    resume->add_option("--out", out_dir, "existing run directory")->required();
    resume->add_option("--workers", workers, "worker threads (0 = all hardware)");
    resume->add_option("--config", config_path,
                       "optional cross-check against the stored configuration");

    auto* report = app.add_subcommand("report", "rebuild aggregate tables from task files");
    report->add_option("--out", out_dir, "existing run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) {
            const qsk::ExperimentConfig cfg = load_config(config_path);
            std::printf("configuration ok: mode=%s, tasks=%d, fingerprint=%s\n",
                        qsk::to_string(cfg.mode), qsk::task_count(cfg),
                        qsk::config_fingerprint(cfg).c_str());
            return 0;
        }
        if (run->parsed()) {
            qsk::ExperimentConfig cfg = load_config(config_path);
            if (!out_dir.empty()) cfg.output_directory = out_dir;
            if (cfg.output_directory.empty())
                throw std::invalid_argument(
                    "no output directory: set it in the config or pass --out");
            if (seed) cfg.master_seed = *seed;
            apply_workers(cfg, workers);
            const qsk::RunManifest m = qsk::run_experiment(cfg);
            print_manifest(m, cfg.output_directory);
            return m.failed == 0 ? 0 : 1;
        }
        if (resume->parsed()) {
            const std::filesystem::path dir = out_dir;
            if (!std::filesystem::exists(dir / "config.json"))
                throw std::invalid_argument("not a run directory (no config.json): " +
                                            out_dir);
            qsk::ExperimentConfig cfg =
                qsk::validate_config(qsk::detail::read_file(dir / "config.json"));
            cfg.output_directory = out_dir;
            if (!config_path.empty() &&
                qsk::config_fingerprint(load_config(config_path)) !=
                    qsk::config_fingerprint(cfg))
                throw std::invalid_argument(
                    "--config disagrees with the configuration stored in " + out_dir);
            apply_workers(cfg, workers);
            const qsk::RunManifest m = qsk::run_experiment(cfg);
            print_manifest(m, cfg.output_directory);
            return m.failed == 0 ? 0 : 1;
        }
        // report
        const qsk::RunManifest m = qsk::report(out_dir);
        print_manifest(m, out_dir);
        return m.all_done() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
