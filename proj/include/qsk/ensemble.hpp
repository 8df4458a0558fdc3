#pragma once
// Disorder-ensemble orchestration: experiment configuration, deterministic
// fan-out of per-realization tasks over a worker pool, crash-safe per-task
// persistence with resume, and reduction into plot-ready CSV tables.
//
// Determinism contract: every task derives its random stream from the master
// seed and its task index alone, task files are written atomically, and the
// reducer folds results in task-index order — so aggregate outputs are
// byte-identical for any worker count and across kill/resume cycles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qsk/analysis.hpp"
#include "qsk/ansatz.hpp"
#include "qsk/disorder.hpp"
#include "qsk/entropy.hpp"
#include "qsk/exact.hpp"
#include "qsk/optimizer.hpp"
#include "qsk/rng.hpp"

namespace qsk {

enum class ExperimentMode {
    EnergyBenchmark,  // variational vs exact energy-error density
    Sweep,            // raw adiabatic sweeps (energies only)
    Susceptibility,   // spin-glass susceptibility and magnetization curves
    EntropyProfile,   // Renyi-2 profiles of optimized states
    WgsEnsemble,      // weighted-graph-state entropy profiles and fits
    LevelRatio,       // level statistics of symmetric Gaussian phase matrices
};

inline const char* to_string(ExperimentMode mode) {
    switch (mode) {
        case ExperimentMode::EnergyBenchmark: return "energy-benchmark";
        case ExperimentMode::Sweep: return "sweep";
        case ExperimentMode::Susceptibility: return "susceptibility";
        case ExperimentMode::EntropyProfile: return "entropy-profile";
        case ExperimentMode::WgsEnsemble: return "wgs-ensemble";
        case ExperimentMode::LevelRatio: return "level-ratio";
    }
    return "unknown";
}

inline ExperimentMode experiment_mode_from_string(const std::string& name) {
    for (ExperimentMode mode :
         {ExperimentMode::EnergyBenchmark, ExperimentMode::Sweep,
          ExperimentMode::Susceptibility, ExperimentMode::EntropyProfile,
          ExperimentMode::WgsEnsemble, ExperimentMode::LevelRatio})
        if (name == to_string(mode)) return mode;
    throw std::invalid_argument(
        "unknown mode '" + name +
        "' (expected one of: energy-benchmark, sweep, susceptibility, "
        "entropy-profile, wgs-ensemble, level-ratio)");
}

// Subsystem sizes and sample budget for the Renyi-2 estimator; subsystems are
// the contiguous leading blocks {0..L-1}, which is representative here because
// the couplings are permutation-symmetric in distribution.
struct EntropySamplerConfig {
    std::int64_t samples = 100000;
    std::vector<int> subsystem_sizes;
};

inline nlohmann::json to_json(const EntropySamplerConfig& cfg) {
    return {{"samples", cfg.samples}, {"subsystem_sizes", cfg.subsystem_sizes}};
}

inline EntropySamplerConfig entropy_sampler_from_json(const nlohmann::json& j) {
    EntropySamplerConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "samples") cfg.samples = value.get<std::int64_t>();
        else if (key == "subsystem_sizes") cfg.subsystem_sizes = value.get<std::vector<int>>();
        else throw std::invalid_argument("entropy config: unknown key '" + key + "'");
    }
    return cfg;
}

// The exact oracle is memory-bound; modes that compare against it refuse
// larger systems up front.
inline constexpr int exact_oracle_cap() { return LanczosOptions{}.ed_cap; }

struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::Sweep;
    std::vector<int> n_list;
    std::vector<double> g_grid;
    std::vector<double> h_list = {0.0};  // longitudinal field scales
    int realizations = 1;
    OptimizerConfig optimizer;
    EntropySamplerConfig entropy;
    std::uint64_t master_seed = 1;
    std::string output_directory;
    int workers = 0;  // 0 = available hardware parallelism
    bool with_exact = false;

    bool uses_sweep() const {
        return mode == ExperimentMode::EnergyBenchmark || mode == ExperimentMode::Sweep ||
               mode == ExperimentMode::Susceptibility ||
               mode == ExperimentMode::EntropyProfile;
    }
    bool uses_entropy() const {
        return mode == ExperimentMode::EntropyProfile ||
               mode == ExperimentMode::WgsEnsemble;
    }
    bool needs_exact() const {
        return mode == ExperimentMode::EnergyBenchmark || with_exact;
    }

    void validate() const {
        if (n_list.empty()) throw std::invalid_argument("config: n_list must be nonempty");
        const int n_floor = mode == ExperimentMode::LevelRatio ? 3 : 2;
        for (int n : n_list)
            if (n < n_floor)
                throw std::invalid_argument("config: n must be >= " +
                                            std::to_string(n_floor) + " for mode " +
                                            to_string(mode));
        if (realizations < 1)
            throw std::invalid_argument("config: realizations must be >= 1");
        if (workers < 0) throw std::invalid_argument("config: workers must be >= 0");
        if (output_directory.empty())
            throw std::invalid_argument("config: output_directory must be set");
        optimizer.validate();

        if (uses_sweep()) {
            if (g_grid.empty())
                throw std::invalid_argument("config: g_grid must be nonempty");
            for (std::size_t i = 0; i < g_grid.size(); ++i) {
                if (g_grid[i] < 0.0)
                    throw std::invalid_argument("config: g_grid values must be >= 0");
                if (i > 0 && g_grid[i] <= g_grid[i - 1])
                    throw std::invalid_argument("config: g_grid must be ascending");
            }
            if (h_list.empty())
                throw std::invalid_argument("config: h_list must be nonempty");
            for (double h : h_list)
                if (!(h >= 0.0))
                    throw std::invalid_argument("config: h_list values must be >= 0");
        }
        if (needs_exact()) {
            if (!uses_sweep() || mode == ExperimentMode::EntropyProfile)
                throw std::invalid_argument(
                    std::string("config: with_exact is not available for mode ") +
                    to_string(mode));
            for (int n : n_list)
                if (n > exact_oracle_cap())
                    throw std::invalid_argument(
                        "config: n = " + std::to_string(n) +
                        " requires exact diagonalization, which is capped at n = " +
                        std::to_string(exact_oracle_cap()));
        }
        if (uses_entropy()) {
            if (entropy.samples < 1)
                throw std::invalid_argument("config: entropy samples must be >= 1");
            if (entropy.subsystem_sizes.empty())
                throw std::invalid_argument(
                    "config: entropy subsystem_sizes must be nonempty");
            for (int n : n_list)
                for (int L : entropy.subsystem_sizes)
                    if (L < 1 || L >= n)
                        throw std::invalid_argument(
                            "config: subsystem size " + std::to_string(L) +
                            " must satisfy 1 <= L <= n-1 (n = " + std::to_string(n) +
                            ")");
        }
    }
};

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    return {{"mode", to_string(cfg.mode)},
            {"n_list", cfg.n_list},
            {"g_grid", cfg.g_grid},
            {"h_list", cfg.h_list},
            {"realizations", cfg.realizations},
            {"optimizer", to_json(cfg.optimizer)},
            {"entropy", to_json(cfg.entropy)},
            {"seed", cfg.master_seed},
            {"output_directory", cfg.output_directory},
            {"workers", cfg.workers},
            {"with_exact", cfg.with_exact}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "mode") cfg.mode = experiment_mode_from_string(value.get<std::string>());
        else if (key == "n_list") cfg.n_list = value.get<std::vector<int>>();
        else if (key == "g_grid") cfg.g_grid = value.get<std::vector<double>>();
        else if (key == "h_list") cfg.h_list = value.get<std::vector<double>>();
        else if (key == "realizations") cfg.realizations = value.get<int>();
        else if (key == "optimizer") cfg.optimizer = optimizer_config_from_json(value);
        else if (key == "entropy") cfg.entropy = entropy_sampler_from_json(value);
        else if (key == "seed") cfg.master_seed = value.get<std::uint64_t>();
        else if (key == "output_directory") cfg.output_directory = value.get<std::string>();
        else if (key == "workers") cfg.workers = value.get<int>();
        else if (key == "with_exact") cfg.with_exact = value.get<bool>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    return cfg;
}

// Parses, applies defaults, and validates a raw JSON document.
inline ExperimentConfig validate_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg = experiment_config_from_json(j);
    // output_directory may be supplied later (e.g. by a CLI flag), so vet the
    // document with a placeholder when it is absent.
    ExperimentConfig probe = cfg;
    if (probe.output_directory.empty()) probe.output_directory = ".";
    probe.validate();
    return cfg;
}

enum class TaskState { Pending, Done, Failed };

inline const char* to_string(TaskState s) {
    switch (s) {
        case TaskState::Pending: return "pending";
        case TaskState::Done: return "done";
        case TaskState::Failed: return "failed";
    }
    return "unknown";
}

struct TaskRecord {
    int index = 0;
    TaskState state = TaskState::Pending;
    bool reused = false;  // satisfied by an existing task file
    std::string path;     // relative to the output directory
    std::string error;
};

struct RunManifest {
    std::string config_hash;
    ExperimentMode mode = ExperimentMode::Sweep;
    int total = 0;
    int completed = 0;
    int failed = 0;
    int reused = 0;
    std::vector<TaskRecord> tasks;

    bool all_done() const { return completed == total; }
};

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : m.tasks) {
        nlohmann::json row = {{"index", t.index},
                              {"status", to_string(t.state)},
                              {"path", t.path},
                              {"reused", t.reused}};
        if (!t.error.empty()) row["error"] = t.error;
        tasks.push_back(std::move(row));
    }
    return {{"config_hash", m.config_hash}, {"mode", to_string(m.mode)},
            {"total", m.total},             {"completed", m.completed},
            {"failed", m.failed},           {"reused", m.reused},
            {"tasks", std::move(tasks)}};
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out)
            throw std::runtime_error("failed to write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);  // atomic on POSIX within one filesystem
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("failed to read " + path.string());
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

inline std::string task_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "task_%06d.json", index);
    return buf;
}

struct TaskSpec {
    int index = 0;
    int n = 0;
    double h = 0.0;
    int realization = 0;
};

inline std::vector<TaskSpec> enumerate_tasks(const ExperimentConfig& cfg) {
    std::vector<TaskSpec> specs;
    const std::vector<double> h_axis = cfg.uses_sweep() ? cfg.h_list
                                                        : std::vector<double>{0.0};
    for (int n : cfg.n_list)
        for (double h : h_axis)
            for (int r = 0; r < cfg.realizations; ++r)
                specs.push_back({static_cast<int>(specs.size()), n, h, r});
    return specs;
}

inline Eigen::MatrixXd exact_zz_table(const StateVector& state, int n) {
    Eigen::MatrixXd zz = Eigen::MatrixXd::Identity(n, n);
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) {
            const double v = exact_expectation(state, {{p, PauliAxis::Z},
                                                       {q, PauliAxis::Z}})
                                 .real();
            zz(p, q) = zz(q, p) = v;
        }
    return zz;
}

inline Eigen::VectorXd exact_sx_vector(const StateVector& state, int n) {
    Eigen::VectorXd sx(n);
    for (int p = 0; p < n; ++p)
        sx(p) = exact_expectation(state, {{p, PauliAxis::X}}).real();
    return sx;
}

inline nlohmann::json estimate_rows(const GcsParams& params,
                                    const EntropySamplerConfig& entropy,
                                    std::uint64_t seed_base) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t li = 0; li < entropy.subsystem_sizes.size(); ++li) {
        const int L = entropy.subsystem_sizes[li];
        std::vector<int> sites(static_cast<std::size_t>(L));
        for (int s = 0; s < L; ++s) sites[static_cast<std::size_t>(s)] = s;
        const EntropyEstimate est = renyi2_estimate(
            params, sites, entropy.samples,
            derive_seed(seed_base, 0xE5000000ULL + li));
        rows.push_back({{"L", L},
                        {"s2", est.s2},
                        {"purity_mean", est.purity_mean},
                        {"purity_stderr", est.purity_stderr},
                        {"samples", est.samples},
                        {"exhaustive", est.exhaustive},
                        {"reliable", est.reliable}});
    }
    return rows;
}

inline nlohmann::json run_task(const ExperimentConfig& cfg, const TaskSpec& spec,
                               const std::string& fingerprint) {
    const std::uint64_t task_seed =
        derive_seed(cfg.master_seed, static_cast<std::uint64_t>(spec.index));
    nlohmann::json payload = {{"task", spec.index},
                              {"config_hash", fingerprint},
                              {"n", spec.n},
                              {"h_scale", spec.h},
                              {"realization", spec.realization},
                              {"instance_seed", task_seed}};

    switch (cfg.mode) {
        case ExperimentMode::EnergyBenchmark:
        case ExperimentMode::Sweep:
        case ExperimentMode::Susceptibility: {
            payload["schema"] = "ground-state-sweep";
            const QskInstance inst =
                sample_qsk_instance(spec.n, 1.0, spec.h, 0.0, task_seed);
            const auto sweep = adiabatic_sweep(inst, cfg.g_grid, cfg.optimizer, task_seed);
            nlohmann::json points = nlohmann::json::array();
            for (const auto& pt : sweep) {
                const GcsEvaluator cs_eval(pt.cs.params);
                const GcsEvaluator gcs_eval(pt.gcs.params);
                nlohmann::json row = {
                    {"g", pt.g},
                    {"cs", to_json(pt.cs)},
                    {"gcs", to_json(pt.gcs)},
                    {"chi_cs", spin_glass_susceptibility(cs_eval.zz_correlations())},
                    {"chi_gcs", spin_glass_susceptibility(gcs_eval.zz_correlations())},
                    {"mx_cs", transverse_magnetization(cs_eval.sx_expectations())},
                    {"mx_gcs", transverse_magnetization(gcs_eval.sx_expectations())}};
                if (cfg.needs_exact()) {
                    QskInstance at = inst;
                    at.g = pt.g;
                    const LanczosResult lan = lanczos_ground_state(at);
                    const LanczosResult top = lanczos_ground_state(negated_instance(at));
                    if (!lan.converged || !top.converged)
                        throw std::runtime_error("exact oracle did not converge");
                    row["exact"] = {
                        {"energy", lan.energy},
                        {"extent", -top.energy - lan.energy},
                        {"chi",
                         spin_glass_susceptibility(exact_zz_table(lan.state, spec.n))},
                        {"mx",
                         transverse_magnetization(exact_sx_vector(lan.state, spec.n))}};
                }
                points.push_back(std::move(row));
            }
            payload["points"] = std::move(points);
            return payload;
        }
        case ExperimentMode::EntropyProfile: {
            payload["schema"] = "entropy-profile";
            const QskInstance inst =
                sample_qsk_instance(spec.n, 1.0, spec.h, 0.0, task_seed);
            const auto sweep = adiabatic_sweep(inst, cfg.g_grid, cfg.optimizer, task_seed);
            nlohmann::json points = nlohmann::json::array();
            for (std::size_t gi = 0; gi < sweep.size(); ++gi) {
                const auto& pt = sweep[gi];
                points.push_back(
                    {{"g", pt.g},
                     {"e_cs", pt.cs.energy},
                     {"e_gcs", pt.gcs.energy},
                     {"rows", estimate_rows(pt.gcs.params, cfg.entropy,
                                            derive_seed(task_seed, 0xA0000 + gi))}});
            }
            payload["points"] = std::move(points);
            return payload;
        }
        case ExperimentMode::WgsEnsemble: {
            payload["schema"] = "wgs";
            const GcsParams wgs = wgs_sample(spec.n, task_seed);
            payload["rows"] = estimate_rows(wgs, cfg.entropy, task_seed);
            return payload;
        }
        case ExperimentMode::LevelRatio: {
            payload["schema"] = "level-ratio";
            payload["r"] = level_spacing_ratio(wgs_sample(spec.n, task_seed).m);
            return payload;
        }
    }
    throw std::logic_error("run_task: unhandled mode");
}

// Keys index into the configured lists so that row ordering never depends on
// floating-point comparisons.
struct BucketKey {
    int ni = 0, hi = 0, gi = 0;
    bool operator<(const BucketKey& o) const {
        return std::tie(ni, hi, gi) < std::tie(o.ni, o.hi, o.gi);
    }
};

inline int index_of_int(const std::vector<int>& xs, int v, const char* what) {
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] == v) return static_cast<int>(i);
    throw std::invalid_argument(std::string("task file does not match config: ") + what);
}

inline int index_of_double(const std::vector<double>& xs, double v, const char* what) {
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] == v) return static_cast<int>(i);
    throw std::invalid_argument(std::string("task file does not match config: ") + what);
}

struct GroundStateBucket {
    EnsembleAccumulator e_cs, e_gcs, chi_cs, chi_gcs, mx_cs, mx_gcs;
    EnsembleAccumulator chi_ed, mx_ed;
    std::vector<EnergyErrorSample> err_cs, err_gcs;
};

struct EntropyBucket {
    // per subsystem-size accumulators, indexed like subsystem_sizes
    std::vector<EnsembleAccumulator> s2;
};

inline std::string csv_header_and_rows(const std::string& header,
                                       const std::vector<std::string>& rows) {
    std::string text = header;
    text += '\n';
    for (const auto& row : rows) {
        text += row;
        text += '\n';
    }
    return text;
}

inline void write_aggregates(const ExperimentConfig& cfg,
                             const std::vector<nlohmann::json>& payloads,
                             const std::filesystem::path& dir) {
    namespace fs = std::filesystem;

    const bool ground_state_mode = cfg.mode == ExperimentMode::EnergyBenchmark ||
                                   cfg.mode == ExperimentMode::Sweep ||
                                   cfg.mode == ExperimentMode::Susceptibility;
    if (ground_state_mode && !payloads.empty()) {
        std::map<BucketKey, GroundStateBucket> buckets;
        bool exact_everywhere = true;
        for (const auto& p : payloads) {
            const int ni = index_of_int(cfg.n_list, p.at("n").get<int>(), "n");
            const int hi =
                index_of_double(cfg.h_list, p.at("h_scale").get<double>(), "h");
            for (const auto& pt : p.at("points")) {
                const int gi =
                    index_of_double(cfg.g_grid, pt.at("g").get<double>(), "g");
                auto& b = buckets[{ni, hi, gi}];
                const double e_cs = pt.at("cs").at("energy").get<double>();
                const double e_gcs = pt.at("gcs").at("energy").get<double>();
                b.e_cs.add(e_cs);
                b.e_gcs.add(e_gcs);
                b.chi_cs.add(pt.at("chi_cs").get<double>());
                b.chi_gcs.add(pt.at("chi_gcs").get<double>());
                b.mx_cs.add(pt.at("mx_cs").get<double>());
                b.mx_gcs.add(pt.at("mx_gcs").get<double>());
                if (pt.contains("exact")) {
                    const auto& ex = pt.at("exact");
                    const double e_exact = ex.at("energy").get<double>();
                    const double extent = ex.at("extent").get<double>();
                    b.chi_ed.add(ex.at("chi").get<double>());
                    b.mx_ed.add(ex.at("mx").get<double>());
                    b.err_cs.push_back(energy_error_sample(e_cs, e_exact, extent));
                    b.err_gcs.push_back(energy_error_sample(e_gcs, e_exact, extent));
                } else {
                    exact_everywhere = false;
                }
            }
        }

        std::vector<std::string> energy_rows, err_rows;
        std::vector<std::string> chi_rows[3], mx_rows[3];  // cs, gcs, ed
        for (const auto& [key, b] : buckets) {
            const std::string n = std::to_string(cfg.n_list[key.ni]);
            const std::string g = fmt(cfg.g_grid[key.gi]);
            const std::string h = fmt(cfg.h_list[key.hi]);
            const std::string stem = n + "," + g + "," + h;
            const auto e_cs = b.e_cs.statistic();
            const auto e_gcs = b.e_gcs.statistic();
            energy_rows.push_back(stem + "," + fmt(e_cs.mean) + "," +
                                  fmt(e_cs.stderr_mean) + "," + fmt(e_gcs.mean) + "," +
                                  fmt(e_gcs.stderr_mean));
            EnsembleStatistic chi[3] = {b.chi_cs.statistic(), b.chi_gcs.statistic(), {}};
            EnsembleStatistic mx[3] = {b.mx_cs.statistic(), b.mx_gcs.statistic(), {}};
            if (exact_everywhere) {
                chi[2] = b.chi_ed.statistic();
                mx[2] = b.mx_ed.statistic();
            }
            for (int f = 0; f < (exact_everywhere ? 3 : 2); ++f) {
                chi_rows[f].push_back(stem + "," + fmt(chi[f].mean) + "," +
                                      fmt(chi[f].stderr_mean));
                mx_rows[f].push_back(stem + "," + fmt(mx[f].mean) + "," +
                                     fmt(mx[f].stderr_mean));
            }
            if (exact_everywhere) {
                const auto d_cs = energy_error_density(b.err_cs);
                const auto d_gcs = energy_error_density(b.err_gcs);
                err_rows.push_back(stem + "," + fmt(d_cs.epsilon) + "," +
                                   fmt(d_cs.stderr_epsilon) + "," + fmt(d_gcs.epsilon) +
                                   "," + fmt(d_gcs.stderr_epsilon));
            }
        }
        write_file_atomic(dir / "sweep_energy.csv",
                          csv_header_and_rows("N,g,h,e_cs_mean,e_cs_stderr,e_gcs_mean,"
                                              "e_gcs_stderr",
                                              energy_rows));
        const char* family[3] = {"cs", "gcs", "ed"};
        for (int f = 0; f < (exact_everywhere ? 3 : 2); ++f) {
            write_file_atomic(dir / ("susceptibility_" + std::string(family[f]) + ".csv"),
                              csv_header_and_rows("N,g,h,chi_mean,chi_stderr",
                                                  chi_rows[f]));
            write_file_atomic(dir / ("magnetization_" + std::string(family[f]) + ".csv"),
                              csv_header_and_rows("N,g,h,mx_mean,mx_stderr",
                                                  mx_rows[f]));
        }
        if (exact_everywhere)
            write_file_atomic(
                dir / "energy_error.csv",
                csv_header_and_rows(
                    "N,g,h,eps_cs,eps_cs_stderr,eps_gcs,eps_gcs_stderr", err_rows));
    }

    if (cfg.uses_entropy() && !payloads.empty()) {
        const bool wgs = cfg.mode == ExperimentMode::WgsEnsemble;
        std::vector<std::string> profile_rows;
        std::map<BucketKey, EntropyBucket> buckets;
        auto touch = [&](const BucketKey& key) -> EntropyBucket& {
            auto& b = buckets[key];
            if (b.s2.empty()) b.s2.resize(cfg.entropy.subsystem_sizes.size());
            return b;
        };
        auto append_rows = [&](const nlohmann::json& rows, const BucketKey& key,
                               double g, double h, std::uint64_t seed,
                               const std::string& n) {
            auto& b = touch(key);
            for (std::size_t li = 0; li < rows.size(); ++li) {
                const auto& r = rows[li];
                const double s2 = r.at("s2").get<double>();
                const double purity = r.at("purity_mean").get<double>();
                const double perr = r.at("purity_stderr").get<double>();
                const double s2_err =
                    purity > 0.0 ? perr / (purity * std::log(2.0))
                                 : std::numeric_limits<double>::quiet_NaN();
                b.s2[li].add(s2);
                profile_rows.push_back(n + "," +
                                       std::to_string(r.at("L").get<int>()) + "," +
                                       fmt(g) + "," + fmt(h) + "," +
                                       std::to_string(seed) + "," + fmt(s2) + "," +
                                       fmt(s2_err) + "," +
                                       std::to_string(r.at("samples").get<std::int64_t>()));
            }
        };
        for (const auto& p : payloads) {
            const int n_val = p.at("n").get<int>();
            const int ni = index_of_int(cfg.n_list, n_val, "n");
            const std::uint64_t seed = p.at("instance_seed").get<std::uint64_t>();
            if (wgs) {
                append_rows(p.at("rows"), {ni, 0, 0}, 0.0, 0.0, seed,
                            std::to_string(n_val));
            } else {
                const int hi =
                    index_of_double(cfg.h_list, p.at("h_scale").get<double>(), "h");
                for (const auto& pt : p.at("points")) {
                    const double g = pt.at("g").get<double>();
                    const int gi = index_of_double(cfg.g_grid, g, "g");
                    append_rows(pt.at("rows"), {ni, hi, gi}, g,
                                p.at("h_scale").get<double>(), seed,
                                std::to_string(n_val));
                }
            }
        }
        write_file_atomic(
            dir / "entropy_profile.csv",
            csv_header_and_rows("N,L,g,h,realization_seed,s2,stderr,samples",
                                profile_rows));

        std::vector<std::string> fit_rows;
        for (const auto& [key, b] : buckets) {
            const int n = cfg.n_list[key.ni];
            std::vector<std::pair<int, double>> points;
            for (std::size_t li = 0; li < b.s2.size(); ++li)
                if (b.s2[li].count() > 0)
                    points.emplace_back(cfg.entropy.subsystem_sizes[li],
                                        b.s2[li].statistic().mean);
            if (points.size() < 3) continue;  // crossover fit is underdetermined
            const auto fit = fit_entropy_profile(points, n);
            const double g = wgs ? 0.0 : cfg.g_grid[key.gi];
            const double h = wgs ? 0.0 : cfg.h_list[key.hi];
            fit_rows.push_back(std::to_string(n) + "," + fmt(g) + "," + fmt(h) + "," +
                               fmt(fit.a) + "," + fmt(fit.b) + "," + fmt(fit.c) + "," +
                               fmt(fit.residual));
        }
        write_file_atomic(dir / "entropy_fit.csv",
                          csv_header_and_rows("N,g,h,a,b,c,residual", fit_rows));
    }

    if (cfg.mode == ExperimentMode::LevelRatio && !payloads.empty()) {
        std::map<int, std::vector<double>> per_n;  // n index -> r values in task order
        for (const auto& p : payloads)
            per_n[index_of_int(cfg.n_list, p.at("n").get<int>(), "n")].push_back(
                p.at("r").get<double>());
        std::vector<std::string> rows;
        for (const auto& [ni, values] : per_n) {
            const auto stat = ensemble_statistics(values);
            rows.push_back(std::to_string(cfg.n_list[ni]) + "," +
                           std::to_string(values.size()) + "," + fmt(stat.mean) + "," +
                           fmt(stat.stderr_mean));
        }
        write_file_atomic(dir / "level_ratio.csv",
                          csv_header_and_rows("n,draws,r_mean,r_stderr", rows));
    }
}

inline bool probe_task_file(const std::filesystem::path& path,
                            const std::string& fingerprint, int index) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return false;
    try {
        const nlohmann::json payload = nlohmann::json::parse(read_file(path));
        return payload.at("config_hash").get<std::string>() == fingerprint &&
               payload.at("task").get<int>() == index;
    } catch (...) {
        return false;
    }
}

}  // namespace detail

inline int task_count(const ExperimentConfig& cfg) {
    return static_cast<int>(detail::enumerate_tasks(cfg).size());
}

// Hash of the physics-defining part of the configuration; execution details
// (worker count, output location) deliberately do not participate so that the
// same experiment can be resumed with different resources.
inline std::string config_fingerprint(const ExperimentConfig& cfg) {
    nlohmann::json j = to_json(cfg);
    j.erase("workers");
    j.erase("output_directory");
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(j.dump())));
    return buf;
}

// Recomputes every aggregate table derivable from the completed task files in
// an existing run directory, without executing any tasks.
inline RunManifest report(const std::string& output_directory) {
    namespace fs = std::filesystem;
    const fs::path dir = output_directory;
    ExperimentConfig cfg = validate_config(detail::read_file(dir / "config.json"));
    cfg.output_directory = output_directory;  // the directory may have moved
    const std::string fingerprint = config_fingerprint(cfg);
    const auto specs = detail::enumerate_tasks(cfg);

    RunManifest manifest;
    manifest.config_hash = fingerprint;
    manifest.mode = cfg.mode;
    manifest.total = static_cast<int>(specs.size());
    std::vector<nlohmann::json> payloads;
    for (const auto& spec : specs) {
        TaskRecord rec;
        rec.index = spec.index;
        rec.path = "tasks/" + detail::task_filename(spec.index);
        if (detail::probe_task_file(dir / rec.path, fingerprint, spec.index)) {
            rec.state = TaskState::Done;
            rec.reused = true;
            ++manifest.completed;
            ++manifest.reused;
            payloads.push_back(nlohmann::json::parse(detail::read_file(dir / rec.path)));
        }
        manifest.tasks.push_back(std::move(rec));
    }
    detail::write_aggregates(cfg, payloads, dir);
    detail::write_file_atomic(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
    return manifest;
}

// Runs an experiment to completion: fans tasks out to a worker pool, skipping
// any task whose valid result file already exists (resume), then reduces all
// completed tasks into aggregate CSVs.  Individual task failures are recorded
// in the returned manifest without aborting the remaining work.
inline RunManifest run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    const fs::path dir = cfg.output_directory;
    fs::create_directories(dir / "tasks");

    const std::string fingerprint = config_fingerprint(cfg);
    const fs::path config_path = dir / "config.json";
    if (fs::exists(config_path)) {
        const ExperimentConfig prior =
            validate_config(detail::read_file(config_path));
        if (config_fingerprint(prior) != fingerprint)
            throw std::invalid_argument(
                "output directory already holds a different experiment "
                "(config fingerprint mismatch): " + dir.string());
    } else {
        detail::write_file_atomic(config_path, to_json(cfg).dump(2) + "\n");
    }

    const auto specs = detail::enumerate_tasks(cfg);
    RunManifest manifest;
    manifest.config_hash = fingerprint;
    manifest.mode = cfg.mode;
    manifest.total = static_cast<int>(specs.size());
    manifest.tasks.resize(specs.size());

    std::vector<int> pending;
    for (const auto& spec : specs) {
        TaskRecord& rec = manifest.tasks[static_cast<std::size_t>(spec.index)];
        rec.index = spec.index;
        rec.path = "tasks/" + detail::task_filename(spec.index);
        if (detail::probe_task_file(dir / rec.path, fingerprint, spec.index)) {
            rec.state = TaskState::Done;
            rec.reused = true;
        } else {
            pending.push_back(spec.index);
        }
    }

    std::atomic<std::size_t> cursor{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t slot = cursor.fetch_add(1);
            if (slot >= pending.size()) return;
            const int idx = pending[slot];
            TaskRecord& rec = manifest.tasks[static_cast<std::size_t>(idx)];
            try {
                const nlohmann::json payload =
                    detail::run_task(cfg, specs[static_cast<std::size_t>(idx)],
                                     fingerprint);
                detail::write_file_atomic(dir / rec.path, payload.dump());
                rec.state = TaskState::Done;
            } catch (const std::exception& e) {
                rec.state = TaskState::Failed;
                rec.error = e.what();
            } catch (...) {
                rec.state = TaskState::Failed;
                rec.error = "unknown error";
            }
        }
    };
    const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
    const int workers =
        cfg.workers > 0 ? cfg.workers : static_cast<int>(hardware);
    if (workers <= 1 || pending.size() <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        const int spawn = std::min<int>(workers, static_cast<int>(pending.size()));
        pool.reserve(static_cast<std::size_t>(spawn));
        for (int t = 0; t < spawn; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    std::vector<nlohmann::json> payloads;  // in task-index order
    for (const auto& rec : manifest.tasks) {
        if (rec.state != TaskState::Done) continue;
        payloads.push_back(nlohmann::json::parse(detail::read_file(dir / rec.path)));
        ++manifest.completed;
        if (rec.reused) ++manifest.reused;
    }
    manifest.failed = manifest.total - manifest.completed;
    detail::write_aggregates(cfg, payloads, dir);
    detail::write_file_atomic(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
    return manifest;
}

}  // namespace qsk
