#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "qsk/analysis.hpp"
#include "qsk/entropy.hpp"
#include "qsk/exact.hpp"
#include "qsk/optimizer.hpp"

using namespace qsk;
namespace qt = qsk::testing;

TEST_CASE("spin-glass susceptibility limits") {
    // frozen classical configuration: every squared correlator is 1
    const auto inst = sample_qsk_instance(6, 1.0, 0.0, 0.0, 401);
    const CsParams classical = multistart_classical(inst, 100, 402);
    const GcsEvaluator frozen(GcsParams::from_cs(classical));
    REQUIRE(spin_glass_susceptibility(frozen.zz_correlations()) ==
            Catch::Approx(6.0).margin(1e-12));

    // fully transverse product state: only the diagonal survives
    GcsParams para = GcsParams::zero(6);
    for (int s = 0; s < 6; ++s) para.x(s, 1) = M_PI / 4.0;
    const GcsEvaluator plus(para);
    REQUIRE(spin_glass_susceptibility(plus.zz_correlations()) ==
            Catch::Approx(1.0).margin(1e-12));

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(4, 4);
    bad(2, 2) = 0.7;
    REQUIRE_THROWS_AS(spin_glass_susceptibility(bad), std::invalid_argument);
    REQUIRE_THROWS_AS(spin_glass_susceptibility(Eigen::MatrixXd::Ones(3, 4)),
                      std::invalid_argument);
}

TEST_CASE("variational observables track the exact state at n = 8") {
    const auto inst = sample_qsk_instance(8, 1.0, 0.0, 0.0, 403);
    OptimizerConfig cfg;
    cfg.sweep_step = 0.1;
    cfg.restarts_at_g0 = 200;
    const auto sweep = adiabatic_sweep(inst, {0.0, 1.0}, cfg, 404);
    const auto& point = sweep.back();

    QskInstance at_g = inst;
    at_g.g = 1.0;
    const auto ed = lanczos_ground_state(at_g);
    REQUIRE(ed.converged);

    Eigen::MatrixXd zz_ed = Eigen::MatrixXd::Identity(8, 8);
    Eigen::VectorXd sx_ed(8);
    for (int p = 0; p < 8; ++p) {
        sx_ed(p) = exact_expectation(ed.state, {{p, PauliAxis::X}}).real();
        for (int q = p + 1; q < 8; ++q)
            zz_ed(p, q) = zz_ed(q, p) =
                exact_expectation(ed.state, {{p, PauliAxis::Z}, {q, PauliAxis::Z}}).real();
    }

    const GcsEvaluator eval(point.gcs.params);
    const double chi_var = spin_glass_susceptibility(eval.zz_correlations());
    const double chi_ed = spin_glass_susceptibility(zz_ed);
    REQUIRE(std::abs(chi_var - chi_ed) < 0.3);

    const double mx_var = transverse_magnetization(eval.sx_expectations());
    const double mx_ed = transverse_magnetization(sx_ed);
    REQUIRE(std::abs(mx_var - mx_ed) < 0.3);
}

TEST_CASE("transverse magnetization limits") {
    GcsParams plus = GcsParams::zero(5);
    for (int s = 0; s < 5; ++s) plus.x(s, 1) = M_PI / 4.0;
    REQUIRE(transverse_magnetization(GcsEvaluator(plus).sx_expectations()) ==
            Catch::Approx(5.0).margin(1e-12));

    const auto inst = sample_qsk_instance(5, 1.0, 0.0, 0.0, 405);
    const CsParams classical = multistart_classical(inst, 50, 406);
    REQUIRE(transverse_magnetization(
                GcsEvaluator(GcsParams::from_cs(classical)).sx_expectations()) ==
            Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("level-spacing ratio separates GOE from Poisson and rigid spectra") {
    // dense symmetric Gaussian matrix: GOE universality, <r> ~ 0.5307
    auto rng = make_stream(407);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 300;
    Eigen::MatrixXd goe = Eigen::MatrixXd::Zero(n, n);
    for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q) goe(p, q) = goe(q, p) = normal(rng);
    REQUIRE(std::abs(level_spacing_ratio(goe) - 0.5307) < 0.04);

    // the symmetric phase matrices drawn for graph states are in the same class
    REQUIRE(std::abs(level_spacing_ratio(wgs_sample(200, 408).m) - 0.5307) < 0.05);

    // independent levels: Poisson statistics, <r> = 2 ln 2 - 1 ~ 0.3863
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Eigen::MatrixXd poisson = Eigen::MatrixXd::Zero(500, 500);
    for (int p = 0; p < 500; ++p) poisson(p, p) = uniform(rng);
    REQUIRE(std::abs(level_spacing_ratio(poisson) - (2.0 * std::log(2.0) - 1.0)) < 0.04);

    // equally spaced spectrum: every gap ratio is exactly 1
    Eigen::VectorXd ladder = Eigen::VectorXd::LinSpaced(12, 0.0, 11.0);
    REQUIRE(level_spacing_ratio(ladder.asDiagonal()) == 1.0);

    REQUIRE_THROWS_AS(level_spacing_ratio(Eigen::MatrixXd::Zero(3, 2)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(level_spacing_ratio(Eigen::MatrixXd::Identity(2, 2)),
                      std::invalid_argument);
    Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(4, 4);
    skew(0, 1) = 1.0;  // not symmetric
    REQUIRE_THROWS_AS(level_spacing_ratio(skew), std::invalid_argument);
}

TEST_CASE("entropy-profile fitter recovers synthetic parameters") {
    const int n = 100;
    const double a_true = 0.9, b_true = 2.0;
    std::vector<std::pair<int, double>> pts;
    for (int l = 2; l <= 50; l += 6)
        pts.emplace_back(l, a_true * std::log(1.0 + b_true / M_PI * std::sin(M_PI * l / n)));

    const auto fit = fit_entropy_profile(pts, n);
    REQUIRE(fit.converged);
    REQUIRE_FALSE(fit.degenerate);
    REQUIRE(fit.a == Catch::Approx(a_true).margin(1e-6));
    REQUIRE(fit.b == Catch::Approx(b_true).margin(1e-6));
    REQUIRE(fit.c == Catch::Approx(a_true * b_true / n).margin(1e-7));
    REQUIRE(fit.residual < 1e-10);

    // reflecting every cut through L -> n - L leaves the fit unchanged
    std::vector<std::pair<int, double>> mirrored;
    for (const auto& [l, s2] : pts) mirrored.emplace_back(n - l, s2);
    const auto fit2 = fit_entropy_profile(mirrored, n);
    REQUIRE(fit2.a == Catch::Approx(fit.a).margin(1e-9));
    REQUIRE(fit2.b == Catch::Approx(fit.b).margin(1e-9));

    // mild noise moves the parameters only mildly
    auto rng = make_stream(407);
    std::normal_distribution<double> noise(0.0, 1e-3);
    auto noisy = pts;
    for (auto& [l, s2] : noisy) s2 += noise(rng);
    const auto fit3 = fit_entropy_profile(noisy, n);
    REQUIRE(fit3.converged);
    REQUIRE(fit3.a == Catch::Approx(a_true).margin(0.05));
    REQUIRE(fit3.b == Catch::Approx(b_true).margin(0.2));
}

TEST_CASE("entropy-profile fitter edge cases") {
    std::vector<std::pair<int, double>> zeros = {{2, 0.0}, {5, 0.0}, {9, 0.0}};
    const auto fit = fit_entropy_profile(zeros, 20);
    REQUIRE(fit.degenerate);
    REQUIRE(fit.a == 0.0);
    REQUIRE(std::isnan(fit.b));

    REQUIRE_THROWS_AS(fit_entropy_profile({{1, 0.1}, {2, 0.2}}, 10),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(fit_entropy_profile({{1, 0.1}, {1, 0.2}, {3, 0.3}}, 10),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(fit_entropy_profile({{0, 0.1}, {2, 0.2}, {3, 0.3}}, 10),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(fit_entropy_profile({{2, 0.1}, {5, 0.2}, {10, 0.3}}, 10),
                      std::invalid_argument);
}

TEST_CASE("ensemble statistics and merging") {
    const auto single = ensemble_statistics({5.0});
    REQUIRE(single.mean == 5.0);
    REQUIRE(single.stderr_mean == 0.0);
    REQUIRE(single.low_count);

    const auto pair = ensemble_statistics({1.0, 3.0});
    REQUIRE(pair.mean == Catch::Approx(2.0));
    REQUIRE(pair.stderr_mean == Catch::Approx(1.0));
    REQUIRE_FALSE(pair.low_count);

    auto rng = make_stream(408);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> draws(10000);
    for (auto& d : draws) d = normal(rng);
    const auto big = ensemble_statistics(draws);
    REQUIRE(std::abs(big.mean) < 0.04);
    REQUIRE(big.stderr_mean == Catch::Approx(0.01).epsilon(0.1));

    // merging partial accumulators equals one pass over the concatenation
    EnsembleAccumulator left, right, whole;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        (i < draws.size() / 3 ? left : right).add(draws[i]);
        whole.add(draws[i]);
    }
    left.merge(right);
    REQUIRE(left.statistic().mean == Catch::Approx(whole.statistic().mean).margin(1e-13));
    REQUIRE(left.statistic().stderr_mean ==
            Catch::Approx(whole.statistic().stderr_mean).margin(1e-13));
    REQUIRE(left.statistic().count == whole.statistic().count);

    REQUIRE_THROWS_AS(ensemble_statistics({}), std::invalid_argument);
}

TEST_CASE("energy-error density divides the ensemble means") {
    REQUIRE(energy_error_sample(-3.0, -3.0, 10.0).delta_e == 0.0);
    REQUIRE_THROWS_AS(energy_error_sample(-3.1, -3.0, 10.0), std::invalid_argument);
    REQUIRE_THROWS_AS(energy_error_sample(-2.0, -3.0, 0.0), std::invalid_argument);
    // tiny negative excursions within tolerance clamp to zero
    REQUIRE(energy_error_sample(-3.0 - 1e-10, -3.0, 10.0).delta_e == 0.0);

    const std::vector<EnergyErrorSample> samples = {{1.0, 2.0}, {3.0, 2.0}};
    const auto density = energy_error_density(samples);
    REQUIRE(density.epsilon == Catch::Approx(1.0));
    REQUIRE(density.count == 2);
    REQUIRE(density.stderr_epsilon > 0.0);

    const auto one = energy_error_density({{0.5, 5.0}});
    REQUIRE(one.epsilon == Catch::Approx(0.1));
    REQUIRE(one.stderr_epsilon == 0.0);

    // statistical sanity: ratio of means near the true ratio
    auto rng = make_stream(409);
    std::normal_distribution<double> dn(0.1, 0.01), wn(10.0, 0.5);
    std::vector<EnergyErrorSample> many;
    for (int i = 0; i < 2000; ++i) many.push_back({dn(rng), wn(rng)});
    const auto d = energy_error_density(many);
    REQUIRE(d.epsilon == Catch::Approx(0.01).epsilon(0.02));
    REQUIRE(std::abs(d.epsilon - 0.01) < 4.0 * d.stderr_epsilon + 1e-6);

    REQUIRE_THROWS_AS(energy_error_density({}), std::invalid_argument);
}
