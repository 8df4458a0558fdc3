#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "helpers.hpp"
#include "qsk/exact.hpp"

using namespace qsk;
namespace qt = qsk::testing;

namespace {
QskInstance manual_instance(int n, double g, std::uint64_t seed = 1) {
    QskInstance inst;
    inst.n = n;
    inst.g = g;
    inst.seed = seed;
    inst.couplings = Eigen::MatrixXd::Zero(n, n);
    inst.longitudinal_fields = Eigen::VectorXd::Zero(n);
    return inst;
}
}  // namespace

TEST_CASE("single spin in mixed field has analytic ground energy") {
    auto inst = manual_instance(1, 0.7);
    inst.longitudinal_fields(0) = 0.3;
    const auto res = lanczos_ground_state(inst);
    REQUIRE(res.converged);
    REQUIRE(res.energy == Catch::Approx(-std::sqrt(0.7 * 0.7 + 0.3 * 0.3)).margin(1e-10));
}

TEST_CASE("two aligned spins: classical ground energy -J12") {
    auto inst = manual_instance(2, 0.0);
    inst.couplings(0, 1) = inst.couplings(1, 0) = 1.0;
    const auto res = lanczos_ground_state(inst);
    REQUIRE(res.converged);
    REQUIRE(res.energy == Catch::Approx(-1.0).margin(1e-10));
}

TEST_CASE("dense hamiltonian matches the explicit Kronecker construction") {
    const auto inst = sample_qsk_instance(5, 1.0, 0.4, 0.9, 21);
    const Eigen::MatrixXd h = dense_hamiltonian(inst);
    const Eigen::MatrixXcd oracle = qt::dense_qsk_hamiltonian(inst);
    REQUIRE((h.cast<cplx>() - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lanczos agrees with a dense eigensolver on random instances") {
    for (int n : {3, 5, 8, 10}) {
        const auto inst = sample_qsk_instance(n, 1.0, 0.3, 1.2, 100 + n);
        const auto res = lanczos_ground_state(inst);
        REQUIRE(res.converged);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(inst),
                                                          Eigen::EigenvaluesOnly);
        REQUIRE(res.energy == Catch::Approx(es.eigenvalues()(0)).margin(1e-8));
        REQUIRE(std::abs(res.state.amplitudes.norm() - 1.0) < 1e-10);
    }
}

TEST_CASE("lanczos is deterministic for a fixed instance") {
    const auto inst = sample_qsk_instance(8, 1.0, 0.0, 0.7, 5);
    const auto a = lanczos_ground_state(inst);
    const auto b = lanczos_ground_state(inst);
    REQUIRE(a.energy == b.energy);
    REQUIRE(a.state.amplitudes == b.state.amplitudes);
}

TEST_CASE("lanczos reports non-convergence with best-so-far energy") {
    const auto inst = sample_qsk_instance(8, 1.0, 0.2, 1.0, 9);
    LanczosOptions opt;
    opt.max_iter = 3;
    const auto res = lanczos_ground_state(inst, opt);
    REQUIRE_FALSE(res.converged);
    REQUIRE(std::isfinite(res.energy));
    REQUIRE(res.iterations == 3);
}

TEST_CASE("exact-diagonalization cap is enforced and configurable") {
    const auto inst = sample_qsk_instance(12, 1.0, 0.0, 1.0, 3);
    LanczosOptions opt;
    opt.ed_cap = 10;
    REQUIRE_THROWS_AS(lanczos_ground_state(inst, opt), std::invalid_argument);
}

TEST_CASE("exact expectations on hand-built states") {
    StateVector up;
    up.n = 3;
    up.amplitudes = Eigen::VectorXcd::Zero(8);
    up.amplitudes(0) = 1.0;
    REQUIRE(exact_expectation(up, {{0, PauliAxis::Z}}).real() == Catch::Approx(1.0));

    StateVector plus;
    plus.n = 3;
    plus.amplitudes = Eigen::VectorXcd::Constant(8, cplx(1.0 / std::sqrt(8.0), 0.0));
    REQUIRE(exact_expectation(plus, {{0, PauliAxis::X}}).real() ==
            Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(exact_expectation(plus, {{1, PauliAxis::Z}})) < 1e-12);
}

TEST_CASE("exact expectations match dense matrix-vector computation") {
    const int n = 6;
    auto rng = make_stream(314);
    std::normal_distribution<double> normal(0.0, 1.0);
    StateVector sv;
    sv.n = n;
    sv.amplitudes.resize(64);
    for (int i = 0; i < 64; ++i) sv.amplitudes(i) = cplx(normal(rng), normal(rng));
    sv.amplitudes.normalize();

    const std::vector<PauliString> ops = {
        {{1, PauliAxis::Z}, {4, PauliAxis::Z}},
        {{0, PauliAxis::X}},
        {{2, PauliAxis::Y}, {3, PauliAxis::X}},
        {{0, PauliAxis::Plus}, {5, PauliAxis::Minus}},
        {{1, PauliAxis::X}, {2, PauliAxis::Y}, {3, PauliAxis::Z}, {4, PauliAxis::Plus}},
    };
    for (const auto& op : ops) {
        const cplx got = exact_expectation(sv, op);
        const cplx want = qt::dense_expectation(sv.amplitudes, n, op);
        REQUIRE(std::abs(got - want) < 1e-12);
    }
    // Hermitian strings give real expectations
    REQUIRE(std::abs(exact_expectation(sv, {{2, PauliAxis::Y}, {3, PauliAxis::X}}).imag()) <
            1e-12);
}

TEST_CASE("renyi-2 entropy: product states, Bell pair, entangler phase") {
    // any product state has zero entanglement for every cut
    const auto cs = qt::random_params(5, 71);
    CsParams prod{cs.x};
    const auto psv = build_cs_state(prod);
    REQUIRE(exact_renyi2(psv, {0}) == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(exact_renyi2(psv, {1, 3}) == Catch::Approx(0.0).margin(1e-10));

    // Bell pair: one bit for the single-site cut
    StateVector bell;
    bell.n = 2;
    bell.amplitudes = Eigen::VectorXcd::Zero(4);
    bell.amplitudes(0) = bell.amplitudes(3) = 1.0 / std::sqrt(2.0);
    REQUIRE(exact_renyi2(bell, {0}) == Catch::Approx(1.0).margin(1e-12));

    // V(M)|++> with a single phase: S2 = -log2(1 - sin^2(mu/2)/2)
    const double mu = 0.8317;
    GcsParams p = GcsParams::zero(2);
    p.x(0, 1) = p.x(1, 1) = M_PI / 4.0;  // rotate both spins to |+>
    p.m(0, 1) = p.m(1, 0) = mu;
    const auto sv = build_gcs_state(p);
    const double want = -std::log2(1.0 - 0.5 * std::pow(std::sin(mu / 2.0), 2));
    REQUIRE(exact_renyi2(sv, {0}) == Catch::Approx(want).margin(1e-10));

    // empty and full subsystems are exactly zero
    REQUIRE(exact_renyi2(sv, {}) == 0.0);
    REQUIRE(exact_renyi2(sv, {0, 1}) == 0.0);
}

TEST_CASE("renyi-2 entropy is symmetric under complementation") {
    const auto p = qt::random_params(6, 1234);
    const auto sv = build_gcs_state(p);
    const double sa = exact_renyi2(sv, {0, 2, 5});
    const double sb = exact_renyi2(sv, {1, 3, 4});
    REQUIRE(sa == Catch::Approx(sb).margin(1e-10));
}

TEST_CASE("spectrum extent") {
    auto one = manual_instance(1, 1.0);
    REQUIRE(spectrum_extent(one) == Catch::Approx(2.0).margin(1e-9));

    auto two = manual_instance(2, 0.0);
    two.couplings(0, 1) = two.couplings(1, 0) = 1.0;
    REQUIRE(spectrum_extent(two) == Catch::Approx(2.0).margin(1e-9));

    const auto inst = sample_qsk_instance(8, 1.0, 0.25, 0.8, 44);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(inst),
                                                      Eigen::EigenvaluesOnly);
    const double want = es.eigenvalues()(255) - es.eigenvalues()(0);
    REQUIRE(spectrum_extent(inst) == Catch::Approx(want).margin(1e-8));
}

TEST_CASE("ground energy is invariant under site relabeling") {
    const auto inst = sample_qsk_instance(7, 1.0, 0.35, 1.1, 17);
    const int n = inst.n;
    std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
    QskInstance rel = inst;
    for (int p = 0; p < n; ++p) {
        rel.longitudinal_fields(perm[p]) = inst.longitudinal_fields(p);
        for (int q = 0; q < n; ++q) rel.couplings(perm[p], perm[q]) = inst.couplings(p, q);
    }
    const double e0 = lanczos_ground_state(inst).energy;
    const double e1 = lanczos_ground_state(rel).energy;
    REQUIRE(e0 == Catch::Approx(e1).margin(1e-8));
}

TEST_CASE("dense GCS construction matches the independent Kronecker oracle") {
    const auto p = qt::random_params(6, 2025);
    const auto sv = build_gcs_state(p);
    const Eigen::VectorXcd oracle = qt::dense_state(p);
    REQUIRE((sv.amplitudes - oracle).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(std::abs(sv.amplitudes.norm() - 1.0) < 1e-12);
}
