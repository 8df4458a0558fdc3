#pragma once

// Dense-matrix oracles for the test suite.  Everything here is built the
// slow, obviously-correct way (explicit 2^n Kronecker products) and exists
// only to cross-check the analytic engine and the bit-twiddling kernels.

#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qsk/ansatz.hpp"
#include "qsk/disorder.hpp"
#include "qsk/pauli.hpp"
#include "qsk/rng.hpp"

namespace qsk::testing {

using cplx = std::complex<double>;

inline Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Eigen::Matrix2cd pauli_matrix(PauliAxis axis) {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
    switch (axis) {
        case PauliAxis::X: m << 0, 1, 1, 0; break;
        case PauliAxis::Y: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
        case PauliAxis::Z: m << 1, 0, 0, -1; break;
        case PauliAxis::Plus: m << 0, 1, 0, 0; break;
        case PauliAxis::Minus: m << 0, 0, 1, 0; break;
    }
    return m;
}

// site 0 is the most significant bit: leftmost factor of the Kronecker chain
inline Eigen::MatrixXcd site_operator(int n, int site, const Eigen::Matrix2cd& op) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
    for (int s = 0; s < n; ++s)
        out = kron(out, s == site ? Eigen::MatrixXcd(op)
                                  : Eigen::MatrixXcd(Eigen::Matrix2cd::Identity()));
    return out;
}

inline Eigen::MatrixXcd pauli_string_matrix(int n, const PauliString& op) {
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(dim, dim);
    for (const auto& factor : op) out = out * site_operator(n, factor.site, pauli_matrix(factor.axis));
    return out;
}

// single-spin unitary exp(-i x.sigma) through an eigendecomposition oracle
// (independent of the closed form under test)
inline Eigen::Matrix2cd dense_su2(const Eigen::Vector3d& x) {
    Eigen::Matrix2cd h = x(0) * pauli_matrix(PauliAxis::X) + x(1) * pauli_matrix(PauliAxis::Y) +
                         x(2) * pauli_matrix(PauliAxis::Z);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
    Eigen::Vector2cd phases;
    for (int i = 0; i < 2; ++i) phases(i) = std::exp(cplx(0.0, -es.eigenvalues()(i)));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

// |Psi(x, y, M)> assembled from explicit single-site unitaries and the
// diagonal entangler, acting on the all-up state
inline Eigen::VectorXcd dense_state(const GcsParams& p) {
    const int n = p.n();
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
    psi(0) = 1.0;
    for (int s = 0; s < n; ++s)
        psi = site_operator(n, s, dense_su2(p.x.row(s).transpose())) * psi;
    for (Eigen::Index idx = 0; idx < dim; ++idx) {
        double phase = 0.0;
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                const double sa = (idx >> (n - 1 - a)) & 1 ? -1.0 : 1.0;
                const double sb = (idx >> (n - 1 - b)) & 1 ? -1.0 : 1.0;
                phase += p.m(a, b) * sa * sb;
            }
        psi(idx) *= std::exp(cplx(0.0, -0.25 * phase));
    }
    for (int s = 0; s < n; ++s)
        psi = site_operator(n, s, dense_su2(p.y.row(s).transpose())) * psi;
    return psi;
}

inline Eigen::VectorXcd dense_state(const CsParams& p) {
    return dense_state(GcsParams::from_cs(p));
}

inline cplx dense_expectation(const Eigen::VectorXcd& psi, int n, const PauliString& op) {
    return psi.dot(pauli_string_matrix(n, op) * psi);
}

inline Eigen::MatrixXcd dense_qsk_hamiltonian(const QskInstance& inst) {
    const int n = inst.n;
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    for (int p = 0; p < n; ++p) {
        for (int q = p + 1; q < n; ++q)
            h -= inst.couplings(p, q) * pauli_string_matrix(n, {{p, PauliAxis::Z}, {q, PauliAxis::Z}});
        h -= inst.g * pauli_string_matrix(n, {{p, PauliAxis::X}});
        h -= inst.longitudinal_fields(p) * pauli_string_matrix(n, {{p, PauliAxis::Z}});
    }
    return h;
}

inline GcsParams random_params(int n, std::uint64_t seed, double scale = 0.7) {
    auto rng = make_stream(seed);
    std::normal_distribution<double> normal(0.0, scale);
    GcsParams p = GcsParams::zero(n);
    for (int s = 0; s < n; ++s)
        for (int c = 0; c < 3; ++c) {
            p.x(s, c) = normal(rng);
            p.y(s, c) = normal(rng);
        }
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) p.m(a, b) = p.m(b, a) = normal(rng);
    return p;
}

}  // namespace qsk::testing
