#pragma once

// Numerically exact ground states, observables, and entanglement for small
// systems; the verification oracle for every variational quantity.
//
// Basis convention (documented, load-bearing for partial traces): site 0 is
// the MOST significant bit of the basis index, bit value 0 means |up>.  The
// all-up product state is index 0.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "qsk/ansatz.hpp"
#include "qsk/disorder.hpp"
#include "qsk/pauli.hpp"
#include "qsk/rng.hpp"

namespace qsk {

struct StateVector {
    int n = 0;
    Eigen::VectorXcd amplitudes;

    std::size_t dim() const { return std::size_t{1} << n; }
};

namespace detail {
inline std::size_t site_mask(int n, int site) {
    return std::size_t{1} << (n - 1 - site);
}
inline void check_small_system(int n, int cap) {
    if (n < 1) throw std::invalid_argument("spin count must be >= 1");
    if (n > cap)
        throw std::invalid_argument("system size " + std::to_string(n) +
                                    " exceeds the exact-diagonalization cap " +
                                    std::to_string(cap));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// matrix-free Hamiltonian application
// ---------------------------------------------------------------------------

// H = -sum_{p<q} J_pq sz_p sz_q - g sum_n sx_n - sum_n h_n sz_n.
// The zz and z parts are diagonal and precomputed once; the transverse part
// couples each basis state to its n single-bit flips.
class HamiltonianApplier {
  public:
    explicit HamiltonianApplier(const QskInstance& inst, int cap = 26) : inst_(inst) {
        detail::check_small_system(inst.n, cap);
        const std::size_t dim = std::size_t{1} << inst.n;
        diag_.resize(static_cast<Eigen::Index>(dim));
        std::vector<double> s(inst.n);
        for (std::size_t idx = 0; idx < dim; ++idx) {
            for (int p = 0; p < inst.n; ++p)
                s[p] = (idx & detail::site_mask(inst.n, p)) ? -1.0 : 1.0;
            double e = 0.0;
            for (int p = 0; p < inst.n; ++p) {
                for (int q = p + 1; q < inst.n; ++q)
                    e -= inst.couplings(p, q) * s[p] * s[q];
                e -= inst.longitudinal_fields(p) * s[p];
            }
            diag_(static_cast<Eigen::Index>(idx)) = e;
        }
    }

    int n() const { return inst_.n; }
    const Eigen::VectorXd& diagonal() const { return diag_; }

    template <typename Vec>
    void apply(const Vec& in, Vec& out) const {
        const std::size_t dim = std::size_t{1} << inst_.n;
        out = diag_.array().template cast<typename Vec::Scalar>() * in.array();
        if (inst_.g == 0.0) return;
        for (int p = 0; p < inst_.n; ++p) {
            const std::size_t mask = detail::site_mask(inst_.n, p);
            for (std::size_t idx = 0; idx < dim; ++idx)
                out(static_cast<Eigen::Index>(idx)) -=
                    inst_.g * in(static_cast<Eigen::Index>(idx ^ mask));
        }
    }

  private:
    QskInstance inst_;
    Eigen::VectorXd diag_;
};

inline Eigen::MatrixXd dense_hamiltonian(const QskInstance& inst, int cap = 14) {
    detail::check_small_system(inst.n, cap);
    const std::size_t dim = std::size_t{1} << inst.n;
    const HamiltonianApplier ham(inst, cap);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
    h.diagonal() = ham.diagonal();
    if (inst.g != 0.0)
        for (int p = 0; p < inst.n; ++p) {
            const std::size_t mask = detail::site_mask(inst.n, p);
            for (std::size_t idx = 0; idx < dim; ++idx)
                h(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(idx ^ mask)) -=
                    inst.g;
        }
    return h;
}

// ---------------------------------------------------------------------------
// Lanczos ground state
// ---------------------------------------------------------------------------

struct LanczosOptions {
    double tol = 1e-10;
    int max_iter = 300;
    int ed_cap = 16;  // configurable; desk-scale memory bounds the default
};

struct LanczosResult {
    double energy = 0.0;
    StateVector state;
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;
};

// Lanczos with full reorthogonalization (ghost-free at these Krylov sizes).
// H is real symmetric in the computational basis, so the iteration runs in
// real arithmetic.  The start vector is seeded from the instance seed, making
// results reproducible for a given build.
inline LanczosResult lanczos_ground_state(const QskInstance& inst,
                                          const LanczosOptions& opt = {}) {
    detail::check_small_system(inst.n, opt.ed_cap);
    if (opt.tol <= 0.0) throw std::invalid_argument("lanczos tol must be > 0");
    const Eigen::Index dim = Eigen::Index{1} << inst.n;
    const HamiltonianApplier ham(inst, opt.ed_cap);

    const int kmax = static_cast<int>(std::min<Eigen::Index>(opt.max_iter, dim));
    std::vector<Eigen::VectorXd> basis;
    basis.reserve(static_cast<std::size_t>(kmax));

    auto rng = make_stream(inst.seed, 0x4c414e43u);  // dedicated ED stream
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
    v.normalize();
    basis.push_back(v);

    std::vector<double> alpha, beta;
    Eigen::VectorXd w(dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    auto solve_tridiagonal = [&]() {
        const int m = static_cast<int>(alpha.size());
        Eigen::VectorXd adiag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
        Eigen::VectorXd bsub =
            m > 1 ? Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1) : Eigen::VectorXd();
        es.computeFromTridiagonal(adiag, bsub, Eigen::ComputeEigenvectors);
    };

    for (int k = 0; k < kmax; ++k) {
        ham.apply(basis[static_cast<std::size_t>(k)], w);
        const double a = basis[static_cast<std::size_t>(k)].dot(w);
        alpha.push_back(a);
        w -= a * basis[static_cast<std::size_t>(k)];
        if (k > 0)
            w -= beta[static_cast<std::size_t>(k - 1)] * basis[static_cast<std::size_t>(k - 1)];
        // full reorthogonalization
        for (const auto& q : basis) w -= q.dot(w) * q;
        const double b = w.norm();
        if (b < 1e-13 * std::max(1.0, std::abs(a))) break;  // invariant subspace reached
        if (k + 1 >= kmax) break;
        // periodic convergence check via the tridiagonal residual bound b*|y_last|
        if ((k + 1) % 10 == 0) {
            solve_tridiagonal();
            const int m = static_cast<int>(alpha.size());
            const double bound = b * std::abs(es.eigenvectors()(m - 1, 0));
            const double scale = std::max(
                {std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(m - 1)), 1.0});
            if (bound <= 0.1 * opt.tol * scale) break;
        }
        beta.push_back(b);
        basis.push_back(w / b);
    }
    solve_tridiagonal();
    const int m = static_cast<int>(alpha.size());

    LanczosResult res;
    res.iterations = m;
    res.energy = es.eigenvalues()(0);
    Eigen::VectorXd ground = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < m; ++k)
        ground += es.eigenvectors()(k, 0) * basis[static_cast<std::size_t>(k)];
    ground.normalize();

    ham.apply(ground, w);
    const double scale =
        std::max({std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(m - 1)), 1.0});
    res.residual_norm = (w - res.energy * ground).norm();
    res.converged = res.residual_norm <= opt.tol * scale;

    res.state.n = inst.n;
    res.state.amplitudes = ground.cast<cplx>();
    return res;
}

inline QskInstance negated_instance(const QskInstance& inst) {
    QskInstance neg = inst;
    neg.couplings = -inst.couplings;
    neg.longitudinal_fields = -inst.longitudinal_fields;
    neg.g = -inst.g;
    return neg;
}

// W = E_max - E_min; the top of the spectrum is the ground state of -H.
inline double spectrum_extent(const QskInstance& inst, const LanczosOptions& opt = {}) {
    const LanczosResult lo = lanczos_ground_state(inst, opt);
    const LanczosResult hi = lanczos_ground_state(negated_instance(inst), opt);
    if (!lo.converged || !hi.converged)
        throw std::runtime_error("spectrum_extent: Lanczos did not converge");
    return -hi.energy - lo.energy;
}

// ---------------------------------------------------------------------------
// expectations and entanglement
// ---------------------------------------------------------------------------

inline Eigen::VectorXcd apply_pauli_string(const StateVector& state, const PauliString& op) {
    validate_pauli_string(op, state.n, 4);
    const std::size_t dim = state.dim();
    if (state.amplitudes.size() != static_cast<Eigen::Index>(dim))
        throw std::invalid_argument("state vector has wrong length");
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t idx = 0; idx < dim; ++idx) {
        cplx coef = state.amplitudes(static_cast<Eigen::Index>(idx));
        if (coef == 0.0) continue;
        std::size_t target = idx;
        bool dead = false;
        for (const auto& factor : op) {
            const std::size_t mask = detail::site_mask(state.n, factor.site);
            const bool down = (idx & mask) != 0;
            switch (factor.axis) {
                case PauliAxis::X: target ^= mask; break;
                case PauliAxis::Y:
                    target ^= mask;
                    coef *= down ? cplx(0, -1) : cplx(0, 1);
                    break;
                case PauliAxis::Z:
                    if (down) coef = -coef;
                    break;
                case PauliAxis::Plus:
                    if (!down) dead = true;
                    target ^= mask;
                    break;
                case PauliAxis::Minus:
                    if (down) dead = true;
                    target ^= mask;
                    break;
            }
            if (dead) break;
        }
        if (!dead) out(static_cast<Eigen::Index>(target)) += coef;
    }
    return out;
}

inline cplx exact_expectation(const StateVector& state, const PauliString& op) {
    return state.amplitudes.dot(apply_pauli_string(state, op));
}

// S2 = -log2 tr(rho_A^2) from the exact reduced density matrix; the smaller
// subsystem side is traced explicitly (purity is symmetric for pure states).
inline double exact_renyi2(const StateVector& state, const std::vector<int>& subsystem) {
    const int n = state.n;
    std::vector<bool> in_a(static_cast<std::size_t>(n), false);
    for (int s : subsystem) {
        if (s < 0 || s >= n) throw std::invalid_argument("exact_renyi2: site out of range");
        if (in_a[static_cast<std::size_t>(s)])
            throw std::invalid_argument("exact_renyi2: duplicate site");
        in_a[static_cast<std::size_t>(s)] = true;
    }
    const int la = static_cast<int>(subsystem.size());
    if (la == 0 || la == n) return 0.0;

    std::vector<int> a_sites, b_sites;
    for (int s = 0; s < n; ++s) (in_a[static_cast<std::size_t>(s)] ? a_sites : b_sites).push_back(s);

    const Eigen::Index rows = Eigen::Index{1} << la;
    const Eigen::Index cols = Eigen::Index{1} << (n - la);
    Eigen::MatrixXcd psi(rows, cols);
    const std::size_t dim = state.dim();
    for (std::size_t idx = 0; idx < dim; ++idx) {
        std::size_t r = 0, c = 0;
        for (std::size_t i = 0; i < a_sites.size(); ++i)
            if (idx & detail::site_mask(n, a_sites[i])) r |= std::size_t{1} << (la - 1 - static_cast<int>(i));
        for (std::size_t i = 0; i < b_sites.size(); ++i)
            if (idx & detail::site_mask(n, b_sites[i]))
                c |= std::size_t{1} << (n - la - 1 - static_cast<int>(i));
        psi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            state.amplitudes(static_cast<Eigen::Index>(idx));
    }
    double purity;
    if (rows <= cols) {
        const Eigen::MatrixXcd rho = psi * psi.adjoint();
        purity = rho.squaredNorm();
    } else {
        const Eigen::MatrixXcd rho = psi.adjoint() * psi;
        purity = rho.squaredNorm();
    }
    purity = std::min(purity, 1.0);
    return -std::log2(purity);
}

// ---------------------------------------------------------------------------
// dense construction of variational states (oracle side of the ansatz)
// ---------------------------------------------------------------------------

inline StateVector build_gcs_state(const GcsParams& params, int cap = 16) {
    validate_params(params);
    const int n = params.n();
    detail::check_small_system(n, cap);
    const std::size_t dim = std::size_t{1} << n;
    StateVector sv;
    sv.n = n;
    sv.amplitudes = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dim));
    sv.amplitudes(0) = 1.0;  // |up...up>

    auto apply_single = [&](int site, const Eigen::Matrix2cd& u) {
        const std::size_t mask = detail::site_mask(n, site);
        for (std::size_t idx = 0; idx < dim; ++idx) {
            if (idx & mask) continue;
            const auto i0 = static_cast<Eigen::Index>(idx);
            const auto i1 = static_cast<Eigen::Index>(idx | mask);
            const cplx up = sv.amplitudes(i0), dn = sv.amplitudes(i1);
            sv.amplitudes(i0) = u(0, 0) * up + u(0, 1) * dn;
            sv.amplitudes(i1) = u(1, 0) * up + u(1, 1) * dn;
        }
    };
    auto unitary_of = [](const Eigen::Vector3d& x) {
        const auto amp = spin_amplitudes(x);
        Eigen::Matrix2cd u;
        u << amp.c0, -std::conj(amp.c1), amp.c1, std::conj(amp.c0);
        return u;
    };

    for (int s = 0; s < n; ++s) apply_single(s, unitary_of(params.x.row(s).transpose()));

    // V(M): diagonal phases exp(-(i/4) sum_{p<q} M_pq s_p s_q)
    if (!params.m.isZero(0.0)) {
        std::vector<double> s(static_cast<std::size_t>(n));
        for (std::size_t idx = 0; idx < dim; ++idx) {
            for (int p = 0; p < n; ++p)
                s[static_cast<std::size_t>(p)] = (idx & detail::site_mask(n, p)) ? -1.0 : 1.0;
            double phase = 0.0;
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q)
                    phase += params.m(p, q) * s[static_cast<std::size_t>(p)] *
                             s[static_cast<std::size_t>(q)];
            sv.amplitudes(static_cast<Eigen::Index>(idx)) *=
                std::exp(cplx(0.0, -0.25 * phase));
        }
    }

    for (int s = 0; s < n; ++s) apply_single(s, unitary_of(params.y.row(s).transpose()));
    return sv;
}

inline StateVector build_cs_state(const CsParams& params, int cap = 16) {
    return build_gcs_state(GcsParams::from_cs(params), cap);
}

}  // namespace qsk
