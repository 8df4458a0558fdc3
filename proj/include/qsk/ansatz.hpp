#pragma once

// Coherent-state (CS) and generalized coherent-state (GCS) variational states.
//
//   |phi(x)>   = prod_n exp(-i x_n . sigma_n) |up...up>           (CS)
//   |Psi>      = U(y) V(M) |phi(x)>                               (GCS)
//   V(M)       = exp(-(i/4) sum_{p<q} M_pq sz_p sz_q)
//
// Every observable reduces to expectations of short Pauli products.  The
// evaluation engine conjugates a product operator through U(y) with per-site
// adjoint rotations, expands sigma^{x,y} into sigma^{+,-} branches, conjugates
// through V(M) using
//
//   V^dag sigma_n^± V = sigma_n^± exp(± (i/2) sum_{m != n} M_nm sz_m),
//
// and evaluates each branch as a product of single-spin brackets.  The
// reordering phases picked up when a ladder operator passes another site's
// phase exponential cancel exactly against that site's own bracket phases, so
// ladder sites always contribute bare brackets while spectator and sigma-z
// sites carry the accumulated phases.
//
// Analytic gradients and the tangent metric reuse the same branch data:
// x-derivatives modify one site's ket, y-derivatives differentiate the adjoint
// rotation rows, M-derivatives insert (-i/4) sz_p sz_q, and prefix/suffix/
// middle product tables make every single- and two-site replacement O(1).

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qsk/disorder.hpp"
#include "qsk/pauli.hpp"

namespace qsk {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// parameter containers
// ---------------------------------------------------------------------------

struct CsParams {
    Eigen::MatrixXd x;  // n x 3 rotation generators

    int n() const { return static_cast<int>(x.rows()); }
    static CsParams zero(int n) { return {Eigen::MatrixXd::Zero(n, 3)}; }
};

struct GcsParams {
    Eigen::MatrixXd x;  // n x 3
    Eigen::MatrixXd y;  // n x 3
    Eigen::MatrixXd m;  // n x n symmetric, zero diagonal

    int n() const { return static_cast<int>(x.rows()); }

    static GcsParams zero(int n) {
        return {Eigen::MatrixXd::Zero(n, 3), Eigen::MatrixXd::Zero(n, 3),
                Eigen::MatrixXd::Zero(n, n)};
    }
    static GcsParams from_cs(const CsParams& cs) {
        GcsParams p = zero(cs.n());
        p.x = cs.x;
        return p;
    }
};

inline void validate_params(const GcsParams& p) {
    const int n = p.n();
    if (n < 1 || p.y.rows() != n || p.x.cols() != 3 || p.y.cols() != 3 ||
        p.m.rows() != n || p.m.cols() != n)
        throw std::invalid_argument("GcsParams: inconsistent dimensions");
    if (!p.x.allFinite() || !p.y.allFinite() || !p.m.allFinite())
        throw std::invalid_argument("GcsParams: non-finite entries");
    for (int i = 0; i < n; ++i) {
        if (p.m(i, i) != 0.0) throw std::invalid_argument("GcsParams: m diagonal must be zero");
        for (int j = i + 1; j < n; ++j)
            if (p.m(i, j) != p.m(j, i))
                throw std::invalid_argument("GcsParams: m must be symmetric");
    }
}

// Packed parameter vector layout: [x (site-major, 3 per site) | y (same) |
// m upper triangle (p < q, row-major)].
struct ParamLayout {
    int n = 0;

    explicit ParamLayout(int n_) : n(n_) {}
    int x_offset() const { return 0; }
    int y_offset() const { return 3 * n; }
    int m_offset() const { return 6 * n; }
    int pairs() const { return n * (n - 1) / 2; }
    int total() const { return 6 * n + pairs(); }
    int x_index(int site, int comp) const { return 3 * site + comp; }
    int y_index(int site, int comp) const { return 3 * n + 3 * site + comp; }
    int pair_index(int p, int q) const {  // requires p < q
        return p * (2 * n - p - 1) / 2 + (q - p - 1);
    }
    int m_index(int p, int q) const { return m_offset() + pair_index(p, q); }
};

inline Eigen::VectorXd pack_params(const GcsParams& p) {
    const ParamLayout lay(p.n());
    Eigen::VectorXd v(lay.total());
    for (int s = 0; s < lay.n; ++s)
        for (int c = 0; c < 3; ++c) {
            v(lay.x_index(s, c)) = p.x(s, c);
            v(lay.y_index(s, c)) = p.y(s, c);
        }
    for (int a = 0; a < lay.n; ++a)
        for (int b = a + 1; b < lay.n; ++b) v(lay.m_index(a, b)) = p.m(a, b);
    return v;
}

inline GcsParams unpack_params(const Eigen::VectorXd& v, int n) {
    const ParamLayout lay(n);
    if (v.size() != lay.total())
        throw std::invalid_argument("unpack_params: wrong vector length");
    GcsParams p = GcsParams::zero(n);
    for (int s = 0; s < n; ++s)
        for (int c = 0; c < 3; ++c) {
            p.x(s, c) = v(lay.x_index(s, c));
            p.y(s, c) = v(lay.y_index(s, c));
        }
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) p.m(a, b) = p.m(b, a) = v(lay.m_index(a, b));
    return p;
}

// --- JSON (x, y row-major; m as row-major lower triangle) -------------------

inline nlohmann::json to_json(const GcsParams& p) {
    const int n = p.n();
    std::vector<double> xf, yf, mf;
    xf.reserve(3 * n);
    yf.reserve(3 * n);
    mf.reserve(n * (n - 1) / 2);
    for (int s = 0; s < n; ++s)
        for (int c = 0; c < 3; ++c) {
            xf.push_back(p.x(s, c));
            yf.push_back(p.y(s, c));
        }
    for (int a = 1; a < n; ++a)
        for (int b = 0; b < a; ++b) mf.push_back(p.m(a, b));
    return nlohmann::json{{"n", n}, {"x", xf}, {"y", yf}, {"m", mf}};
}

inline GcsParams params_from_json(const nlohmann::json& j) {
    const int n = j.at("n").get<int>();
    if (n < 1) throw std::invalid_argument("params_from_json: n must be >= 1");
    const auto xf = j.at("x").get<std::vector<double>>();
    const auto yf = j.at("y").get<std::vector<double>>();
    const auto mf = j.at("m").get<std::vector<double>>();
    if (xf.size() != static_cast<std::size_t>(3 * n) || yf.size() != xf.size() ||
        mf.size() != static_cast<std::size_t>(n) * (n - 1) / 2)
        throw std::invalid_argument("params_from_json: inconsistent array sizes");
    GcsParams p = GcsParams::zero(n);
    for (int s = 0; s < n; ++s)
        for (int c = 0; c < 3; ++c) {
            p.x(s, c) = xf[3 * s + c];
            p.y(s, c) = yf[3 * s + c];
        }
    std::size_t k = 0;
    for (int a = 1; a < n; ++a)
        for (int b = 0; b < a; ++b) {
            p.m(a, b) = p.m(b, a) = mf[k];
            ++k;
        }
    return p;
}

// ---------------------------------------------------------------------------
// single-spin geometry
// ---------------------------------------------------------------------------

struct SingleSpinAmplitudes {
    cplx c0, c1;  // exp(-i x.sigma)|up> = c0|up> + c1|down>
};

namespace detail {
inline double sinc_theta(double th) {  // sin(th)/th
    if (th < 1e-4) {
        const double t2 = th * th;
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    }
    return std::sin(th) / th;
}
}  // namespace detail

inline SingleSpinAmplitudes spin_amplitudes(const Eigen::Vector3d& x) {
    const double th = x.norm();
    const double sc = detail::sinc_theta(th);
    return {cplx(std::cos(th), -sc * x(2)), cplx(sc * x(1), -sc * x(0))};
}

// Adjoint representation: U(x)^dag sigma^a U(x) = sum_a' R_aa' sigma^a'.
// Rodrigues rotation by angle 2|x| about x/|x|.
inline Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& x) {
    const double th = x.norm();
    double s1, s2;  // R = I + s1 [x]_x + s2 [x]_x^2
    if (th < 1e-4) {
        const double t2 = th * th;
        s1 = 2.0 - 4.0 * t2 / 3.0 + 4.0 * t2 * t2 / 15.0;
        s2 = 2.0 - 2.0 * t2 / 3.0 + 4.0 * t2 * t2 / 45.0;
    } else {
        s1 = std::sin(2 * th) / th;
        s2 = (1.0 - std::cos(2 * th)) / (th * th);
    }
    Eigen::Matrix3d k;
    k << 0, -x(2), x(1), x(2), 0, -x(0), -x(1), x(0), 0;
    return Eigen::Matrix3d::Identity() + s1 * k + s2 * (k * k);
}

// Right-trivialized tangent of the exponential map:
//   d/dx^a exp(-i x.sigma) = exp(-i x.sigma) * (-i (J(x) e_a).sigma).
inline Eigen::Matrix3d dexp_jacobian(const Eigen::Vector3d& x) {
    const double th = x.norm();
    double c1, c2;  // J = I + c1 [x]_x + c2 [x]_x^2
    if (th < 1e-4) {
        const double t2 = th * th;
        c1 = -1.0 + t2 / 3.0 - 2.0 * t2 * t2 / 45.0;
        c2 = 2.0 / 3.0 - 2.0 * t2 / 15.0 + 4.0 * t2 * t2 / 315.0;
    } else {
        c1 = (std::cos(2 * th) - 1.0) / (2 * th * th);
        c2 = (2 * th - std::sin(2 * th)) / (2 * th * th * th);
    }
    Eigen::Matrix3d k;
    k << 0, -x(2), x(1), x(2), 0, -x(0), -x(1), x(0), 0;
    return Eigen::Matrix3d::Identity() + c1 * k + c2 * (k * k);
}

// d/dy^b rotation_matrix(y) = 2 R(y) [J(y) e_b]_x
inline Eigen::Matrix3d rotation_matrix_derivative(const Eigen::Vector3d& y, int comp) {
    const Eigen::Matrix3d r = rotation_matrix(y);
    const Eigen::Vector3d v = dexp_jacobian(y).col(comp);
    Eigen::Matrix3d k;
    k << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
    return 2.0 * r * k;
}

// ---------------------------------------------------------------------------
// local operator decomposition over the basis {I, sigma+, sigma-, sigma z}
// ---------------------------------------------------------------------------

namespace detail {

struct LocalOp {
    std::array<cplx, 4> c{};  // 0 = I, 1 = sigma+, 2 = sigma-, 3 = sigma z
};

// c * (v . sigma) in the {I,+,-,z} basis (v may be complex)
inline LocalOp pmz_of(cplx c, const Eigen::Vector3cd& v) {
    LocalOp op;
    op.c[1] = c * (v(0) - cplx(0, 1) * v(1));
    op.c[2] = c * (v(0) + cplx(0, 1) * v(1));
    op.c[3] = c * v(2);
    return op;
}

inline LocalOp pmz_of_real(cplx c, const Eigen::Vector3d& v) {
    return pmz_of(c, v.cast<cplx>());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// evaluation engine
// ---------------------------------------------------------------------------

// Reusable scratch buffers for the hot loops (one per optimizing thread).
struct EngineWorkspace {
    // per-site branch context: bracket values, sigma-z-inserted values, prefix
    // and suffix products, the operator tag (0 plain, 1 sigma+, 2 sigma-,
    // 3 sigma z) and the accumulated phase factor at that site
    std::vector<cplx> f, fz, pre, suf, ph;
    std::vector<int> tag;
    Eigen::MatrixXcd mid;

    void resize(int n) {
        f.resize(n);
        fz.resize(n);
        pre.resize(n + 1);
        suf.resize(n + 1);
        ph.resize(n);
        tag.resize(n);
        if (mid.rows() != n) mid.setZero(n, n);
    }
};

class GcsEvaluator {
  public:
    explicit GcsEvaluator(const GcsParams& params) : p_(params), lay_(params.n()) {
        validate_params(params);
        const int n = p_.n();
        a0_.resize(n);
        a1_.resize(n);
        rho0_.resize(n);
        rho1_.resize(n);
        z_.resize(n);
        bp_.resize(n);
        rot_.resize(n);
        drot_.resize(n);
        kx0_.resize(n);
        kx1_.resize(n);
        kxp_.resize(n);
        kxm_.resize(n);
        chi_.resize(n);
        for (int s = 0; s < n; ++s) {
            const auto amp = spin_amplitudes(p_.x.row(s).transpose());
            a0_[s] = amp.c0;
            a1_[s] = amp.c1;
            rho0_[s] = std::norm(amp.c0);
            rho1_[s] = std::norm(amp.c1);
            z_[s] = rho0_[s] - rho1_[s];
            bp_[s] = std::conj(amp.c0) * amp.c1;

            rot_[s] = rotation_matrix(p_.y.row(s).transpose());
            for (int b = 0; b < 3; ++b)
                drot_[s][b] = rotation_matrix_derivative(p_.y.row(s).transpose(), b);

            // x-tangent ket modifications chi_a = U(x_s) (-i (J e_a).sigma) |up>
            const Eigen::Matrix3d jx = dexp_jacobian(p_.x.row(s).transpose());
            Eigen::Matrix2cd u;
            u << amp.c0, -std::conj(amp.c1), amp.c1, std::conj(amp.c0);
            for (int a = 0; a < 3; ++a) {
                const Eigen::Vector3d v = jx.col(a);
                const Eigen::Vector2cd g0(cplx(0, -v(2)), cplx(v(1), -v(0)));
                const Eigen::Vector2cd chi = u * g0;
                chi_[s][a] = chi;
                kx0_[s][a] = std::conj(amp.c0) * chi(0);
                kx1_[s][a] = std::conj(amp.c1) * chi(1);
                kxp_[s][a] = std::conj(amp.c0) * chi(1);
                kxm_[s][a] = std::conj(amp.c1) * chi(0);
            }
        }
        eh_ = Eigen::MatrixXcd(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) eh_(a, b) = std::exp(cplx(0.0, 0.5 * p_.m(a, b)));
    }

    int n() const { return p_.n(); }
    const GcsParams& params() const { return p_; }
    const ParamLayout& layout() const { return lay_; }
    double z_expectation(int site) const { return z_[site]; }

    // --- general product-operator expectation (up to 4 distinct sites) ------

    cplx pauli_expectation(const PauliString& op) const {
        validate_pauli_string(op, n(), 4);
        const std::size_t k = op.size();
        if (k == 0) return 1.0;

        // conjugate through U(y), then express each factor in the {+,-,z} basis
        std::vector<int> sites(k);
        std::vector<detail::LocalOp> ops(k);
        for (std::size_t i = 0; i < k; ++i) {
            sites[i] = op[i].site;
            switch (op[i].axis) {
                case PauliAxis::Plus:
                case PauliAxis::Minus: {
                    // sigma^± = (sigma^x ± i sigma^y)/2 conjugates row-wise
                    const Eigen::Vector3d rx = rot_[sites[i]].row(0);
                    const Eigen::Vector3d ry = rot_[sites[i]].row(1);
                    const double sg = (op[i].axis == PauliAxis::Plus) ? 1.0 : -1.0;
                    const Eigen::Vector3cd v =
                        0.5 * (rx.cast<cplx>() + cplx(0, sg) * ry.cast<cplx>());
                    ops[i] = detail::pmz_of(1.0, v);
                    break;
                }
                default: {
                    const int row = (op[i].axis == PauliAxis::X)   ? 0
                                    : (op[i].axis == PauliAxis::Y) ? 1
                                                                   : 2;
                    ops[i] = detail::pmz_of_real(1.0, rot_[sites[i]].row(row).transpose());
                }
            }
        }

        cplx total = 0.0;
        std::array<int, 4> choice{};
        enumerate_branches(sites, ops, 0, 1.0, choice, total);
        return total;
    }

    // --- observables ---------------------------------------------------------

    // <sz_p sz_q> for all pairs; diagonal fixed at 1
    Eigen::MatrixXd zz_correlations() const {
        const int n = p_.n();
        Eigen::MatrixXd out = Eigen::MatrixXd::Identity(n, n);
        std::array<std::array<cplx, 3>, 3> t;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                pair_tensor(p, q, t);
                const auto wp = row_weights(rot_[p].row(2));
                const auto wq = row_weights(rot_[q].row(2));
                cplx v = 0.0;
                for (int al = 0; al < 3; ++al)
                    for (int be = 0; be < 3; ++be) v += wp[al] * wq[be] * t[al][be];
                out(p, q) = out(q, p) = v.real();
            }
        return out;
    }

    Eigen::VectorXd sx_expectations() const {
        const int n = p_.n();
        Eigen::VectorXd out(n);
        std::array<cplx, 3> t1;
        for (int c = 0; c < n; ++c) {
            single_tensor(c, t1);
            const auto w = row_weights(rot_[c].row(0));
            out(c) = (w[0] * t1[0] + w[1] * t1[1] + w[2] * t1[2]).real();
        }
        return out;
    }

    // --- energy ---------------------------------------------------------------

    double energy(const QskInstance& inst) const {
        check_instance(inst);
        const int n = p_.n();
        double e = 0.0;
        std::array<std::array<cplx, 3>, 3> t;
        std::array<cplx, 3> t1;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double j = inst.couplings(p, q);
                if (j == 0.0) continue;
                pair_tensor(p, q, t);
                const auto wp = row_weights(rot_[p].row(2));
                const auto wq = row_weights(rot_[q].row(2));
                cplx v = 0.0;
                for (int al = 0; al < 3; ++al)
                    for (int be = 0; be < 3; ++be) v += wp[al] * wq[be] * t[al][be];
                e -= j * v.real();
            }
        for (int c = 0; c < n; ++c) {
            const double h = inst.longitudinal_fields(c);
            if (inst.g == 0.0 && h == 0.0) continue;
            single_tensor(c, t1);
            if (inst.g != 0.0) {
                const auto w = row_weights(rot_[c].row(0));
                e -= inst.g * (w[0] * t1[0] + w[1] * t1[1] + w[2] * t1[2]).real();
            }
            if (h != 0.0) {
                const auto w = row_weights(rot_[c].row(2));
                e -= h * (w[0] * t1[0] + w[1] * t1[1] + w[2] * t1[2]).real();
            }
        }
        return e;
    }

    // --- fused energy + gradient over the packed layout -----------------------

    double energy_and_gradient(const QskInstance& inst, Eigen::VectorXd& grad,
                               EngineWorkspace& ws) const {
        check_instance(inst);
        const int n = p_.n();
        ws.resize(n);
        grad.setZero(lay_.total());
        double e = 0.0;

        std::array<std::array<cplx, 3>, 3> t;
        std::array<cplx, 3> t1;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double j = inst.couplings(p, q);
                if (j == 0.0) continue;
                const double coef = -j;
                pair_tensor(p, q, t);
                const auto wp = row_weights(rot_[p].row(2));
                const auto wq = row_weights(rot_[q].row(2));
                cplx v = 0.0;
                for (int al = 0; al < 3; ++al)
                    for (int be = 0; be < 3; ++be) v += wp[al] * wq[be] * t[al][be];
                e += coef * v.real();

                // y block: differentiate the adjoint rotation rows
                for (int b = 0; b < 3; ++b) {
                    const auto dwp = row_weights(drot_[p][b].row(2));
                    const auto dwq = row_weights(drot_[q][b].row(2));
                    cplx vp = 0.0, vq = 0.0;
                    for (int al = 0; al < 3; ++al)
                        for (int be = 0; be < 3; ++be) {
                            vp += dwp[al] * wq[be] * t[al][be];
                            vq += wp[al] * dwq[be] * t[al][be];
                        }
                    grad(lay_.y_index(p, b)) += coef * vp.real();
                    grad(lay_.y_index(q, b)) += coef * vq.real();
                }

                // x and M blocks, branch by branch
                for (int al = 0; al < 3; ++al)
                    for (int be = 0; be < 3; ++be) {
                        const cplx cbr = coef * wp[al] * wq[be];
                        if (cbr == 0.0) continue;
                        if (al == 2 && be == 2) {
                            // phase-free branch: M contribution is purely real
                            accumulate_x_zz_branch(cbr, p, q, grad);
                            continue;
                        }
                        pair_branch_arrays(p, al, q, be, ws);
                        accumulate_branch(cbr, ws, grad);
                    }
            }

        for (int c = 0; c < n; ++c) {
            const double h = inst.longitudinal_fields(c);
            if (inst.g == 0.0 && h == 0.0) continue;
            single_tensor(c, t1);
            for (int term = 0; term < 2; ++term) {
                const double coef = (term == 0) ? -inst.g : -h;
                if (coef == 0.0) continue;
                const int row = (term == 0) ? 0 : 2;
                const auto w = row_weights(rot_[c].row(row));
                e += coef * (w[0] * t1[0] + w[1] * t1[1] + w[2] * t1[2]).real();

                for (int b = 0; b < 3; ++b) {
                    const auto dw = row_weights(drot_[c][b].row(row));
                    grad(lay_.y_index(c, b)) +=
                        coef * (dw[0] * t1[0] + dw[1] * t1[1] + dw[2] * t1[2]).real();
                }

                for (int al = 0; al < 3; ++al) {
                    const cplx cbr = coef * w[al];
                    if (cbr == 0.0) continue;
                    if (al == 2) {
                        accumulate_x_z_branch(cbr, c, grad);
                        continue;
                    }
                    single_branch_arrays(c, al, ws);
                    accumulate_branch(cbr, ws, grad);
                }
            }
        }
        return e;
    }

    double energy_and_gradient(const QskInstance& inst, Eigen::VectorXd& grad) const {
        EngineWorkspace ws;
        return energy_and_gradient(inst, grad, ws);
    }

    // --- tangent metric --------------------------------------------------------

    // Structured form of g_uv = 2 Re[<d_u Psi|d_v Psi> - <d_u Psi|Psi><Psi|d_v Psi>].
    // Exact cancellations leave: site-diagonal 3x3 x blocks, x-M and M-M entries
    // only for parameter pairs sharing a site, and dense rows for the y block.
    struct StructuredMetric {
        ParamLayout lay{0};
        std::vector<Eigen::Matrix3d> xx;  // per-site 3x3 blocks
        Eigen::MatrixXd xa, xb;           // n x 3 coefficient tables for the x-M block
        std::vector<double> z;            // <sz> per site
        Eigen::MatrixXd yrows;            // 3n x P: metric rows of the y parameters

        int dim() const { return lay.total(); }

        Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
            const int n = lay.n;
            Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
            for (int s = 0; s < n; ++s)
                out.segment<3>(3 * s) += xx[s] * v.segment<3>(3 * s);
            // S_p = sum_{q != p} z_q v_{pq}
            Eigen::VectorXd sv = Eigen::VectorXd::Zero(n);
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) {
                    const double vm = v(lay.m_index(p, q));
                    sv(p) += z[q] * vm;
                    sv(q) += z[p] * vm;
                }
            for (int s = 0; s < n; ++s)
                for (int a = 0; a < 3; ++a)
                    out(lay.x_index(s, a)) += (xa(s, a) + xb(s, a) * z[s]) * sv(s);
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) {
                    double acc = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        acc += (xa(p, a) + xb(p, a) * z[p]) * z[q] * v(lay.x_index(p, a));
                        acc += (xa(q, a) + xb(q, a) * z[q]) * z[p] * v(lay.x_index(q, a));
                    }
                    out(lay.m_index(p, q)) += acc;
                }
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) {
                    const int i = lay.m_index(p, q);
                    const double vm = v(i);
                    const double zp2 = z[p] * z[p], zq2 = z[q] * z[q];
                    double acc = (1.0 - zp2 * zq2) * vm;
                    acc += (1.0 - zp2) * z[q] * (sv(p) - z[q] * vm);
                    acc += (1.0 - zq2) * z[p] * (sv(q) - z[p] * vm);
                    out(i) += 0.125 * acc;
                }
            if (yrows.size() > 0) {
                Eigen::VectorXd tmp = yrows.transpose() * v.segment(3 * n, 3 * n);
                tmp.segment(3 * n, 3 * n).setZero();  // y-y handled by the row product
                out += tmp;
                out.segment(3 * n, 3 * n) += yrows * v;
            }
            return out;
        }

        Eigen::VectorXd diagonal() const {
            const int n = lay.n;
            Eigen::VectorXd d(dim());
            for (int s = 0; s < n; ++s)
                for (int a = 0; a < 3; ++a) {
                    d(lay.x_index(s, a)) = xx[s](a, a);
                    d(lay.y_index(s, a)) = yrows(3 * s + a, lay.y_index(s, a));
                }
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q)
                    d(lay.m_index(p, q)) = 0.125 * (1.0 - z[p] * z[p] * z[q] * z[q]);
            return d;
        }

        Eigen::MatrixXd dense() const {
            const int n = lay.n;
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim(), dim());
            for (int s = 0; s < n; ++s) g.block<3, 3>(3 * s, 3 * s) = xx[s];
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) {
                    const int i = lay.m_index(p, q);
                    for (int a = 0; a < 3; ++a) {
                        g(lay.x_index(p, a), i) = g(i, lay.x_index(p, a)) =
                            (xa(p, a) + xb(p, a) * z[p]) * z[q];
                        g(lay.x_index(q, a), i) = g(i, lay.x_index(q, a)) =
                            (xa(q, a) + xb(q, a) * z[q]) * z[p];
                    }
                    g(i, i) = 0.125 * (1.0 - z[p] * z[p] * z[q] * z[q]);
                }
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q)
                    for (int r = q + 1; r < n; ++r) {
                        const int i_pq = lay.m_index(p, q);
                        const int i_pr = lay.m_index(p, r);
                        const int i_qr = lay.m_index(q, r);
                        g(i_pq, i_pr) = g(i_pr, i_pq) =
                            0.125 * (1.0 - z[p] * z[p]) * z[q] * z[r];
                        g(i_pq, i_qr) = g(i_qr, i_pq) =
                            0.125 * (1.0 - z[q] * z[q]) * z[p] * z[r];
                        g(i_pr, i_qr) = g(i_qr, i_pr) =
                            0.125 * (1.0 - z[r] * z[r]) * z[p] * z[q];
                    }
            const int ny = 3 * n;
            g.block(ny, 0, ny, dim()) = yrows;
            g.block(0, ny, dim(), ny) = yrows.transpose();
            g.block(ny, ny, ny, ny) = yrows.block(0, ny, ny, ny);
            return g;
        }
    };

    StructuredMetric metric_structure(EngineWorkspace& ws) const {
        const int n = p_.n();
        ws.resize(n);
        StructuredMetric sm{ParamLayout(n)};
        sm.z.assign(z_.begin(), z_.end());
        sm.xx.resize(n);
        sm.xa.setZero(n, 3);
        sm.xb.setZero(n, 3);

        for (int s = 0; s < n; ++s) {
            for (int a = 0; a < 3; ++a) {
                const cplx oa = kx0_[s][a] + kx1_[s][a];
                for (int a2 = a; a2 < 3; ++a2) {
                    const cplx oa2 = kx0_[s][a2] + kx1_[s][a2];
                    const cplx chi_dot = std::conj(chi_[s][a](0)) * chi_[s][a2](0) +
                                         std::conj(chi_[s][a](1)) * chi_[s][a2](1);
                    const double val = 2.0 * (chi_dot - std::conj(oa) * oa2).real();
                    sm.xx[s](a, a2) = val;
                    sm.xx[s](a2, a) = val;
                }
                const cplx zxb =
                    std::conj(chi_[s][a](0)) * a0_[s] - std::conj(chi_[s][a](1)) * a1_[s];
                sm.xa(s, a) = 0.5 * zxb.imag();
                sm.xb(s, a) = 0.5 * oa.imag();
            }
        }

        sm.yrows.setZero(3 * n, lay_.total());
        build_y_rows(sm, ws);
        return sm;
    }

    Eigen::MatrixXd tangent_metric() const {
        EngineWorkspace ws;
        return metric_structure(ws).dense();
    }

  private:
    GcsParams p_;
    ParamLayout lay_;
    std::vector<cplx> a0_, a1_, bp_;
    std::vector<double> rho0_, rho1_, z_;
    std::vector<Eigen::Matrix3d> rot_;
    std::vector<std::array<Eigen::Matrix3d, 3>> drot_;
    std::vector<std::array<cplx, 3>> kx0_, kx1_, kxp_, kxm_;
    std::vector<std::array<Eigen::Vector2cd, 3>> chi_;
    Eigen::MatrixXcd eh_;  // eh_(p,s) = exp(i M_ps / 2)

    void check_instance(const QskInstance& inst) const {
        if (inst.n != p_.n())
            throw std::invalid_argument("instance and params have different spin counts");
    }

    // weights of a rotated Pauli axis in the branch basis {+, -, z}
    static std::array<cplx, 3> row_weights(const Eigen::RowVector3d& v) {
        return {cplx(v(0), -v(1)), cplx(v(0), v(1)), cplx(v(2), 0.0)};
    }

    // single-spin brackets under a phase factor ph = e^{i theta}
    cplx f_plain(int s, cplx ph) const { return rho0_[s] * ph + rho1_[s] * std::conj(ph); }
    cplx f_zop(int s, cplx ph) const { return rho0_[s] * ph - rho1_[s] * std::conj(ph); }
    cplx f_ketmod(int s, int a, cplx ph) const {
        return kx0_[s][a] * ph + kx1_[s][a] * std::conj(ph);
    }
    cplx f_ketmod_z(int s, int a, cplx ph) const {
        return kx0_[s][a] * ph - kx1_[s][a] * std::conj(ph);
    }
    cplx ladder(int s, int al) const { return al == 0 ? bp_[s] : std::conj(bp_[s]); }
    cplx phase_pow(int src, int s, int al) const {
        return al == 0 ? eh_(src, s) : std::conj(eh_(src, s));
    }

    // <V^dag sigma_p^{al} sigma_q^{be} V> branch tensor (indices 0:+, 1:-, 2:z)
    void pair_tensor(int p, int q, std::array<std::array<cplx, 3>, 3>& t) const {
        const int n = p_.n();
        for (int al = 0; al < 2; ++al) {
            cplx prod_p = 1.0, prod_q = 1.0;
            for (int s = 0; s < n; ++s) {
                if (s == p || s == q) continue;
                prod_p *= f_plain(s, phase_pow(p, s, al));
                prod_q *= f_plain(s, phase_pow(q, s, al));
            }
            t[al][2] = ladder(p, al) * f_zop(q, phase_pow(p, q, al)) * prod_p;
            t[2][al] = ladder(q, al) * f_zop(p, phase_pow(q, p, al)) * prod_q;
            for (int be = 0; be < 2; ++be) {
                cplx prod = 1.0;
                for (int s = 0; s < n; ++s)
                    if (s != p && s != q)
                        prod *= f_plain(s, phase_pow(p, s, al) * phase_pow(q, s, be));
                t[al][be] = ladder(p, al) * ladder(q, be) * prod;
            }
        }
        t[2][2] = z_[p] * z_[q];
    }

    // <V^dag sigma_c^{al} V> branch values
    void single_tensor(int c, std::array<cplx, 3>& t1) const {
        const int n = p_.n();
        cplx prod = 1.0;
        for (int s = 0; s < n; ++s)
            if (s != c) prod *= f_plain(s, eh_(c, s));
        t1[0] = bp_[c] * prod;
        t1[1] = std::conj(t1[0]);
        t1[2] = z_[c];
    }

    // branch factor arrays for a pair branch with ops (al at p, be at q)
    void pair_branch_arrays(int p, int al, int q, int be, EngineWorkspace& ws) const {
        const int n = p_.n();
        for (int s = 0; s < n; ++s) {
            if (s == p || s == q) continue;
            cplx ph = 1.0;
            if (al != 2) ph *= phase_pow(p, s, al);
            if (be != 2) ph *= phase_pow(q, s, be);
            ws.tag[s] = 0;
            ws.ph[s] = ph;
            ws.f[s] = f_plain(s, ph);
            ws.fz[s] = f_zop(s, ph);
        }
        auto fill_site = [&](int site, int a_op, int other, int other_op) {
            cplx ph = 1.0;
            if (other_op != 2) ph = phase_pow(other, site, other_op);
            ws.ph[site] = ph;
            if (a_op == 2) {
                ws.tag[site] = 3;
                ws.f[site] = f_zop(site, ph);
                ws.fz[site] = f_plain(site, ph);  // z.z = I, phase kept
            } else {
                ws.tag[site] = (a_op == 0) ? 1 : 2;
                const cplx b = ladder(site, a_op);
                ws.f[site] = b;
                ws.fz[site] = (a_op == 0) ? -b : b;  // sigma^± z = -+ sigma^±
            }
        };
        fill_site(p, al, q, be);
        fill_site(q, be, p, al);
        build_prefix_suffix(ws);
    }

    // branch factor arrays for a single-site branch (ladder al at c)
    void single_branch_arrays(int c, int al, EngineWorkspace& ws) const {
        const int n = p_.n();
        for (int s = 0; s < n; ++s) {
            if (s == c) continue;
            const cplx ph = phase_pow(c, s, al);
            ws.tag[s] = 0;
            ws.ph[s] = ph;
            ws.f[s] = f_plain(s, ph);
            ws.fz[s] = f_zop(s, ph);
        }
        const cplx b = ladder(c, al);
        ws.tag[c] = (al == 0) ? 1 : 2;
        ws.ph[c] = 1.0;
        ws.f[c] = b;
        ws.fz[c] = (al == 0) ? -b : b;
        build_prefix_suffix(ws);
    }

    void build_prefix_suffix(EngineWorkspace& ws) const {
        const int n = p_.n();
        ws.pre[0] = 1.0;
        for (int s = 0; s < n; ++s) ws.pre[s + 1] = ws.pre[s] * ws.f[s];
        ws.suf[n] = 1.0;
        for (int s = n - 1; s >= 0; --s) ws.suf[s] = ws.f[s] * ws.suf[s + 1];
    }

    // bracket at site k with the ket replaced by the x-tangent modification
    cplx ketmod_bracket(int k, int a, const EngineWorkspace& ws) const {
        switch (ws.tag[k]) {
            case 0: return f_ketmod(k, a, ws.ph[k]);
            case 1: return kxp_[k][a];
            case 2: return kxm_[k][a];
            default: return f_ketmod_z(k, a, ws.ph[k]);
        }
    }

    void build_mid(EngineWorkspace& ws) const {
        const int n = p_.n();
        for (int pp = 0; pp < n; ++pp) {
            cplx acc = 1.0;
            for (int qq = pp + 1; qq < n; ++qq) {
                ws.mid(pp, qq) = acc;
                acc *= ws.f[qq];
            }
        }
    }

    // x- and M-gradient contributions of one prepared branch
    void accumulate_branch(cplx cbr, EngineWorkspace& ws, Eigen::VectorXd& grad) const {
        const int n = p_.n();
        for (int k = 0; k < n; ++k) {
            const cplx outer = cbr * ws.pre[k];
            for (int a = 0; a < 3; ++a) {
                const cplx mod = ketmod_bracket(k, a, ws);
                grad(lay_.x_index(k, a)) += 2.0 * (outer * mod * ws.suf[k + 1]).real();
            }
        }
        build_mid(ws);
        for (int pp = 0; pp < n; ++pp) {
            const cplx left = cbr * ws.pre[pp] * ws.fz[pp];
            if (left == 0.0) continue;
            for (int qq = pp + 1; qq < n; ++qq) {
                const cplx val = left * ws.mid(pp, qq) * ws.fz[qq] * ws.suf[qq + 1];
                // 2 Re[(-i/4) val] = Im(val) / 2
                grad(lay_.m_index(pp, qq)) += 0.5 * val.imag();
            }
        }
    }

    // phase-free branches (all operators sigma z): products of <sz> values
    void accumulate_x_zz_branch(cplx cbr, int p, int q, Eigen::VectorXd& grad) const {
        const int n = p_.n();
        for (int k = 0; k < n; ++k)
            for (int a = 0; a < 3; ++a) {
                cplx val;
                if (k == p)
                    val = f_ketmod_z(k, a, 1.0) * z_[q];
                else if (k == q)
                    val = z_[p] * f_ketmod_z(k, a, 1.0);
                else
                    val = z_[p] * z_[q] * (kx0_[k][a] + kx1_[k][a]);
                grad(lay_.x_index(k, a)) += 2.0 * (cbr * val).real();
            }
    }

    void accumulate_x_z_branch(cplx cbr, int c, Eigen::VectorXd& grad) const {
        const int n = p_.n();
        for (int k = 0; k < n; ++k)
            for (int a = 0; a < 3; ++a) {
                const cplx val = (k == c) ? f_ketmod_z(k, a, 1.0)
                                          : z_[c] * (kx0_[k][a] + kx1_[k][a]);
                grad(lay_.x_index(k, a)) += 2.0 * (cbr * val).real();
            }
    }

    void enumerate_branches(const std::vector<int>& sites,
                            const std::vector<detail::LocalOp>& ops, std::size_t i, cplx coef,
                            std::array<int, 4>& choice, cplx& total) const {
        if (coef == 0.0) return;
        if (i == sites.size()) {
            total += coef * branch_value(sites, choice, i);
            return;
        }
        for (int basis = 0; basis < 4; ++basis) {
            if (ops[i].c[basis] == 0.0) continue;
            choice[i] = basis;
            enumerate_branches(sites, ops, i + 1, coef * ops[i].c[basis], choice, total);
        }
    }

    cplx branch_value(const std::vector<int>& sites, const std::array<int, 4>& choice,
                      std::size_t k) const {
        const int n = p_.n();
        cplx val = 1.0;
        for (int s = 0; s < n; ++s) {
            cplx ph = 1.0;
            int op = 0;
            for (std::size_t i = 0; i < k; ++i) {
                if (sites[i] == s) {
                    op = choice[i];
                    continue;
                }
                if (choice[i] == 1)
                    ph *= eh_(sites[i], s);
                else if (choice[i] == 2)
                    ph *= std::conj(eh_(sites[i], s));
            }
            switch (op) {
                case 0: val *= f_plain(s, ph); break;
                case 1: val *= bp_[s]; break;
                case 2: val *= std::conj(bp_[s]); break;
                default: val *= f_zop(s, ph); break;
            }
            if (val == 0.0) return 0.0;
        }
        return val;
    }

    void build_y_rows(StructuredMetric& sm, EngineWorkspace& ws) const;
};

// Dense rows of the metric for the y parameters.  Tangent vectors:
//   |Y_{m,b}>  = U G_{m,b} V |phi>,        G = -i (J(y_m) e_b . sigma)_m
//   |X_{k,a}>  = U V |phi: chi_{k,a}>
//   |M_{p,q}>  = U V (-i/4) sz_p sz_q |phi>
// so every row entry is a branch sum over the {+,-,z} components of G^dag with
// one extra modification on the ket side, minus the rank-one overlap term.
inline void GcsEvaluator::build_y_rows(StructuredMetric& sm, EngineWorkspace& ws) const {
    const int n = p_.n();
    const ParamLayout& lay = lay_;

    // single-site branch tensors and <psi|X_{k,a}> overlaps
    std::vector<std::array<cplx, 3>> t1(n);
    Eigen::MatrixXcd ox(n, 3);
    for (int s = 0; s < n; ++s) {
        single_tensor(s, t1[s]);
        for (int a = 0; a < 3; ++a) ox(s, a) = kx0_[s][a] + kx1_[s][a];
    }

    // {+,-,z} weights of G (ket side) and G^dag (bra side) per (site, direction)
    std::vector<std::array<std::array<cplx, 3>, 3>> ug(n), ugd(n);
    Eigen::MatrixXcd sy(n, 3);  // <psi|Y_{m,b}>
    for (int m = 0; m < n; ++m) {
        const Eigen::Matrix3d jy = dexp_jacobian(p_.y.row(m).transpose());
        for (int b = 0; b < 3; ++b) {
            const Eigen::Vector3d v = jy.col(b);
            const auto g = detail::pmz_of_real(cplx(0, -1), v);
            const auto gd = detail::pmz_of_real(cplx(0, 1), v);
            ug[m][b] = {g.c[1], g.c[2], g.c[3]};
            ugd[m][b] = {gd.c[1], gd.c[2], gd.c[3]};
            sy(m, b) =
                ug[m][b][0] * t1[m][0] + ug[m][b][1] * t1[m][1] + ug[m][b][2] * t1[m][2];
        }
    }

    for (int m = 0; m < n; ++m) {
        // ladder components of G^dag at m: branch arrays + interior tables give
        // every x-column and M-column inner product in O(n^2) per (m, gamma)
        for (int gam = 0; gam < 2; ++gam) {
            single_branch_arrays(m, gam, ws);
            build_mid(ws);
            for (int k = 0; k < n; ++k) {
                const cplx outer = ws.pre[k];
                for (int a = 0; a < 3; ++a) {
                    const cplx val = outer * ketmod_bracket(k, a, ws) * ws.suf[k + 1];
                    for (int b = 0; b < 3; ++b) {
                        const cplx w = ugd[m][b][gam];
                        if (w == 0.0) continue;
                        sm.yrows(3 * m + b, lay.x_index(k, a)) += 2.0 * (w * val).real();
                    }
                }
            }
            for (int pp = 0; pp < n; ++pp) {
                const cplx left = ws.pre[pp] * ws.fz[pp];
                if (left == 0.0) continue;
                for (int qq = pp + 1; qq < n; ++qq) {
                    const cplx val =
                        left * ws.mid(pp, qq) * ws.fz[qq] * ws.suf[qq + 1] * cplx(0, -0.25);
                    for (int b = 0; b < 3; ++b) {
                        const cplx w = ugd[m][b][gam];
                        if (w == 0.0) continue;
                        sm.yrows(3 * m + b, lay.m_index(pp, qq)) += 2.0 * (w * val).real();
                    }
                }
            }
        }
        // sigma-z component of G^dag: phase-free closed forms
        for (int k = 0; k < n; ++k)
            for (int a = 0; a < 3; ++a) {
                const cplx val = (k == m) ? f_ketmod_z(m, a, 1.0) : z_[m] * ox(k, a);
                for (int b = 0; b < 3; ++b) {
                    const cplx w = ugd[m][b][2];
                    if (w == 0.0) continue;
                    sm.yrows(3 * m + b, lay.x_index(k, a)) += 2.0 * (w * val).real();
                }
            }
        for (int pp = 0; pp < n; ++pp)
            for (int qq = pp + 1; qq < n; ++qq) {
                double zprod;
                if (pp == m)
                    zprod = z_[qq];
                else if (qq == m)
                    zprod = z_[pp];
                else
                    zprod = z_[m] * z_[pp] * z_[qq];
                const cplx val = zprod * cplx(0, -0.25);
                for (int b = 0; b < 3; ++b) {
                    const cplx w = ugd[m][b][2];
                    if (w == 0.0) continue;
                    sm.yrows(3 * m + b, lay.m_index(pp, qq)) += 2.0 * (w * val).real();
                }
            }
        // rank-one overlap corrections for the x and M columns
        for (int b = 0; b < 3; ++b) {
            const cplx syc = std::conj(sy(m, b));
            for (int k = 0; k < n; ++k)
                for (int a = 0; a < 3; ++a)
                    sm.yrows(3 * m + b, lay.x_index(k, a)) -= 2.0 * (syc * ox(k, a)).real();
            for (int pp = 0; pp < n; ++pp)
                for (int qq = pp + 1; qq < n; ++qq) {
                    const cplx sM = cplx(0, -0.25) * z_[pp] * z_[qq];
                    sm.yrows(3 * m + b, lay.m_index(pp, qq)) -= 2.0 * (syc * sM).real();
                }
        }
    }

    // y-y block
    std::array<std::array<cplx, 3>, 3> t2;
    for (int m = 0; m < n; ++m) {
        // same site: G^dag G merged with the single-site operator algebra
        std::array<std::array<cplx, 3>, 3> table;
        table[0][0] = 0.0;
        table[0][1] = 0.5 * (1.0 + z_[m]);
        table[0][2] = -t1[m][0];
        table[1][0] = 0.5 * (1.0 - z_[m]);
        table[1][1] = 0.0;
        table[1][2] = t1[m][1];
        table[2][0] = t1[m][0];
        table[2][1] = -t1[m][1];
        table[2][2] = 1.0;
        for (int b = 0; b < 3; ++b)
            for (int b2 = 0; b2 < 3; ++b2) {
                cplx tv = 0.0;
                for (int g1 = 0; g1 < 3; ++g1)
                    for (int g2 = 0; g2 < 3; ++g2)
                        tv += ugd[m][b][g1] * ug[m][b2][g2] * table[g1][g2];
                sm.yrows(3 * m + b, lay.y_index(m, b2)) =
                    2.0 * (tv - std::conj(sy(m, b)) * sy(m, b2)).real();
            }
        // distinct sites: the pair tensor already covers two-ladder strings
        for (int m2 = m + 1; m2 < n; ++m2) {
            pair_tensor(m, m2, t2);
            for (int b = 0; b < 3; ++b)
                for (int b2 = 0; b2 < 3; ++b2) {
                    cplx tv = 0.0;
                    for (int g1 = 0; g1 < 3; ++g1)
                        for (int g2 = 0; g2 < 3; ++g2)
                            tv += ugd[m][b][g1] * ug[m2][b2][g2] * t2[g1][g2];
                    const double val = 2.0 * (tv - std::conj(sy(m, b)) * sy(m2, b2)).real();
                    sm.yrows(3 * m + b, lay.y_index(m2, b2)) = val;
                    sm.yrows(3 * m2 + b2, lay.y_index(m, b)) = val;
                }
        }
    }
}

// ---------------------------------------------------------------------------
// free-function contracts
// ---------------------------------------------------------------------------

inline cplx cs_product_expectation(const CsParams& params, const PauliString& op) {
    const int n = params.n();
    validate_pauli_string(op, n, n);
    cplx total = 1.0;
    for (const auto& factor : op) {
        const auto amp = spin_amplitudes(params.x.row(factor.site).transpose());
        const cplx bp = std::conj(amp.c0) * amp.c1;
        const double z = std::norm(amp.c0) - std::norm(amp.c1);
        switch (factor.axis) {
            case PauliAxis::X: total *= 2.0 * bp.real(); break;
            case PauliAxis::Y: total *= 2.0 * bp.imag(); break;
            case PauliAxis::Z: total *= z; break;
            case PauliAxis::Plus: total *= bp; break;
            case PauliAxis::Minus: total *= std::conj(bp); break;
        }
    }
    return total;
}

inline cplx gcs_pauli_expectation(const GcsParams& params, const PauliString& op) {
    return GcsEvaluator(params).pauli_expectation(op);
}

inline double energy(const GcsParams& params, const QskInstance& inst) {
    return GcsEvaluator(params).energy(inst);
}

inline double energy(const CsParams& params, const QskInstance& inst) {
    return GcsEvaluator(GcsParams::from_cs(params)).energy(inst);
}

inline Eigen::VectorXd energy_gradient(const GcsParams& params, const QskInstance& inst) {
    Eigen::VectorXd grad;
    GcsEvaluator(params).energy_and_gradient(inst, grad);
    return grad;
}

inline Eigen::MatrixXd tangent_metric(const GcsParams& params) {
    return GcsEvaluator(params).tangent_metric();
}

}  // namespace qsk
