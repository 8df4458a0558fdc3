#pragma once
// Renyi-2 entanglement entropy of GCS states via the classical spin-1
// sampling reduction: after stripping local rotations, the purity of a
// subsystem A is the expectation of a product of per-site damping factors
// over independent three-valued variables drawn on A.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "qsk/ansatz.hpp"
#include "qsk/disorder.hpp"
#include "qsk/rng.hpp"

namespace qsk {

struct EntropyEstimate {
    double s2 = 0.0;           // bits
    double purity_mean = 1.0;  // in (0, 1]
    double purity_stderr = 0.0;
    std::int64_t samples = 0;  // Monte Carlo draws, or enumerated terms
    int subsystem_size = 0;    // as requested by the caller
    bool exhaustive = false;   // true when all 3^L configurations were summed
    bool reliable = true;      // false when purity_mean <= 3 * purity_stderr
};

// Per-site distribution of the classical spin-1 variable on subsystem sites:
// P(0) = |c0|^4 + |c1|^4 and P(+1) = P(-1) = |c0|^2 |c1|^2.
struct Spin1Distribution {
    double p_zero = 1.0;
    double p_unit = 0.0;  // each of +1 and -1
};

inline Spin1Distribution spin1_distribution(const SingleSpinAmplitudes& amp) {
    const double r0 = std::norm(amp.c0);
    const double r1 = std::norm(amp.c1);
    return {r0 * r0 + r1 * r1, r0 * r1};
}

enum class EntropyMethod { Auto, Exhaustive, MonteCarlo };

namespace detail {

constexpr std::int64_t kExhaustiveCap = 19683;  // 3^9 configurations

inline std::int64_t pow3(int l) {
    std::int64_t v = 1;
    for (int i = 0; i < l; ++i) v *= 3;
    return v;
}

// Damping product for one configuration column: F = prod_n [1 - 4 p_n sin^2(t_n / 2)]
// where t_n = sum_m M_nm j_m runs over the complement sites n.
inline double damping_product(const Eigen::VectorXd& t, const Eigen::VectorXd& p4) {
    double f = 1.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double s = std::sin(0.5 * t(i));
        f *= 1.0 - p4(i) * s * s;
    }
    return f;
}

}  // namespace detail

// Purity and Renyi-2 entropy of the subsystem `a_sites`. Local rotations
// leave the entropy invariant, so only the base amplitudes and the entangler
// phases enter; when the subsystem covers more than half the system its
// complement is measured instead (same entropy for a pure state). All 3^L
// configurations are summed exactly when feasible, otherwise `samples`
// configurations are drawn from the product distribution and the standard
// error of the mean damping factor is reported.
inline EntropyEstimate renyi2_estimate(const GcsParams& params,
                                       const std::vector<int>& a_sites,
                                       std::int64_t samples, std::uint64_t seed,
                                       EntropyMethod method = EntropyMethod::Auto) {
    validate_params(params);
    if (samples < 1) throw std::invalid_argument("renyi2_estimate: samples must be >= 1");
    const int n = params.n();
    std::vector<char> in_a(static_cast<std::size_t>(n), 0);
    for (int s : a_sites) {
        if (s < 0 || s >= n)
            throw std::invalid_argument("renyi2_estimate: subsystem site out of range");
        if (in_a[static_cast<std::size_t>(s)])
            throw std::invalid_argument("renyi2_estimate: duplicate subsystem site");
        in_a[static_cast<std::size_t>(s)] = 1;
    }

    EntropyEstimate out;
    out.subsystem_size = static_cast<int>(a_sites.size());
    if (a_sites.empty() || static_cast<int>(a_sites.size()) == n) {
        out.exhaustive = true;
        out.samples = 1;
        return out;  // trivial cut: purity 1, entropy exactly 0
    }

    // measure the smaller side of the cut
    if (2 * static_cast<int>(a_sites.size()) > n)
        for (auto& flag : in_a) flag = 1 - flag;

    std::vector<int> sub, comp;
    for (int s = 0; s < n; ++s) (in_a[static_cast<std::size_t>(s)] ? sub : comp).push_back(s);
    const int l = static_cast<int>(sub.size());
    const int lc = static_cast<int>(comp.size());

    // per-site data: spin-1 weights on A, damping amplitudes 4*p on the
    // complement, and the phase matrix rows coupling the two sides
    std::vector<Spin1Distribution> dist(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i)
        dist[static_cast<std::size_t>(i)] =
            spin1_distribution(spin_amplitudes(params.x.row(sub[static_cast<std::size_t>(i)]).transpose()));
    Eigen::VectorXd p4(lc);
    for (int i = 0; i < lc; ++i) {
        const auto amp =
            spin_amplitudes(params.x.row(comp[static_cast<std::size_t>(i)]).transpose());
        p4(i) = 4.0 * std::norm(amp.c0) * std::norm(amp.c1);
    }
    Eigen::MatrixXd phases(lc, l);
    for (int i = 0; i < lc; ++i)
        for (int j = 0; j < l; ++j)
            phases(i, j) = params.m(comp[static_cast<std::size_t>(i)],
                                    sub[static_cast<std::size_t>(j)]);

    const bool exhaustive =
        method == EntropyMethod::Exhaustive ||
        (method == EntropyMethod::Auto && detail::pow3(l) <= detail::kExhaustiveCap);
    if (method == EntropyMethod::Exhaustive && detail::pow3(l) > detail::kExhaustiveCap)
        throw std::invalid_argument(
            "renyi2_estimate: subsystem too large for exhaustive enumeration");

    double purity = 0.0;
    double stderr_out = 0.0;
    std::int64_t count = 0;

    if (exhaustive) {
        const std::int64_t terms = detail::pow3(l);
        Eigen::VectorXd j(l);
        for (std::int64_t idx = 0; idx < terms; ++idx) {
            double weight = 1.0;
            std::int64_t rest = idx;
            for (int m = 0; m < l; ++m) {
                const int digit = static_cast<int>(rest % 3) - 1;  // -1, 0, +1
                rest /= 3;
                j(m) = digit;
                weight *= digit == 0 ? dist[static_cast<std::size_t>(m)].p_zero
                                     : dist[static_cast<std::size_t>(m)].p_unit;
            }
            if (weight == 0.0) continue;
            purity += weight * detail::damping_product(phases * j, p4);
        }
        count = terms;
    } else {
        auto rng = make_stream(derive_seed(seed, 0x454e5452ULL));  // entropy stream
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int batch = static_cast<int>(std::min<std::int64_t>(samples, 256));
        Eigen::MatrixXd j(l, batch);
        double mean = 0.0, m2 = 0.0;  // online mean and scaled variance
        std::int64_t done = 0;
        while (done < samples) {
            const int b = static_cast<int>(std::min<std::int64_t>(batch, samples - done));
            for (int c = 0; c < b; ++c)
                for (int m = 0; m < l; ++m) {
                    const double u = unit(rng);
                    const auto& d = dist[static_cast<std::size_t>(m)];
                    j(m, c) = u < d.p_zero ? 0.0 : (u < d.p_zero + d.p_unit ? 1.0 : -1.0);
                }
            const Eigen::MatrixXd t = phases * j.leftCols(b);
            for (int c = 0; c < b; ++c) {
                const double f = detail::damping_product(t.col(c), p4);
                ++done;
                const double delta = f - mean;
                mean += delta / static_cast<double>(done);
                m2 += delta * (f - mean);
            }
        }
        purity = mean;
        if (samples > 1)
            stderr_out = std::sqrt(m2 / static_cast<double>(samples - 1) /
                                   static_cast<double>(samples));
        count = samples;
    }

    out.purity_mean = std::min(purity, 1.0);
    out.purity_stderr = stderr_out;
    out.samples = count;
    out.exhaustive = exhaustive;
    out.reliable = out.purity_mean > 3.0 * stderr_out;
    out.s2 = -std::log2(std::max(out.purity_mean, 1e-300));
    return out;
}

// Weighted graph state: every spin rotated to |+> and a symmetric Gaussian
// phase matrix with off-diagonal variance 1/n; the base amplitudes then give
// P(0) = 1/2 and P(+1) = P(-1) = 1/4 on every site.
inline GcsParams wgs_sample(int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("wgs_sample: n must be >= 2");
    GcsParams p = GcsParams::zero(n);
    for (int s = 0; s < n; ++s) p.x(s, 1) = M_PI / 4.0;
    p.m = sample_symmetric_gaussian(n, 1.0 / n, derive_seed(seed, 0x57475331ULL)).entries;
    return p;
}

// Volume-law slope of the ensemble-averaged Renyi-2 entropy of weighted
// graph states: S2(L) = C * L with C = -log2[(1 + exp(-1/4)) / 2].
inline double analytic_wgs_coefficient() {
    return -std::log2(0.5 * (1.0 + std::exp(-0.25)));
}

// Second moment of the accumulated phase X_n = (1/2) sum_m M_nm j_m seen by a
// complement site n when every subsystem site contributes variance 1/2:
// <X_n^2> = (1/8) sum_m M_nm^2. Diagnostic for the Gaussian-phase argument
// behind the closed-form volume-law coefficient.
inline double phase_second_moment(const GcsParams& params, int site) {
    if (site < 0 || site >= params.n())
        throw std::invalid_argument("phase_second_moment: site out of range");
    return params.m.row(site).squaredNorm() / 8.0;
}

}  // namespace qsk
