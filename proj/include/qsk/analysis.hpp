#pragma once
// Physics observables and ensemble statistics: spin-glass susceptibility,
// transverse magnetization, the entanglement-profile fit, disorder averages,
// and the averaged energy-error density.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qsk {

struct EnsembleStatistic {
    double mean = 0.0;
    double stderr_mean = 0.0;  // sample standard deviation / sqrt(count)
    std::int64_t count = 0;
    bool low_count = true;  // fewer than two values: the error bar is undefined
};

// Streaming mean/variance accumulator with associative merging, so partial
// reductions from independent workers combine deterministically.
class EnsembleAccumulator {
  public:
    void add(double value) {
        ++count_;
        const double delta = value - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (value - mean_);
    }

    void merge(const EnsembleAccumulator& other) {
        if (other.count_ == 0) return;
        if (count_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(count_);
        const double nb = static_cast<double>(other.count_);
        const double delta = other.mean_ - mean_;
        mean_ += delta * nb / (na + nb);
        m2_ += other.m2_ + delta * delta * na * nb / (na + nb);
        count_ += other.count_;
    }

    std::int64_t count() const { return count_; }

    EnsembleStatistic statistic() const {
        if (count_ == 0) throw std::invalid_argument("ensemble statistic of no values");
        EnsembleStatistic s;
        s.mean = mean_;
        s.count = count_;
        s.low_count = count_ < 2;
        if (count_ > 1)
            s.stderr_mean = std::sqrt(m2_ / static_cast<double>(count_ - 1) /
                                      static_cast<double>(count_));
        return s;
    }

  private:
    std::int64_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline EnsembleStatistic ensemble_statistics(const std::vector<double>& values) {
    EnsembleAccumulator acc;
    for (double v : values) acc.add(v);
    return acc.statistic();
}

// chi_sg = N^{-1} sum_{n,m} <sz_n sz_m>^2 for one realization, the diagonal
// included, so a frozen configuration gives N and a fully transverse product
// state gives 1.
inline double spin_glass_susceptibility(const Eigen::MatrixXd& zz_table) {
    const Eigen::Index n = zz_table.rows();
    if (n < 1 || zz_table.cols() != n)
        throw std::invalid_argument("spin_glass_susceptibility: need a square table");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(zz_table(i, i) - 1.0) > 1e-9)
            throw std::invalid_argument(
                "spin_glass_susceptibility: diagonal entries must equal 1");
    return zz_table.array().square().sum() / static_cast<double>(n);
}

inline double transverse_magnetization(const Eigen::VectorXd& sx_expectations) {
    return sx_expectations.sum();
}

// Mean consecutive level-spacing ratio <r> of a real symmetric matrix: with
// sorted eigenvalues and gaps s_i, each interior level contributes
// min(s_i, s_{i+1}) / max(s_i, s_{i+1}).  GOE-class spectra give ~0.5307,
// uncorrelated (Poisson) spectra ~0.3863.  A pair of exactly equal gaps
// contributes 1 so that rigid (equally spaced) spectra are well defined.
inline double level_spacing_ratio(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    if (n < 3 || m.cols() != n)
        throw std::invalid_argument("level_spacing_ratio: need a square matrix, n >= 3");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("level_spacing_ratio: matrix must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
    double sum = 0.0;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double lo = std::min(ev[i] - ev[i - 1], ev[i + 1] - ev[i]);
        const double hi = std::max(ev[i] - ev[i - 1], ev[i + 1] - ev[i]);
        sum += (hi > 0.0) ? lo / hi : 1.0;
    }
    return sum / static_cast<double>(n - 2);
}

struct EntanglementProfileFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;  // a * b / n
    double residual = 0.0;  // root-mean-square misfit
    int n = 0;
    bool converged = false;
    bool degenerate = false;  // all-zero input: a = 0 and b carries no meaning
};

// Least-squares fit of S2(L) = a * ln(1 + (b/pi) * sin(pi L / n)) by damped
// Gauss-Newton. The curve is benign in (a, b) but the damping keeps early
// steps from overshooting the b > -pi/sin constraint.
inline EntanglementProfileFit fit_entropy_profile(
    const std::vector<std::pair<int, double>>& points, int n) {
    if (n < 2) throw std::invalid_argument("fit_entropy_profile: n must be >= 2");
    std::vector<int> seen;
    for (const auto& [l, s2] : points) {
        if (l < 1 || l > n - 1)
            throw std::invalid_argument("fit_entropy_profile: L out of range");
        for (int other : seen)
            if (other == l)
                throw std::invalid_argument("fit_entropy_profile: duplicate L value");
        seen.push_back(l);
        (void)s2;
    }
    if (points.size() < 3)
        throw std::invalid_argument("fit_entropy_profile: need at least 3 points");

    const int k = static_cast<int>(points.size());
    Eigen::VectorXd s(k), y(k);
    for (int i = 0; i < k; ++i) {
        s(i) = std::sin(M_PI * points[static_cast<std::size_t>(i)].first / n);
        y(i) = points[static_cast<std::size_t>(i)].second;
    }

    EntanglementProfileFit fit;
    fit.n = n;
    if (y.cwiseAbs().maxCoeff() < 1e-14) {
        fit.degenerate = true;
        fit.converged = true;
        fit.b = std::numeric_limits<double>::quiet_NaN();
        return fit;
    }

    // start from b = pi and the amplitude implied by the smallest-L point
    int i_min = 0;
    for (int i = 1; i < k; ++i)
        if (points[static_cast<std::size_t>(i)].first <
            points[static_cast<std::size_t>(i_min)].first)
            i_min = i;
    double b = M_PI;
    double a = y(i_min) / std::log(1.0 + s(i_min));

    const auto cost = [&](double aa, double bb, Eigen::VectorXd& r) -> double {
        for (int i = 0; i < k; ++i) {
            const double arg = 1.0 + bb / M_PI * s(i);
            if (arg <= 1e-12) return std::numeric_limits<double>::infinity();
            r(i) = aa * std::log(arg) - y(i);
        }
        return r.squaredNorm();
    };

    Eigen::VectorXd r(k), r_try(k);
    double c2 = cost(a, b, r);
    double damping = 1e-3;
    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
        Eigen::MatrixXd jac(k, 2);
        for (int i = 0; i < k; ++i) {
            const double arg = 1.0 + b / M_PI * s(i);
            jac(i, 0) = std::log(arg);
            jac(i, 1) = a * s(i) / M_PI / arg;
        }
        Eigen::Matrix2d h = jac.transpose() * jac;
        const Eigen::Vector2d g = jac.transpose() * r;
        h.diagonal() *= 1.0 + damping;
        const Eigen::Vector2d step = h.ldlt().solve(-g);
        if (!step.allFinite()) break;
        const double c2_try = cost(a + step(0), b + step(1), r_try);
        if (c2_try < c2) {
            a += step(0);
            b += step(1);
            r = r_try;
            const bool small_step =
                step.norm() < 1e-12 * (1.0 + std::abs(a) + std::abs(b));
            const bool small_gain = c2 - c2_try < 1e-15 * (1.0 + c2);
            c2 = c2_try;
            damping = std::max(damping * 0.2, 1e-12);
            if (small_step || small_gain) {
                converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if (damping > 1e12) break;
        }
    }

    fit.a = a;
    fit.b = b;
    fit.c = a * b / n;
    fit.converged = converged;
    fit.residual = converged ? std::sqrt(c2 / k) : std::numeric_limits<double>::infinity();
    return fit;
}

// Variational excess energy of one realization, validated against the
// variational principle; the published error measure divides the ensemble
// means, not the per-realization ratios.
struct EnergyErrorSample {
    double delta_e = 0.0;  // E_variational - E_exact >= 0
    double extent = 0.0;   // spectral width W > 0
};

inline EnergyErrorSample energy_error_sample(double variational_energy,
                                             double exact_energy, double extent,
                                             double tolerance = 1e-8) {
    if (!(extent > 0.0)) throw std::invalid_argument("energy_error_sample: extent <= 0");
    const double delta = variational_energy - exact_energy;
    if (delta < -tolerance)
        throw std::invalid_argument(
            "energy_error_sample: variational energy below the exact ground state");
    return {std::max(delta, 0.0), extent};
}

struct EnergyErrorDensity {
    double epsilon = 0.0;  // mean(delta E) / mean(W)
    double stderr_epsilon = 0.0;
    std::int64_t count = 0;
};

inline EnergyErrorDensity energy_error_density(
    const std::vector<EnergyErrorSample>& samples) {
    if (samples.empty())
        throw std::invalid_argument("energy_error_density: no samples");
    const double kd = static_cast<double>(samples.size());
    double mean_d = 0.0, mean_w = 0.0;
    for (const auto& s : samples) {
        mean_d += s.delta_e / kd;
        mean_w += s.extent / kd;
    }
    EnergyErrorDensity out;
    out.count = static_cast<std::int64_t>(samples.size());
    out.epsilon = mean_d / mean_w;
    if (samples.size() > 1) {
        double var_d = 0.0, var_w = 0.0, cov = 0.0;
        for (const auto& s : samples) {
            var_d += (s.delta_e - mean_d) * (s.delta_e - mean_d) / (kd - 1.0);
            var_w += (s.extent - mean_w) * (s.extent - mean_w) / (kd - 1.0);
            cov += (s.delta_e - mean_d) * (s.extent - mean_w) / (kd - 1.0);
        }
        // first-order propagation of the ratio of means
        const double var_ratio =
            (var_d / (mean_w * mean_w) +
             var_w * mean_d * mean_d / std::pow(mean_w, 4) -
             2.0 * cov * mean_d / std::pow(mean_w, 3)) /
            kd;
        out.stderr_epsilon = std::sqrt(std::max(0.0, var_ratio));
    }
    return out;
}

}  // namespace qsk
