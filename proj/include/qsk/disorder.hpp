#pragma once

// Disorder realizations of the quantum Sherrington-Kirkpatrick (QSK) model
//
//     H = -sum_{p<q} J_pq sz_p sz_q - g sum_n sx_n - sum_n h_n sz_n
//
// with couplings J_pq ~ N(0, j_scale^2/n) and fields h_n ~ N(0, h_scale^2),
// plus GOE-like symmetric Gaussian matrices and their level-spacing statistic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qsk/rng.hpp"

namespace qsk {

struct QskInstance {
    int n = 0;
    double g = 0.0;        // transverse field
    double j_scale = 1.0;  // coupling scale (variance j_scale^2/n per pair)
    double h_scale = 0.0;  // longitudinal field scale (variance h_scale^2)
    std::uint64_t seed = 0;
    Eigen::MatrixXd couplings;            // symmetric, zero diagonal
    Eigen::VectorXd longitudinal_fields;  // length n
};

// Couplings are drawn once per unordered pair (upper triangle, row-major),
// then the fields; the draw order is part of the reproducibility contract.
inline QskInstance sample_qsk_instance(int n, double j_scale, double h_scale, double g,
                                       std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_qsk_instance: n must be >= 1");
    if (j_scale < 0 || h_scale < 0)
        throw std::invalid_argument("sample_qsk_instance: scales must be >= 0");

    QskInstance inst;
    inst.n = n;
    inst.g = g;
    inst.j_scale = j_scale;
    inst.h_scale = h_scale;
    inst.seed = seed;
    inst.couplings = Eigen::MatrixXd::Zero(n, n);
    inst.longitudinal_fields = Eigen::VectorXd::Zero(n);

    auto rng = make_stream(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double j_sigma = j_scale / std::sqrt(static_cast<double>(n));
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) {
            const double j = j_sigma * normal(rng);
            inst.couplings(p, q) = j;
            inst.couplings(q, p) = j;
        }
    for (int p = 0; p < n; ++p) inst.longitudinal_fields(p) = h_scale * normal(rng);
    return inst;
}

struct SymmetricGaussianMatrix {
    int n = 0;
    double offdiag_variance = 0.0;
    Eigen::MatrixXd entries;  // symmetric, zero diagonal
};

inline SymmetricGaussianMatrix sample_symmetric_gaussian(int n, double offdiag_variance,
                                                         std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("sample_symmetric_gaussian: n must be >= 2");
    if (offdiag_variance <= 0)
        throw std::invalid_argument("sample_symmetric_gaussian: variance must be > 0");

    SymmetricGaussianMatrix m;
    m.n = n;
    m.offdiag_variance = offdiag_variance;
    m.entries = Eigen::MatrixXd::Zero(n, n);

    auto rng = make_stream(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(offdiag_variance));
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) {
            const double v = normal(rng);
            m.entries(p, q) = v;
            m.entries(q, p) = v;
        }
    return m;
}

// Mean ratio of consecutive level spacings, r_k = min(s_k, s_{k+1}) / max(...).
// Gaps below a spectral-scale tolerance are treated as exact zeros (degenerate
// levels); the count of such gaps is reported through degenerate_gaps.
inline double mean_level_spacing_ratio(const Eigen::MatrixXd& matrix,
                                       int* degenerate_gaps = nullptr) {
    const int n = static_cast<int>(matrix.rows());
    if (n < 3 || matrix.cols() != n)
        throw std::invalid_argument("mean_level_spacing_ratio: need a square matrix, n >= 3");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = solver.eigenvalues();  // ascending
    const double scale = std::max({std::abs(ev(0)), std::abs(ev(n - 1)), 1.0});
    const double tol = 1e-12 * scale;

    std::vector<double> gaps(n - 1);
    int degenerate = 0;
    for (int k = 0; k + 1 < n; ++k) {
        double s = ev(k + 1) - ev(k);
        if (s <= tol) {
            s = 0.0;
            ++degenerate;
        }
        gaps[k] = s;
    }
    double sum = 0.0;
    for (int k = 0; k + 2 < n; ++k) {
        const double lo = std::min(gaps[k], gaps[k + 1]);
        const double hi = std::max(gaps[k], gaps[k + 1]);
        sum += (hi > 0.0) ? lo / hi : 0.0;  // 0/0 (exact double degeneracy) counts as 0
    }
    if (degenerate_gaps) *degenerate_gaps = degenerate;
    return sum / static_cast<double>(n - 2);
}

inline double mean_level_spacing_ratio(const SymmetricGaussianMatrix& m,
                                       int* degenerate_gaps = nullptr) {
    return mean_level_spacing_ratio(m.entries, degenerate_gaps);
}

// --- serialization -----------------------------------------------------------
// Instances round-trip through JSON with the sampled values stored explicitly
// (row-major lower triangle of the couplings), so runs replay without
// re-sampling even if the RNG implementation changes.

inline nlohmann::json to_json(const QskInstance& inst) {
    std::vector<double> tri;
    tri.reserve(static_cast<std::size_t>(inst.n) * (inst.n - 1) / 2);
    for (int p = 1; p < inst.n; ++p)
        for (int q = 0; q < p; ++q) tri.push_back(inst.couplings(p, q));
    std::vector<double> fields(inst.longitudinal_fields.data(),
                               inst.longitudinal_fields.data() + inst.n);
    return nlohmann::json{{"n", inst.n},          {"g", inst.g},
                          {"j_scale", inst.j_scale}, {"h_scale", inst.h_scale},
                          {"seed", inst.seed},    {"couplings", tri},
                          {"fields", fields}};
}

inline QskInstance instance_from_json(const nlohmann::json& j) {
    QskInstance inst;
    inst.n = j.at("n").get<int>();
    if (inst.n < 1) throw std::invalid_argument("instance_from_json: n must be >= 1");
    inst.g = j.at("g").get<double>();
    inst.j_scale = j.at("j_scale").get<double>();
    inst.h_scale = j.at("h_scale").get<double>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    const auto tri = j.at("couplings").get<std::vector<double>>();
    const auto fields = j.at("fields").get<std::vector<double>>();
    const std::size_t expected = static_cast<std::size_t>(inst.n) * (inst.n - 1) / 2;
    if (tri.size() != expected || fields.size() != static_cast<std::size_t>(inst.n))
        throw std::invalid_argument("instance_from_json: inconsistent array sizes");
    inst.couplings = Eigen::MatrixXd::Zero(inst.n, inst.n);
    std::size_t k = 0;
    for (int p = 1; p < inst.n; ++p)
        for (int q = 0; q < p; ++q) {
            inst.couplings(p, q) = tri[k];
            inst.couplings(q, p) = tri[k];
            ++k;
        }
    inst.longitudinal_fields =
        Eigen::Map<const Eigen::VectorXd>(fields.data(), static_cast<Eigen::Index>(inst.n));
    return inst;
}

}  // namespace qsk
