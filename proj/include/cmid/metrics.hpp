#pragma once

// Transfer entries C (sI - A)^{-1} E, H-infinity norms on the imaginary axis, error ratios,
// coordinate-frame alignment and Bode tables.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "cmid/kron.hpp"
#include "cmid/linalg.hpp"

namespace cmid {

struct LinearMapTransfer {
    MatrixXd C;  ///< p x n
    MatrixXd A;  ///< n x n
    MatrixXd E;  ///< n x w (B or F20)
    Index row = 0;
    Index col = 0;

    void validate() const {
        if (A.rows() != A.cols() || C.cols() != A.rows() || E.rows() != A.rows())
            throw DimensionError("LinearMapTransfer: inconsistent shapes");
        if (row < 0 || row >= C.rows() || col < 0 || col >= E.cols()) throw DimensionError("LinearMapTransfer: entry out of range");
    }
};

inline cplx transfer_entry(const LinearMapTransfer& tm, double omega) {
    tm.validate();
    const Index n = tm.A.rows();
    const MatrixXcd res = cplx(0.0, omega) * MatrixXcd::Identity(n, n) - tm.A.cast<cplx>();
    Eigen::PartialPivLU<MatrixXcd> lu(res);
    const double det = std::abs(lu.determinant());
    if (!(det > 1e-300) || !std::isfinite(det)) throw NumericalError("transfer_entry: jw is an eigenvalue of A");
    const VectorXcd col = lu.solve(tm.E.col(tm.col).cast<cplx>());
    return (tm.C.row(tm.row).cast<cplx>() * col)(0);
}

struct HinfOptions {
    double omega_min = 1e-3;
    double omega_max = 1e3;
    int grid_points = 2000;
    double rel_tol = 1e-6;
};

/// sup over omega >= 0 of |g(omega)| by a log grid (plus omega = 0) and golden-section refinement.
inline double hinf_of(const std::function<double(double)>& mag, const HinfOptions& opt = {}) {
    std::vector<double> grid{0.0};
    const double lmin = std::log10(opt.omega_min), lmax = std::log10(opt.omega_max);
    for (int k = 0; k < opt.grid_points; ++k)
        grid.push_back(std::pow(10.0, lmin + (lmax - lmin) * k / std::max(1, opt.grid_points - 1)));
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = mag(grid[k]);
        if (v > best_val) {
            best_val = v;
            best = k;
        }
    }
    double lo = grid[best == 0 ? 0 : best - 1];
    double hi = grid[std::min(best + 1, grid.size() - 1)];
    if (hi <= lo) return best_val;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = mag(x1), f2 = mag(x2);
    for (int it = 0; it < 200 && (hi - lo) > opt.rel_tol * std::max(hi, 1e-12); ++it) {
        if (f1 >= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = mag(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = mag(x2);
        }
    }
    return std::max({best_val, f1, f2});
}

inline void require_stable(const MatrixXd& a, const char* who) {
    if (a.size() > 0 && !(spectral_abscissa(a) < 0.0)) throw NumericalError(std::string(who) + ": A is not stable");
}

inline double hinf_norm(const LinearMapTransfer& tm, const HinfOptions& opt = {}) {
    tm.validate();
    require_stable(tm.A, "hinf_norm");
    return hinf_of([&](double w) { return std::abs(transfer_entry(tm, w)); }, opt);
}

/// H-infinity norm of the difference of two entries.
inline double hinf_norm(const LinearMapTransfer& a, const LinearMapTransfer& b, const HinfOptions& opt = {}) {
    a.validate();
    b.validate();
    require_stable(a.A, "hinf_norm");
    require_stable(b.A, "hinf_norm");
    return hinf_of([&](double w) { return std::abs(transfer_entry(a, w) - transfer_entry(b, w)); }, opt);
}

/// ||G - G_est||_inf / ||G||_inf.
inline double error_ratio(const LinearMapTransfer& truth, const LinearMapTransfer& est, const HinfOptions& opt = {}) {
    if (truth.row != est.row || truth.col != est.col) throw DimensionError("error_ratio: entry selectors differ");
    const double den = hinf_norm(truth, opt);
    if (!(den > 0.0)) throw NumericalError("error_ratio: reference entry is identically zero");
    return hinf_norm(truth, est, opt) / den;
}

struct AlignedModel {
    MatrixXd A, B, C, F20;
    MatrixXd T;  ///< maps estimated coordinates to true ones: x = T x_hat
    double T_condition = 1.0;
};

inline MatrixXd observability_matrix(const MatrixXd& c, const MatrixXd& a, Index blocks) {
    std::vector<MatrixXd> rows{c};
    for (Index k = 1; k < blocks; ++k) rows.push_back(rows.back() * a);
    return vcat(rows);
}

/// Transports a model to the coordinates of (C, A): O(C, A) T = O(C_hat, A_hat) in least squares,
/// then A' = T A_hat T^{-1}, B' = T B_hat, C' = C_hat T^{-1}, F' = T F_hat M_2 (T^{-1} (x) T^{-1}) N_2.
inline AlignedModel cf_align(const MatrixXd& c_true, const MatrixXd& a_true, const MatrixXd& c_est, const MatrixXd& a_est,
                             const MatrixXd& b_est, const MatrixXd& f20_est, double cond_max = 1e8) {
    const Index n = a_true.rows();
    if (a_est.rows() != n) throw DimensionError("cf_align: model orders differ (" + std::to_string(n) + " vs " + std::to_string(a_est.rows()) + ")");
    if (c_true.rows() != c_est.rows()) throw DimensionError("cf_align: output counts differ");
    const MatrixXd o_true = observability_matrix(c_true, a_true, n);
    const MatrixXd o_est = observability_matrix(c_est, a_est, n);
    AlignedModel out;
    out.T = o_true.completeOrthogonalDecomposition().solve(o_est);
    const VectorXd s = singular_values(out.T);
    out.T_condition = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
    if (!(out.T_condition <= cond_max)) throw NumericalError("cf_align: similarity transform is ill-conditioned");
    const MatrixXd t_inv = out.T.inverse();
    out.A = out.T * a_est * t_inv;
    out.B = out.T * b_est;
    out.C = c_est * t_inv;
    const auto& cp = kron::conversion_pair(static_cast<int>(n), 2);
    out.F20 = out.T * f20_est * (cp.M * kron::kron(t_inv, t_inv) * cp.N);
    return out;
}

struct BodePoint {
    double omega;
    double mag_db;
    double phase_deg;
};

inline constexpr double kBodeFloorDb = -300.0;

inline std::vector<BodePoint> bode_data(const LinearMapTransfer& tm, const std::vector<double>& omegas) {
    std::vector<BodePoint> out;
    out.reserve(omegas.size());
    for (double w : omegas) {
        const cplx g = transfer_entry(tm, w);
        const double mag = std::abs(g);
        out.push_back({w, mag > 0 ? std::max(kBodeFloorDb, 20.0 * std::log10(mag)) : kBodeFloorDb,
                       mag > 0 ? std::arg(g) * 180.0 / std::numbers::pi : 0.0});
    }
    return out;
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
    std::vector<double> g;
    for (int k = 0; k < points; ++k)
        g.push_back(std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * k / std::max(1, points - 1)));
    return g;
}

/// The four benchmark entries: (name, uses F20, row, col), zero-based.
struct EntrySpec {
    std::string name;
    bool quadratic;
    Index row;
    Index col;
};

inline const std::vector<EntrySpec>& benchmark_entries() {
    static const std::vector<EntrySpec> e{{"G111", false, 0, 0}, {"G221", true, 1, 0}, {"G222", true, 1, 1}, {"G213", true, 0, 2}};
    return e;
}

}  // namespace cmid
