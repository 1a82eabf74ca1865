#pragma once

// Frequency-domain subspace identification for Sylvester data
//   X S = A X + B U,   Y = C X + D U.
// algorithm1 recovers (C, A) and the order; algorithm2 recovers (B, D, X) given (C, A).

#include <Eigen/QR>
#include <Eigen/SVD>

#include <optional>
#include <string>
#include <vector>

#include "cmid/linalg.hpp"
#include "cmid/spectral.hpp"

namespace cmid::fds {

struct SubspaceOptions {
    double rel_tol = 1e-8;     ///< mu_j counts when mu_j > max(rel_tol * mu_1, abs_tol)
    double abs_tol = 1e-12;
    double min_gap = 1e3;      ///< below this ratio mu_n / mu_{n+1} the order is chosen by the largest gap
    double row_space_tol = 1e-11;
    double pinv_tol = 1e-10;
    std::optional<int> forced_order;
};

struct SubspaceResult {
    int order = 0;
    MatrixXd C;
    MatrixXd A;
    VectorXd singular_values;
    int gap_index = 0;        ///< equals order
    double gap_ratio = 0.0;   ///< mu_order / mu_{order+1} (inf when nothing follows)
    bool gap_warning = false; ///< order came from the largest-gap fallback
    bool shape_warning = false;
};

struct SylvesterProblem {
    MatrixXd U;  ///< m0 x sigma0
    MatrixXd Y;  ///< p0 x sigma0
    BasisPtr basis;
    int order_bound = 1;

    void validate() const {
        if (!basis) throw DimensionError("SylvesterProblem: missing spectral basis");
        if (U.cols() != basis->size() || Y.cols() != basis->size())
            throw DimensionError("SylvesterProblem: U and Y need " + std::to_string(basis->size()) + " columns");
        if (order_bound < 1) throw DimensionError("SylvesterProblem: order bound must be >= 1");
    }
};

namespace detail {
inline MatrixXd stack_powers(const MatrixXd& z, const SpectralBasis& basis, int count) {
    std::vector<MatrixXd> blocks{z};
    for (int k = 1; k < count; ++k) blocks.push_back(basis.apply_generator(blocks.back()));
    return vcat(blocks);
}

inline int choose_order(const VectorXd& mu, int bound, const SubspaceOptions& opt, bool& warned) {
    warned = false;
    const Index len = mu.size();
    if (len == 0 || mu(0) <= opt.abs_tol) throw NumericalError("algorithm1: no nonzero singular value (no response in the data)");
    const double thr = std::max(opt.rel_tol * mu(0), opt.abs_tol);
    int order = static_cast<int>((mu.array() > thr).count());
    const auto ratio = [&](int k) { return k < len ? mu(k - 1) / std::max(mu(k), 1e-300) : std::numeric_limits<double>::infinity(); };
    if (order > bound || ratio(order) < opt.min_gap) {
        warned = true;
        const int last = std::min<int>(bound, static_cast<int>(len) - 1);
        int best = 1;
        for (int k = 2; k <= last; ++k)
            if (ratio(k) > ratio(best)) best = k;
        order = std::min(best, bound);
    }
    return order;
}
}  // namespace detail

/// Order, C and A from (U, Y, S).
inline SubspaceResult algorithm1(const SylvesterProblem& prob, const SubspaceOptions& opt = {}) {
    prob.validate();
    const int nb = prob.order_bound;
    const Index p0 = prob.Y.rows();
    const Index sigma0 = prob.basis->size();
    SubspaceResult res;
    res.shape_warning = static_cast<Index>(nb) * p0 > sigma0;

    const MatrixXd ubar = detail::stack_powers(prob.U, *prob.basis, nb);
    const MatrixXd ybar = detail::stack_powers(prob.Y, *prob.basis, nb);

    // QR of [Ubar^T Ybar^T] with Ubar^T replaced by an orthonormal basis of its range,
    // so repeated or vanishing input rows do not disturb the factorization.
    const MatrixXd q1 = row_space_basis(ubar, opt.row_space_tol);
    const Index r = q1.cols();
    MatrixXd stacked(sigma0, r + ybar.rows());
    stacked << q1, ybar.transpose();
    Eigen::HouseholderQR<MatrixXd> qr(stacked);
    const Index rows22 = std::max<Index>(0, std::min<Index>(sigma0, stacked.cols()) - r);
    MatrixXd r22 = MatrixXd::Zero(rows22, ybar.rows());
    if (rows22 > 0) r22 = qr.matrixQR().block(r, r, rows22, ybar.rows()).triangularView<Eigen::Upper>();
    const MatrixXd r22t = r22.transpose();  // (p0 nb) x rows22

    Eigen::BDCSVD<MatrixXd> svd(r22t, Eigen::ComputeThinU);
    VectorXd mu = VectorXd::Zero(ybar.rows());
    mu.head(svd.singularValues().size()) = svd.singularValues();
    res.singular_values = mu;

    bool warned = false;
    res.order = opt.forced_order ? *opt.forced_order : detail::choose_order(mu, nb, opt, warned);
    if (res.order < 1 || res.order > std::min<Index>(nb, svd.matrixU().cols()))
        throw NumericalError("algorithm1: order " + std::to_string(res.order) + " is not admissible");
    res.gap_warning = warned;
    res.gap_index = res.order;
    res.gap_ratio = res.order < mu.size() ? mu(res.order - 1) / std::max(mu(res.order), 1e-300)
                                          : std::numeric_limits<double>::infinity();

    const MatrixXd obs = svd.matrixU().leftCols(res.order);
    res.C = obs.topRows(p0);
    const MatrixXd upper = obs.topRows(p0 * (nb - 1));
    const MatrixXd lower = obs.bottomRows(p0 * (nb - 1));
    if (nb < 2 || numerical_rank(upper, opt.pinv_tol) < res.order)
        throw NumericalError("algorithm1: shifted observability matrix is rank deficient (raise the order bound)");
    res.A = pinv(upper, opt.pinv_tol) * lower;
    return res;
}

/// Which input-side unknowns are estimated; the rest are fixed at zero.
struct StructureMask {
    std::vector<bool> free_B;  ///< per input row of U; empty means all free
    std::vector<bool> free_D;  ///< per input row of U; empty means none free

    static StructureMask all_B(Index m0) { return {std::vector<bool>(static_cast<std::size_t>(m0), true), {}}; }
};

struct InputEstimate {
    MatrixXd B;  ///< n0 x m0
    MatrixXd D;  ///< p0 x m0
    MatrixXd X;  ///< n0 x sigma0
    int rank = 0;
    Index unknowns = 0;
    double residual = 0.0;  ///< least-squares residual norm
};

struct InputOptions {
    double rank_tol = 1e-10;       ///< relative threshold of the orthogonal decomposition
    double overlap_tol = 1e-8;     ///< minimum distance between spec(A) and spec(S)
    double imag_tol = 1e-9;        ///< allowed imaginary residue of the reassembled X
    bool require_full_rank = false;
};

namespace detail {
inline void check_overlap(const MatrixXd& a, const VectorXcd& lambda, double tol) {
    const VectorXcd eig = eigenvalues(a);
    for (Index i = 0; i < eig.size(); ++i)
        for (Index k = 0; k < lambda.size(); ++k)
            if (std::abs(eig(i) - lambda(k)) < tol * std::max(1.0, std::abs(lambda(k))))
                throw NumericalError("algorithm2: spec(A) and spec(S) overlap near " + std::to_string(lambda(k).imag()) + "j");
}
}  // namespace detail

/// Least squares for vec(B), vec(D) over the per-frequency residuals
/// Yt_k - C (lambda_k I - A)^{-1} B Ut_k - D Ut_k, then X from its components.
/// Columns at negative frequency are skipped (they conjugate their partners).
inline InputEstimate algorithm2(const SylvesterProblem& prob, const MatrixXd& a, const MatrixXd& c,
                                const StructureMask& mask = {}, const InputOptions& opt = {}) {
    prob.validate();
    const Index n0 = a.rows(), m0 = prob.U.rows(), p0 = prob.Y.rows();
    if (a.cols() != n0 || c.cols() != n0 || c.rows() != p0) throw DimensionError("algorithm2: A or C has the wrong shape");
    const auto& basis = *prob.basis;
    detail::check_overlap(a, basis.eigenvalues(), opt.overlap_tol);

    std::vector<Index> b_cols, d_cols;
    for (Index j = 0; j < m0; ++j) {
        if (mask.free_B.empty() || mask.free_B[static_cast<std::size_t>(j)]) b_cols.push_back(j);
        if (!mask.free_D.empty() && mask.free_D[static_cast<std::size_t>(j)]) d_cols.push_back(j);
    }
    const Index nb = n0 * static_cast<Index>(b_cols.size());
    const Index nd = p0 * static_cast<Index>(d_cols.size());

    const MatrixXcd ut = basis.transform(prob.U);
    const MatrixXcd yt = basis.transform(prob.Y);
    const VectorXcd& lambda = basis.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());

    std::vector<Index> used;
    for (Index k = 0; k < basis.size(); ++k)
        if (lambda(k).imag() >= -1e-9 * scale) used.push_back(k);

    const Index rows = 2 * p0 * static_cast<Index>(used.size());
    MatrixXd lhs = MatrixXd::Zero(rows, nb + nd);
    VectorXd rhs(rows);
    const MatrixXcd eye = MatrixXcd::Identity(n0, n0);
    Index row = 0;
    for (Index k : used) {
        const MatrixXcd g = (lambda(k) * eye - a.cast<cplx>()).transpose().partialPivLu().solve(c.cast<cplx>().transpose()).transpose();
        MatrixXcd block(p0, nb + nd);
        for (std::size_t jj = 0; jj < b_cols.size(); ++jj)
            block.middleCols(static_cast<Index>(jj) * n0, n0) = ut(b_cols[jj], k) * g;
        for (std::size_t jj = 0; jj < d_cols.size(); ++jj)
            block.middleCols(nb + static_cast<Index>(jj) * p0, p0) = ut(d_cols[jj], k) * MatrixXcd::Identity(p0, p0);
        lhs.middleRows(row, p0) = block.real();
        lhs.middleRows(row + p0, p0) = block.imag();
        rhs.segment(row, p0) = yt.col(k).real();
        rhs.segment(row + p0, p0) = yt.col(k).imag();
        row += 2 * p0;
    }

    InputEstimate est;
    est.unknowns = nb + nd;
    est.B = MatrixXd::Zero(n0, m0);
    est.D = MatrixXd::Zero(p0, m0);
    if (est.unknowns > 0) {
        Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(lhs);
        cod.setThreshold(opt.rank_tol);
        const VectorXd sol = cod.solve(rhs);
        est.rank = static_cast<int>(cod.rank());
        est.residual = (lhs * sol - rhs).norm();
        if (opt.require_full_rank && est.rank < est.unknowns)
            throw NumericalError("algorithm2: least-squares problem is rank deficient (" + std::to_string(est.rank) + " of " +
                                 std::to_string(est.unknowns) + ")");
        for (std::size_t jj = 0; jj < b_cols.size(); ++jj)
            est.B.col(b_cols[jj]) = sol.segment(static_cast<Index>(jj) * n0, n0);
        for (std::size_t jj = 0; jj < d_cols.size(); ++jj)
            est.D.col(d_cols[jj]) = sol.segment(nb + static_cast<Index>(jj) * p0, p0);
    }

    const MatrixXcd bu = est.B.cast<cplx>() * ut;
    MatrixXcd xt(n0, basis.size());
    for (Index k = 0; k < basis.size(); ++k) xt.col(k) = (lambda(k) * eye - a.cast<cplx>()).partialPivLu().solve(bu.col(k));
    const MatrixXcd x = basis.inverse_transform(xt);
    const double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if (x.imag().cwiseAbs().maxCoeff() > opt.imag_tol * xscale)
        throw NumericalError("algorithm2: reassembled X is not real");
    est.X = x.real();
    return est;
}

/// X with X S = A X + R, solved per spectral component.
inline MatrixXd solve_sylvester(const MatrixXd& a, const MatrixXd& r, const SpectralBasis& basis, double overlap_tol = 1e-8) {
    if (r.rows() != a.rows()) throw DimensionError("solve_sylvester: R needs as many rows as A");
    detail::check_overlap(a, basis.eigenvalues(), overlap_tol);
    const MatrixXcd rt = basis.transform(r);
    const Index n = a.rows();
    MatrixXcd xt(n, basis.size());
    const VectorXcd& lambda = basis.eigenvalues();
    for (Index k = 0; k < basis.size(); ++k)
        xt.col(k) = (lambda(k) * MatrixXcd::Identity(n, n) - a.cast<cplx>()).partialPivLu().solve(rt.col(k));
    return basis.inverse_transform(xt).real();
}

/// Relative residual ||X S - A X - B U||_F / ||X||_F.
inline double sylvester_residual(const MatrixXd& x, const SpectralBasis& basis, const MatrixXd& a, const MatrixXd& b,
                                 const MatrixXd& u) {
    const double den = std::max(x.norm(), 1e-300);
    return (basis.apply_generator(x) - a * x - b * u).norm() / den;
}

}  // namespace cmid::fds
