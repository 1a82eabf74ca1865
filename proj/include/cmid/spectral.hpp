#pragma once

// Eigenstructure of generators with purely imaginary spectrum, S = T diag(lambda) T^{-1}.
// Data matrices Z (rows x size) are split into complex components Z T, one column per
// eigenvalue; a column and its conjugate partner carry conjugate data.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "cmid/kron.hpp"
#include "cmid/linalg.hpp"

namespace cmid {

class SpectralBasis {
public:
    struct Block {
        MatrixXcd T;
        MatrixXcd T_inv;
        VectorXcd eigenvalues;
        std::vector<Index> partner;  ///< local index of the conjugate column (itself when real)
        MatrixXd generator;          ///< the real matrix S of this block
    };

    SpectralBasis() = default;
    explicit SpectralBasis(std::vector<Block> blocks) : blocks_(std::move(blocks)) { index(); }

    /// Numerical eigendecomposition. Rejects eigenvalues off the imaginary axis,
    /// ill-conditioned eigenvector matrices and unpaired complex eigenvalues.
    static SpectralBasis from_matrix(const MatrixXd& s, double axis_tol = 1e-8, double cond_max = 1e10,
                                     double zero_tol = 1e-9);

    /// Exact eigenbasis of the reduced Kronecker sum S^<degree> of the oscillator
    /// blkdiag(0, [[0,w1],[-w1,0]], ...).
    static SpectralBasis oscillator(const std::vector<double>& frequencies, int degree);

    static SpectralBasis block_diag(const std::vector<const SpectralBasis*>& parts) {
        std::vector<Block> blocks;
        for (const auto* p : parts)
            for (const auto& b : p->blocks_) blocks.push_back(b);
        return SpectralBasis(std::move(blocks));
    }

    Index size() const { return size_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const VectorXcd& eigenvalues() const { return eigenvalues_; }
    /// Global conjugate partner of each column.
    const std::vector<Index>& partner() const { return partner_; }

    /// Z T, block by block.
    MatrixXcd transform(const MatrixXd& z) const {
        check_cols(z.cols(), "transform");
        MatrixXcd out(z.rows(), size_);
        Index off = 0;
        for (const auto& b : blocks_) {
            const Index w = b.T.rows();
            out.middleCols(off, w).noalias() = z.middleCols(off, w).cast<cplx>() * b.T;
            off += w;
        }
        return out;
    }

    /// Zt T^{-1}, block by block.
    MatrixXcd inverse_transform(const MatrixXcd& zt) const {
        check_cols(zt.cols(), "inverse_transform");
        MatrixXcd out(zt.rows(), size_);
        Index off = 0;
        for (const auto& b : blocks_) {
            const Index w = b.T.rows();
            out.middleCols(off, w).noalias() = zt.middleCols(off, w) * b.T_inv;
            off += w;
        }
        return out;
    }

    /// Z S for the real block-diagonal generator.
    MatrixXd apply_generator(const MatrixXd& z) const {
        check_cols(z.cols(), "apply_generator");
        MatrixXd out(z.rows(), size_);
        Index off = 0;
        for (const auto& b : blocks_) {
            const Index w = b.generator.rows();
            out.middleCols(off, w).noalias() = z.middleCols(off, w) * b.generator;
            off += w;
        }
        return out;
    }

    MatrixXd generator() const {
        std::vector<MatrixXd> g;
        for (const auto& b : blocks_) g.push_back(b.generator);
        return cmid::block_diag(g);
    }

    /// Column offset of each block inside the stacked basis.
    std::vector<Index> offsets() const {
        std::vector<Index> off{0};
        for (const auto& b : blocks_) off.push_back(off.back() + b.T.rows());
        return off;
    }

private:
    void check_cols(Index cols, const char* who) const {
        if (cols != size_)
            throw DimensionError(std::string("SpectralBasis::") + who + ": expected " + std::to_string(size_) +
                                 " columns, got " + std::to_string(cols));
    }

    void index() {
        size_ = 0;
        for (const auto& b : blocks_) size_ += b.T.rows();
        eigenvalues_.resize(size_);
        partner_.resize(static_cast<std::size_t>(size_));
        Index off = 0;
        for (const auto& b : blocks_) {
            const Index w = b.T.rows();
            eigenvalues_.segment(off, w) = b.eigenvalues;
            for (Index k = 0; k < w; ++k) partner_[static_cast<std::size_t>(off + k)] = off + b.partner[static_cast<std::size_t>(k)];
            off += w;
        }
    }

    std::vector<Block> blocks_;
    Index size_ = 0;
    VectorXcd eigenvalues_;
    std::vector<Index> partner_;
};

using BasisPtr = std::shared_ptr<const SpectralBasis>;

/// Matrix R with v^[d] = R w^[d] whenever v = P w (R = M_d (P (x) ... (x) P) N_d),
/// assembled by expanding each monomial of P w.
inline MatrixXcd reduced_transform(const MatrixXcd& p, int degree) {
    const int n = static_cast<int>(p.rows());
    if (p.cols() != n) throw DimensionError("reduced_transform: matrix must be square");
    const auto& table = kron::index_table(n, degree);
    const auto len = static_cast<Index>(table.reduced_size());
    MatrixXcd out = MatrixXcd::Zero(len, len);
    std::vector<std::vector<std::pair<int, cplx>>> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (p(i, j) != cplx(0.0, 0.0)) rows[static_cast<std::size_t>(i)].emplace_back(j, p(i, j));
    for (Index a = 0; a < len; ++a) {
        std::map<kron::Exponent, cplx> poly{{kron::Exponent(n, 0), cplx(1.0, 0.0)}};
        const auto& alpha = table.exponents[static_cast<std::size_t>(a)];
        for (int i = 0; i < n; ++i) {
            for (int e = 0; e < alpha[i]; ++e) {
                std::map<kron::Exponent, cplx> next;
                for (const auto& [mono, c] : poly) {
                    for (const auto& [j, pij] : rows[static_cast<std::size_t>(i)]) {
                        kron::Exponent m2 = mono;
                        ++m2[j];
                        next[m2] += c * pij;
                    }
                }
                poly.swap(next);
            }
        }
        for (const auto& [mono, c] : poly) out(a, kron::monomial_rank(mono)) += c;
    }
    return out;
}

inline SpectralBasis SpectralBasis::oscillator(const std::vector<double>& frequencies, int degree) {
    if (degree < 1) throw DimensionError("SpectralBasis::oscillator: degree must be >= 1");
    const int q = static_cast<int>(frequencies.size());
    const int sigma = 2 * q + 1;
    // v_a = (z+ + z-)/2, v_b = j (z+ - z-)/2 with z+' = j w z+, z-' = -j w z-
    MatrixXcd t = MatrixXcd::Zero(sigma, sigma), t_inv = MatrixXcd::Zero(sigma, sigma);
    VectorXcd lambda = VectorXcd::Zero(sigma);
    MatrixXd s = MatrixXd::Zero(sigma, sigma);
    t(0, 0) = t_inv(0, 0) = 1.0;
    const cplx j(0.0, 1.0);
    for (int i = 0; i < q; ++i) {
        const int a = 1 + 2 * i, b = a + 1;
        const double w = frequencies[static_cast<std::size_t>(i)];
        t(a, a) = 0.5;
        t(a, b) = 0.5;
        t(b, a) = 0.5 * j;
        t(b, b) = -0.5 * j;
        t_inv(a, a) = 1.0;
        t_inv(a, b) = -j;
        t_inv(b, a) = 1.0;
        t_inv(b, b) = j;
        lambda(a) = j * w;
        lambda(b) = -j * w;
        s(a, b) = w;
        s(b, a) = -w;
    }
    Block blk;
    if (degree == 1) {
        blk.T = t;
        blk.T_inv = t_inv;
        blk.generator = s;
    } else {
        blk.T = reduced_transform(t, degree);
        blk.T_inv = reduced_transform(t_inv, degree);
        blk.generator = kron::reduced_kron_sum(s, degree);
    }
    const auto& table = kron::index_table(sigma, degree);
    const auto len = static_cast<Index>(table.reduced_size());
    blk.eigenvalues.resize(len);
    blk.partner.resize(static_cast<std::size_t>(len));
    for (Index k = 0; k < len; ++k) {
        const auto& beta = table.exponents[static_cast<std::size_t>(k)];
        // integer frequency combination keeps exact cancellations exact
        double omega = 0.0;
        for (int i = 0; i < q; ++i)
            omega += static_cast<double>(beta[1 + 2 * i] - beta[2 + 2 * i]) * frequencies[static_cast<std::size_t>(i)];
        blk.eigenvalues(k) = cplx(0.0, omega);
        kron::Exponent swapped = beta;
        for (int i = 0; i < q; ++i) std::swap(swapped[1 + 2 * i], swapped[2 + 2 * i]);
        blk.partner[static_cast<std::size_t>(k)] = kron::monomial_rank(swapped);
    }
    return SpectralBasis({std::move(blk)});
}

inline SpectralBasis SpectralBasis::from_matrix(const MatrixXd& s, double axis_tol, double cond_max, double zero_tol) {
    if (s.rows() != s.cols() || s.rows() == 0) throw DimensionError("SpectralBasis::from_matrix: S must be square");
    const Index n = s.rows();
    Eigen::EigenSolver<MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("SpectralBasis::from_matrix: eigen-solve failed");
    VectorXcd lambda = es.eigenvalues();
    MatrixXcd vecs = es.eigenvectors();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    for (Index k = 0; k < n; ++k)
        if (std::abs(lambda(k).real()) > axis_tol * scale)
            throw NumericalError("SpectralBasis::from_matrix: eigenvalue " + std::to_string(lambda(k).real()) + "+" +
                                 std::to_string(lambda(k).imag()) + "j is off the imaginary axis");
    for (Index k = 0; k < n; ++k) lambda(k) = cplx(0.0, lambda(k).imag());

    std::vector<Index> partner(static_cast<std::size_t>(n), -1);
    for (Index k = 0; k < n; ++k) {
        if (std::abs(lambda(k).imag()) <= zero_tol * scale) {
            lambda(k) = cplx(0.0, 0.0);
            partner[static_cast<std::size_t>(k)] = k;
            // real eigenvector for a zero eigenvalue
            const VectorXcd v = vecs.col(k);
            Index piv = 0;
            v.cwiseAbs().maxCoeff(&piv);
            vecs.col(k) = (v * (std::conj(v(piv)) / std::abs(v(piv)))).real().cast<cplx>();
        }
    }
    for (Index k = 0; k < n; ++k) {
        if (partner[static_cast<std::size_t>(k)] >= 0 || lambda(k).imag() < 0) continue;
        Index best = -1;
        double best_dist = 0.0;
        for (Index c = 0; c < n; ++c) {
            if (partner[static_cast<std::size_t>(c)] >= 0 || c == k) continue;
            const double dl = std::abs(lambda(c) - std::conj(lambda(k)));
            if (dl > 1e-8 * scale) continue;
            const double dv = (vecs.col(c) - vecs.col(k).conjugate()).norm();
            if (best < 0 || dv < best_dist) {
                best = c;
                best_dist = dv;
            }
        }
        if (best < 0) throw NumericalError("SpectralBasis::from_matrix: unpaired complex eigenvalue");
        partner[static_cast<std::size_t>(k)] = best;
        partner[static_cast<std::size_t>(best)] = k;
        lambda(best) = std::conj(lambda(k));
        vecs.col(best) = vecs.col(k).conjugate();
    }
    for (Index k = 0; k < n; ++k)
        if (partner[static_cast<std::size_t>(k)] < 0) throw NumericalError("SpectralBasis::from_matrix: unpaired complex eigenvalue");

    Eigen::JacobiSVD<MatrixXcd> svd(vecs);
    const auto& sv = svd.singularValues();
    const double cond = sv(n - 1) > 0 ? sv(0) / sv(n - 1) : std::numeric_limits<double>::infinity();
    if (cond > cond_max)
        throw NumericalError("SpectralBasis::from_matrix: S is not diagonalizable (eigenvector condition " +
                             std::to_string(cond) + ")");
    Block blk;
    blk.T = vecs;
    blk.T_inv = vecs.inverse();
    blk.eigenvalues = lambda;
    blk.partner = partner;
    blk.generator = s;
    return SpectralBasis({std::move(blk)});
}

/// Per-frequency split of a real data matrix.
struct FrequencyComponents {
    MatrixXcd components;           ///< Z T, one column per eigenvalue
    VectorXd omega;                 ///< imaginary part of each eigenvalue
    std::vector<Index> zero;        ///< columns at frequency zero
    std::vector<Index> oscillatory; ///< columns with omega > 0; partners carry the conjugates
    BasisPtr basis;

    Index alpha() const { return static_cast<Index>(zero.size()); }

    /// components T^{-1}; throws if the result is not real to `tol` (relative).
    MatrixXd reassemble(double tol = 1e-9) const {
        const MatrixXcd z = basis->inverse_transform(components);
        const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
        if (z.imag().cwiseAbs().maxCoeff() > tol * scale)
            throw NumericalError("FrequencyComponents::reassemble: result is not real");
        return z.real();
    }
};

inline FrequencyComponents freq_decompose(const MatrixXd& z, BasisPtr basis, double zero_tol = 1e-9) {
    FrequencyComponents fc;
    fc.components = basis->transform(z);
    const Index n = basis->size();
    fc.omega = basis->eigenvalues().imag();
    const double scale = std::max(1.0, fc.omega.cwiseAbs().maxCoeff());
    for (Index k = 0; k < n; ++k) {
        if (std::abs(fc.omega(k)) <= zero_tol * scale) fc.zero.push_back(k);
        else if (fc.omega(k) > 0) fc.oscillatory.push_back(k);
    }
    fc.basis = std::move(basis);
    return fc;
}

inline FrequencyComponents freq_decompose(const MatrixXd& z, const MatrixXd& s) {
    return freq_decompose(z, std::make_shared<const SpectralBasis>(SpectralBasis::from_matrix(s)));
}

/// Spectral bases of S^<l>, l = 1..max_degree, for one oscillator bank; built once and shared.
class OscillatorBank {
public:
    OscillatorBank(std::vector<double> frequencies, int max_degree) : frequencies_(std::move(frequencies)) {
        if (max_degree < 1) throw DimensionError("OscillatorBank: max_degree must be >= 1");
        for (int l = 1; l <= max_degree; ++l)
            degree_.push_back(std::make_shared<const SpectralBasis>(SpectralBasis::oscillator(frequencies_, l)));
    }

    int max_degree() const { return static_cast<int>(degree_.size()); }
    int sigma() const { return 2 * static_cast<int>(frequencies_.size()) + 1; }
    const std::vector<double>& frequencies() const { return frequencies_; }

    const BasisPtr& degree(int l) const {
        if (l < 1 || l > max_degree()) throw DimensionError("OscillatorBank: degree out of range");
        return degree_[static_cast<std::size_t>(l - 1)];
    }

    /// blkdiag of S^<1> .. S^<upto>.
    BasisPtr stacked(int upto) const {
        std::vector<const SpectralBasis*> parts;
        for (int l = 1; l <= upto; ++l) parts.push_back(degree(l).get());
        return std::make_shared<const SpectralBasis>(SpectralBasis::block_diag(parts));
    }

    /// Column widths delta_1 .. delta_upto.
    std::vector<Index> widths(int upto) const {
        std::vector<Index> w;
        for (int l = 1; l <= upto; ++l) w.push_back(degree(l)->size());
        return w;
    }

private:
    std::vector<double> frequencies_;
    std::vector<BasisPtr> degree_;
};

}  // namespace cmid
