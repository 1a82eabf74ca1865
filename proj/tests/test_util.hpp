#pragma once

// Independent reference computations shared by the test suites.

#include <algorithm>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cmid/cmid.hpp"

namespace testutil {

using cmid::cplx;
using cmid::Index;
using cmid::MatrixXcd;
using cmid::MatrixXd;
using cmid::VectorXd;

/// Nondecreasing index tuples of length i over 0..n-1 in lexicographic order.
inline std::vector<std::vector<int>> sorted_tuples(int n, int i) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(i), 0);
    std::function<void(int, int)> rec = [&](int pos, int lo) {
        if (pos == i) {
            out.push_back(cur);
            return;
        }
        for (int k = lo; k < n; ++k) {
            cur[static_cast<std::size_t>(pos)] = k;
            rec(pos + 1, k);
        }
    };
    rec(0, 0);
    return out;
}

/// Distinct degree-i monomials, one product per sorted tuple.
inline VectorXd brute_reduced_power(const VectorXd& v, int i) {
    const auto tuples = sorted_tuples(static_cast<int>(v.size()), i);
    VectorXd out(static_cast<Index>(tuples.size()));
    for (std::size_t k = 0; k < tuples.size(); ++k) {
        double p = 1.0;
        for (int j : tuples[k]) p *= v(j);
        out(static_cast<Index>(k)) = p;
    }
    return out;
}

/// Duplication matrix: full index (j1..ji), big-endian, maps to the position of its sorted tuple.
inline MatrixXd brute_duplication(int n, int i) {
    const auto tuples = sorted_tuples(n, i);
    Index full = 1;
    for (int k = 0; k < i; ++k) full *= n;
    MatrixXd dup = MatrixXd::Zero(full, static_cast<Index>(tuples.size()));
    for (Index f = 0; f < full; ++f) {
        std::vector<int> idx(static_cast<std::size_t>(i));
        Index rest = f;
        for (int k = i - 1; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)] = static_cast<int>(rest % n);
            rest /= n;
        }
        std::sort(idx.begin(), idx.end());
        const auto pos = std::find(tuples.begin(), tuples.end(), idx) - tuples.begin();
        dup(f, pos) = 1.0;
    }
    return dup;
}

/// X S - A X = R by dense vectorization.
inline MatrixXd brute_sylvester(const MatrixXd& a, const MatrixXd& s, const MatrixXd& r) {
    const Index n = a.rows(), w = s.rows();
    const MatrixXd big = Eigen::kroneckerProduct(s.transpose(), MatrixXd::Identity(n, n)).eval() -
                         Eigen::kroneckerProduct(MatrixXd::Identity(w, w), a).eval();
    const VectorXd x = big.fullPivLu().solve(Eigen::Map<const VectorXd>(r.data(), r.size()));
    return Eigen::Map<const MatrixXd>(x.data(), n, w);
}

inline MatrixXd random_matrix(std::mt19937_64& g, Index r, Index c, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = nd(g);
    return m;
}

/// Random similarity Q1 diag(s) Q2 with Haar-like orthogonal factors and s in [0.5, 2], so cond <= 4.
inline MatrixXd random_similarity(std::mt19937_64& g, Index n) {
    std::uniform_real_distribution<double> sv(0.5, 2.0);
    const MatrixXd q1 = Eigen::HouseholderQR<MatrixXd>(random_matrix(g, n, n)).householderQ();
    const MatrixXd q2 = Eigen::HouseholderQR<MatrixXd>(random_matrix(g, n, n)).householderQ();
    VectorXd s(n);
    for (Index k = 0; k < n; ++k) s(k) = sv(g);
    return q1 * s.asDiagonal() * q2;
}

/// Random real matrix with eigenvalues in [-3, -0.3] (real and complex pairs), well conditioned.
inline MatrixXd random_stable(std::mt19937_64& g, Index n) {
    std::uniform_real_distribution<double> re(-3.0, -0.3), im(0.2, 2.0);
    MatrixXd d = MatrixXd::Zero(n, n);
    Index k = 0;
    std::bernoulli_distribution pair(0.5);
    while (k < n) {
        if (k + 1 < n && pair(g)) {
            const double a = re(g), b = im(g);
            d(k, k) = a;
            d(k + 1, k + 1) = a;
            d(k, k + 1) = b;
            d(k + 1, k) = -b;
            k += 2;
        } else {
            d(k, k) = re(g);
            ++k;
        }
    }
    MatrixXd t = random_matrix(g, n, n);
    t += 2.0 * MatrixXd::Identity(n, n);
    return t * d * t.inverse();
}

/// Transfer matrix C (jw I - A)^{-1} B + D.
inline MatrixXcd transfer(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, const MatrixXd& d, double w) {
    const Index n = a.rows();
    const MatrixXcd res = cplx(0.0, w) * MatrixXcd::Identity(n, n) - a.cast<cplx>();
    return c.cast<cplx>() * res.partialPivLu().solve(b.cast<cplx>()) + d.cast<cplx>();
}

/// sup_w ||G - G_hat||_F / sup_w ||G||_F on a dense log grid.
inline double transfer_mismatch(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, const MatrixXd& d,
                                const MatrixXd& ah, const MatrixXd& bh, const MatrixXd& ch, const MatrixXd& dh) {
    double num = 0.0, den = 0.0;
    for (int k = -1; k < 600; ++k) {
        const double w = k < 0 ? 0.0 : std::pow(10.0, -3.0 + 6.0 * k / 599.0);
        const MatrixXcd g = transfer(a, b, c, d, w);
        num = std::max(num, (g - transfer(ah, bh, ch, dh, w)).norm());
        den = std::max(den, g.norm());
    }
    return num / den;
}

/// Classical RK4 for v' = A v.
inline VectorXd rk4_linear(const MatrixXd& a, VectorXd v, double t, int steps) {
    const double h = t / steps;
    for (int s = 0; s < steps; ++s) {
        const VectorXd k1 = a * v, k2 = a * (v + 0.5 * h * k1), k3 = a * (v + 0.5 * h * k2), k4 = a * (v + h * k3);
        v += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return v;
}

inline cmid::ExcitationSpec example_spec() {
    cmid::ExcitationSpec spec;
    spec.frequencies = cmid::example_frequencies();
    spec.U = {cmid::example_U1()};
    return spec;
}

}  // namespace testutil
