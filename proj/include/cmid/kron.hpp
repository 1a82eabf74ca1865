#pragma once

// Full and reduced Kronecker powers.
//
// Monomial order: degree-i exponent tuples of n variables sorted lexicographically
// in descending order, so x1^i comes first and xn^i last. For n = 2, i = 2 the
// reduced power is [x1^2, x1 x2, x2^2]. Every matrix in the library whose columns
// (or rows) are indexed by monomials uses this order.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "cmid/errors.hpp"

namespace cmid::kron {

using Exponent = std::vector<int>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Largest number of entries any full-power object may have.
inline constexpr double kMaxEntries = 1e7;

inline std::size_t binomial(long long n, long long k) {
    if (k < 0 || n < k) return 0;
    if (k > n - k) k = n - k;
    unsigned long long r = 1;
    for (long long j = 1; j <= k; ++j) r = r * static_cast<unsigned long long>(n - k + j) / static_cast<unsigned long long>(j);
    return static_cast<std::size_t>(r);
}

/// C(n+i-1, i): number of distinct degree-i monomials in n variables.
inline std::size_t reduced_length(int n, int i) {
    if (n < 1 || i < 0) throw DimensionError("reduced_length: need n >= 1 and i >= 0");
    return binomial(static_cast<long long>(n) + i - 1, i);
}

/// n^i, refusing results above kMaxEntries.
inline std::size_t full_length(int n, int i) {
    if (n < 1 || i < 0) throw DimensionError("full_length: need n >= 1 and i >= 0");
    double len = 1.0;
    for (int k = 0; k < i; ++k) len *= n;
    if (len > kMaxEntries)
        throw SizeLimitError("full Kronecker power of length " + std::to_string(n) + "^" + std::to_string(i) +
                             " exceeds the cap of 1e7 entries");
    return static_cast<std::size_t>(len + 0.5);
}

/// Position of an exponent tuple inside the reduced power of its degree.
inline int monomial_rank(const Exponent& e) {
    const int n = static_cast<int>(e.size());
    int remaining = 0;
    for (int x : e) remaining += x;
    std::size_t rank = 0;
    for (int j = 0; j + 1 < n; ++j) {
        const int tail_vars = n - j - 1;
        for (int larger = e[j] + 1; larger <= remaining; ++larger)
            rank += binomial(remaining - larger + tail_vars - 1, remaining - larger);
        remaining -= e[j];
    }
    return static_cast<int>(rank);
}

struct MonomialIndexTable {
    int n = 0;
    int degree = 0;
    std::vector<Exponent> exponents;
    /// full-power index (0-based, Kronecker order) -> reduced index
    std::vector<int> position;
    /// multiplicity of each monomial inside the full power
    std::vector<int> multiplicity;
    /// recurrence used by reduced_power: monomial = parent (degree-1 table) * x[factor]
    std::vector<int> parent;
    std::vector<int> factor;

    std::size_t reduced_size() const { return exponents.size(); }
    std::size_t full_size() const { return position.size(); }
};

namespace detail {

inline void enumerate(int n, int var, int remaining, Exponent& cur, std::vector<Exponent>& out) {
    if (var == n - 1) {
        cur[var] = remaining;
        out.push_back(cur);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        cur[var] = e;
        enumerate(n, var + 1, remaining - e, cur, out);
    }
    cur[var] = 0;
}

inline MonomialIndexTable build_table(int n, int i) {
    MonomialIndexTable t;
    t.n = n;
    t.degree = i;
    const std::size_t full = full_length(n, i);
    Exponent cur(n, 0);
    enumerate(n, 0, i, cur, t.exponents);
    t.position.resize(full);
    t.multiplicity.assign(t.exponents.size(), 0);
    std::vector<int> digits(i, 0);
    for (std::size_t f = 0; f < full; ++f) {
        Exponent e(n, 0);
        for (int d : digits) ++e[d];
        const int r = monomial_rank(e);
        t.position[f] = r;
        ++t.multiplicity[r];
        for (int k = i - 1; k >= 0; --k) {
            if (++digits[k] < n) break;
            digits[k] = 0;
        }
    }
    t.parent.assign(t.exponents.size(), 0);
    t.factor.assign(t.exponents.size(), 0);
    if (i >= 1) {
        for (std::size_t r = 0; r < t.exponents.size(); ++r) {
            Exponent e = t.exponents[r];
            int last = n - 1;
            while (e[last] == 0) --last;
            --e[last];
            t.parent[r] = monomial_rank(e);
            t.factor[r] = last;
        }
    }
    return t;
}

template <class Value>
class Cache {
public:
    template <class Builder>
    const Value& get(int n, int i, Builder&& build) {
        const std::pair<int, int> key{n, i};
        {
            std::shared_lock lock(mutex_);
            auto it = map_.find(key);
            if (it != map_.end()) return *it->second;
        }
        auto fresh = std::make_unique<Value>(build());
        std::unique_lock lock(mutex_);
        auto [it, inserted] = map_.try_emplace(key, std::move(fresh));
        return *it->second;
    }

private:
    std::shared_mutex mutex_;
    std::map<std::pair<int, int>, std::unique_ptr<Value>> map_;
};

}  // namespace detail

/// Cached index table for (n, i). References stay valid for the program lifetime.
inline const MonomialIndexTable& index_table(int n, int i) {
    if (n < 1 || i < 0) throw DimensionError("index_table: need n >= 1 and i >= 0");
    static detail::Cache<MonomialIndexTable> cache;
    return cache.get(n, i, [&] { return detail::build_table(n, i); });
}

/// Merge (M) and expand (N) matrices between v^(i) and v^[i].
struct ConversionPair {
    SparseMatrix M;  ///< reduced x full, averages duplicate positions
    SparseMatrix N;  ///< full x reduced, pure duplication
};

inline const ConversionPair& conversion_pair(int n, int i) {
    static detail::Cache<ConversionPair> cache;
    return cache.get(n, i, [&] {
        const auto& t = index_table(n, i);
        const auto full = static_cast<Eigen::Index>(t.full_size());
        const auto red = static_cast<Eigen::Index>(t.reduced_size());
        std::vector<Eigen::Triplet<double>> m_entries, n_entries;
        m_entries.reserve(t.full_size());
        n_entries.reserve(t.full_size());
        for (Eigen::Index f = 0; f < full; ++f) {
            const int r = t.position[f];
            n_entries.emplace_back(f, r, 1.0);
            m_entries.emplace_back(r, f, 1.0 / t.multiplicity[r]);
        }
        ConversionPair cp;
        cp.M.resize(red, full);
        cp.N.resize(full, red);
        cp.M.setFromTriplets(m_entries.begin(), m_entries.end());
        cp.N.setFromTriplets(n_entries.begin(), n_entries.end());
        cp.M.makeCompressed();
        cp.N.makeCompressed();
        return cp;
    });
}

/// Kronecker product of two dense matrices.
template <class DerivedA, class DerivedB>
auto kron(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = Eigen::kroneckerProduct(a.derived(), b.derived());
    return out;
}

/// i-fold Kronecker product of a matrix with itself.
inline Eigen::MatrixXd kron_power(const Eigen::MatrixXd& x, int i) {
    if (i < 1) throw DimensionError("kron_power: degree must be >= 1");
    const double entries = static_cast<double>(full_length(static_cast<int>(x.rows()), i)) *
                           static_cast<double>(full_length(static_cast<int>(x.cols()), i));
    if (entries > kMaxEntries) throw SizeLimitError("kron_power: result exceeds the cap of 1e7 entries");
    Eigen::MatrixXd out = x;
    for (int k = 1; k < i; ++k) out = kron(out, x);
    return out;
}

inline Eigen::VectorXd full_power(const Eigen::VectorXd& v, int i) {
    if (i < 1) throw DimensionError("full_power: degree must be >= 1");
    if (v.size() == 0) throw DimensionError("full_power: empty vector");
    full_length(static_cast<int>(v.size()), i);
    Eigen::VectorXd out = v;
    for (int k = 1; k < i; ++k) out = kron(out, v);
    return out;
}

/// Distinct degree-i monomials of v. Degree 0 gives [1].
inline Eigen::VectorXd reduced_power(const Eigen::VectorXd& v, int i) {
    if (i < 0) throw DimensionError("reduced_power: degree must be >= 0");
    if (v.size() == 0) throw DimensionError("reduced_power: empty vector");
    const int n = static_cast<int>(v.size());
    if (i == 0) return Eigen::VectorXd::Ones(1);
    Eigen::VectorXd prev = v;
    for (int d = 2; d <= i; ++d) {
        const auto& t = index_table(n, d);
        Eigen::VectorXd next(static_cast<Eigen::Index>(t.reduced_size()));
        for (Eigen::Index r = 0; r < next.size(); ++r) next(r) = prev(t.parent[r]) * v(t.factor[r]);
        prev.swap(next);
    }
    return prev;
}

/// [v^[1]; v^[2]; ...; v^[max_degree]] stacked into one vector.
inline Eigen::VectorXd stacked_reduced_powers(const Eigen::VectorXd& v, int max_degree) {
    if (max_degree < 1) throw DimensionError("stacked_reduced_powers: degree must be >= 1");
    const int n = static_cast<int>(v.size());
    std::size_t total = 0;
    for (int d = 1; d <= max_degree; ++d) total += reduced_length(n, d);
    Eigen::VectorXd out(static_cast<Eigen::Index>(total));
    out.head(n) = v;
    Eigen::Index offset = n;
    Eigen::Index prev_offset = 0;
    for (int d = 2; d <= max_degree; ++d) {
        const auto& t = index_table(n, d);
        const auto len = static_cast<Eigen::Index>(t.reduced_size());
        for (Eigen::Index r = 0; r < len; ++r) out(offset + r) = out(prev_offset + t.parent[r]) * v(t.factor[r]);
        prev_offset = offset;
        offset += len;
    }
    return out;
}

namespace detail {
inline void require_square(const Eigen::MatrixXd& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw DimensionError(std::string(who) + ": matrix must be square and nonempty");
}
}  // namespace detail

/// A^{i} = sum_k I^(k-1) (x) A (x) I^(i-k), generator of v^(i) along v' = A v.
inline Eigen::MatrixXd kron_sum(const Eigen::MatrixXd& a, int i) {
    detail::require_square(a, "kron_sum");
    if (i < 1) throw DimensionError("kron_sum: degree must be >= 1");
    const int n = static_cast<int>(a.rows());
    const double side = static_cast<double>(full_length(n, i));
    if (side * side > kMaxEntries) throw SizeLimitError("kron_sum: result exceeds the cap of 1e7 entries");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(side), static_cast<Eigen::Index>(side));
    for (int k = 0; k < i; ++k) {
        Eigen::MatrixXd term = k == 0 ? a : Eigen::MatrixXd::Identity(n, n);
        for (int j = 1; j < i; ++j) term = kron(term, j == k ? a : Eigen::MatrixXd::Identity(n, n));
        out += term;
    }
    return out;
}

/// A^<i> = M A^{i} N, generator of v^[i] along v' = A v.
///
/// Built directly from d/dt x^alpha = sum_k alpha_k x^(alpha - e_k) (A x)_k, which is
/// exactly M A^{i} N and never forms the full-size sum.
inline Eigen::MatrixXd reduced_kron_sum(const Eigen::MatrixXd& a, int i) {
    detail::require_square(a, "reduced_kron_sum");
    if (i < 1) throw DimensionError("reduced_kron_sum: degree must be >= 1");
    const int n = static_cast<int>(a.rows());
    const auto len = static_cast<Eigen::Index>(reduced_length(n, i));
    if (static_cast<double>(len) * static_cast<double>(len) > 1e8)
        throw SizeLimitError("reduced_kron_sum: result exceeds 1e8 entries");
    std::vector<Exponent> exps;
    Exponent cur(n, 0);
    detail::enumerate(n, 0, i, cur, exps);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(len, len);
    for (Eigen::Index row = 0; row < len; ++row) {
        Exponent e = exps[static_cast<std::size_t>(row)];
        for (int k = 0; k < n; ++k) {
            if (e[k] == 0) continue;
            const double weight = e[k];
            --e[k];
            for (int j = 0; j < n; ++j) {
                if (a(k, j) == 0.0) continue;
                ++e[j];
                out(row, monomial_rank(e)) += weight * a(k, j);
                --e[j];
            }
            ++e[k];
        }
    }
    return out;
}

/// Coefficients on v^[i] rewritten as coefficients on v^(i): K = P M_i.
inline Eigen::MatrixXd to_full(const Eigen::MatrixXd& reduced_coeffs, int n, int i) {
    const auto& cp = conversion_pair(n, i);
    if (reduced_coeffs.cols() != cp.M.rows()) throw DimensionError("to_full: column count mismatch");
    return reduced_coeffs * cp.M;
}

/// Coefficients on v^(i) collapsed onto v^[i]: P = K N_i.
inline Eigen::MatrixXd to_reduced(const Eigen::MatrixXd& full_coeffs, int n, int i) {
    const auto& cp = conversion_pair(n, i);
    if (full_coeffs.cols() != cp.N.rows()) throw DimensionError("to_reduced: column count mismatch");
    return full_coeffs * cp.N;
}

/// Row-side merge: M_i^r K, used when rows index a full power of an r-vector.
inline Eigen::MatrixXd merge_rows(const Eigen::MatrixXd& k, int r, int i) {
    const auto& cp = conversion_pair(r, i);
    if (k.rows() != cp.M.cols()) throw DimensionError("merge_rows: row count mismatch");
    return cp.M * k;
}

/// Degree-(a+b) coefficients of (P v^[a]) (x) (Q v^[b]) in the variables v (length sigma):
/// (P M_a (x) Q M_b) N_(a+b).
inline Eigen::MatrixXd product_coeffs(const Eigen::MatrixXd& p, int a, const Eigen::MatrixXd& q, int b, int sigma) {
    Eigen::MatrixXd left = a == 0 ? p : to_full(p, sigma, a);
    Eigen::MatrixXd right = b == 0 ? q : to_full(q, sigma, b);
    if (a + b == 0) return kron(left, right);
    const double entries = static_cast<double>(left.rows() * right.rows()) *
                           static_cast<double>(full_length(sigma, a + b));
    if (entries > kMaxEntries) throw SizeLimitError("product_coeffs: intermediate exceeds the cap of 1e7 entries");
    return to_reduced(kron(left, right), sigma, a + b);
}

}  // namespace cmid::kron
