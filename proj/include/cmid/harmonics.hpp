#pragma once

// Polynomial harmonic coefficients: u ~ sum_l U_l v^[l], y ~ sum_l Y_l v^[l] for the
// steady-state response, either fitted from samples or computed exactly from a model.

#include <Eigen/QR>

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cmid/excitation.hpp"
#include "cmid/fds.hpp"
#include "cmid/kron.hpp"
#include "cmid/model.hpp"
#include "cmid/spectral.hpp"

namespace cmid {

/// One sampled record. Columns are samples.
struct SampleRecord {
    std::vector<double> t;
    MatrixXd V;  ///< sigma x K, exact oscillator state
    MatrixXd U;  ///< m x K
    MatrixXd Y;  ///< p x K
};

struct HarmonicData {
    int order = 0;            ///< L_e
    std::vector<MatrixXd> U;  ///< U[l-1]: m x delta_l
    std::vector<MatrixXd> Y;  ///< Y[l-1]: p x delta_l
    double condition_number = 1.0;
    Index samples_used = 0;

    const MatrixXd& Ul(int l) const { return U.at(static_cast<std::size_t>(l - 1)); }
    const MatrixXd& Yl(int l) const { return Y.at(static_cast<std::size_t>(l - 1)); }
};

struct ExtractOptions {
    /// Samples earlier than record start + discard are dropped. Unset: drop the first 20% of each record.
    std::optional<double> discard_seconds;
    double discard_fraction = 0.2;
    double condition_threshold = 1e10;
};

/// Reduced-power regressor over retained samples, factorized once and reused for
/// every right-hand side (noise realizations share v).
class HarmonicRegressor {
public:
    HarmonicRegressor(const std::vector<SampleRecord>& records, int order, const ExtractOptions& opt = {})
        : order_(order) {
        if (order < 1) throw DimensionError("HarmonicRegressor: order must be >= 1");
        if (records.empty()) throw DimensionError("HarmonicRegressor: no records");
        sigma_ = static_cast<int>(records.front().V.rows());
        for (int l = 1; l <= order; ++l) widths_.push_back(static_cast<Index>(kron::reduced_length(sigma_, l)));
        Index cols = 0;
        for (Index w : widths_) cols += w;

        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto& rec = records[r];
            if (rec.V.rows() != sigma_) throw DimensionError("HarmonicRegressor: records disagree on sigma");
            const auto k = static_cast<Index>(rec.t.size());
            if (rec.V.cols() != k) throw DimensionError("HarmonicRegressor: V and t lengths differ");
            Index first = 0;
            if (k > 0) {
                if (opt.discard_seconds) {
                    while (first < k && rec.t[static_cast<std::size_t>(first)] < rec.t.front() + *opt.discard_seconds - 1e-12) ++first;
                } else {
                    first = static_cast<Index>(std::ceil(opt.discard_fraction * static_cast<double>(k) - 1e-12));
                }
            }
            for (Index s = first; s < k; ++s) kept_.emplace_back(r, s);
        }
        const auto n = static_cast<Index>(kept_.size());
        if (n < cols)
            throw DimensionError("HarmonicRegressor: " + std::to_string(n) + " samples for " + std::to_string(cols) +
                                 " coefficients");
        MatrixXd phi(n, cols);
        for (Index i = 0; i < n; ++i) {
            const auto& [r, s] = kept_[static_cast<std::size_t>(i)];
            phi.row(i) = kron::stacked_reduced_powers(records[r].V.col(s), order).transpose();
        }
        qr_.compute(phi);

        // condition number of each leading degree block, read off the triangular factor
        const MatrixXd rfac = qr_.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        Index upto = 0;
        for (int l = 1; l <= order; ++l) {
            upto += widths_[static_cast<std::size_t>(l - 1)];
            const VectorXd s = singular_values(rfac.topLeftCorner(upto, upto));
            const double cond = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
            block_condition_.push_back(cond);
            if (!(cond <= opt.condition_threshold))
                throw NumericalError("harmonic regressor is rank deficient in the degree-" + std::to_string(l) +
                                     " block (condition number " + std::to_string(cond) + ")");
        }
        condition_ = block_condition_.back();
    }

    int order() const { return order_; }
    double condition_number() const { return condition_; }
    const std::vector<double>& block_condition_numbers() const { return block_condition_; }
    Index samples() const { return static_cast<Index>(kept_.size()); }

    /// Fits both channels groups; columns of the inputs are the records' samples.
    HarmonicData fit(const std::vector<SampleRecord>& records) const {
        const auto n = samples();
        const Index m = records.front().U.rows(), p = records.front().Y.rows();
        MatrixXd rhs(n, m + p);
        for (Index i = 0; i < n; ++i) {
            const auto& [r, s] = kept_[static_cast<std::size_t>(i)];
            rhs.row(i).head(m) = records[r].U.col(s).transpose();
            rhs.row(i).tail(p) = records[r].Y.col(s).transpose();
        }
        const MatrixXd coef = qr_.solve(rhs);  // (sum delta) x (m + p)
        HarmonicData hd;
        hd.order = order_;
        hd.condition_number = condition_;
        hd.samples_used = n;
        Index off = 0;
        for (Index w : widths_) {
            hd.U.push_back(coef.block(off, 0, w, m).transpose());
            hd.Y.push_back(coef.block(off, m, w, p).transpose());
            off += w;
        }
        return hd;
    }

private:
    int order_;
    int sigma_ = 0;
    std::vector<Index> widths_;
    std::vector<std::pair<std::size_t, Index>> kept_;
    Eigen::HouseholderQR<MatrixXd> qr_;
    double condition_ = 0.0;
    std::vector<double> block_condition_;
};

/// Joint least-squares fit over all retained samples of all records.
inline HarmonicData extract(const std::vector<SampleRecord>& records, int order, const ExtractOptions& opt = {}) {
    return HarmonicRegressor(records, order, opt).fit(records);
}

// ---- power-series helpers: a series P holds coefficient blocks P[l] on v^[l], P[0] on the constant ----

using Series = std::vector<MatrixXd>;

/// Degree-l coefficient of the full Kronecker power P(v)^(i); P[0] must vanish.
inline MatrixXd series_kron_power(const Series& p, int i, int l, int sigma) {
    const Index rows = p.at(1).rows();
    if (i == 0) return l == 0 ? MatrixXd::Ones(1, 1) : MatrixXd::Zero(1, static_cast<Index>(kron::reduced_length(sigma, l)));
    const auto width = static_cast<Index>(kron::reduced_length(sigma, l));
    if (l < i) return MatrixXd::Zero(static_cast<Index>(kron::full_length(static_cast<int>(rows), i)), width);
    if (i == 1) return l < static_cast<int>(p.size()) ? p[static_cast<std::size_t>(l)] : MatrixXd::Zero(rows, width);
    MatrixXd acc;
    for (int a = 1; a <= l - (i - 1); ++a) {
        if (a >= static_cast<int>(p.size())) break;
        const MatrixXd rest = series_kron_power(p, i - 1, l - a, sigma);
        const MatrixXd term = kron::product_coeffs(p[static_cast<std::size_t>(a)], a, rest, l - a, sigma);
        acc = acc.size() == 0 ? term : MatrixXd(acc + term);
    }
    if (acc.size() == 0) acc = MatrixXd::Zero(static_cast<Index>(kron::full_length(static_cast<int>(rows), i)), width);
    return acc;
}

/// Degree-l coefficient of the reduced power P(v)^[i].
inline MatrixXd series_reduced_power(const Series& p, int i, int l, int sigma) {
    const MatrixXd full = series_kron_power(p, i, l, sigma);
    if (i <= 1) return full;
    return kron::merge_rows(full, static_cast<int>(p.at(1).rows()), i);
}

/// Degree-l coefficient of the system term x^[i] (x) u^[r].
inline MatrixXd series_term(const Series& x, int i, const Series& u, int r, int l, int sigma) {
    MatrixXd acc;
    for (int a = i; a <= l - r; ++a) {
        const MatrixXd left = series_reduced_power(x, i, a, sigma);
        const MatrixXd right = series_reduced_power(u, r, l - a, sigma);
        const MatrixXd term = kron::product_coeffs(left, a, right, l - a, sigma);
        acc = acc.size() == 0 ? term : MatrixXd(acc + term);
    }
    return acc;
}

/// Exact steady-state coefficients of a model driven by the excitation, degrees 1..order.
/// X_l solves X_l S^<l> = A X_l + (all other terms at degree l), which depend on X_1..X_{l-1} only.
inline std::vector<MatrixXd> exact_state_coefficients(const PolynomialSystem& sys, const std::vector<MatrixXd>& input_coeffs,
                                                      const OscillatorBank& bank, int order) {
    const int sigma = bank.sigma();
    Series x(1, MatrixXd()), u(1, MatrixXd());
    for (int l = 1; l <= order; ++l) {
        const auto width = static_cast<Index>(kron::reduced_length(sigma, l));
        u.push_back(l <= static_cast<int>(input_coeffs.size()) ? input_coeffs[static_cast<std::size_t>(l - 1)]
                                                               : MatrixXd::Zero(sys.m(), width));
    }
    const MatrixXd a = sys.A();
    for (int l = 1; l <= order; ++l) {
        const auto width = static_cast<Index>(kron::reduced_length(sigma, l));
        x.push_back(MatrixXd::Zero(sys.n(), width));  // placeholder: degree-l state terms enter only through A
        MatrixXd rhs = MatrixXd::Zero(sys.n(), width);
        for (const auto& [key, f] : sys.F_blocks()) {
            if (key == PolynomialSystem::Key{1, 0}) continue;
            if (key.first + key.second > l) continue;
            rhs += f * series_term(x, key.first, u, key.second, l, sigma);
        }
        x[static_cast<std::size_t>(l)] = fds::solve_sylvester(a, rhs, *bank.degree(l));
    }
    x.erase(x.begin());
    return x;
}

/// Exact (U_l, Y_l) of the steady-state response, l = 1..order.
inline HarmonicData exact_coefficients(const PolynomialSystem& sys, const ExcitationSpec& spec, const OscillatorBank& bank,
                                       int order) {
    const int sigma = bank.sigma();
    const auto xs = exact_state_coefficients(sys, spec.U, bank, order);
    Series x(1, MatrixXd()), u(1, MatrixXd());
    for (int l = 1; l <= order; ++l) {
        x.push_back(xs[static_cast<std::size_t>(l - 1)]);
        const auto width = static_cast<Index>(kron::reduced_length(sigma, l));
        u.push_back(l <= static_cast<int>(spec.U.size()) ? spec.U[static_cast<std::size_t>(l - 1)] : MatrixXd::Zero(sys.m(), width));
    }
    HarmonicData hd;
    hd.order = order;
    hd.condition_number = 1.0;
    for (int l = 1; l <= order; ++l) {
        const auto width = static_cast<Index>(kron::reduced_length(sigma, l));
        MatrixXd y = MatrixXd::Zero(sys.p(), width);
        for (const auto& [key, h] : sys.H_blocks())
            if (key.first + key.second <= l) y += h * series_term(x, key.first, u, key.second, l, sigma);
        hd.U.push_back(u[static_cast<std::size_t>(l)]);
        hd.Y.push_back(y);
    }
    return hd;
}

// ---- JSON ----

inline json harmonics_to_json(const HarmonicData& hd) {
    json j;
    j["order"] = hd.order;
    j["condition_number"] = hd.condition_number;
    j["samples_used"] = hd.samples_used;
    j["U"] = json::array();
    j["Y"] = json::array();
    for (const auto& u : hd.U) j["U"].push_back(matrix_to_json(u));
    for (const auto& y : hd.Y) j["Y"].push_back(matrix_to_json(y));
    return j;
}

inline HarmonicData harmonics_from_json(const json& j) {
    HarmonicData hd;
    if (!j.contains("order") || !j.contains("U") || !j.contains("Y")) throw ConfigError("harmonics", "needs order, U and Y");
    hd.order = j["order"].get<int>();
    hd.condition_number = j.value("condition_number", 1.0);
    hd.samples_used = j.value("samples_used", Index{0});
    for (std::size_t l = 0; l < j["U"].size(); ++l) hd.U.push_back(matrix_from_json(j["U"][l], "harmonics.U"));
    for (std::size_t l = 0; l < j["Y"].size(); ++l) hd.Y.push_back(matrix_from_json(j["Y"][l], "harmonics.Y"));
    if (static_cast<int>(hd.U.size()) != hd.order || static_cast<int>(hd.Y.size()) != hd.order)
        throw ConfigError("harmonics", "U and Y need one block per degree");
    return hd;
}

}  // namespace cmid
