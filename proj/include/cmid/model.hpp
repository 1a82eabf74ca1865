#pragma once

// Polynomial state-space systems
//   x' = sum F_{i,r} (x^[i] (x) u^[r]),   y = sum H_{i,r} (x^[i] (x) u^[r]),   1 <= i + r <= L,
// and their fixed-step RK4 simulation.

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmid/kron.hpp"
#include "cmid/linalg.hpp"

namespace cmid {

class PolynomialSystem {
public:
    using Key = std::pair<int, int>;  // (state degree i, input degree r)

    PolynomialSystem() = default;
    PolynomialSystem(int n, int m, int p, int L) : n_(n), m_(m), p_(p), L_(L) {
        if (n < 1 || m < 1 || p < 1 || L < 1) throw DimensionError("PolynomialSystem: n, m, p, L must be positive");
    }

    int n() const { return n_; }
    int m() const { return m_; }
    int p() const { return p_; }
    int L() const { return L_; }

    /// s_{i,r} = C(n+i-1, i) C(m+r-1, r)
    Index columns(int i, int r) const {
        return static_cast<Index>(kron::reduced_length(n_, i) * kron::reduced_length(m_, r));
    }

    void set_F(int i, int r, const MatrixXd& f) { set(F_, i, r, f, n_, "F"); }
    void set_H(int i, int r, const MatrixXd& h) { set(H_, i, r, h, p_, "H"); }

    /// Stored block or a zero matrix of the right shape.
    MatrixXd F(int i, int r) const { return get(F_, i, r, n_); }
    MatrixXd H(int i, int r) const { return get(H_, i, r, p_); }

    MatrixXd A() const { return F(1, 0); }
    MatrixXd B() const { return F(0, 1); }
    MatrixXd C() const { return H(1, 0); }
    MatrixXd D() const { return H(0, 1); }

    const std::map<Key, MatrixXd>& F_blocks() const { return F_; }
    const std::map<Key, MatrixXd>& H_blocks() const { return H_; }

private:
    void check_key(int i, int r) const {
        if (i < 0 || r < 0 || i + r < 1 || i + r > L_)
            throw DimensionError("PolynomialSystem: block (" + std::to_string(i) + "," + std::to_string(r) +
                                 ") outside 1 <= i+r <= L");
    }
    void set(std::map<Key, MatrixXd>& map, int i, int r, const MatrixXd& mat, int rows, const char* name) {
        check_key(i, r);
        if (mat.rows() != rows || mat.cols() != columns(i, r))
            throw DimensionError(std::string(name) + "(" + std::to_string(i) + "," + std::to_string(r) + ") must be " +
                                 std::to_string(rows) + "x" + std::to_string(columns(i, r)));
        map[{i, r}] = mat;
    }
    MatrixXd get(const std::map<Key, MatrixXd>& map, int i, int r, int rows) const {
        check_key(i, r);
        auto it = map.find({i, r});
        return it == map.end() ? MatrixXd::Zero(rows, columns(i, r)) : it->second;
    }

    int n_ = 0, m_ = 0, p_ = 0, L_ = 0;
    std::map<Key, MatrixXd> F_, H_;
};

/// Sum over the stored blocks of coef * (x^[i] (x) u^[r]).
inline VectorXd eval_blocks(const std::map<PolynomialSystem::Key, MatrixXd>& blocks, Index rows, const VectorXd& x,
                            const VectorXd& u) {
    VectorXd out = VectorXd::Zero(rows);
    for (const auto& [key, coef] : blocks) {
        const VectorXd xp = kron::reduced_power(x, key.first);
        const VectorXd up = kron::reduced_power(u, key.second);
        out.noalias() += coef * kron::kron(xp, up);
    }
    return out;
}

inline VectorXd eval_f(const PolynomialSystem& sys, const VectorXd& x, const VectorXd& u) {
    if (x.size() != sys.n() || u.size() != sys.m()) throw DimensionError("eval_f: x or u has the wrong length");
    return eval_blocks(sys.F_blocks(), sys.n(), x, u);
}

inline VectorXd eval_h(const PolynomialSystem& sys, const VectorXd& x, const VectorXd& u) {
    if (x.size() != sys.n() || u.size() != sys.m()) throw DimensionError("eval_h: x or u has the wrong length");
    return eval_blocks(sys.H_blocks(), sys.p(), x, u);
}

/// Flattened term list for allocation-free evaluation inside the integrator.
class CompiledPolynomial {
public:
    CompiledPolynomial(const std::map<PolynomialSystem::Key, MatrixXd>& blocks, int n, int m, Index rows)
        : n_(n), m_(m), rows_(rows) {
        for (const auto& [key, coef] : blocks) {
            const auto& tx = kron::index_table(n, key.first);
            const auto& tu = kron::index_table(m, key.second);
            const auto ulen = static_cast<Index>(tu.reduced_size());
            for (Index c = 0; c < coef.cols(); ++c) {
                if (coef.col(c).isZero(0.0)) continue;
                Term t;
                t.x_exp = tx.exponents[static_cast<std::size_t>(c / ulen)];
                t.u_exp = tu.exponents[static_cast<std::size_t>(c % ulen)];
                t.coef = coef.col(c);
                terms_.push_back(std::move(t));
            }
        }
    }

    void eval(const VectorXd& x, const VectorXd& u, VectorXd& out) const {
        out.setZero(rows_);
        for (const auto& t : terms_) {
            double value = 1.0;
            for (int k = 0; k < n_; ++k)
                for (int e = 0; e < t.x_exp[k]; ++e) value *= x(k);
            for (int k = 0; k < m_; ++k)
                for (int e = 0; e < t.u_exp[k]; ++e) value *= u(k);
            out.noalias() += value * t.coef;
        }
    }

private:
    struct Term {
        kron::Exponent x_exp, u_exp;
        VectorXd coef;
    };
    int n_, m_;
    Index rows_;
    std::vector<Term> terms_;
};

struct AssumptionReport {
    bool hurwitz = false;
    double spectral_abscissa = 0.0;
    bool observable = false;
    int observability_rank = 0;
    bool extended_controllable = false;
    int controllability_rank = 0;
    int linear_controllability_rank = 0;
    bool n_upper_bound_ok = true;
};

inline int controllability_rank(const MatrixXd& a, const MatrixXd& g, double tol = 1e-9) {
    const Index n = a.rows();
    if (g.cols() == 0) return 0;
    std::vector<MatrixXd> blocks{g};
    for (Index k = 1; k < n; ++k) blocks.push_back(a * blocks.back());
    return numerical_rank(hcat(blocks), tol);
}

inline int observability_rank(const MatrixXd& c, const MatrixXd& a, double tol = 1e-9) {
    const Index n = a.rows();
    std::vector<MatrixXd> blocks{c};
    for (Index k = 1; k < n; ++k) blocks.push_back(blocks.back() * a);
    return numerical_rank(vcat(blocks), tol);
}

/// Evaluates the standing assumptions: A Hurwitz, (C, A) observable,
/// (A, [B, F_2, ..., F_L]) controllable, and n <= n_bar when a bound is given.
inline AssumptionReport check_assumptions(const PolynomialSystem& sys, std::optional<int> n_bar = std::nullopt) {
    constexpr double tol = 1e-9;
    AssumptionReport rep;
    const MatrixXd a = sys.A();
    rep.spectral_abscissa = spectral_abscissa(a);
    rep.hurwitz = rep.spectral_abscissa < -tol;
    rep.observability_rank = observability_rank(sys.C(), a, tol);
    rep.observable = rep.observability_rank == sys.n();
    std::vector<MatrixXd> g{sys.B()};
    for (const auto& [key, f] : sys.F_blocks())
        if (key.first + key.second >= 2) g.push_back(f);
    rep.linear_controllability_rank = controllability_rank(a, sys.B(), tol);
    rep.controllability_rank = controllability_rank(a, hcat(g), tol);
    rep.extended_controllable = rep.controllability_rank == sys.n();
    if (n_bar) rep.n_upper_bound_ok = sys.n() <= *n_bar;
    return rep;
}

struct Trajectory {
    std::vector<double> t;
    MatrixXd X;  ///< n x K
    MatrixXd Y;  ///< p x K
    MatrixXd U;  ///< m x K
};

/// Writes u(t) into its second argument (already sized m).
using InputFunction = std::function<void(double, VectorXd&)>;

struct SimulationOptions {
    double t_end = 10.0;
    double dt_int = 1e-3;
    double dt_sample = 1e-2;
    /// samples strictly before this time are not stored
    double sample_from = 0.0;
};

/// Fixed-step classical RK4 of x' = f(x, u(t)); samples every dt_sample, y_k = h(x_k, u_k).
inline Trajectory simulate(const PolynomialSystem& sys, const InputFunction& input, const VectorXd& x0,
                           const SimulationOptions& opt) {
    if (x0.size() != sys.n()) throw DimensionError("simulate: x0 has the wrong length");
    if (!(opt.t_end > 0.0)) throw DimensionError("simulate: t_end must be positive");
    if (!(opt.dt_int > 0.0) || !(opt.dt_sample > 0.0)) throw DimensionError("simulate: steps must be positive");
    const double ratio = opt.dt_sample / opt.dt_int;
    const auto per_sample = static_cast<long long>(std::llround(ratio));
    if (per_sample < 1 || std::abs(ratio - static_cast<double>(per_sample)) > 1e-9 * std::max(1.0, ratio))
        throw DimensionError("simulate: dt_int must divide dt_sample");
    const auto n_steps = static_cast<long long>(std::floor(opt.t_end / opt.dt_int + 1e-9));

    const CompiledPolynomial f(sys.F_blocks(), sys.n(), sys.m(), sys.n());
    const CompiledPolynomial h(sys.H_blocks(), sys.n(), sys.m(), sys.p());

    const long long first_sample = static_cast<long long>(std::ceil(opt.sample_from / opt.dt_sample - 1e-9));
    const long long last_sample = n_steps / per_sample;
    const long long n_samples = std::max(0LL, last_sample - std::max(0LL, first_sample) + 1);

    Trajectory traj;
    traj.t.reserve(static_cast<std::size_t>(n_samples));
    traj.X.resize(sys.n(), n_samples);
    traj.Y.resize(sys.p(), n_samples);
    traj.U.resize(sys.m(), n_samples);

    VectorXd x = x0, u0(sys.m()), uh(sys.m()), u1(sys.m());
    VectorXd k1, k2, k3, k4, tmp, y;
    Index col = 0;
    const double dt = opt.dt_int;
    input(0.0, u0);
    for (long long step = 0;; ++step) {
        const double t = static_cast<double>(step) * dt;
        if (step % per_sample == 0 && step / per_sample >= first_sample) {
            h.eval(x, u0, y);
            traj.t.push_back(t);
            traj.X.col(col) = x;
            traj.Y.col(col) = y;
            traj.U.col(col) = u0;
            ++col;
        }
        if (step == n_steps) break;
        input(t + 0.5 * dt, uh);
        input(t + dt, u1);
        f.eval(x, u0, k1);
        tmp = x + 0.5 * dt * k1;
        f.eval(tmp, uh, k2);
        tmp = x + 0.5 * dt * k2;
        f.eval(tmp, uh, k3);
        tmp = x + dt * k3;
        f.eval(tmp, u1, k4);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite()) throw NumericalError("simulate: state diverged at t = " + std::to_string(t + dt));
        std::swap(u0, u1);
    }
    traj.X.conservativeResize(Eigen::NoChange, col);
    traj.Y.conservativeResize(Eigen::NoChange, col);
    traj.U.conservativeResize(Eigen::NoChange, col);
    return traj;
}

// ---- JSON ----

inline json system_to_json(const PolynomialSystem& sys) {
    json j;
    j["n"] = sys.n();
    j["m"] = sys.m();
    j["p"] = sys.p();
    j["L"] = sys.L();
    std::map<PolynomialSystem::Key, json> terms;
    for (const auto& [key, f] : sys.F_blocks()) terms[key]["F"] = matrix_to_json(f);
    for (const auto& [key, h] : sys.H_blocks()) terms[key]["H"] = matrix_to_json(h);
    j["terms"] = json::array();
    for (auto& [key, t] : terms) {
        t["i"] = key.first;
        t["r"] = key.second;
        j["terms"].push_back(t);
    }
    return j;
}

inline PolynomialSystem system_from_json(const json& j) {
    auto get_int = [&](const char* k) {
        if (!j.contains(k) || !j[k].is_number_integer()) throw ConfigError(std::string("system.") + k, "missing or not an integer");
        return j[k].get<int>();
    };
    PolynomialSystem sys(get_int("n"), get_int("m"), get_int("p"), get_int("L"));
    if (!j.contains("terms") || !j["terms"].is_array()) throw ConfigError("system.terms", "missing list of terms");
    for (std::size_t k = 0; k < j["terms"].size(); ++k) {
        const auto& t = j["terms"][k];
        const std::string where = "system.terms[" + std::to_string(k) + "]";
        if (!t.contains("i") || !t.contains("r")) throw ConfigError(where, "needs fields i and r");
        const int i = t["i"].get<int>(), r = t["r"].get<int>();
        try {
            if (t.contains("F")) sys.set_F(i, r, matrix_from_json(t["F"], where + ".F", sys.n(), sys.columns(i, r)));
            if (t.contains("H")) sys.set_H(i, r, matrix_from_json(t["H"], where + ".H", sys.p(), sys.columns(i, r)));
        } catch (const DimensionError& e) {
            throw ConfigError(where, e.what());
        }
    }
    return sys;
}

inline PolynomialSystem load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("system", "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("system", std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return system_from_json(j);
}

/// The second-order benchmark: A = diag(-1,-2), B = [-1; 0], C = diag(-6, 3),
/// F_{2,0} = [[0,0,-5],[0.3,3,0]], all other blocks zero.
inline PolynomialSystem example_system() {
    PolynomialSystem sys(2, 1, 2, 2);
    sys.set_F(1, 0, (MatrixXd(2, 2) << -1, 0, 0, -2).finished());
    sys.set_F(0, 1, (MatrixXd(2, 1) << -1, 0).finished());
    sys.set_F(2, 0, (MatrixXd(2, 3) << 0, 0, -5, 0.3, 3, 0).finished());
    sys.set_H(1, 0, (MatrixXd(2, 2) << -6, 0, 0, 3).finished());
    return sys;
}

}  // namespace cmid
