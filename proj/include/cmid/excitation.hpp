#pragma once

// Oscillator-driven excitation: v' = S v with S = blkdiag(0, [[0,w1],[-w1,0]], ...),
// u = sum_l U_l v^[l].

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cmid/kron.hpp"
#include "cmid/linalg.hpp"

namespace cmid {

struct ExcitationSpec {
    std::vector<double> frequencies;            ///< rad/s, strictly increasing, positive
    std::vector<MatrixXd> U;                    ///< U[l-1] is m x delta_l
    std::vector<VectorXd> initial_conditions;  ///< each of length sigma

    int q() const { return static_cast<int>(frequencies.size()); }
    int sigma() const { return 2 * q() + 1; }
    int m() const { return U.empty() ? 0 : static_cast<int>(U.front().rows()); }
    int input_degree() const { return static_cast<int>(U.size()); }

    /// Throws on bad frequencies or coefficient shapes.
    void validate() const {
        if (frequencies.empty()) throw ConfigError("excitation.frequencies", "at least one frequency is required");
        for (std::size_t k = 0; k < frequencies.size(); ++k) {
            if (!(frequencies[k] > 0.0)) throw ConfigError("excitation.frequencies", "frequencies must be positive");
            if (k > 0 && !(frequencies[k] > frequencies[k - 1]))
                throw ConfigError("excitation.frequencies", "frequencies must be strictly increasing (no duplicates)");
        }
        for (std::size_t l = 0; l < U.size(); ++l) {
            if (U[l].rows() != U.front().rows()) throw ConfigError("excitation.U", "all U_l must have m rows");
            const auto want = static_cast<Index>(kron::reduced_length(sigma(), static_cast<int>(l) + 1));
            if (U[l].cols() != want)
                throw ConfigError("excitation.U", "U_" + std::to_string(l + 1) + " needs " + std::to_string(want) + " columns");
        }
        for (const auto& v0 : initial_conditions)
            if (v0.size() != sigma()) throw ConfigError("excitation.initial_conditions", "wrong length");
    }
};

inline MatrixXd build_S(const std::vector<double>& frequencies) {
    ExcitationSpec probe;
    probe.frequencies = frequencies;
    probe.validate();
    const int q = probe.q();
    MatrixXd s = MatrixXd::Zero(2 * q + 1, 2 * q + 1);
    for (int i = 0; i < q; ++i) {
        s(1 + 2 * i, 2 + 2 * i) = frequencies[static_cast<std::size_t>(i)];
        s(2 + 2 * i, 1 + 2 * i) = -frequencies[static_cast<std::size_t>(i)];
    }
    return s;
}

inline MatrixXd build_S(const ExcitationSpec& spec) { return build_S(spec.frequencies); }

/// Closed-form exp(S t) v0.
inline VectorXd eval_v(const std::vector<double>& frequencies, const VectorXd& v0, double t) {
    const auto q = static_cast<Index>(frequencies.size());
    if (v0.size() != 2 * q + 1) throw DimensionError("eval_v: v0 has the wrong length");
    VectorXd v(v0.size());
    v(0) = v0(0);
    for (Index i = 0; i < q; ++i) {
        const double c = std::cos(frequencies[static_cast<std::size_t>(i)] * t);
        const double s = std::sin(frequencies[static_cast<std::size_t>(i)] * t);
        const Index a = 1 + 2 * i;
        v(a) = c * v0(a) + s * v0(a + 1);
        v(a + 1) = -s * v0(a) + c * v0(a + 1);
    }
    return v;
}

inline VectorXd eval_v(const ExcitationSpec& spec, const VectorXd& v0, double t) {
    return eval_v(spec.frequencies, v0, t);
}

inline VectorXd eval_u(const ExcitationSpec& spec, const VectorXd& v) {
    if (v.size() != spec.sigma()) throw DimensionError("eval_u: v has the wrong length");
    VectorXd u = VectorXd::Zero(spec.m());
    for (std::size_t l = 0; l < spec.U.size(); ++l) {
        if (spec.U[l].isZero(0.0)) continue;
        u.noalias() += spec.U[l] * kron::reduced_power(v, static_cast<int>(l) + 1);
    }
    return u;
}

/// Input callable for simulate() that follows the trajectory started at v0.
inline auto make_input(const ExcitationSpec& spec, const VectorXd& v0) {
    return [spec, v0](double t, VectorXd& u) { u = eval_u(spec, eval_v(spec, v0, t)); };
}

/// K seeded Gaussian vectors scaled by `amplitude` per coordinate.
inline std::vector<VectorXd> random_initial_conditions(int sigma, int count, std::uint64_t seed, double amplitude = 1.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x76u};
    std::mt19937_64 gen(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        VectorXd v(sigma);
        for (int i = 0; i < sigma; ++i) v(i) = amplitude * normal(gen);
        out.push_back(std::move(v));
    }
    return out;
}

/// U_1 of the benchmark: 0.05 * [0, 1,0, 2,0, 4,0, 8,0, 16,0] (constant coordinate first).
inline MatrixXd example_U1() {
    MatrixXd u1 = MatrixXd::Zero(1, 11);
    for (int i = 0; i < 5; ++i) u1(0, 1 + 2 * i) = 0.05 * std::pow(2.0, i);
    return u1;
}

inline std::vector<double> example_frequencies() { return {0.13, 0.79, 2.65, 7.81, 18.37}; }

}  // namespace cmid
