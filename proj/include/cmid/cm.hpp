#pragma once

// Staged identification of a quadratic system x' = A x + B u + F20 x^[2], y = C x whose
// linear pair (A, B) may be uncontrollable:
//   stage 1  controllable subsystem from (U1, Y1)
//   stage 2  (C, A) from the composite problem driven by U and the squared stage-1 states
//   stage 3  state coefficients X_l (Method I: one problem per degree; Method II: one stacked problem)
//   stage 4  (B, F20) from the stacked problem driven by U and the quadratic state terms

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cmid/fds.hpp"
#include "cmid/harmonics.hpp"
#include "cmid/kron.hpp"
#include "cmid/linalg.hpp"
#include "cmid/spectral.hpp"

namespace cmid {

enum class Method { I, II };

inline std::string to_string(Method m) { return m == Method::I ? "I" : "II"; }

inline Method method_from_string(const std::string& s) {
    if (s == "I" || s == "1") return Method::I;
    if (s == "II" || s == "2") return Method::II;
    throw ConfigError("pipeline.method", "expected I or II, got '" + s + "'");
}

/// Blocks known to vanish. Only D may be released; the stage constructions assume the rest.
struct StructureFlags {
    bool d_zero = true;
    bool f11_zero = true;
    bool f02_zero = true;
    bool h2_zero = true;
};

struct PipelineConfig {
    Method method = Method::I;
    int order_bound = 3;
    int L = 2;
    int L_e = 4;
    double pe_threshold = 1e8;
    double pe_floor = 1e-12;
    bool enforce_pe = true;
    StructureFlags structure;
    fds::SubspaceOptions subspace;
    fds::InputOptions input;

    void validate() const {
        if (L != 2) throw ConfigError("pipeline.L", "only quadratic systems (L = 2) are supported");
        if (L_e < 2 * L) throw ConfigError("pipeline.L_e", "needs L_e >= 2 L");
        if (order_bound < 1) throw ConfigError("pipeline.order_bound", "must be positive");
        if (!structure.f11_zero || !structure.f02_zero || !structure.h2_zero)
            throw ConfigError("pipeline.structure", "F11, F02 and H2 must be known zero");
        if (!(pe_threshold > 1.0)) throw ConfigError("pipeline.pe_threshold", "must exceed 1");
    }
};

struct PeCheck {
    bool pass = false;
    double condition_number = std::numeric_limits<double>::infinity();
    double smallest_singular_value = 0.0;
    int required_rank = 0;
    VectorXd singular_values;
};

/// Excitation surrogate: the leading `required_rank` singular values of the regressor must
/// span at most `threshold` and stay above `floor`. required_rank < 0 means full row rank.
inline PeCheck check_pe(const MatrixXd& regressor, double threshold = 1e8, double floor = 1e-12, int required_rank = -1) {
    PeCheck pc;
    pc.required_rank = required_rank < 0 ? static_cast<int>(regressor.rows()) : required_rank;
    pc.singular_values = singular_values(regressor);
    if (pc.required_rank == 0) {
        pc.pass = true;
        pc.condition_number = 1.0;
        return pc;
    }
    if (pc.singular_values.size() < pc.required_rank || pc.singular_values(0) <= 0.0) return pc;
    pc.smallest_singular_value = pc.singular_values(pc.required_rank - 1);
    pc.condition_number = pc.smallest_singular_value > 0 ? pc.singular_values(0) / pc.smallest_singular_value
                                                         : std::numeric_limits<double>::infinity();
    pc.pass = pc.condition_number <= threshold && pc.smallest_singular_value >= floor;
    return pc;
}

struct StageOneResult {
    int n1c = 0;
    MatrixXd A1c, B1c, C1c;
    /// Xc[l-1]: controllable-part state coefficients of degree l (degree 1 from stage 1,
    /// higher degrees filled by the Method II cascade)
    std::vector<MatrixXd> Xc;
    std::vector<int> orders;  ///< order found for each entry of Xc
    VectorXd singular_values;
    double gap_ratio = 0.0;
    bool gap_warning = false;
};

/// Input/output data of one Sylvester problem over a stacked basis.
struct StackedProblem {
    MatrixXd U;
    MatrixXd Y;
    BasisPtr basis;
};

struct PipelineDiagnostics {
    VectorXd stage1_singular_values;
    double stage1_gap_ratio = 0.0;
    bool stage1_gap_warning = false;
    VectorXd stage2_singular_values;
    double stage2_gap_ratio = 0.0;
    bool stage2_gap_warning = false;
    std::map<std::string, PeCheck> pe;
    std::vector<int> cascade_orders;
    int stage4_rank = 0;
    Index stage4_unknowns = 0;
    bool all_gates_passed = true;
};

struct IdentifiedModel {
    Method method = Method::I;
    int n = 0;
    int n1c = 0;
    MatrixXd A, B, C, D, F20;
    std::vector<MatrixXd> X;  ///< X[l-1]: n x delta_l
    PipelineDiagnostics diagnostics;
};

using CheckpointFn = std::function<void(const std::string& stage, const json& payload)>;

// ---- stage 1 ----

inline StageOneResult stage1(const HarmonicData& hd, const OscillatorBank& bank, const PipelineConfig& cfg) {
    fds::SylvesterProblem prob{hd.Ul(1), hd.Yl(1), bank.degree(1), cfg.order_bound};
    const auto sub = fds::algorithm1(prob, cfg.subspace);
    fds::StructureMask mask;
    if (!cfg.structure.d_zero) mask.free_D.assign(static_cast<std::size_t>(prob.U.rows()), true);
    const auto est = fds::algorithm2(prob, sub.A, sub.C, mask, cfg.input);
    StageOneResult s1;
    s1.n1c = sub.order;
    s1.A1c = sub.A;
    s1.B1c = est.B;
    s1.C1c = sub.C;
    s1.Xc = {est.X};
    s1.orders = {sub.order};
    s1.singular_values = sub.singular_values;
    s1.gap_ratio = sub.gap_ratio;
    s1.gap_warning = sub.gap_warning;
    return s1;
}

/// Zero-pads the rows of x to `rows`.
inline MatrixXd pad_rows(const MatrixXd& x, Index rows) {
    if (x.rows() > rows) throw DimensionError("pad_rows: more rows than the order bound");
    MatrixXd out = MatrixXd::Zero(rows, x.cols());
    out.topRows(x.rows()) = x;
    return out;
}

/// Degree-l quadratic block of the controllable-part coefficients, each padded to n_bar rows:
/// for every split l = a + b, (P_a M_a (x) P_b M_b) N_l, with the a = b term row-merged by M_2.
/// l = 2 gives M_2 (P_1 (x) P_1) N_2.
inline MatrixXd controllable_block(const std::vector<MatrixXd>& xc, int l, int n_bar, int sigma) {
    if (static_cast<int>(xc.size()) < l - 1) throw DimensionError("controllable_block: missing lower-degree coefficients");
    std::vector<MatrixXd> rows;
    for (int a = 1; a < l; ++a) {
        const int b = l - a;
        const MatrixXd pa = pad_rows(xc[static_cast<std::size_t>(a - 1)], n_bar);
        const MatrixXd pb = pad_rows(xc[static_cast<std::size_t>(b - 1)], n_bar);
        MatrixXd term = kron::product_coeffs(pa, a, pb, b, sigma);
        if (a == b) term = kron::merge_rows(term, n_bar, 2);
        rows.push_back(std::move(term));
    }
    return vcat(rows);
}

/// Places `blocks` (one per degree, possibly empty) side by side, zero-filling degrees without data.
inline MatrixXd block_row(const std::vector<MatrixXd>& blocks, const std::vector<Index>& widths, Index rows) {
    std::vector<MatrixXd> cols;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        if (l < blocks.size() && blocks[l].size() > 0) cols.push_back(blocks[l]);
        else cols.push_back(MatrixXd::Zero(rows, widths[l]));
    }
    return hcat(cols);
}

inline MatrixXd stacked_outputs(const HarmonicData& hd, int upto) {
    std::vector<MatrixXd> ys;
    for (int l = 1; l <= upto; ++l) ys.push_back(hd.Yl(l));
    return hcat(ys);
}

inline MatrixXd stacked_inputs(const HarmonicData& hd, int upto) {
    std::vector<MatrixXd> us;
    for (int l = 1; l <= upto; ++l) us.push_back(hd.Ul(l));
    return hcat(us);
}

/// [[U1, U2, ..., U_upto], [0, V_2, 0, ...], ..., [0, ..., V_upto]] with V_l = controllable_block(l).
inline MatrixXd stacked_controllable_regressor(const StageOneResult& s1, const HarmonicData& hd, int n_bar, int upto,
                                               const OscillatorBank& bank) {
    const auto widths = bank.widths(upto);
    std::vector<MatrixXd> rows{stacked_inputs(hd, upto)};
    for (int l = 2; l <= upto; ++l) {
        const MatrixXd v = controllable_block(s1.Xc, l, n_bar, bank.sigma());
        std::vector<MatrixXd> blocks(widths.size());
        blocks[static_cast<std::size_t>(l - 1)] = v;
        rows.push_back(block_row(blocks, widths, v.rows()));
    }
    return vcat(rows);
}

/// Composite stage-2 problem: V''_2 = [[U1, U2], [0, V_2]], outputs [Y1, Y2], S = blkdiag(S, S^<2>).
inline StackedProblem build_V2(const StageOneResult& s1, const HarmonicData& hd, int n_bar, const OscillatorBank& bank) {
    return {stacked_controllable_regressor(s1, hd, n_bar, 2, bank), stacked_outputs(hd, 2), bank.stacked(2)};
}

inline fds::SubspaceResult stage2(const StackedProblem& prob, const PipelineConfig& cfg) {
    return fds::algorithm1({prob.U, prob.Y, prob.basis, cfg.order_bound}, cfg.subspace);
}

// ---- quadratic terms of the identified states ----

struct ZBlocks {
    MatrixXd z20;  ///< M_2^n sum_{a+b=l} (X_a M_a (x) X_b M_b) N_l
    MatrixXd z11;  ///< sum_{a+b=l} (X_a M_a (x) U_b M_b) N_l
    MatrixXd z02;  ///< M_2^m sum_{a+b=l} (U_a M_a (x) U_b M_b) N_l
};

/// Degree-l coefficients of x^[2], x (x) u and u^[2] given X_1..X_{l-1} and the input harmonics.
inline ZBlocks build_Z(const HarmonicData& hd, const std::vector<MatrixXd>& x, int l, int sigma) {
    if (l < 2) throw DimensionError("build_Z: degree must be >= 2");
    if (static_cast<int>(x.size()) < l - 1) throw DimensionError("build_Z: state coefficients up to degree " + std::to_string(l - 1) + " are required");
    const Index n = x.front().rows();
    const Index m = hd.Ul(1).rows();
    MatrixXd xx, xu, uu;
    auto add = [](MatrixXd& acc, const MatrixXd& term) { acc = acc.size() == 0 ? term : MatrixXd(acc + term); };
    for (int a = 1; a < l; ++a) {
        const int b = l - a;
        const MatrixXd& xa = x[static_cast<std::size_t>(a - 1)];
        const MatrixXd& xb = x[static_cast<std::size_t>(b - 1)];
        add(xx, kron::product_coeffs(xa, a, xb, b, sigma));
        add(xu, kron::product_coeffs(xa, a, hd.Ul(b), b, sigma));
        add(uu, kron::product_coeffs(hd.Ul(a), a, hd.Ul(b), b, sigma));
    }
    return {kron::merge_rows(xx, static_cast<int>(n), 2), xu, kron::merge_rows(uu, static_cast<int>(m), 2)};
}

/// Z''_upto = [[U1, ..., U_upto], [0, Z_2^{2,0}, ..., Z_upto^{2,0}]].
inline MatrixXd stacked_quadratic_regressor(const HarmonicData& hd, const std::vector<MatrixXd>& x, int upto,
                                            const OscillatorBank& bank) {
    const auto widths = bank.widths(upto);
    const Index n = x.front().rows();
    const auto rows2 = static_cast<Index>(kron::reduced_length(static_cast<int>(n), 2));
    std::vector<MatrixXd> blocks(widths.size());
    for (int l = 2; l <= upto; ++l) blocks[static_cast<std::size_t>(l - 1)] = build_Z(hd, x, l, bank.sigma()).z20;
    return vcat({stacked_inputs(hd, upto), block_row(blocks, widths, rows2)});
}

// ---- stage 3 ----

/// Method I: X_1 from (U1, Y1, S), then X_l from ([U_l; Z_l^{2,0}; Z_l^{1,1}; Z_l^{0,2}], Y_l, S^<l>),
/// l = 2..L_e-1. Known-zero F11 / F02 columns are removed from the unknowns.
inline std::vector<MatrixXd> stage3_method1(const HarmonicData& hd, const MatrixXd& a_hat, const MatrixXd& c_hat,
                                            const OscillatorBank& bank, const PipelineConfig& cfg) {
    const Index m = hd.Ul(1).rows();
    fds::StructureMask mask1;
    if (!cfg.structure.d_zero) mask1.free_D.assign(static_cast<std::size_t>(m), true);
    std::vector<MatrixXd> x;
    x.push_back(fds::algorithm2({hd.Ul(1), hd.Yl(1), bank.degree(1), cfg.order_bound}, a_hat, c_hat, mask1, cfg.input).X);
    for (int l = 2; l < cfg.L_e; ++l) {
        const ZBlocks z = build_Z(hd, x, l, bank.sigma());
        const MatrixXd reg = vcat({hd.Ul(l), z.z20, z.z11, z.z02});
        fds::StructureMask mask;
        mask.free_B.assign(static_cast<std::size_t>(m + z.z20.rows()), true);
        mask.free_B.resize(static_cast<std::size_t>(reg.rows()), false);
        if (!cfg.structure.f11_zero)
            std::fill_n(mask.free_B.begin() + m + z.z20.rows(), z.z11.rows(), true);
        if (!cfg.structure.f02_zero)
            std::fill_n(mask.free_B.begin() + m + z.z20.rows() + z.z11.rows(), z.z02.rows(), true);
        if (!cfg.structure.d_zero) {
            mask.free_D.assign(static_cast<std::size_t>(reg.rows()), false);
            std::fill_n(mask.free_D.begin(), m, true);
        }
        x.push_back(fds::algorithm2({reg, hd.Yl(l), bank.degree(l), cfg.order_bound}, a_hat, c_hat, mask, cfg.input).X);
    }
    return x;
}

/// Extends s1.Xc to degrees 2..upto-1: each X_{l,c} comes from a subspace + input
/// estimate on ([U_l; V_l], Y_l, S^<l>) in its own coordinates.
inline void controllable_cascade(StageOneResult& s1, const HarmonicData& hd, const OscillatorBank& bank,
                                 const PipelineConfig& cfg, int upto) {
    const Index m = hd.Ul(1).rows();
    for (int l = static_cast<int>(s1.Xc.size()) + 1; l < upto; ++l) {
        const MatrixXd v = controllable_block(s1.Xc, l, cfg.order_bound, bank.sigma());
        fds::SylvesterProblem prob{vcat({hd.Ul(l), v}), hd.Yl(l), bank.degree(l), cfg.order_bound};
        const auto sub = fds::algorithm1(prob, cfg.subspace);
        fds::StructureMask mask;
        if (!cfg.structure.d_zero) {
            mask.free_D.assign(static_cast<std::size_t>(prob.U.rows()), false);
            std::fill_n(mask.free_D.begin(), m, true);
        }
        s1.Xc.push_back(fds::algorithm2(prob, sub.A, sub.C, mask, cfg.input).X);
        s1.orders.push_back(sub.order);
    }
}

/// Method II: one input estimate on (V''_{L_e}, [Y_1..Y_{L_e}], blkdiag(S^<1>..S^<L_e>)), split into X_1..X_{L_e}.
inline std::vector<MatrixXd> stage3_method2(StageOneResult& s1, const HarmonicData& hd, const MatrixXd& a_hat,
                                            const MatrixXd& c_hat, const OscillatorBank& bank, const PipelineConfig& cfg) {
    controllable_cascade(s1, hd, bank, cfg, cfg.L_e);
    const MatrixXd reg = stacked_controllable_regressor(s1, hd, cfg.order_bound, cfg.L_e, bank);
    fds::StructureMask mask;
    if (!cfg.structure.d_zero) {
        mask.free_D.assign(static_cast<std::size_t>(reg.rows()), false);
        std::fill_n(mask.free_D.begin(), hd.Ul(1).rows(), true);
    }
    const auto est = fds::algorithm2({reg, stacked_outputs(hd, cfg.L_e), bank.stacked(cfg.L_e), cfg.order_bound}, a_hat,
                                     c_hat, mask, cfg.input);
    std::vector<MatrixXd> x;
    Index off = 0;
    for (Index w : bank.widths(cfg.L_e)) {
        x.push_back(est.X.middleCols(off, w));
        off += w;
    }
    return x;
}

// ---- stage 4 ----

struct StageFourResult {
    MatrixXd B, F20, D;
    fds::InputEstimate estimate;
};

/// (B, F20) from (Z''_{L_e}, [Y_1..Y_{L_e}], blkdiag(S^<1>..S^<L_e>)); the input matrix
/// splits into B (first m columns) and F20 (the rest).
inline StageFourResult stage4(const MatrixXd& regressor, const HarmonicData& hd, const MatrixXd& a_hat,
                              const MatrixXd& c_hat, const OscillatorBank& bank, const PipelineConfig& cfg) {
    const Index m = hd.Ul(1).rows();
    fds::StructureMask mask;
    if (!cfg.structure.d_zero) {
        mask.free_D.assign(static_cast<std::size_t>(regressor.rows()), false);
        std::fill_n(mask.free_D.begin(), m, true);
    }
    StageFourResult r;
    r.estimate = fds::algorithm2({regressor, stacked_outputs(hd, cfg.L_e), bank.stacked(cfg.L_e), cfg.order_bound}, a_hat,
                                 c_hat, mask, cfg.input);
    r.B = r.estimate.B.leftCols(m);
    r.F20 = r.estimate.B.rightCols(r.estimate.B.cols() - m);
    r.D = r.estimate.D.leftCols(m);
    return r;
}

// ---- JSON ----

inline json pe_to_json(const PeCheck& pc) {
    json j;
    j["pass"] = pc.pass;
    j["condition_number"] = std::isfinite(pc.condition_number) ? json(pc.condition_number) : json(nullptr);
    j["smallest_singular_value"] = pc.smallest_singular_value;
    j["required_rank"] = pc.required_rank;
    j["singular_values"] = vector_to_json(pc.singular_values.head(std::min<Index>(pc.singular_values.size(), 8)));
    return j;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json stage1_to_json(const StageOneResult& s1) {
    json j;
    j["n1c"] = s1.n1c;
    j["A1c"] = matrix_to_json(s1.A1c);
    j["B1c"] = matrix_to_json(s1.B1c);
    j["C1c"] = matrix_to_json(s1.C1c);
    j["orders"] = s1.orders;
    j["singular_values"] = vector_to_json(s1.singular_values);
    j["gap_ratio"] = finite_or_null(s1.gap_ratio);
    j["gap_warning"] = s1.gap_warning;
    return j;
}

inline json model_to_json(const IdentifiedModel& mdl, bool include_states = true) {
    json j;
    j["method"] = to_string(mdl.method);
    j["n"] = mdl.n;
    j["n1c"] = mdl.n1c;
    j["A"] = matrix_to_json(mdl.A);
    j["B"] = matrix_to_json(mdl.B);
    j["C"] = matrix_to_json(mdl.C);
    j["D"] = matrix_to_json(mdl.D);
    j["F20"] = matrix_to_json(mdl.F20);
    if (include_states) {
        j["X"] = json::array();
        for (const auto& x : mdl.X) j["X"].push_back(matrix_to_json(x));
    }
    const auto& d = mdl.diagnostics;
    json dj;
    dj["singular_values"] = {{"stage1", vector_to_json(d.stage1_singular_values)},
                             {"stage2", vector_to_json(d.stage2_singular_values)}};
    dj["gap_ratios"] = {{"stage1", finite_or_null(d.stage1_gap_ratio)}, {"stage2", finite_or_null(d.stage2_gap_ratio)}};
    dj["gap_warnings"] = {{"stage1", d.stage1_gap_warning}, {"stage2", d.stage2_gap_warning}};
    dj["pe_condition_numbers"] = json::object();
    dj["pe"] = json::object();
    for (const auto& [name, pc] : d.pe) {
        dj["pe_condition_numbers"][name] = finite_or_null(pc.condition_number);
        dj["pe"][name] = pe_to_json(pc);
    }
    dj["cascade_orders"] = d.cascade_orders;
    dj["stage4_rank"] = d.stage4_rank;
    dj["stage4_unknowns"] = d.stage4_unknowns;
    dj["all_gates_passed"] = d.all_gates_passed;
    j["diagnostics"] = dj;
    return j;
}

inline IdentifiedModel model_from_json(const json& j) {
    IdentifiedModel mdl;
    try {
        mdl.method = method_from_string(j.at("method").get<std::string>());
        mdl.n = j.at("n").get<int>();
        mdl.n1c = j.value("n1c", 0);
        mdl.A = matrix_from_json(j.at("A"), "model.A");
        mdl.B = matrix_from_json(j.at("B"), "model.B");
        mdl.C = matrix_from_json(j.at("C"), "model.C");
        mdl.D = j.contains("D") ? matrix_from_json(j["D"], "model.D") : MatrixXd::Zero(mdl.C.rows(), mdl.B.cols());
        mdl.F20 = matrix_from_json(j.at("F20"), "model.F20");
    } catch (const json::exception& e) {
        throw ConfigError("model", e.what());
    }
    return mdl;
}

// ---- full pipeline ----

namespace detail {
inline void gate(PipelineDiagnostics& d, const std::string& name, const PeCheck& pc, bool enforce) {
    d.pe[name] = pc;
    if (!pc.pass) {
        d.all_gates_passed = false;
        if (enforce) throw PeGateError(name, pc.condition_number);
    }
}
}  // namespace detail

/// Runs stages 1 to 4. Gates: the stage-2 regressor and the degree-L_e stacked regressor;
/// the lower-degree stacked regressors are checked and reported only.
inline IdentifiedModel identify(const HarmonicData& hd, const OscillatorBank& bank, const PipelineConfig& cfg,
                                const CheckpointFn& checkpoint = {}) {
    cfg.validate();
    if (hd.order < cfg.L_e) throw DimensionError("identify: harmonic data has order " + std::to_string(hd.order) + " < L_e");
    if (bank.max_degree() < cfg.L_e) throw DimensionError("identify: oscillator bank too small");
    const Index m = hd.Ul(1).rows();

    IdentifiedModel mdl;
    mdl.method = cfg.method;
    auto& diag = mdl.diagnostics;

    StageOneResult s1 = stage1(hd, bank, cfg);
    mdl.n1c = s1.n1c;
    diag.stage1_singular_values = s1.singular_values;
    diag.stage1_gap_ratio = s1.gap_ratio;
    diag.stage1_gap_warning = s1.gap_warning;
    if (checkpoint) checkpoint("stage1", stage1_to_json(s1));

    const StackedProblem p2 = build_V2(s1, hd, cfg.order_bound, bank);
    detail::gate(diag, "stage2", check_pe(p2.U, cfg.pe_threshold, cfg.pe_floor, static_cast<int>(m) + 1), cfg.enforce_pe);
    const auto sub2 = stage2(p2, cfg);
    mdl.n = sub2.order;
    mdl.A = sub2.A;
    mdl.C = sub2.C;
    diag.stage2_singular_values = sub2.singular_values;
    diag.stage2_gap_ratio = sub2.gap_ratio;
    diag.stage2_gap_warning = sub2.gap_warning;
    if (checkpoint)
        checkpoint("stage2", json{{"n", mdl.n}, {"A", matrix_to_json(mdl.A)}, {"C", matrix_to_json(mdl.C)},
                                  {"singular_values", vector_to_json(sub2.singular_values)}});

    const int required = static_cast<int>(m + static_cast<Index>(kron::reduced_length(mdl.n, 2)));
    std::vector<MatrixXd> x;
    if (cfg.method == Method::I) {
        x = stage3_method1(hd, mdl.A, mdl.C, bank, cfg);
        for (int l = 2; l <= cfg.L_e; ++l) {
            const auto pc = check_pe(stacked_quadratic_regressor(hd, x, l, bank), cfg.pe_threshold, cfg.pe_floor, required);
            if (l < cfg.L_e) diag.pe["Z" + std::to_string(l)] = pc;
            else detail::gate(diag, "Z" + std::to_string(l), pc, cfg.enforce_pe);
        }
    } else {
        controllable_cascade(s1, hd, bank, cfg, cfg.L_e);
        diag.cascade_orders = s1.orders;
        for (int l = 2; l <= cfg.L_e; ++l) {
            const auto pc = check_pe(stacked_controllable_regressor(s1, hd, cfg.order_bound, l, bank), cfg.pe_threshold,
                                     cfg.pe_floor, required);
            if (l < cfg.L_e) diag.pe["V" + std::to_string(l)] = pc;
            else detail::gate(diag, "V" + std::to_string(l), pc, cfg.enforce_pe);
        }
        x = stage3_method2(s1, hd, mdl.A, mdl.C, bank, cfg);
    }
    if (checkpoint) {
        json xs = json::array();
        for (const auto& xl : x) xs.push_back(matrix_to_json(xl));
        checkpoint("stage3", json{{"X", xs}});
    }

    const MatrixXd z4 = stacked_quadratic_regressor(hd, x, cfg.L_e, bank);
    const auto s4 = stage4(z4, hd, mdl.A, mdl.C, bank, cfg);
    mdl.B = s4.B;
    mdl.F20 = s4.F20;
    mdl.D = s4.D;
    diag.stage4_rank = s4.estimate.rank;
    diag.stage4_unknowns = s4.estimate.unknowns;
    if (static_cast<int>(x.size()) < cfg.L_e) {
        // top degree from the identified model itself
        const int l = cfg.L_e;
        const MatrixXd rhs = mdl.B * hd.Ul(l) + mdl.F20 * build_Z(hd, x, l, bank.sigma()).z20;
        x.push_back(fds::solve_sylvester(mdl.A, rhs, *bank.degree(l), cfg.input.overlap_tol));
    }
    mdl.X = std::move(x);
    if (checkpoint) checkpoint("model", model_to_json(mdl));
    return mdl;
}

}  // namespace cmid
