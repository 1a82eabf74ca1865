#pragma once

// Experiment orchestration: sampled records, seeded measurement noise, noise-free and
// Monte-Carlo identification runs, error tables, Bode and validation series.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cmid/cm.hpp"
#include "cmid/excitation.hpp"
#include "cmid/harmonics.hpp"
#include "cmid/metrics.hpp"
#include "cmid/model.hpp"

namespace cmid {

// ---- configuration ----

enum class HarmonicsSource { Auto, Exact, Regression };

struct ExperimentConfig {
    PolynomialSystem system;
    ExcitationSpec excitation;
    int ic_count = 1000;
    double ic_amplitude = 1.0;
    std::uint64_t ic_seed = 11;
    double dt_int = 1e-3;
    double dt_sample = 0.01;
    double warmup = 15.0;
    int samples_per_record = 10;
    HarmonicsSource harmonics_source = HarmonicsSource::Auto;
    ExtractOptions extract;
    double noise_variance = 0.03;
    int runs = 10;
    int threads = 1;
    std::uint64_t seed = 2024;
    std::vector<Method> methods{Method::I, Method::II};
    PipelineConfig pipeline;
    HinfOptions hinf;
    int bode_points = 400;
    double validation_duration = 50.0;
    double validation_noise_std = 0.05;
    json effective;  ///< the configuration after overrides, echoed into outputs
};

/// Desk-scale reproduction of the benchmark; the system is referenced by file name.
inline json default_config_json() {
    return json::parse(R"({
  "system": "pns_example.json",
  "excitation": {
    "frequencies": [0.13, 0.79, 2.65, 7.81, 18.37],
    "U": [{"l": 1, "matrix": [[0, 0.05, 0, 0.1, 0, 0.2, 0, 0.4, 0, 0.8, 0]]}],
    "initial_conditions": {"count": 1000, "amplitude": 1.0, "seed": 11}
  },
  "simulation": {"dt_int": 0.001, "dt_sample": 0.01, "warmup": 15.0, "samples_per_record": 10},
  "harmonics": {"order": 4, "source": "auto", "discard": 0.0, "condition_threshold": 1e10},
  "noise": {"variance": 0.03},
  "pipeline": {"method": "both", "order_bound": 3, "L": 2, "pe_threshold": 1e8, "pe_floor": 1e-12,
               "enforce_pe": true,
               "structure": {"D": true, "F11": true, "F02": true, "H2": true},
               "subspace": {"rel_tol": 1e-8, "abs_tol": 1e-12, "min_gap": 1e3}},
  "montecarlo": {"runs": 10, "threads": 1},
  "seed": 2024,
  "metrics": {"omega_min": 0.001, "omega_max": 1000.0, "grid_points": 2000, "bode_points": 400},
  "validation": {"duration": 50.0, "noise_std": 0.05}
})");
}

namespace detail {

inline const json* find_path(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
    }
    return cur;
}

template <class T>
T get_or(const json& j, const std::string& path, T fallback) {
    const json* v = find_path(j, path);
    if (!v || v->is_null()) return fallback;
    try {
        return v->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("wrong type: ") + e.what());
    }
}

template <class T>
T get_required(const json& j, const std::string& path) {
    const json* v = find_path(j, path);
    if (!v || v->is_null()) throw ConfigError(path, "missing required field");
    try {
        return v->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("wrong type: ") + e.what());
    }
}

}  // namespace detail

/// Applies "a.b.c=value" overrides; the value is parsed as JSON when possible, else kept as a string.
inline json apply_overrides(json j, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must look like key=value");
        const std::string key = ov.substr(0, eq), text = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text;
        }
        json* cur = &j;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
            if (!cur->is_object()) throw ConfigError(key, "cannot descend into a non-object");
            cur = &(*cur)[parts[k]];
            if (cur->is_null()) *cur = json::object();
        }
        if (!cur->is_object()) throw ConfigError(key, "cannot descend into a non-object");
        (*cur)[parts.back()] = value;
    }
    return j;
}

/// Builds a config from JSON; relative system paths resolve against base_dir.
inline ExperimentConfig config_from_json(const json& j, const std::string& base_dir = ".") {
    using detail::get_or;
    using detail::get_required;
    ExperimentConfig cfg;
    cfg.effective = j;

    const json* sys = detail::find_path(j, "system");
    if (!sys) throw ConfigError("system", "missing required field");
    if (sys->is_string()) {
        std::filesystem::path p(sys->get<std::string>());
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        cfg.system = load_system(p.string());
    } else {
        cfg.system = system_from_json(*sys);
    }

    cfg.excitation.frequencies = get_required<std::vector<double>>(j, "excitation.frequencies");
    const int sigma = 2 * static_cast<int>(cfg.excitation.frequencies.size()) + 1;
    const json* ulist = detail::find_path(j, "excitation.U");
    if (!ulist || !ulist->is_array() || ulist->empty()) throw ConfigError("excitation.U", "missing list of {l, matrix}");
    int max_l = 0;
    for (const auto& item : *ulist) max_l = std::max(max_l, item.value("l", 0));
    if (max_l < 1) throw ConfigError("excitation.U", "entries need a positive degree l");
    for (int l = 1; l <= max_l; ++l)
        cfg.excitation.U.push_back(MatrixXd::Zero(cfg.system.m(), static_cast<Index>(kron::reduced_length(sigma, l))));
    for (const auto& item : *ulist) {
        const int l = item.value("l", 0);
        if (!item.contains("matrix")) throw ConfigError("excitation.U", "entry without matrix");
        cfg.excitation.U[static_cast<std::size_t>(l - 1)] =
            matrix_from_json(item["matrix"], "excitation.U[l=" + std::to_string(l) + "]", cfg.system.m(),
                             static_cast<Index>(kron::reduced_length(sigma, l)));
    }
    cfg.excitation.validate();

    cfg.ic_count = get_or<int>(j, "excitation.initial_conditions.count", cfg.ic_count);
    cfg.ic_amplitude = get_or<double>(j, "excitation.initial_conditions.amplitude", cfg.ic_amplitude);
    cfg.ic_seed = get_or<std::uint64_t>(j, "excitation.initial_conditions.seed", cfg.ic_seed);
    if (cfg.ic_count < 1) throw ConfigError("excitation.initial_conditions.count", "must be positive");

    cfg.dt_int = get_or<double>(j, "simulation.dt_int", cfg.dt_int);
    cfg.dt_sample = get_or<double>(j, "simulation.dt_sample", cfg.dt_sample);
    cfg.warmup = get_or<double>(j, "simulation.warmup", cfg.warmup);
    cfg.samples_per_record = get_or<int>(j, "simulation.samples_per_record", cfg.samples_per_record);
    if (cfg.samples_per_record < 1) throw ConfigError("simulation.samples_per_record", "must be positive");
    if (!(cfg.warmup >= 0)) throw ConfigError("simulation.warmup", "must be nonnegative");

    cfg.pipeline.L_e = get_or<int>(j, "harmonics.order", cfg.pipeline.L_e);
    const std::string source = get_or<std::string>(j, "harmonics.source", "auto");
    if (source == "auto") cfg.harmonics_source = HarmonicsSource::Auto;
    else if (source == "exact") cfg.harmonics_source = HarmonicsSource::Exact;
    else if (source == "regression") cfg.harmonics_source = HarmonicsSource::Regression;
    else throw ConfigError("harmonics.source", "expected auto, exact or regression");
    if (const json* d = detail::find_path(j, "harmonics.discard"); d && !d->is_null()) cfg.extract.discard_seconds = d->get<double>();
    cfg.extract.condition_threshold = get_or<double>(j, "harmonics.condition_threshold", cfg.extract.condition_threshold);

    cfg.noise_variance = get_or<double>(j, "noise.variance", cfg.noise_variance);
    if (!(cfg.noise_variance >= 0)) throw ConfigError("noise.variance", "must be nonnegative");

    cfg.runs = get_or<int>(j, "montecarlo.runs", cfg.runs);
    cfg.threads = get_or<int>(j, "montecarlo.threads", cfg.threads);
    if (cfg.runs < 1) throw ConfigError("montecarlo.runs", "must be at least 1");
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);

    const std::string method = get_or<std::string>(j, "pipeline.method", "both");
    if (method == "both") cfg.methods = {Method::I, Method::II};
    else cfg.methods = {method_from_string(method)};
    auto& pc = cfg.pipeline;
    pc.order_bound = get_or<int>(j, "pipeline.order_bound", pc.order_bound);
    pc.L = get_or<int>(j, "pipeline.L", cfg.system.L());
    pc.pe_threshold = get_or<double>(j, "pipeline.pe_threshold", pc.pe_threshold);
    pc.pe_floor = get_or<double>(j, "pipeline.pe_floor", pc.pe_floor);
    pc.enforce_pe = get_or<bool>(j, "pipeline.enforce_pe", pc.enforce_pe);
    pc.structure.d_zero = get_or<bool>(j, "pipeline.structure.D", true);
    pc.structure.f11_zero = get_or<bool>(j, "pipeline.structure.F11", true);
    pc.structure.f02_zero = get_or<bool>(j, "pipeline.structure.F02", true);
    pc.structure.h2_zero = get_or<bool>(j, "pipeline.structure.H2", true);
    pc.subspace.rel_tol = get_or<double>(j, "pipeline.subspace.rel_tol", pc.subspace.rel_tol);
    pc.subspace.abs_tol = get_or<double>(j, "pipeline.subspace.abs_tol", pc.subspace.abs_tol);
    pc.subspace.min_gap = get_or<double>(j, "pipeline.subspace.min_gap", pc.subspace.min_gap);
    pc.validate();

    cfg.hinf.omega_min = get_or<double>(j, "metrics.omega_min", cfg.hinf.omega_min);
    cfg.hinf.omega_max = get_or<double>(j, "metrics.omega_max", cfg.hinf.omega_max);
    cfg.hinf.grid_points = get_or<int>(j, "metrics.grid_points", cfg.hinf.grid_points);
    cfg.bode_points = get_or<int>(j, "metrics.bode_points", cfg.bode_points);
    cfg.validation_duration = get_or<double>(j, "validation.duration", cfg.validation_duration);
    cfg.validation_noise_std = get_or<double>(j, "validation.noise_std", cfg.validation_noise_std);
    return cfg;
}

inline json read_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(what, "cannot open " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(what, std::string("invalid JSON in ") + path + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    const json j = apply_overrides(read_json_file(path, "config"), overrides);
    return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

// ---- parallel helper ----

/// Runs fn(0..count-1) on up to `threads` workers; the first failing index (lowest) is rethrown.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---- data generation ----

/// Simulates one record per initial condition, keeping samples_per_record samples after the warm-up.
inline std::vector<SampleRecord> simulate_records(const ExperimentConfig& cfg) {
    const auto ics = random_initial_conditions(cfg.excitation.sigma(), cfg.ic_count, cfg.ic_seed, cfg.ic_amplitude);
    const double t_end = cfg.warmup + (cfg.samples_per_record - 1) * cfg.dt_sample;
    const double half = 0.5 * cfg.dt_int;
    const auto grid = static_cast<Index>(std::llround(t_end / half)) + 1;
    const auto& freqs = cfg.excitation.frequencies;
    const auto q = static_cast<Index>(freqs.size());
    // cos / sin of every frequency on the half-step grid, shared by all records
    MatrixXd cs(2 * q, grid);
    for (Index k = 0; k < grid; ++k)
        for (Index i = 0; i < q; ++i) {
            cs(2 * i, k) = std::cos(freqs[static_cast<std::size_t>(i)] * half * static_cast<double>(k));
            cs(2 * i + 1, k) = std::sin(freqs[static_cast<std::size_t>(i)] * half * static_cast<double>(k));
        }
    auto v_at = [&](const VectorXd& v0, Index k) {
        VectorXd v(v0.size());
        v(0) = v0(0);
        for (Index i = 0; i < q; ++i) {
            const double c = cs(2 * i, k), s = cs(2 * i + 1, k);
            v(1 + 2 * i) = c * v0(1 + 2 * i) + s * v0(2 + 2 * i);
            v(2 + 2 * i) = -s * v0(1 + 2 * i) + c * v0(2 + 2 * i);
        }
        return v;
    };

    std::vector<SampleRecord> records(ics.size());
    parallel_for(ics.size(), cfg.threads, [&](std::size_t r) {
        const VectorXd& v0 = ics[r];
        MatrixXd ugrid(cfg.system.m(), grid);
        for (Index k = 0; k < grid; ++k) ugrid.col(k) = eval_u(cfg.excitation, v_at(v0, k));
        const InputFunction input = [&](double t, VectorXd& u) { u = ugrid.col(std::llround(t / half)); };
        SimulationOptions so;
        so.t_end = t_end;
        so.dt_int = cfg.dt_int;
        so.dt_sample = cfg.dt_sample;
        so.sample_from = cfg.warmup;
        const Trajectory tr = simulate(cfg.system, input, VectorXd::Zero(cfg.system.n()), so);
        SampleRecord rec;
        rec.t = tr.t;
        rec.U = tr.U;
        rec.Y = tr.Y;
        rec.V.resize(cfg.excitation.sigma(), static_cast<Index>(tr.t.size()));
        for (std::size_t s = 0; s < tr.t.size(); ++s) rec.V.col(static_cast<Index>(s)) = eval_v(cfg.excitation, v0, tr.t[s]);
        records[r] = std::move(rec);
    });
    return records;
}

/// Independent Gaussian noise on every input and output channel. Channel c of run k draws
/// from mt19937_64 seeded with seed_seq(seed lo, seed hi, k, c), so runs never share streams.
inline std::vector<SampleRecord> add_noise(const std::vector<SampleRecord>& records, double variance, std::uint64_t seed,
                                           std::uint64_t run = 0) {
    if (!(variance >= 0)) throw ConfigError("noise.variance", "must be nonnegative");
    std::vector<SampleRecord> out = records;
    if (variance == 0.0 || records.empty()) return out;
    const double sd = std::sqrt(variance);
    const Index m = records.front().U.rows(), p = records.front().Y.rows();
    for (Index c = 0; c < m + p; ++c) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32),
                          static_cast<std::uint32_t>(c)};
        std::mt19937_64 gen(seq);
        std::normal_distribution<double> normal(0.0, sd);
        for (auto& rec : out) {
            auto row = c < m ? rec.U.row(c) : rec.Y.row(c - m);
            for (Index s = 0; s < row.size(); ++s) row(s) += normal(gen);
        }
    }
    return out;
}

// ---- evaluation ----

inline LinearMapTransfer entry_transfer(const MatrixXd& c, const MatrixXd& a, const MatrixXd& b, const MatrixXd& f20,
                                        const EntrySpec& e) {
    return {c, a, e.quadratic ? f20 : b, e.row, e.col};
}

/// Error ratios of the benchmark entries; NaN where an entry cannot be evaluated.
inline std::map<std::string, double> model_errors(const PolynomialSystem& truth, const IdentifiedModel& mdl,
                                                  const HinfOptions& opt, std::string* note = nullptr) {
    std::map<std::string, double> out;
    const MatrixXd a = truth.A(), b = truth.B(), c = truth.C(), f = truth.F(2, 0);
    std::optional<AlignedModel> al;
    try {
        al = cf_align(c, a, mdl.C, mdl.A, mdl.B, mdl.F20);
    } catch (const Error& e) {
        if (note) *note = e.what();
    }
    for (const auto& e : benchmark_entries()) {
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
            if (!e.quadratic) {
                v = error_ratio(entry_transfer(c, a, b, f, e), entry_transfer(mdl.C, mdl.A, mdl.B, mdl.F20, e), opt);
            } else if (al) {
                v = error_ratio(entry_transfer(c, a, b, f, e), entry_transfer(al->C, al->A, al->B, al->F20, e), opt);
            }
        } catch (const Error& ex) {
            if (note) *note = ex.what();
        }
        out[e.name] = v;
    }
    return out;
}

struct ErrorCell {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    int count = 0;
    int failed = 0;
};

struct ErrorTable {
    std::vector<std::string> entries;
    std::vector<std::string> conditions;
    std::map<std::string, std::map<std::string, ErrorCell>> cells;  ///< condition -> entry -> cell

    const ErrorCell& at(const std::string& condition, const std::string& entry) const { return cells.at(condition).at(entry); }
};

inline ErrorCell aggregate(const std::vector<double>& values) {
    ErrorCell c;
    double sum = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) {
            sum += v;
            ++c.count;
        } else {
            ++c.failed;
        }
    }
    if (c.count > 0) {
        c.mean = sum / c.count;
        double ss = 0.0;
        for (double v : values)
            if (std::isfinite(v)) ss += (v - c.mean) * (v - c.mean);
        c.std = c.count > 1 ? std::sqrt(ss / (c.count - 1)) : 0.0;
    }
    return c;
}

inline std::string condition_name(Method m) { return m == Method::I ? "noisy_I" : "noisy_II"; }

struct RunOutcome {
    bool ok = false;
    std::string error;
    IdentifiedModel model;
    std::map<std::string, double> errors;
};

struct ExperimentResult {
    ErrorTable table;
    std::map<Method, RunOutcome> noise_free;
    std::vector<std::map<Method, RunOutcome>> runs;
    double regressor_condition = std::numeric_limits<double>::quiet_NaN();
    Index samples = 0;
    bool harmonics_exact_for_noisy = false;

    /// More than half of the noisy runs failed for some method.
    bool failed() const {
        for (const auto& [m, r] : noise_free) {
            int bad = 0;
            for (const auto& run : runs)
                if (!run.at(m).ok) ++bad;
            if (2 * bad > static_cast<int>(runs.size())) return true;
        }
        return false;
    }
};

inline RunOutcome identify_and_score(const HarmonicData& hd, const OscillatorBank& bank, const ExperimentConfig& cfg,
                                     Method method) {
    RunOutcome out;
    PipelineConfig pc = cfg.pipeline;
    pc.method = method;
    try {
        out.model = identify(hd, bank, pc);
        out.errors = model_errors(cfg.system, out.model, cfg.hinf, &out.error);
        out.ok = true;
    } catch (const Error& e) {
        out.error = e.what();
        for (const auto& en : benchmark_entries()) out.errors[en.name] = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

/// Noise-free identification from exact harmonics (or noiseless regression when configured),
/// then `runs` noisy realizations, each scored with every configured method.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const OscillatorBank bank(cfg.excitation.frequencies, cfg.pipeline.L_e);
    ExperimentResult res;

    const bool exact_noise_free = cfg.harmonics_source != HarmonicsSource::Regression;
    const bool exact_noisy = cfg.harmonics_source == HarmonicsSource::Exact ||
                             (cfg.harmonics_source == HarmonicsSource::Auto && cfg.noise_variance == 0.0);
    res.harmonics_exact_for_noisy = exact_noisy;

    std::optional<HarmonicData> exact;
    if (exact_noise_free || exact_noisy) exact = exact_coefficients(cfg.system, cfg.excitation, bank, cfg.pipeline.L_e);

    std::vector<SampleRecord> records;
    std::optional<HarmonicRegressor> regressor;
    if (!exact_noise_free || !exact_noisy) {
        records = simulate_records(cfg);
        regressor.emplace(records, cfg.pipeline.L_e, cfg.extract);
        res.regressor_condition = regressor->condition_number();
        res.samples = regressor->samples();
    }

    const HarmonicData hd0 = exact_noise_free ? *exact : regressor->fit(records);
    for (Method m : cfg.methods) res.noise_free[m] = identify_and_score(hd0, bank, cfg, m);

    res.runs.resize(static_cast<std::size_t>(cfg.runs));
    parallel_for(res.runs.size(), cfg.threads, [&](std::size_t r) {
        const HarmonicData hd = exact_noisy ? *exact : regressor->fit(add_noise(records, cfg.noise_variance, cfg.seed, r));
        for (Method m : cfg.methods) res.runs[r][m] = identify_and_score(hd, bank, cfg, m);
    });

    auto& t = res.table;
    for (const auto& e : benchmark_entries()) t.entries.push_back(e.name);
    t.conditions.push_back("noise_free");
    for (Method m : cfg.methods) t.conditions.push_back(condition_name(m));
    for (const auto& e : t.entries) {
        t.cells["noise_free"][e] = aggregate({res.noise_free.at(cfg.methods.front()).errors.at(e)});
        for (Method m : cfg.methods) {
            std::vector<double> vals;
            for (const auto& run : res.runs) vals.push_back(run.at(m).errors.at(e));
            t.cells[condition_name(m)][e] = aggregate(vals);
        }
    }
    return res;
}

// ---- validation run ----

struct ValidationSeries {
    std::string label;
    bool diverged = false;
    std::string error;
    Trajectory trajectory;
};

/// Rebuilds a polynomial system from identified matrices.
inline PolynomialSystem system_from_model(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, const MatrixXd& f20) {
    PolynomialSystem s(static_cast<int>(a.rows()), static_cast<int>(b.cols()), static_cast<int>(c.rows()), 2);
    s.set_F(1, 0, a);
    s.set_F(0, 1, b);
    s.set_F(2, 0, f20);
    s.set_H(1, 0, c);
    return s;
}

/// Model in the true frame when alignment succeeds, else as identified.
inline PolynomialSystem aligned_system(const PolynomialSystem& truth, const IdentifiedModel& mdl) {
    try {
        const auto al = cf_align(truth.C(), truth.A(), mdl.C, mdl.A, mdl.B, mdl.F20);
        return system_from_model(al.A, al.B, al.C, al.F20);
    } catch (const Error&) {
        return system_from_model(mdl.A, mdl.B, mdl.C, mdl.F20);
    }
}

/// Simulates the true system and every model under one shared zero-order-hold white-noise input.
inline std::vector<ValidationSeries> validation_run(const PolynomialSystem& truth,
                                                    const std::vector<std::pair<std::string, PolynomialSystem>>& models,
                                                    double duration, double dt_sample, double noise_std, std::uint64_t seed,
                                                    double dt_int = 1e-3) {
    const auto steps = static_cast<Index>(std::llround(duration / dt_sample)) + 1;
    MatrixXd held(truth.m(), steps);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7661u};
    std::mt19937_64 gen(seq);
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Index k = 0; k < steps; ++k)
        for (Index i = 0; i < truth.m(); ++i) held(i, k) = normal(gen);
    const InputFunction input = [&](double t, VectorXd& u) {
        const auto k = std::min<Index>(steps - 1, static_cast<Index>(std::floor(t / dt_sample + 1e-9)));
        u = held.col(k);
    };
    SimulationOptions so;
    so.t_end = duration;
    so.dt_int = dt_int;
    so.dt_sample = dt_sample;
    std::vector<ValidationSeries> out;
    auto run_one = [&](const std::string& label, const PolynomialSystem& sys) {
        ValidationSeries vs;
        vs.label = label;
        try {
            vs.trajectory = simulate(sys, input, VectorXd::Zero(sys.n()), so);
        } catch (const NumericalError& e) {
            vs.diverged = true;
            vs.error = e.what();
        }
        out.push_back(std::move(vs));
    };
    run_one("true", truth);
    for (const auto& [label, sys] : models) run_one(label, sys);
    return out;
}

// ---- output ----

inline std::string fmt17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline json error_table_to_json(const ErrorTable& t) {
    json j;
    j["entries"] = t.entries;
    j["conditions"] = t.conditions;
    json cells = json::object();
    for (const auto& c : t.conditions) {
        for (const auto& e : t.entries) {
            const auto& cell = t.at(c, e);
            cells[c][e] = {{"mean", finite_or_null(cell.mean)},
                           {"std", finite_or_null(cell.std)},
                           {"count", cell.count},
                           {"failed", cell.failed}};
        }
    }
    j["table"] = cells;
    return j;
}

inline std::string error_table_to_csv(const ErrorTable& t) {
    std::string s = "entry";
    for (const auto& c : t.conditions) s += "," + c + "_mean," + c + "_std," + c + "_count," + c + "_failed";
    s += "\n";
    for (const auto& e : t.entries) {
        s += e;
        for (const auto& c : t.conditions) {
            const auto& cell = t.at(c, e);
            s += "," + fmt17(cell.mean) + "," + fmt17(cell.std) + "," + std::to_string(cell.count) + "," + std::to_string(cell.failed);
        }
        s += "\n";
    }
    return s;
}

inline std::string format_error_table(const ErrorTable& t) {
    std::string s;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-8s", "entry");
    s += buf;
    for (const auto& c : t.conditions) {
        std::snprintf(buf, sizeof buf, " %16s", c.c_str());
        s += buf;
    }
    s += "\n";
    for (const auto& e : t.entries) {
        std::snprintf(buf, sizeof buf, "%-8s", e.c_str());
        s += buf;
        for (const auto& c : t.conditions) {
            const auto& cell = t.at(c, e);
            std::snprintf(buf, sizeof buf, " %16.3e", cell.mean);
            s += buf;
        }
        s += "\n";
    }
    return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string bode_csv(const std::vector<BodePoint>& pts, const std::string& label) {
    std::string s = "omega_rad_s,mag_db,phase_deg,series_label\n";
    for (const auto& p : pts) s += fmt17(p.omega) + "," + fmt17(p.mag_db) + "," + fmt17(p.phase_deg) + "," + label + "\n";
    return s;
}

inline std::string trajectory_csv(const Trajectory& tr) {
    std::string s = "t";
    for (Index i = 0; i < tr.Y.rows(); ++i) s += ",y" + std::to_string(i + 1);
    s += "\n";
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        s += fmt17(tr.t[k]);
        for (Index i = 0; i < tr.Y.rows(); ++i) s += "," + fmt17(tr.Y(i, static_cast<Index>(k)));
        s += "\n";
    }
    return s;
}

/// Writes every artifact of an experiment below `dir`.
inline void write_experiment(const ExperimentResult& res, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    write_json(dir / "error_table.json", error_table_to_json(res.table));
    write_text(dir / "error_table.csv", error_table_to_csv(res.table));
    write_json(dir / "config.json", cfg.effective);

    json nf = json::object();
    for (const auto& [m, r] : res.noise_free) {
        nf[to_string(m)] = r.ok ? model_to_json(r.model) : json{{"error", r.error}};
    }
    write_json(dir / "noise_free.json", nf);

    for (std::size_t k = 0; k < res.runs.size(); ++k) {
        json rj;
        rj["run"] = k;
        for (const auto& [m, r] : res.runs[k]) {
            json mj = r.ok ? model_to_json(r.model, false) : json::object();
            mj["ok"] = r.ok;
            if (!r.error.empty()) mj["error"] = r.error;
            json ej = json::object();
            for (const auto& [name, v] : r.errors) ej[name] = finite_or_null(v);
            mj["errors"] = ej;
            rj["methods"][to_string(m)] = mj;
        }
        write_json(dir / "runs" / ("run_" + std::to_string(k) + ".json"), rj);
    }

    // Bode series: true, noise-free and the first successful noisy run of each method
    const auto& truth = cfg.system;
    std::vector<std::pair<std::string, PolynomialSystem>> variants;
    const Method first = cfg.methods.front();
    if (res.noise_free.at(first).ok) variants.emplace_back("noiseless", aligned_system(truth, res.noise_free.at(first).model));
    for (Method m : cfg.methods) {
        for (const auto& run : res.runs) {
            if (run.at(m).ok) {
                variants.emplace_back(m == Method::I ? "noisy-I" : "noisy-II", aligned_system(truth, run.at(m).model));
                break;
            }
        }
    }
    const auto grid = log_grid(cfg.hinf.omega_min, cfg.hinf.omega_max, cfg.bode_points);
    for (const auto& e : benchmark_entries()) {
        write_text(dir / "bode" / (e.name + "_true.csv"),
                   bode_csv(bode_data(entry_transfer(truth.C(), truth.A(), truth.B(), truth.F(2, 0), e), grid), "true"));
        for (const auto& [label, sys] : variants) {
            if (sys.n() != truth.n()) continue;
            write_text(dir / "bode" / (e.name + "_" + label + ".csv"),
                       bode_csv(bode_data(entry_transfer(sys.C(), sys.A(), sys.B(), sys.F(2, 0), e), grid), label));
        }
    }

    const auto series = validation_run(truth, variants, cfg.validation_duration, cfg.dt_sample, cfg.validation_noise_std,
                                       cfg.seed ^ 0x5eed5eedULL, cfg.dt_int);
    json vj = json::object();
    for (const auto& s : series) {
        vj[s.label] = {{"diverged", s.diverged}, {"error", s.error}};
        if (!s.diverged) write_text(dir / "validation" / (s.label + ".csv"), trajectory_csv(s.trajectory));
    }
    write_json(dir / "validation" / "status.json", vj);
}

}  // namespace cmid
