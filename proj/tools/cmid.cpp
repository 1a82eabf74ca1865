// Command-line front end: simulate, extract, identify, evaluate, montecarlo, validate, demo.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "cmid/cmid.hpp"

namespace fs = std::filesystem;
using namespace cmid;

namespace {

enum Exit { kOk = 0, kConfig = 2, kGate = 3, kNumerical = 4 };

struct Common {
    std::string config;
    std::string out = "results";
    std::vector<std::string> overrides;
    std::string harmonics;
    std::string samples;
    std::string model;
    int run = -1;
};

ExperimentConfig resolve_config(const Common& c) {
    if (!c.config.empty()) return load_config(c.config, c.overrides);
    if (fs::exists(CMID_DEFAULT_CONFIG)) return load_config(CMID_DEFAULT_CONFIG, c.overrides);
    json j = default_config_json();
    j["system"] = system_to_json(example_system());
    return config_from_json(apply_overrides(j, c.overrides));
}

json records_to_json(const std::vector<SampleRecord>& recs) {
    json arr = json::array();
    for (const auto& r : recs)
        arr.push_back({{"t", r.t}, {"V", matrix_to_json(r.V)}, {"U", matrix_to_json(r.U)}, {"Y", matrix_to_json(r.Y)}});
    return json{{"records", arr}};
}

std::vector<SampleRecord> records_from_json(const json& j) {
    if (!j.contains("records") || !j["records"].is_array()) throw ConfigError("samples.records", "missing list of records");
    std::vector<SampleRecord> out;
    for (const auto& r : j["records"]) {
        SampleRecord rec;
        rec.t = r.at("t").get<std::vector<double>>();
        rec.V = matrix_from_json(r.at("V"), "samples.V");
        rec.U = matrix_from_json(r.at("U"), "samples.U");
        rec.Y = matrix_from_json(r.at("Y"), "samples.Y");
        out.push_back(std::move(rec));
    }
    return out;
}

/// Samples of the configured experiment; run >= 0 adds that run's noise realization.
std::vector<SampleRecord> acquire_samples(const ExperimentConfig& cfg, const Common& c) {
    auto recs = c.samples.empty() ? simulate_records(cfg) : records_from_json(read_json_file(c.samples, "samples"));
    if (c.samples.empty() && c.run >= 0) recs = add_noise(recs, cfg.noise_variance, cfg.seed, static_cast<std::uint64_t>(c.run));
    return recs;
}

/// Harmonic data from a file, from samples, or (by default) the noise-free data of the configured source.
HarmonicData acquire_harmonics(const ExperimentConfig& cfg, const OscillatorBank& bank, const Common& c) {
    if (!c.harmonics.empty()) return harmonics_from_json(read_json_file(c.harmonics, "harmonics"));
    const bool exact = c.samples.empty() && c.run < 0 && cfg.harmonics_source != HarmonicsSource::Regression;
    if (exact) return exact_coefficients(cfg.system, cfg.excitation, bank, cfg.pipeline.L_e);
    return extract(acquire_samples(cfg, c), cfg.pipeline.L_e, cfg.extract);
}

std::map<std::string, IdentifiedModel> load_models(const std::string& path) {
    const json j = read_json_file(path, "model");
    std::map<std::string, IdentifiedModel> out;
    if (j.contains("models")) {
        for (const auto& [name, mj] : j["models"].items())
            if (!mj.contains("error")) out[name] = model_from_json(mj);
    } else {
        out["model"] = model_from_json(j);
    }
    if (out.empty()) throw ConfigError("model", "no identified model in " + path);
    return out;
}

void print_failures(const ExperimentResult& res) {
    for (const auto& [m, r] : res.noise_free)
        if (!r.ok) std::printf("noise-free method %s failed: %s\n", to_string(m).c_str(), r.error.c_str());
    for (std::size_t k = 0; k < res.runs.size(); ++k)
        for (const auto& [m, r] : res.runs[k])
            if (!r.ok) std::printf("run %zu method %s failed: %s\n", k, to_string(m).c_str(), r.error.c_str());
}

int cmd_simulate(const Common& c) {
    const auto cfg = resolve_config(c);
    const auto recs = acquire_samples(cfg, c);
    write_json(fs::path(c.out) / "samples.json", records_to_json(recs));
    std::printf("%zu records written to %s\n", recs.size(), (fs::path(c.out) / "samples.json").c_str());
    return kOk;
}

int cmd_extract(const Common& c) {
    const auto cfg = resolve_config(c);
    const OscillatorBank bank(cfg.excitation.frequencies, cfg.pipeline.L_e);
    const auto hd = acquire_harmonics(cfg, bank, c);
    write_json(fs::path(c.out) / "harmonics.json", harmonics_to_json(hd));
    std::printf("harmonics of order %d, regressor condition %.3e\n", hd.order, hd.condition_number);
    return kOk;
}

int cmd_identify(const Common& c) {
    const auto cfg = resolve_config(c);
    const OscillatorBank bank(cfg.excitation.frequencies, cfg.pipeline.L_e);
    const auto hd = acquire_harmonics(cfg, bank, c);
    json out;
    out["models"] = json::object();
    bool gates = true;
    for (Method m : cfg.methods) {
        PipelineConfig pc = cfg.pipeline;
        pc.method = m;
        const auto mdl = identify(hd, bank, pc);
        gates = gates && mdl.diagnostics.all_gates_passed;
        out["models"][to_string(m)] = model_to_json(mdl);
        std::printf("method %s: n = %d, gates %s\n", to_string(m).c_str(), mdl.n, mdl.diagnostics.all_gates_passed ? "passed" : "FAILED");
        for (const auto& [name, pe] : mdl.diagnostics.pe)
            std::printf("  %-6s condition %.3e %s\n", name.c_str(), pe.condition_number, pe.pass ? "" : "(not excited)");
    }
    write_json(fs::path(c.out) / "model.json", out);
    return gates ? kOk : kGate;
}

int cmd_evaluate(const Common& c) {
    const auto cfg = resolve_config(c);
    if (c.model.empty()) throw ConfigError("--model", "evaluate needs a model file");
    json out = json::object();
    const auto grid = log_grid(cfg.hinf.omega_min, cfg.hinf.omega_max, cfg.bode_points);
    const auto& truth = cfg.system;
    for (const auto& [name, mdl] : load_models(c.model)) {
        std::string note;
        const auto errs = model_errors(truth, mdl, cfg.hinf, &note);
        json ej = json::object();
        for (const auto& [entry, v] : errs) {
            ej[entry] = finite_or_null(v);
            std::printf("%-6s %-5s %.6e\n", name.c_str(), entry.c_str(), v);
        }
        out[name] = {{"errors", ej}};
        if (!note.empty()) out[name]["note"] = note;
        const auto sys = aligned_system(truth, mdl);
        if (sys.n() != truth.n()) continue;
        for (const auto& e : benchmark_entries())
            write_text(fs::path(c.out) / "bode" / (e.name + "_" + name + ".csv"),
                       bode_csv(bode_data(entry_transfer(sys.C(), sys.A(), sys.B(), sys.F(2, 0), e), grid), name));
    }
    for (const auto& e : benchmark_entries())
        write_text(fs::path(c.out) / "bode" / (e.name + "_true.csv"),
                   bode_csv(bode_data(entry_transfer(truth.C(), truth.A(), truth.B(), truth.F(2, 0), e), grid), "true"));
    write_json(fs::path(c.out) / "evaluation.json", out);
    return kOk;
}

int cmd_validate(const Common& c) {
    const auto cfg = resolve_config(c);
    if (c.model.empty()) throw ConfigError("--model", "validate needs a model file");
    std::vector<std::pair<std::string, PolynomialSystem>> models;
    for (const auto& [name, mdl] : load_models(c.model)) models.emplace_back(name, aligned_system(cfg.system, mdl));
    const auto series = validation_run(cfg.system, models, cfg.validation_duration, cfg.dt_sample, cfg.validation_noise_std,
                                       cfg.seed ^ 0x5eed5eedULL, cfg.dt_int);
    json status = json::object();
    int rc = kOk;
    for (const auto& s : series) {
        status[s.label] = {{"diverged", s.diverged}, {"error", s.error}};
        if (s.diverged) {
            std::printf("%s: diverged (%s)\n", s.label.c_str(), s.error.c_str());
            rc = kNumerical;
            continue;
        }
        write_text(fs::path(c.out) / "validation" / (s.label + ".csv"), trajectory_csv(s.trajectory));
        std::printf("%s: %zu samples\n", s.label.c_str(), s.trajectory.t.size());
    }
    write_json(fs::path(c.out) / "validation" / "status.json", status);
    return rc;
}

int cmd_montecarlo(const Common& c) {
    const auto cfg = resolve_config(c);
    const auto res = run_experiment(cfg);
    write_experiment(res, cfg, c.out);
    std::printf("%s", format_error_table(res.table).c_str());
    print_failures(res);
    std::printf("results written to %s\n", c.out.c_str());
    if (res.failed()) {
        std::fprintf(stderr, "more than half of the noisy runs failed\n");
        return kNumerical;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Carleman-moment identification of polynomial nonlinear systems"};
    app.require_subcommand(1);
    Common c;
    std::function<int(const Common&)> selected;

    auto add = [&](const std::string& name, const std::string& help, auto fn, bool inputs) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", c.config, "experiment configuration (JSON)");
        sub->add_option("--out", c.out, "output directory")->capture_default_str();
        sub->add_option("--override", c.overrides, "dotted key=value applied after parsing")->take_all()->expected(1);
        if (inputs) {
            sub->add_option("--samples", c.samples, "samples file written by simulate");
            sub->add_option("--harmonics", c.harmonics, "harmonics file written by extract");
            sub->add_option("--run", c.run, "use noise realization k of the configured variance");
        }
        sub->callback([&selected, fn] { selected = fn; });
        return sub;
    };
    add("simulate", "simulate sampled records", cmd_simulate, true);
    add("extract", "estimate harmonic coefficients", cmd_extract, true);
    add("identify", "run the identification pipeline", cmd_identify, true);
    add("evaluate", "error ratios and Bode tables of an identified model", cmd_evaluate, false)
        ->add_option("--model", c.model, "model file written by identify");
    add("validate", "white-noise validation run", cmd_validate, false)->add_option("--model", c.model, "model file written by identify");
    add("montecarlo", "noise-free and Monte-Carlo noisy experiment", cmd_montecarlo, false);
    add("demo", "bundled benchmark experiment", cmd_montecarlo, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }
    try {
        return selected(c);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const PeGateError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kGate;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumerical;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumerical;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    }
}
