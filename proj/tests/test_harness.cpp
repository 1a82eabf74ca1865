#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmid/harness.hpp"
#include "test_util.hpp"

using namespace cmid;

namespace {

std::string config_dir() { return CMID_CONFIG_DIR; }

ExperimentConfig base_config(std::vector<std::string> overrides = {}) {
    return config_from_json(apply_overrides(default_config_json(), overrides), config_dir());
}

std::vector<SampleRecord> small_records(int count) {
    auto cfg = base_config({"excitation.initial_conditions.count=" + std::to_string(count)});
    return simulate_records(cfg);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Config, DefaultsMatchDeskSetup) {
    const auto cfg = base_config();
    EXPECT_EQ(cfg.ic_count, 1000);
    EXPECT_EQ(cfg.ic_seed, 11u);
    EXPECT_EQ(cfg.samples_per_record, 10);
    EXPECT_DOUBLE_EQ(cfg.dt_sample, 0.01);
    EXPECT_DOUBLE_EQ(cfg.warmup, 15.0);
    EXPECT_EQ(cfg.pipeline.L_e, 4);
    EXPECT_EQ(cfg.runs, 10);
    EXPECT_DOUBLE_EQ(cfg.noise_variance, 0.03);
    EXPECT_EQ(cfg.seed, 2024u);
    ASSERT_EQ(cfg.methods.size(), 2u);
    EXPECT_EQ(cfg.system.n(), 2);
    EXPECT_EQ(cfg.excitation.sigma(), 11);
}

TEST(Config, OverridesApply) {
    const auto cfg = base_config({"noise.variance=0.5", "montecarlo.runs=3", "seed=99", "pipeline.method=II"});
    EXPECT_DOUBLE_EQ(cfg.noise_variance, 0.5);
    EXPECT_EQ(cfg.runs, 3);
    EXPECT_EQ(cfg.seed, 99u);
    ASSERT_EQ(cfg.methods.size(), 1u);
    EXPECT_EQ(cfg.methods.front(), Method::II);
    EXPECT_DOUBLE_EQ(cfg.effective["noise"]["variance"].get<double>(), 0.5);
}

TEST(Config, MissingFrequenciesNamesField) {
    json j = default_config_json();
    j["excitation"].erase("frequencies");
    try {
        config_from_json(j, config_dir());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("excitation.frequencies"), std::string::npos) << e.what();
    }
}

TEST(Config, WrongTypeNamesField) {
    EXPECT_THROW(base_config({"noise.variance=\"lots\""}), ConfigError);
    try {
        base_config({"montecarlo.runs=[1]"});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("montecarlo.runs"), std::string::npos);
    }
}

TEST(Config, BundledFileMatchesDefault) {
    const auto from_file = load_config(config_dir() + "/experiment.json");
    const auto builtin = base_config();
    EXPECT_EQ(from_file.effective, builtin.effective);
}

TEST(Noise, ZeroVarianceIsIdentity) {
    const auto recs = small_records(3);
    const auto noisy = add_noise(recs, 0.0, 1, 0);
    for (std::size_t r = 0; r < recs.size(); ++r) {
        EXPECT_EQ(noisy[r].U, recs[r].U);
        EXPECT_EQ(noisy[r].Y, recs[r].Y);
        EXPECT_EQ(noisy[r].V, recs[r].V);
    }
}

TEST(Noise, VarianceSeedsAndIndependence) {
    SampleRecord rec;
    const Index k = 100000;
    rec.t.resize(static_cast<std::size_t>(k));
    rec.V = MatrixXd::Zero(3, k);
    rec.U = MatrixXd::Zero(1, k);
    rec.Y = MatrixXd::Zero(2, k);
    const std::vector<SampleRecord> recs{rec};

    const auto a = add_noise(recs, 0.03, 2024, 0);
    for (Index c = 0; c < 3; ++c) {
        const VectorXd row = c == 0 ? VectorXd(a[0].U.row(0)) : VectorXd(a[0].Y.row(c - 1));
        const double mean = row.mean();
        const double var = (row.array() - mean).square().sum() / static_cast<double>(k - 1);
        EXPECT_NEAR(var, 0.03, 0.03 * 0.03) << "channel " << c;
        EXPECT_NEAR(mean, 0.0, 5.0 * std::sqrt(0.03 / k));
    }
    EXPECT_EQ(a[0].V, rec.V);

    const auto again = add_noise(recs, 0.03, 2024, 0);
    EXPECT_EQ(again[0].U, a[0].U);
    EXPECT_EQ(again[0].Y, a[0].Y);

    const auto other_run = add_noise(recs, 0.03, 2024, 1);
    EXPECT_NE(other_run[0].U, a[0].U);
    // channels are independent streams
    const VectorXd y0 = a[0].Y.row(0), y1 = a[0].Y.row(1);
    EXPECT_LT(std::abs(y0.dot(y1)) / (y0.norm() * y1.norm()), 0.02);
}

TEST(Records, SamplesFollowWarmup) {
    const auto recs = small_records(2);
    ASSERT_EQ(recs.size(), 2u);
    for (const auto& r : recs) {
        ASSERT_EQ(r.t.size(), 10u);
        EXPECT_NEAR(r.t.front(), 15.0, 1e-12);
        EXPECT_NEAR(r.t.back(), 15.09, 1e-12);
        EXPECT_EQ(r.V.rows(), 11);
        EXPECT_EQ(r.U.rows(), 1);
        EXPECT_EQ(r.Y.rows(), 2);
    }
    EXPECT_NE(recs[0].V, recs[1].V);
    // the first oscillator component has a zero generator and stays at its initial value
    EXPECT_LE((recs[0].V.row(0).array() - recs[0].V(0, 0)).abs().maxCoeff(), 1e-12);
}

TEST(Experiment, NoiselessSingleRun) {
    auto cfg = base_config({"noise.variance=0", "montecarlo.runs=1"});
    const auto res = run_experiment(cfg);
    EXPECT_TRUE(res.harmonics_exact_for_noisy);
    EXPECT_FALSE(res.failed());
    for (const auto& e : res.table.entries) {
        const double nf = res.table.at("noise_free", e).mean;
        EXPECT_LE(nf, 1e-8) << e;
        for (Method m : cfg.methods) {
            const auto& cell = res.table.at(condition_name(m), e);
            EXPECT_EQ(cell.count, 1);
            // a single run: the mean is that run's value and the spread is zero
            EXPECT_EQ(cell.mean, res.runs[0].at(m).errors.at(e));
            EXPECT_EQ(cell.std, 0.0);
        }
        EXPECT_EQ(res.table.at("noisy_I", e).mean, res.noise_free.at(Method::I).errors.at(e));
    }
}

TEST(Experiment, AggregateStatistics) {
    const auto c = aggregate({1.0, 2.0, 3.0, std::numeric_limits<double>::quiet_NaN()});
    EXPECT_EQ(c.count, 3);
    EXPECT_EQ(c.failed, 1);
    EXPECT_DOUBLE_EQ(c.mean, 2.0);
    EXPECT_DOUBLE_EQ(c.std, 1.0);
    const auto none = aggregate({std::numeric_limits<double>::quiet_NaN()});
    EXPECT_TRUE(std::isnan(none.mean));
}

TEST(Experiment, RegressionPathIsDeterministicAndScales) {
    // small Monte Carlo over a reduced initial-condition set: identical seeds give identical tables,
    // and tenfold less noise gives smaller errors on the linear entry
    const std::vector<std::string> common{"excitation.initial_conditions.count=300", "montecarlo.runs=2"};
    auto with = [&](std::vector<std::string> extra) {
        auto ov = common;
        ov.insert(ov.end(), extra.begin(), extra.end());
        return base_config(ov);
    };
    const auto hi = run_experiment(with({"noise.variance=0.03"}));
    const auto hi2 = run_experiment(with({"noise.variance=0.03"}));
    EXPECT_EQ(error_table_to_json(hi.table).dump(), error_table_to_json(hi2.table).dump());
    EXPECT_FALSE(hi.harmonics_exact_for_noisy);
    EXPECT_EQ(hi.samples, 3000);

    const auto lo = run_experiment(with({"noise.variance=0.0003"}));
    for (Method m : {Method::I, Method::II}) {
        const auto& a = lo.table.at(condition_name(m), "G111");
        const auto& b = hi.table.at(condition_name(m), "G111");
        if (a.count > 0 && b.count > 0) EXPECT_LT(a.mean, b.mean) << to_string(m);
    }
}

TEST(Experiment, ParallelMatchesSerial) {
    const std::vector<std::string> ov{"excitation.initial_conditions.count=300", "montecarlo.runs=3"};
    auto serial = base_config(ov);
    auto par = base_config(ov);
    par.threads = 3;
    EXPECT_EQ(error_table_to_json(run_experiment(serial).table).dump(), error_table_to_json(run_experiment(par).table).dump());
}

TEST(Validation, IdenticalModelReproducesTruth) {
    const auto truth = example_system();
    const auto series = validation_run(truth, {{"copy", truth}}, 10.0, 0.01, 0.05, 5);
    ASSERT_EQ(series.size(), 2u);
    EXPECT_EQ(series[0].label, "true");
    ASSERT_FALSE(series[0].diverged);
    ASSERT_FALSE(series[1].diverged);
    EXPECT_EQ(series[0].trajectory.Y, series[1].trajectory.Y);
    EXPECT_LT(series[0].trajectory.Y.cwiseAbs().maxCoeff(), 10.0);
}

TEST(Validation, NoiselessModelTracksTruth) {
    auto cfg = base_config({"noise.variance=0", "montecarlo.runs=1", "pipeline.method=I"});
    const auto res = run_experiment(cfg);
    ASSERT_TRUE(res.noise_free.at(Method::I).ok);
    const auto model = aligned_system(cfg.system, res.noise_free.at(Method::I).model);
    const auto series = validation_run(cfg.system, {{"noiseless", model}}, 50.0, 0.01, 0.05, 17);
    ASSERT_FALSE(series[1].diverged);
    const MatrixXd diff = series[0].trajectory.Y - series[1].trajectory.Y;
    const double rms = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
    EXPECT_LE(rms, 1e-5);
}

TEST(Validation, DivergentModelIsFlagged) {
    const auto truth = example_system();
    auto bad = truth;
    bad.set_F(1, 0, MatrixXd::Identity(2, 2));
    bad.set_F(0, 1, MatrixXd::Constant(2, 1, 50.0));
    const auto series = validation_run(truth, {{"bad", bad}}, 50.0, 0.01, 0.05, 5);
    EXPECT_FALSE(series[0].diverged);
    EXPECT_TRUE(series[1].diverged);
    EXPECT_FALSE(series[1].error.empty());
}

TEST(Output, Formatting) {
    EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
    EXPECT_EQ(fmt17(std::numeric_limits<double>::quiet_NaN()), "nan");
    const auto pts = bode_data(LinearMapTransfer{MatrixXd::Ones(1, 1), -MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 0, 0}, {1.0});
    const std::string csv = bode_csv(pts, "true");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "omega_rad_s,mag_db,phase_deg,series_label");
    EXPECT_NE(csv.find(",true"), std::string::npos);
}

TEST(Output, WriteExperimentCreatesArtifacts) {
    auto cfg = base_config({"noise.variance=0", "montecarlo.runs=2", "validation.duration=5"});
    const auto res = run_experiment(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "cmid_harness_out";
    std::filesystem::remove_all(dir);
    write_experiment(res, cfg, dir);
    for (const char* f : {"error_table.json", "error_table.csv", "config.json", "noise_free.json", "runs/run_0.json",
                          "runs/run_1.json", "validation/status.json", "validation/true.csv", "validation/noiseless.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    for (const auto& e : benchmark_entries())
        for (const char* v : {"true", "noiseless", "noisy-I", "noisy-II"})
            EXPECT_TRUE(std::filesystem::exists(dir / "bode" / (e.name + "_" + v + ".csv"))) << e.name << " " << v;

    const json table = json::parse(slurp(dir / "error_table.json"));
    EXPECT_EQ(table["conditions"].size(), 3u);
    EXPECT_EQ(table["entries"].size(), 4u);
    const json echoed = json::parse(slurp(dir / "config.json"));
    EXPECT_EQ(echoed["noise"]["variance"].get<double>(), 0.0);
    const std::string csv = slurp(dir / "error_table.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    std::filesystem::remove_all(dir);
}
