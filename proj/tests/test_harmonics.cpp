#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace cmid;
using namespace testutil;

namespace {

ExperimentConfig example_config(int ic_count = 1000) {
    json j = default_config_json();
    j["system"] = system_to_json(example_system());
    j["excitation"]["initial_conditions"]["count"] = ic_count;
    return config_from_json(j);
}

const std::vector<SampleRecord>& example_records() {
    static const std::vector<SampleRecord> recs = simulate_records(example_config());
    return recs;
}

/// Records of y = Y1 v (+ u = U1 v) at random oscillator states.
std::vector<SampleRecord> linear_records(const MatrixXd& y1, const MatrixXd& u1, const std::vector<double>& freqs, int count) {
    const auto ics = random_initial_conditions(2 * static_cast<int>(freqs.size()) + 1, count, 5);
    std::vector<SampleRecord> out;
    for (const auto& v0 : ics) {
        SampleRecord r;
        const int k = 4;
        r.V.resize(v0.size(), k);
        for (int s = 0; s < k; ++s) {
            r.t.push_back(0.1 * s);
            r.V.col(s) = eval_v(freqs, v0, r.t.back());
        }
        r.Y = y1 * r.V;
        r.U = u1 * r.V;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST(Extract, RecoversLinearReadout) {
    std::mt19937_64 g(1);
    const std::vector<double> freqs{0.5, 1.7};
    const MatrixXd y1 = random_matrix(g, 2, 5), u1 = random_matrix(g, 1, 5);
    ExtractOptions opt;
    opt.discard_seconds = 0.0;
    const auto hd = extract(linear_records(y1, u1, freqs, 10), 1, opt);
    EXPECT_LE((hd.Yl(1) - y1).norm(), 1e-10);
    EXPECT_LE((hd.Ul(1) - u1).norm(), 1e-10);
    EXPECT_EQ(hd.samples_used, 40);
}

TEST(Extract, DiscardDropsEarlySamples) {
    std::mt19937_64 g(2);
    const std::vector<double> freqs{0.5, 1.7};
    const auto recs = linear_records(random_matrix(g, 1, 5), random_matrix(g, 1, 5), freqs, 10);
    ExtractOptions by_time;
    by_time.discard_seconds = 0.15;
    EXPECT_EQ(extract(recs, 1, by_time).samples_used, 20);
    EXPECT_EQ(extract(recs, 1).samples_used, 30);  // default drops the first 20% (ceil of 0.8)
}

TEST(Extract, ExampleInputCoefficients) {
    ExtractOptions opt;
    opt.discard_seconds = 0.0;
    const auto hd = extract(example_records(), 4, opt);
    EXPECT_LE((hd.Ul(1) - example_U1()).cwiseAbs().maxCoeff(), 1e-8);
    for (int l = 2; l <= 4; ++l) EXPECT_LE(hd.Ul(l).cwiseAbs().maxCoeff(), 1e-8) << "degree " << l;
    EXPECT_LT(hd.condition_number, 1e4);
    EXPECT_EQ(hd.samples_used, 10000);
}

TEST(Extract, ExampleOutputsApproachExactHarmonics) {
    ExtractOptions opt;
    opt.discard_seconds = 0.0;
    const auto hd = extract(example_records(), 4, opt);
    const OscillatorBank bank(example_frequencies(), 4);
    const auto exact = exact_coefficients(example_system(), example_spec(), bank, 4);
    // the fit truncates the response at degree 4; the omitted tail is small but not negligible
    EXPECT_LE((hd.Yl(1) - exact.Yl(1)).norm(), 1e-3 * exact.Yl(1).norm());
    EXPECT_LE((hd.Yl(2) - exact.Yl(2)).norm(), 5e-2 * exact.Yl(2).norm());
}

TEST(Extract, SingleTrajectoryIsRankDeficient) {
    const auto recs = simulate_records(example_config(1));
    std::vector<SampleRecord> longer = recs;
    // pad the single torus trajectory with more of its own samples so only rank, not count, is the issue
    ExperimentConfig cfg = example_config(1);
    cfg.samples_per_record = 3000;
    const auto one = simulate_records(cfg);
    try {
        extract(one, 4, ExtractOptions{0.0});
        FAIL() << "expected a rank-deficiency error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("rank deficient"), std::string::npos);
    }
}

TEST(Extract, TooFewSamplesIsADimensionError) {
    std::mt19937_64 g(3);
    const auto recs = linear_records(random_matrix(g, 1, 5), random_matrix(g, 1, 5), {0.5, 1.7}, 1);
    EXPECT_THROW(extract(recs, 1, ExtractOptions{0.0}), DimensionError);
}

TEST(Extract, ErrorScalesLinearlyWithNoise) {
    ExtractOptions opt;
    opt.discard_seconds = 0.0;
    const HarmonicRegressor reg(example_records(), 4, opt);
    std::vector<double> err;
    for (double eps : {0.3, 0.03, 0.003}) {
        const auto hd = reg.fit(add_noise(example_records(), eps * eps, 99));
        err.push_back((hd.Ul(1) - example_U1()).norm());
    }
    for (std::size_t k = 0; k + 1 < err.size(); ++k) {
        EXPECT_GT(err[k] / err[k + 1], 7.0);
        EXPECT_LT(err[k] / err[k + 1], 14.0);
    }
}

TEST(ExactCoefficients, SatisfyStateSylvesterEquations) {
    const auto sys = example_system();
    const OscillatorBank bank(example_frequencies(), 4);
    const auto xs = exact_state_coefficients(sys, {example_U1()}, bank, 4);
    const MatrixXd s1 = build_S(example_frequencies());
    // degree 1: X1 S = A X1 + B U1, checked by dense vectorization
    EXPECT_LE((xs[0] - brute_sylvester(sys.A(), s1, sys.B() * example_U1())).norm(), 1e-12);
    // degree 2: X2 S<2> = A X2 + F20 (X1 (x) X1) N2
    const MatrixXd s2 = kron::reduced_kron_sum(s1, 2);
    const MatrixXd quad = sys.F(2, 0) * kron::merge_rows(kron::product_coeffs(xs[0], 1, xs[0], 1, 11), 2, 2);
    EXPECT_LE((xs[1] - brute_sylvester(sys.A(), s2, quad)).norm(), 1e-12);
}

TEST(ExactCoefficients, PredictSteadyStateOutput) {
    const auto sys = example_system();
    const auto spec = example_spec();
    const OscillatorBank bank(example_frequencies(), 4);
    const auto hd = exact_coefficients(sys, spec, bank, 4);
    VectorXd v0 = VectorXd::Zero(11);
    for (int i = 0; i < 5; ++i) v0(1 + 2 * i) = 1.0;
    SimulationOptions so;
    so.t_end = 60.0;
    so.sample_from = 40.0;
    so.dt_sample = 0.5;
    const auto tr = simulate(sys, make_input(spec, v0), VectorXd::Zero(2), so);
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        const VectorXd v = eval_v(spec, v0, tr.t[k]);
        VectorXd y = VectorXd::Zero(2);
        for (int l = 1; l <= 4; ++l) y += hd.Yl(l) * kron::reduced_power(v, l);
        worst = std::max(worst, (y - tr.Y.col(static_cast<Index>(k))).norm());
        scale = std::max(scale, tr.Y.col(static_cast<Index>(k)).norm());
    }
    EXPECT_LE(worst, 1e-2 * scale);
}

TEST(HarmonicsJson, RoundTrip) {
    const OscillatorBank bank(example_frequencies(), 2);
    const auto hd = exact_coefficients(example_system(), example_spec(), bank, 2);
    const auto back = harmonics_from_json(json::parse(harmonics_to_json(hd).dump()));
    ASSERT_EQ(back.order, 2);
    EXPECT_EQ(back.Yl(2), hd.Yl(2));
    EXPECT_EQ(back.Ul(1), hd.Ul(1));
}
