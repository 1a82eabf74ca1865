#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace cmid;
using namespace testutil;

TEST(FreqDecompose, OscillatorMatrix) {
    const auto fc = freq_decompose(MatrixXd::Identity(11, 11), build_S(example_frequencies()));
    EXPECT_EQ(fc.alpha(), 1);
    std::vector<double> w;
    for (Index k : fc.oscillatory) w.push_back(fc.omega(k));
    std::sort(w.begin(), w.end());
    ASSERT_EQ(w.size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(w[k], example_frequencies()[k], 1e-12);
}

TEST(FreqDecompose, SecondDegreeOscillator) {
    const OscillatorBank bank(example_frequencies(), 2);
    const auto fc = freq_decompose(MatrixXd::Identity(66, 66), bank.degree(2));
    EXPECT_EQ(fc.alpha(), 6);
    std::vector<double> got;
    for (Index k = 0; k < fc.omega.size(); ++k) got.push_back(fc.omega(k));
    std::vector<double> base{0.0};
    for (double w : example_frequencies()) {
        base.push_back(w);
        base.push_back(-w);
    }
    std::vector<double> want;
    for (std::size_t a = 0; a < base.size(); ++a)
        for (std::size_t b = a; b < base.size(); ++b) want.push_back(base[a] + base[b]);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(FreqDecompose, ScalarZero) {
    const auto fc = freq_decompose(MatrixXd::Ones(2, 1), MatrixXd::Zero(1, 1));
    EXPECT_EQ(fc.alpha(), 1);
    EXPECT_TRUE(fc.oscillatory.empty());
    EXPECT_TRUE(fc.reassemble().isApprox(MatrixXd::Ones(2, 1)));
}

TEST(SpectralBasis, OscillatorDiagonalizesReducedSum) {
    const auto freqs = example_frequencies();
    const MatrixXd s = build_S(freqs);
    for (int l = 1; l <= 3; ++l) {
        const auto basis = SpectralBasis::oscillator(freqs, l);
        const MatrixXd sl = kron::reduced_kron_sum(s, l);
        ASSERT_EQ(basis.size(), sl.rows());
        // columns of T are right eigenvectors of the generator acting from the right: Z S T = Z T Lambda
        const MatrixXcd st = sl.cast<cplx>() * basis.blocks()[0].T;
        const MatrixXcd tl = basis.blocks()[0].T * basis.eigenvalues().asDiagonal();
        EXPECT_LE((st - tl).norm(), 1e-10 * (1 + st.norm())) << "degree " << l;
        EXPECT_TRUE(basis.generator().isApprox(sl, 1e-12));
        const MatrixXcd prod = basis.blocks()[0].T * basis.blocks()[0].T_inv;
        EXPECT_LE((prod - MatrixXcd::Identity(sl.rows(), sl.rows())).norm(), 1e-10);
    }
}

TEST(SpectralBasis, FromMatrixMatchesOscillator) {
    const auto freqs = example_frequencies();
    const auto num = SpectralBasis::from_matrix(build_S(freqs));
    const auto exact = SpectralBasis::oscillator(freqs, 1);
    std::vector<double> a, b;
    for (Index k = 0; k < 11; ++k) {
        a.push_back(num.eigenvalues()(k).imag());
        b.push_back(exact.eigenvalues()(k).imag());
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(SpectralBasis, RejectsUnstableOrDecayingModes) {
    EXPECT_THROW(SpectralBasis::from_matrix(-MatrixXd::Identity(2, 2)), NumericalError);
}

TEST(SpectralBasis, ConjugatePartners) {
    const auto basis = SpectralBasis::oscillator(example_frequencies(), 2);
    const auto& lam = basis.eigenvalues();
    for (Index k = 0; k < basis.size(); ++k) {
        const Index p = basis.partner()[static_cast<std::size_t>(k)];
        EXPECT_NEAR(std::abs(lam(p) - std::conj(lam(k))), 0.0, 1e-12);
        EXPECT_EQ(basis.partner()[static_cast<std::size_t>(p)], k);
    }
}

TEST(SpectralBasis, TransformRoundTripAndGenerator) {
    std::mt19937_64 g(1);
    const OscillatorBank bank(example_frequencies(), 3);
    const auto stacked = bank.stacked(3);
    const MatrixXd z = random_matrix(g, 3, stacked->size());
    const auto fc = freq_decompose(z, stacked);
    EXPECT_LE((fc.reassemble() - z).norm(), 1e-10 * z.norm());
    const MatrixXd sbar = block_diag<MatrixXd>({kron::reduced_kron_sum(build_S(example_frequencies()), 1),
                                                kron::reduced_kron_sum(build_S(example_frequencies()), 2),
                                                kron::reduced_kron_sum(build_S(example_frequencies()), 3)});
    EXPECT_LE((stacked->apply_generator(z) - z * sbar).norm(), 1e-10 * z.norm());
}

TEST(SpectralBasis, ComponentsOfRealDataAreConjugateSymmetric) {
    std::mt19937_64 g(2);
    const OscillatorBank bank(example_frequencies(), 2);
    const auto fc = freq_decompose(random_matrix(g, 2, 66), bank.degree(2));
    for (Index k = 0; k < 66; ++k) {
        const Index p = fc.basis->partner()[static_cast<std::size_t>(k)];
        EXPECT_LE((fc.components.col(p) - fc.components.col(k).conjugate()).norm(), 1e-10);
    }
}

TEST(ReducedTransform, HomomorphismOfPowers) {
    std::mt19937_64 g(3);
    const MatrixXd p = random_matrix(g, 3, 3);
    const VectorXd w = random_matrix(g, 3, 1);
    for (int d = 1; d <= 3; ++d) {
        const MatrixXcd r = reduced_transform(p.cast<cplx>(), d);
        const VectorXd lhs = kron::reduced_power(VectorXd(p * w), d);
        EXPECT_LE((r * kron::reduced_power(w, d).cast<cplx>() - lhs.cast<cplx>()).norm(), 1e-10 * (1 + lhs.norm()));
    }
}

TEST(OscillatorBank, WidthsAndSigma) {
    const OscillatorBank bank(example_frequencies(), 4);
    EXPECT_EQ(bank.sigma(), 11);
    EXPECT_EQ(bank.widths(4), (std::vector<Index>{11, 66, 286, 1001}));
    EXPECT_EQ(bank.stacked(4)->size(), 1364);
    EXPECT_THROW(bank.degree(5), DimensionError);
}
