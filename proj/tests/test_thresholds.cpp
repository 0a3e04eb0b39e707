#include <cmath>
#include <sstream>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include "msdi/thresholds.hpp"

using namespace msdi;
using big = boost::multiprecision::cpp_dec_float_50;

namespace {

KlTable two_ar1_at_half() {
    KlTable t;
    t.values = {{{1.0 / 6.0, -0.125}}, {{1.0 / 6.0, -0.125}}};
    return t;
}
} // namespace

TEST(FromAlpha, Examples) {
    Matrix al(2, 2);
    al << 0.01, 0.02, 0.04, 0.05;
    auto a = thresholds_from_alpha(ErrorMatrix(al));
    EXPECT_DOUBLE_EQ(a(0, 0), 99.0);
    EXPECT_DOUBLE_EQ(a(1, 1), 19.0);
    EXPECT_DOUBLE_EQ(a(1, 0), 50.0);
    EXPECT_DOUBLE_EQ(a(0, 1), 25.0);
    EXPECT_EQ(a.provenance(), ThresholdProvenance::from_alpha);
}

TEST(FromAlpha, BoundsInvertTheCalibration) {
    for (double x : {0.5, 0.1, 0.013, 1e-4, 1e-9}) {
        Matrix al = Matrix::Constant(3, 3, x);
        al(0, 2) = x / 3;
        auto a = thresholds_from_alpha(ErrorMatrix(al));
        const Vector pfa = pfa_bound(a);
        const Matrix pmi = pmi_bound(a);
        for (Eigen::Index i = 0; i < 3; ++i) {
            EXPECT_NEAR(pfa(i), al(i, i), 2 * std::numeric_limits<double>::epsilon() * al(i, i) * 4);
            for (Eigen::Index j = 0; j < 3; ++j)
                if (i != j) EXPECT_NEAR(pmi(i, j), al(i, j), 4 * std::numeric_limits<double>::epsilon() * al(i, j));
        }
    }
}

TEST(FromBeta, OptimalAgainstExtendedPrecision) {
    const auto beta = ErrorMatrix::harmonic(5, 0.3);
    const auto hp = hyperparams_from_beta(beta, 2.0);
    const auto a = thresholds_optimal(beta, hp);
    EXPECT_EQ(a.provenance(), ThresholdProvenance::optimal);
    const big rho(hp.rho_opt);
    const big tail = boost::multiprecision::pow(big(1) - rho, static_cast<int>(hp.k_star));
    const big c = big(1) + big(beta.trace());
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const big want = i == j ? c / (big(beta(i, i)) * tail) - 1 : c / (big(beta(j, i)) * rho * tail);
            EXPECT_NEAR(a(i, j) / want.convert_to<double>(), 1.0, 1e-10) << i << ',' << j;
        }
}

TEST(FromBeta, EmbeddingIdentity) {
    // The beta calibration is the alpha calibration applied to the first embedding.
    const auto beta = ErrorMatrix::harmonic(4, 0.1);
    const auto hp = hyperparams_from_beta(beta, 1.55);
    const double rho = 0.05;
    const auto a = thresholds_from_beta(beta, hp, rho);
    const auto e = alpha_embeddings(beta, hp, rho);
    const auto b = thresholds_from_alpha(e.alpha1);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a(i, j) / b(i, j), 1.0, 1e-12);
}

TEST(FromBeta, Errors) {
    const auto beta = ErrorMatrix::harmonic(3, 0.3);
    const auto hp = hyperparams_from_beta(beta, 2.0);
    EXPECT_THROW(thresholds_from_beta(beta, hp, 0.0), input_error);
    Hyperparams huge = hp;
    huge.k_star = 100000;
    EXPECT_THROW(thresholds_from_beta(beta, huge, 0.5), numeric_error);
}

TEST(FromBeta, MonotoneInBeta) {
    auto beta = ErrorMatrix::harmonic(3, 0.3);
    const auto hp = hyperparams_from_beta(beta, 2.0);
    const auto a = thresholds_from_beta(beta, hp, 0.1);
    const auto b = thresholds_from_beta(beta.scaled(0.5), hp, 0.1);
    EXPECT_TRUE((b.entries().array() > a.entries().array()).all());
}

TEST(Iota, ArExample) {
    const auto kl = two_ar1_at_half();
    const Vector io = iota(kl, 0, 0);
    EXPECT_NEAR(io(0), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(io(1), 7.0 / 24.0, 1e-15);
    EXPECT_NEAR(io(1), 0.2917, 1e-4);
}

TEST(Iota, NonPositiveIsNumericError) {
    KlTable kl;
    kl.values = {{{0.1, -0.05}}, {{0.2, 0.3}}};
    EXPECT_THROW(iota(kl, 0, 0), numeric_error);
    EXPECT_THROW(iota(kl, 2, 0), input_error);
}

TEST(DelayBounds, Examples) {
    const auto beta = ErrorMatrix::constant(2, 1e-4);
    Vector ones = Vector::Ones(2);
    EXPECT_NEAR(lower_bound_delay(beta, 0, ones), 9.2103, 1e-4);
    EXPECT_NEAR(lower_bound_delay(beta, 0, ones, 2.0), std::pow(std::log(1e4), 2), 1e-10);

    // With A_ij = 1/beta_ji on every entry the upper and lower functionals agree.
    ThresholdMatrix a(Matrix::Constant(2, 2, 1e4), ThresholdProvenance::manual);
    EXPECT_NEAR(upper_bound_delay(a, 0, ones), lower_bound_delay(beta, 0, ones), 1e-12);

    const auto kl = two_ar1_at_half();
    EXPECT_NEAR(theoretic_add(beta, kl, 0, 0), std::log(1e4) * 6.0, 1e-10);
    EXPECT_NEAR(theoretic_add_for(beta, kl, 0, 0.5), std::log(1e4) / 0.5, 1e-10);
}

TEST(DelayBounds, MonotoneInBetaAndThreshold) {
    const auto kl = two_ar1_at_half();
    double prev = 0;
    for (double f : {1.0, 0.1, 0.01, 0.001}) {
        const double b = theoretic_add(ErrorMatrix::harmonic(2, 0.3).scaled(f), kl, 1, 0);
        EXPECT_GT(b, prev);
        prev = b;
    }
    const Vector io = iota(kl, 0, 0);
    prev = 0;
    for (double a : {10.0, 100.0, 1e4}) {
        const double u = upper_bound_delay(ThresholdMatrix(Matrix::Constant(2, 2, a), ThresholdProvenance::manual), 0, io);
        EXPECT_GT(u, prev);
        prev = u;
    }
}

TEST(BoundReport, CsvLayout) {
    const auto beta = ErrorMatrix::harmonic(2, 0.3);
    const auto hp = hyperparams_from_beta(beta, 2.0);
    const auto rep = bound_report(beta, thresholds_optimal(beta, hp), two_ar1_at_half());
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_LE(rep.rows[0].b_r, rep.rows[0].B_r);
    std::ostringstream os;
    write_csv(os, rep);
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "i,theta_index,iota_1,iota_2,b_r,B_r,kl_source");
    EXPECT_NE(s.find(",closed-form\n"), std::string::npos);
}
