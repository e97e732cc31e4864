#include "tubemax/bonferroni.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace tubemax;

namespace {

// Random correlation matrix from K unit vectors in R^r.
FiniteGaussianSystem random_system(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> Kd(2, 6);
    const int K = Kd(rng);
    std::uniform_int_distribution<int> rd(2, K + 2);
    const int r = rd(rng);
    std::normal_distribution<double> N;
    Eigen::MatrixXd A(K, r);
    for (int i = 0; i < K; ++i) {
        for (int k = 0; k < r; ++k) A(i, k) = N(rng);
        A.row(i).normalize();
    }
    std::uniform_real_distribution<double> S(0.3, 3.0);
    FiniteGaussianSystem sys;
    for (int i = 0; i < K; ++i) sys.sigmas.push_back(S(rng));
    sys.rho = A * A.transpose();
    for (int i = 0; i < K; ++i) sys.rho(i, i) = 1.0;
    sys.rho = 0.5 * (sys.rho + sys.rho.transpose()).eval();
    return validate(sys);
}

FiniteGaussianSystem equicorrelated(int K, double sigma, double rho) {
    FiniteGaussianSystem sys;
    sys.sigmas.assign(static_cast<std::size_t>(K), sigma);
    sys.rho = Eigen::MatrixXd::Constant(K, K, rho);
    sys.rho.diagonal().setOnes();
    return validate(sys);
}

}  // namespace

TEST(FiniteBcri, ThreeVariableExample) {
    const auto sys = bonferroni_example();
    EXPECT_EQ(sys.n, 3);
    const auto r = finite_bcri(sys);
    EXPECT_NEAR(r.bcri, 3.0 * std::sqrt(3.0 / 7.0), 1e-12);
    EXPECT_NEAR(bcri_bound(sys), std::sqrt((1.0 + 1.0 / std::sqrt(2.0)) / 2.0) * 3.0, 1e-12);
}

TEST(FiniteBcri, EquicorrelatedClosedForm) {
    for (double rho : {-0.2, 0.0, 0.3, 0.8}) {
        const auto sys = equicorrelated(4, 1.7, rho);
        const auto r = finite_bcri(sys);
        EXPECT_NEAR(r.bcri, 1.7 * std::sqrt((1.0 + rho) / 2.0), 1e-12) << rho;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                if (i != j) {
                    EXPECT_NEAR(r.h(i, j), (1.0 - rho) / (1.0 + rho), 1e-12);
                }
            }
        }
    }
}

TEST(FiniteBcri, IndependentPair) {
    EXPECT_NEAR(finite_bcri(equicorrelated(2, 1.0, 0.0)).bcri, 1.0 / std::numbers::sqrt2, 1e-15);
}

TEST(FiniteBcri, RejectsInvalidSystems) {
    FiniteGaussianSystem sys;
    sys.sigmas = {1.0, 1.0};
    sys.rho = Eigen::MatrixXd::Ones(2, 2);
    EXPECT_THROW(finite_bcri(sys), DomainError);
    sys.rho << 1.0, 0.5, 0.4, 1.0;
    EXPECT_THROW(validate(sys), DomainError);
    FiniteGaussianSystem indefinite = equicorrelated(3, 1.0, 0.0);
    indefinite.rho << 1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0;
    EXPECT_THROW(validate(indefinite), DomainError);
    FiniteGaussianSystem small = bonferroni_example();
    small.n = 2;
    EXPECT_THROW(validate(small), DomainError);
}

TEST(FiniteBcri, BoundHoldsOnRandomSystems) {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 1000; ++k) {
        const auto sys = random_system(rng);
        const double b = finite_bcri(sys).bcri;
        const double bound = bcri_bound(sys);
        EXPECT_LE(b, bound * (1.0 + 1e-12)) << k;
        EXPECT_LT(bound, sys.sigma0()) << k;
        EXPECT_LT(b, sys.sigma0()) << k;
    }
}

TEST(FiniteSphereTail, SingleVariableIsSphericalCap) {
    // P(<e1, U> > b) for U uniform on S^{n-1}, by integrating the marginal density.
    for (int n : {3, 5, 8}) {
        FiniteGaussianSystem sys;
        sys.sigmas = {1.0};
        sys.rho = Eigen::MatrixXd::Ones(1, 1);
        sys.n = n;
        for (double b : {0.0, 0.2, 0.5, 0.9}) {
            auto dens = [n](double x) { return std::pow(1.0 - x * x, 0.5 * (n - 3)); };
            const double num = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(dens, b, 1.0, 15, 1e-14);
            const double den = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(dens, -1.0, 1.0, 15, 1e-14);
            EXPECT_NEAR(finite_sphere_tail(sys, b), num / den, 1e-12) << n << " " << b;
        }
    }
}

TEST(FiniteSphereTail, ExampleTermsBelowThresholdVanish) {
    const auto sys = bonferroni_example();
    const double bc = finite_bcri(sys).bcri;
    for (double b = bc; b <= 3.0; b += 0.05) {
        EXPECT_EQ(finite_sphere_tail(sys, b), finite_sphere_tail(sys, b, true)) << b;
    }
    EXPECT_EQ(finite_sphere_tail(sys, 3.0), 0.0);
    EXPECT_THROW(finite_sphere_tail(sys, bc * 0.99), PreconditionError);
}

TEST(FiniteSphereTail, NonincreasingAboveThreshold) {
    const auto sys = bonferroni_example();
    const double bc = finite_bcri(sys).bcri;
    double prev = 2.0;
    for (int k = 0; k <= 200; ++k) {
        const double b = bc + (3.0 - bc) * k / 200.0;
        const double v = finite_sphere_tail(sys, b);
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(FiniteGaussTail, IndependentPairInclusionExclusion) {
    const auto sys = equicorrelated(2, 1.0, 0.0);
    for (double c : {1.0, 2.0, 3.0, 4.0}) {
        const auto r = finite_gauss_tail(sys, c);
        const double q = normal_upper(c);
        const double exact = 2.0 * q - q * q;
        EXPECT_NEAR(r.value, 2.0 * q, 1e-15);
        EXPECT_LE(r.value - exact, r.error_scale) << c;
        EXPECT_NEAR(r.error_scale, chisq_upper(2, 2.0 * c * c), 1e-15);
    }
}

TEST(FiniteGaussTail, OmittedTermsWithinErrorScale) {
    const auto sys = bonferroni_example();
    for (double c : {2.0, 3.0, 4.0, 6.0}) {
        const auto all = finite_gauss_tail(sys, c);
        const auto part = finite_gauss_tail(sys, c, true);
        EXPECT_LE(all.value - part.value, all.error_scale) << c;
    }
    EXPECT_THROW(finite_gauss_tail(sys, 0.0), DomainError);
}

TEST(FiniteGaussTail, ExampleAgainstMonteCarlo) {
    const auto sys = bonferroni_example();
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(sys.rho).matrixL();
    std::mt19937_64 rng(99);
    std::normal_distribution<double> N;
    const double c = 4.0;
    const long draws = 10'000'000;
    long hits = 0;
    Eigen::Vector3d z;
    for (long k = 0; k < draws; ++k) {
        for (int i = 0; i < 3; ++i) z[i] = N(rng);
        const Eigen::Vector3d x = L * z;
        double mx = -1e300;
        for (int i = 0; i < 3; ++i) mx = std::max(mx, sys.sigmas[static_cast<std::size_t>(i)] * x[i]);
        if (mx > c) ++hits;
    }
    const double p = static_cast<double>(hits) / draws;
    const auto r = finite_gauss_tail(sys, c);
    EXPECT_LT(std::abs(r.value - p), r.error_scale);
    EXPECT_GE(r.value, p - 4.0 * std::sqrt(p * (1 - p) / draws));
}

TEST(FiniteSystemIo, CsvAndJsonAgree) {
    std::istringstream csv("# example\n2,1,3\n1,0.7071067811865476,0.5\n0.7071067811865476,1,0.7071067811865476\n"
                           "0.5,0.7071067811865476,1\n");
    const auto a = finite_system_from_csv(csv);
    const auto b = finite_system_from_json(nlohmann::json::parse(
        R"({"sigma":[2,1,3],"rho":[[1,0.7071067811865476,0.5],[0.7071067811865476,1,0.7071067811865476],[0.5,0.7071067811865476,1]]})"));
    EXPECT_NEAR(finite_bcri(a).bcri, finite_bcri(b).bcri, 1e-15);
    EXPECT_NEAR(finite_bcri(a).bcri, 3.0 * std::sqrt(3.0 / 7.0), 1e-12);
    EXPECT_THROW(finite_system_from_json(nlohmann::json::parse(R"({"sigma":[1],"rho":[[1]],"extra":1})")),
                 ConfigError);
    std::istringstream bad("1,2\n1,x\n0,1\n");
    EXPECT_THROW(finite_system_from_csv(bad), ConfigError);
}
