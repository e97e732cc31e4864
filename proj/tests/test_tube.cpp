#include "tubemax/models.hpp"
#include "tubemax/tube.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace tubemax;

namespace {

constexpr double kPi = std::numbers::pi;

// Volume fraction of the angular tube of radius acos(b) around a closed
// curve of length L in S^{n-1}: L Omega_{n-2} sin^{n-2}(theta) / ((n-2) Omega_n).
double curve_tube_oracle(double length, int n, double b) {
    auto omega = [](int k) { return 2.0 * std::pow(kPi, 0.5 * k) / std::tgamma(0.5 * k); };
    return length * omega(n - 2) * std::pow(1.0 - b * b, 0.5 * (n - 2)) / ((n - 2) * omega(n));
}

// Clifford torus in S^3: the tube is {|psi - pi/4| < theta} in Hopf
// coordinates, of volume 2 pi^2 sin(2 theta) out of Omega_4 = 2 pi^2.
double torus_tube_oracle(double b) { return 2.0 * b * std::sqrt(1.0 - b * b); }

// Hand-coded circle formula in terms of ell', ell''.
double circle_display(double m, double c) {
    auto f = [&](double t) {
        const double l1 = -m * std::sin(2 * t), l2 = -2 * m * std::cos(2 * t);
        const double s2 = std::exp(-2 * m * std::sin(t) * std::sin(t));
        const double a = 1.0 + l1 * l1 / 2.0;
        const double x = a * c * c / s2;
        return (1.0 + (-l2 + l1 * l1) / 2.0) / (2 * kPi * a) * std::exp(-x / 2.0) * std::sqrt(2.0);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kPi, 15, 1e-14);
}

TubeOptions fast() {
    TubeOptions o;
    o.quad.nodes = 32;
    return o;
}

}  // namespace

TEST(Quadrature, GaussLegendreMatchesReference) {
    for (int n : {1, 2, 5, 8, 16}) {
        const Rule1D r = gauss_legendre(n);
        double sum = 0.0;
        for (double w : r.w) sum += w;
        EXPECT_NEAR(sum, 2.0, 1e-14);
        for (int k = 0; k < 2 * n; ++k) {
            double q = 0.0;
            for (std::size_t i = 0; i < r.x.size(); ++i) q += r.w[i] * std::pow(r.x[i], k);
            const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
            EXPECT_NEAR(q, exact, 1e-14) << n << " " << k;
        }
    }
    const Rule1D r8 = gauss_legendre(8);
    const auto& bx = boost::math::quadrature::gauss<double, 8>::abscissa();
    for (std::size_t i = 0; i < bx.size(); ++i) EXPECT_NEAR(r8.x[4 + i], bx[i], 1e-15);
}

TEST(Quadrature, TensorRuleIntegratesProducts) {
    const auto rule = tensor_rule({axis_rule(Axis{0.0, 2 * kPi, true}, 16, 8), axis_rule(Axis{0.0, 1.0, false}, 16, 8)});
    double q = 0.0;
    for (std::size_t i = 0; i < rule.points.size(); ++i) {
        q += rule.weights[i] * std::cos(rule.points[i][0]) * std::cos(rule.points[i][0]) *
             std::exp(rule.points[i][1]);
    }
    EXPECT_NEAR(q, kPi * (std::exp(1.0) - 1.0), 1e-13);
}

TEST(Quadrature, ParallelLoopPropagatesErrors) {
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { hits[i] = static_cast<int>(i); });
    for (int i = 0; i < 100; ++i) EXPECT_EQ(hits[static_cast<std::size_t>(i)], i);
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7) throw DomainError("boom");
                 }),
                 DomainError);
}

TEST(Weyl, CircleWithConstantVariance) {
    CircleModel model(0.0);
    for (double b : {0.1, 0.5, 0.9, 0.99}) {
        EXPECT_NEAR(tube_tail_sphere(model, b, fast()).value,
                    curve_tube_oracle(std::numbers::sqrt2 * kPi, 3, b), 1e-12);
    }
}

TEST(Weyl, FlatTorus) {
    TorusModel model;
    for (double b : {0.2, 0.6, 0.75, 0.95}) {
        const auto v = tube_tail_sphere(model, b, fast());
        EXPECT_NEAR(v.value, torus_tube_oracle(b), 1e-10) << b;
        EXPECT_EQ(v.terms.at(1), 0.0);
    }
}

TEST(TubeSphere, VanishesAboveMaximumSigma) {
    CircleModel model(1.5);
    EXPECT_EQ(tube_tail_sphere(model, 1.0, fast()).value, 0.0);
    EXPECT_EQ(tube_tail_sphere(model, 1.3, fast()).value, 0.0);
    Wishart2Model w(1.0, 0.5, 3);
    EXPECT_EQ(tube_tail_sphere(w, 1.0, fast()).value, 0.0);
}

TEST(TubeGauss, CircleMatchesDisplayedFormula) {
    for (double m : {0.0, 1.0 / 16, 0.25, 1.5}) {
        CircleModel model(m);
        const std::vector<double> cs{0.5, 1.0, 2.0, 3.0, 4.5};
        const auto curve = tube_curve(model, cs, TailKind::gauss, fast());
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const double ref = circle_display(m, cs[i]);
            EXPECT_NEAR(curve.tube[i], ref, 1e-9 * std::max(ref, 1e-6)) << m << " " << cs[i];
        }
        EXPECT_LT(curve.convergence_delta, 1e-6);
        for (std::size_t i = 1; i < cs.size(); ++i) EXPECT_LT(curve.tube[i], curve.tube[i - 1]);
    }
}

TEST(TubeGauss, Wishart2MatchesClosedForm) {
    for (auto [l1, l2] : {std::pair{1.0, 1.0}, {1.0, 0.875}, {1.0, 0.75}, {1.0, 0.25}}) {
        Wishart2Model model(l1, l2, 4);
        std::vector<double> xs;
        for (double x = 2.0; x <= 40.0; x += 2.0) xs.push_back(x);
        std::vector<double> cs;
        for (double x : xs) cs.push_back(std::sqrt(x));
        const auto curve = tube_curve(model, cs, TailKind::gauss, fast());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            EXPECT_NEAR(curve.tube[i], wishart_tube_closed_form(l1, l2, 4, xs[i]), 1e-10);
        }
    }
}

TEST(TubeGauss, ChiSquareMixtureOfSphereForm) {
    // E over chi^2_n of the sphere form at c / sqrt(chi^2) equals the Gaussian form.
    CircleModel model(0.25);
    const DomainSample s = sample_domain(model, 128, fast());
    for (double c : {0.5, 1.0, 2.0}) {
        auto f = [&](double r2) {
            return evaluate_terms(s, TailKind::sphere, c / std::sqrt(r2)).value * chisq_density(3, r2);
        };
        boost::math::quadrature::tanh_sinh<double> ts;
        const double sigma0 = 1.0;
        const double lo = c * c / (sigma0 * sigma0);
        const double mix = ts.integrate(f, lo, lo + 20.0) +
                           boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                               f, lo + 20.0, std::numeric_limits<double>::infinity(), 10, 1e-13);
        EXPECT_NEAR(mix, evaluate_terms(s, TailKind::gauss, c).value, 1e-6);
    }
}

TEST(TubeSphere, RestrictionIsExactAboveBcri) {
    CircleModel model(1.5);
    const double bcri = std::sqrt(circle_reference(1.5).conjectured_bcri2());
    TubeOptions plain = fast();
    TubeOptions restricted = fast();
    restricted.restrict_mcri = true;
    restricted.bcri = bcri;
    for (double b : {bcri, 0.4, 0.6, 0.9}) {
        EXPECT_EQ(tube_tail_sphere(model, b, plain).value, tube_tail_sphere(model, b, restricted).value) << b;
    }
    // Below b_cri the restriction removes mass.
    EXPECT_NE(tube_tail_sphere(model, 0.1, plain).value, tube_tail_sphere(model, 0.1, restricted).value);
    TubeOptions missing = fast();
    missing.restrict_mcri = true;
    EXPECT_THROW(tube_tail_sphere(model, 0.5, missing), PreconditionError);
}

TEST(TubeGauss, RestrictedIntervalsConverge) {
    CircleModel model(1.5);
    TubeOptions opt = fast();
    opt.restrict_mcri = true;
    opt.bcri = std::sqrt(circle_reference(1.5).conjectured_bcri2());
    const auto curve = tube_curve(model, {1.0, 2.0, 3.0}, TailKind::gauss, opt);
    EXPECT_LT(curve.convergence_delta, 1e-6);
    const auto plain = tube_curve(model, {1.0, 2.0, 3.0}, TailKind::gauss, fast());
    EXPECT_LT(curve.tube[0], plain.tube[0]);
    // Outside M_cri the chi-square argument is at least c^2 / b_cri^2, so the
    // removed part fades much faster than the tail itself.
    for (std::size_t i = 1; i < 3; ++i) EXPECT_NEAR(curve.tube[i] / plain.tube[i], 1.0, 1e-3);
}

TEST(TubeGauss, EmptyGridIsRejected) {
    EXPECT_THROW(tube_curve(CircleModel(1.0), {}, TailKind::gauss), ConfigError);
}

TEST(Laplace, CircleFactor) {
    for (double m : {0.25, 1.5, 10.0}) {
        CircleModel model(m);
        for (double c : {1.0, 3.0}) {
            EXPECT_NEAR(laplace_tail(model, c), std::sqrt((1 + m) / m) * normal_upper(c),
                        1e-12 * normal_upper(c));
        }
    }
}

TEST(Laplace, FlatCircleIsWholeManifold) {
    CircleModel model(0.0);
    for (double c : {1.0, 2.5}) {
        EXPECT_NEAR(laplace_tail(model, c), std::exp(-c * c / 2) / std::numbers::sqrt2, 1e-12);
    }
}

TEST(Laplace, WishartTheorem) {
    for (auto lam : std::vector<std::vector<double>>{{1.0, 0.25}, {2.0, 2.0, 1.0}, {3.0, 1.0, 0.5}}) {
        for (int nu : {1, 3, 4}) {
            WishartPQModel model(lam, nu);
            for (double x : {5.0, 20.0}) {
                const double ref = wishart_laplace_tail(lam, nu, x);
                EXPECT_NEAR(laplace_tail(model, std::sqrt(x)), ref, 1e-7 * ref);
            }
        }
    }
    Wishart2Model w(1.0, 0.25, 4);
    EXPECT_NEAR(laplace_tail(w, std::sqrt(10.0)), wishart_laplace_tail({1.0, 0.25}, 4, 10.0), 1e-12);
    Wishart2Model eq(1.0, 1.0, 4);
    EXPECT_NEAR(laplace_tail(eq, std::sqrt(10.0)), wishart_laplace_tail({1.0, 1.0}, 4, 10.0), 1e-12);
}

TEST(Laplace, NuOneIsWeightedChiSquare) {
    // nu = 1: [prod (1 - l_i/l_1)]^{-1/2} Gbar_q(x / l_1)
    const std::vector<double> lam{2.0, 2.0, 1.0, 0.5};
    const double expected = 1.0 / std::sqrt(0.5 * 0.75) * chisq_upper(2, 9.0 / 2.0);
    EXPECT_NEAR(wishart_laplace_tail(lam, 1, 9.0), expected, 1e-14);
}

namespace {
// sigma = exp(-sin^4 t): quartic maximum at t = 0.
class QuarticCircle final : public ManifoldModel {
public:
    std::string name() const override { return "quartic"; }
    int dim() const override { return 1; }
    int ambient_dim() const override { return 3; }
    std::vector<Axis> box() const override { return CircleModel(0).box(); }
    Vector phi(const Vector& t) const override { return CircleModel(0).phi(t); }
    double sigma(const Vector& t) const override { return std::exp(-std::pow(std::sin(t[0]), 4)); }
    std::optional<MaximizerManifold> maximizer() const override {
        return MaximizerManifold{0, {WeightedPoint{Vector::Zero(1), 1.0}}};
    }
};
}  // namespace

TEST(Laplace, DegenerateMaximum) {
    EXPECT_THROW(laplace_tail(QuarticCircle(), 3.0), DegenerateMaximumError);
    EXPECT_THROW(laplace_tail(TorusModel(), 3.0), PreconditionError);
}

TEST(Laplace, TubeRatioTendsToOne) {
    CircleModel model(1.5);
    const auto curve = tube_curve(model, {3.0, 4.0, 5.0, 6.0}, TailKind::gauss, fast());
    double prev = 1e9;
    for (std::size_t i = 0; i < 4; ++i) {
        const double ratio = curve.tube[i] / laplace_tail(model, curve.thresholds[i]);
        EXPECT_LT(std::abs(ratio - 1.0), prev);
        prev = std::abs(ratio - 1.0);
    }
    EXPECT_LT(prev, 0.05);
}

TEST(ClosedForm, EqualEigenvaluesIntegrandIsConstant) {
    // l1 = l2: q = 1, sigma^2 = 1, so the integral is 2 pi [Gbar_{nu+1} - Gbar_{nu-1}] scaled.
    const int nu = 4;
    for (double x : {3.0, 12.0}) {
        const double expected = sphere_volume(nu) / (2 * sphere_volume(nu + 1)) * 2 * kPi *
                                (chisq_upper(nu + 1, x) - chisq_upper(nu - 1, x));
        EXPECT_NEAR(wishart_tube_closed_form(1.0, 1.0, nu, x), expected, 1e-15);
    }
    EXPECT_THROW(wishart_tube_closed_form(0.5, 1.0, 4, 1.0), DomainError);
}

TEST(ThresholdGrid, InvertsLeadingTerm) {
    CircleModel model(0.25);
    const auto grid = default_threshold_grid(model, TailKind::gauss, fast(), 20, 0.2, 1e-5);
    ASSERT_EQ(grid.size(), 20u);
    const DomainSample s = sample_domain(model, 32, fast());
    EXPECT_NEAR(evaluate_terms(s, TailKind::gauss, grid.front()).terms.at(0), 0.2, 1e-10);
    EXPECT_NEAR(evaluate_terms(s, TailKind::gauss, grid.back()).terms.at(0), 1e-5, 1e-14);
    for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GT(grid[i], grid[i - 1]);
}

TEST(TermConstant, MatchesPairingNormalization) {
    EXPECT_NEAR(tube_term_constant(1, 0), 1.0 / (2 * kPi), 1e-15);
    EXPECT_NEAR(tube_term_constant(2, 2), 1.0 / (2 * kPi * 2.0), 1e-15);
}
