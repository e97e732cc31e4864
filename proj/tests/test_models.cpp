#include "tubemax/geometry.hpp"
#include "tubemax/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace tubemax;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(Circle, EmbeddingIsUnitAndPeriodic) {
    CircleModel model(1.5);
    for (double t = 0.0; t < kPi; t += 0.1) {
        EXPECT_NEAR(model.phi(Vector::Constant(1, t)).norm(), 1.0, 1e-15);
    }
    const Vector a = model.phi(Vector::Constant(1, 0.0));
    const Vector b = model.phi(Vector::Constant(1, std::nextafter(kPi, 0.0)));
    EXPECT_LT((a - b).norm(), 1e-15);
}

TEST(Circle, InnerProductIsTraceOfProduct) {
    // <phi(s), phi(t)> = tr(h_s h_s' h_t h_t') = cos^2(s - t)
    CircleModel model(0.0);
    for (double s : {0.1, 0.9, 2.0})
        for (double t : {0.4, 1.5, 3.0}) {
            const double ip = model.phi(Vector::Constant(1, s)).dot(model.phi(Vector::Constant(1, t)));
            EXPECT_NEAR(ip, std::cos(s - t) * std::cos(s - t), 1e-15);
        }
}

TEST(Circle, ReferenceValues) {
    EXPECT_NEAR(circle_reference(1.5).laplace_factor(), 1.290994, 1e-6);
    EXPECT_NEAR(circle_reference(1.5).laplace_factor(), std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_NEAR(circle_reference(1.0).conjectured_bcri2(), 0.2, 1e-15);
    EXPECT_NEAR(circle_reference(0.25).conjectured_bcri2(), 16.0 / 41.0, 1e-15);
    EXPECT_THROW(circle_reference(0.0).laplace_factor(), DomainError);
    EXPECT_THROW(circle_reference(-1.0), DomainError);
    const auto r0 = circle_reference(0.0);
    for (double t : {0.0, 0.7, 2.1}) {
        EXPECT_EQ(r0.ell_ddot(t), 0.0);
        EXPECT_EQ(c_matrix_at(CircleModel(0.0), Vector::Constant(1, t))(0, 0), 0.0);
    }
}

TEST(Circle, ReferenceDerivativesMatchSigma) {
    for (double m : {0.25, 1.5}) {
        CircleModel model(m);
        const auto ref = circle_reference(m);
        const double h = 1e-4;
        for (double t : {0.3, 1.1, 2.5}) {
            auto ell = [&](double s) { return std::log(model.sigma(Vector::Constant(1, s))); };
            EXPECT_NEAR(ref.ell_dot(t), (ell(t + h) - ell(t - h)) / (2 * h), 1e-7);
            EXPECT_NEAR(ref.ell_ddot(t), (ell(t + h) - 2 * ell(t) + ell(t - h)) / (h * h), 1e-5);
            const auto jet = *model.log_sigma_jet(Vector::Constant(1, t));
            EXPECT_NEAR(jet.grad[0], ref.ell_dot(t), 1e-14);
            EXPECT_NEAR(jet.hess(0, 0), ref.ell_ddot(t), 1e-14);
        }
    }
}

TEST(Circle, Maximizer) {
    const auto mx = *CircleModel(1.0).maximizer();
    EXPECT_EQ(mx.d0, 0);
    ASSERT_EQ(mx.points.size(), 1u);
    EXPECT_EQ(mx.points[0].t[0], 0.0);
    const auto flat = *CircleModel(0.0).maximizer();
    EXPECT_EQ(flat.d0, 1);
    double vol = 0.0;
    for (const auto& p : flat.points) vol += p.weight;
    EXPECT_NEAR(vol, std::numbers::sqrt2 * kPi, 1e-12);
}

TEST(Wishart2, ReferenceValues) {
    const auto r11 = wishart2_reference(1.0, 1.0, 4);
    EXPECT_NEAR(r11.bcri(), 1.0 / std::numbers::sqrt2, 1e-15);
    for (double th : {0.0, 0.8, 2.0}) EXPECT_NEAR(r11.q(th), 1.0, 1e-15);
    EXPECT_NEAR(wishart2_reference(1.0, 0.75, 4).bcri(), std::sqrt(3.0 / 7.0), 1e-15);
    EXPECT_NEAR(wishart2_reference(1.0, 0.75, 4).bcri(), 0.654654, 1e-6);
    EXPECT_NEAR(wishart2_reference(1.0, 0.25, 4).bcri(), std::sqrt(0.2), 1e-15);
    const auto r = wishart2_reference(1.0, 0.25, 3);
    const double th = 0.6;
    const double s2 = std::cos(th) * std::cos(th) + 0.25 * std::sin(th) * std::sin(th);
    EXPECT_NEAR(r.sigma2(th), s2, 1e-15);
    EXPECT_NEAR(r.det_I_plus_CGinv(th), s2 * s2 / 0.25, 1e-14);
    EXPECT_NEAR(r.zeta2(th), -2.0 * 0.25 / (s2 * s2), 1e-14);
    EXPECT_THROW(wishart2_reference(0.5, 1.0, 4), DomainError);
}

TEST(Wishart2, EmbeddingAndField) {
    // sigma(u) phi(u) = vec(Lambda^{1/2} v w'), so sigma <phi, vec Xi> = v' Lambda^{1/2} Xi w.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-0.5, 0.5), A(0.0, 2 * kPi);
    Wishart2Model model(1.0, 0.4, 3);
    EXPECT_EQ(model.dim(), 3);
    EXPECT_EQ(model.ambient_dim(), 6);
    for (int r = 0; r < 20; ++r) {
        const Vector t{{A(rng), U(rng), U(rng)}};
        const Vector u = model.phi(t);
        EXPECT_NEAR(u.norm(), 1.0, 1e-14);
        const Vector v{{std::cos(t[0]), std::sin(t[0])}};
        const Vector w = detail::sphere_chart(t.tail(2));
        const Vector lv{{std::sqrt(1.0) * v[0], std::sqrt(0.4) * v[1]}};
        EXPECT_LT((model.sigma(t) * u - detail::kron_vec(lv, w)).norm(), 1e-14);
    }
}

TEST(Wishart2, FieldParameterizationCoversSphere) {
    Wishart2Model model(1.0, 0.5, 4);
    const auto axes = model.field_axes();
    ASSERT_EQ(axes.size(), 4u);
    std::mt19937_64 rng(5);
    for (int r = 0; r < 20; ++r) {
        Vector s(4);
        for (int i = 0; i < 4; ++i) {
            std::uniform_real_distribution<double> U(axes[i].lo, axes[i].hi);
            s[i] = U(rng);
        }
        const Probe pr = model.field_probe(s);
        EXPECT_NEAR(pr.point.norm(), 1.0, 1e-14);
        EXPECT_NEAR(pr.sigma, model.sigma(Vector{{s[0], 0.0, 0.0, 0.0}}), 1e-15);
    }
}

TEST(Wishart2, MaximizerDimension) {
    EXPECT_EQ(Wishart2Model(1.0, 0.5, 4).maximizer()->d0, 3);
    EXPECT_EQ(Wishart2Model(1.0, 1.0, 4).maximizer()->d0, 4);
    EXPECT_THROW(Wishart2Model(1.0, 2.0, 4), DomainError);
    EXPECT_THROW(Wishart2Model(1.0, 0.5, 1), DomainError);
}

TEST(WishartPQ, ShapeAndMaximizer) {
    WishartPQModel model({3.0, 3.0, 1.0}, 4);
    EXPECT_EQ(model.q(), 2);
    EXPECT_EQ(model.dim(), 3 + 4 - 2);
    EXPECT_EQ(model.ambient_dim(), 12);
    const auto mx = *model.maximizer();
    EXPECT_EQ(mx.d0, 2 + 4 - 2);
    EXPECT_NEAR(mx.points[0].weight, sphere_volume(2) * sphere_volume(4) / 2.0, 1e-12);
    EXPECT_THROW(WishartPQModel({3.0, 3.0, 1.0}, 4, 1), DomainError);
    EXPECT_THROW(WishartPQModel({1.0, 3.0}, 4), DomainError);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-0.4, 0.4);
    for (int r = 0; r < 10; ++r) {
        Vector t(5);
        for (int i = 0; i < 5; ++i) t[i] = U(rng);
        EXPECT_NEAR(model.phi(t).norm(), 1.0, 1e-14);
        EXPECT_LE(model.sigma(t), std::sqrt(3.0) + 1e-15);
    }
}

TEST(WishartPQ, TwoByTwoAgreesWithWishart2AtCentre) {
    WishartPQModel pq({1.0, 0.25}, 4);
    Wishart2Model w2(1.0, 0.25, 4);
    const double th = 0.3;
    Vector tpq = Vector::Zero(4);
    tpq[0] = std::sin(th);
    Vector tw = Vector::Zero(4);
    tw[0] = th;
    EXPECT_LT((pq.phi(tpq) - w2.phi(tw)).norm(), 1e-15);
    EXPECT_NEAR(pq.sigma(tpq), w2.sigma(tw), 1e-15);
}

TEST(Shapes, ProperSubmanifoldCheck) {
    EXPECT_NO_THROW(check_model_shape(CircleModel(1.0)));
    EXPECT_NO_THROW(check_model_shape(Wishart2Model(1.0, 0.5, 4)));
    EXPECT_NO_THROW(check_model_shape(TorusModel()));
    EXPECT_NO_THROW(check_model_shape(PointModel(3, 1.0)));
    EXPECT_NO_THROW(check_model_shape(GreatSphereModel()));
    EXPECT_THROW(check_model_shape(PointModel(1, 1.0), true), DomainError);
    EXPECT_NO_THROW(check_model_shape(PointModel(1, 1.0), false));
}

TEST(Scaled, OnlySigmaChanges) {
    auto base = std::make_shared<CircleModel>(1.5);
    ScaledModel scaled(base, 2.0);
    const Vector t = Vector::Constant(1, 0.7);
    EXPECT_NEAR(scaled.sigma(t), 2.0 * base->sigma(t), 1e-15);
    EXPECT_LT((scaled.phi(t) - base->phi(t)).norm(), 1e-15);
    const auto a = point_geometry(*base, t);
    const auto b = point_geometry(scaled, t);
    EXPECT_LT((a.C - b.C).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(b.ell, a.ell + std::log(2.0), 1e-14);
    EXPECT_NEAR(scaled.field_probe(t).sigma, 2.0 * base->field_probe(t).sigma, 1e-15);
}
