#pragma once

// Built-in index manifolds: the circle process in Sym(2), the 2 x 2 and p x p
// Wishart largest-root models, and a few charts with known geometry used as
// test oracles (flat torus, great sphere, single point).

#include "tubemax/error.hpp"
#include "tubemax/model.hpp"
#include "tubemax/specfun.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace tubemax {

namespace detail {
constexpr double kPi = std::numbers::pi;
}

/// phi(t) = vec of h h^T in Sym(2) = R^3 with h = (cos t, sin t) and the
/// off-diagonal scaled by sqrt 2; sigma(t) = exp(-m sin^2 t). A circle of
/// radius 1/sqrt 2 with g = 2.
class CircleModel final : public ManifoldModel {
public:
    explicit CircleModel(double m) : m_(m) {
        if (!(m >= 0.0) || !std::isfinite(m)) throw DomainError("circle: m must be >= 0");
    }

    double m() const { return m_; }
    std::string name() const override { return "circle"; }
    int dim() const override { return 1; }
    int ambient_dim() const override { return 3; }
    std::vector<Axis> box() const override { return {Axis{0.0, detail::kPi, true}}; }

    Vector phi(const Vector& t) const override {
        const double c = std::cos(t[0]);
        const double s = std::sin(t[0]);
        return Vector{{c * c, std::numbers::sqrt2 * s * c, s * s}};
    }
    double sigma(const Vector& t) const override {
        const double s = std::sin(t[0]);
        return std::exp(-m_ * s * s);
    }
    std::optional<Matrix> tangent(const Vector& t) const override {
        const double s2 = std::sin(2 * t[0]);
        const double c2 = std::cos(2 * t[0]);
        Matrix T(3, 1);
        T << -s2, std::numbers::sqrt2 * c2, s2;
        return T;
    }
    std::optional<MetricJet> metric_jet(const Vector&) const override {
        MetricJet j{Matrix::Constant(1, 1, 2.0), Tensor3(1), Tensor4(1)};
        return j;
    }
    std::optional<LogSigmaJet> log_sigma_jet(const Vector& t) const override {
        const double s = std::sin(t[0]);
        LogSigmaJet j;
        j.ell = -m_ * s * s;
        j.grad = Vector::Constant(1, -m_ * std::sin(2 * t[0]));
        j.hess = Matrix::Constant(1, 1, -2.0 * m_ * std::cos(2 * t[0]));
        return j;
    }
    std::map<std::string, double> parameters() const override { return {{"m", m_}}; }

    std::optional<MaximizerManifold> maximizer() const override {
        if (m_ > 0.0) return MaximizerManifold{0, {WeightedPoint{Vector::Zero(1), 1.0}}};
        // sigma is constant: M0 = M, sampled uniformly with weights in dV units.
        constexpr int kSamples = 64;
        MaximizerManifold mm{1, {}};
        for (int k = 0; k < kSamples; ++k) {
            mm.points.push_back(WeightedPoint{Vector::Constant(1, detail::kPi * k / kSamples),
                                              std::numbers::sqrt2 * detail::kPi / kSamples});
        }
        return mm;
    }

private:
    double m_;
};

/// Closed-form reference quantities of the circle process.
struct CircleReference {
    double m;
    double ell_dot(double t) const { return -m * std::sin(2 * t); }
    double ell_ddot(double t) const { return -2.0 * m * std::cos(2 * t); }
    /// sqrt((1 + m) / m); undefined at m = 0.
    double laplace_factor() const {
        if (!(m > 0.0)) throw DomainError("circle_reference: Laplace factor needs m > 0");
        return std::sqrt((1.0 + m) / m);
    }
    /// Numerically conjectured b_cri^2 = 1 / (1 + (1 + m)^2).
    double conjectured_bcri2() const { return 1.0 / (1.0 + (1.0 + m) * (1.0 + m)); }
};

inline CircleReference circle_reference(double m) {
    if (!(m >= 0.0)) throw DomainError("circle_reference: m must be >= 0");
    return CircleReference{m};
}

namespace detail {

// Square-root chart of the unit sphere S^{k-1}: w = (sqrt(1 - |t|^2), t).
inline Vector sphere_chart(const Vector& t) {
    const double r2 = t.squaredNorm();
    if (!(r2 < 1.0)) throw DomainError("sphere chart: |t| must be < 1");
    Vector w(t.size() + 1);
    w[0] = std::sqrt(1.0 - r2);
    w.tail(t.size()) = t;
    return w;
}

// d w / d t_k as columns.
inline Matrix sphere_chart_tangent(const Vector& t) {
    const int k = static_cast<int>(t.size());
    const double w1 = std::sqrt(1.0 - t.squaredNorm());
    Matrix T = Matrix::Zero(k + 1, k);
    for (int i = 0; i < k; ++i) {
        T(0, i) = -t[i] / w1;
        T(i + 1, i) = 1.0;
    }
    return T;
}

// vec(a w^T) with the first index fastest: u_{i + p j} = a_i w_j.
inline Vector kron_vec(const Vector& a, const Vector& w) {
    const int p = static_cast<int>(a.size());
    Vector u(p * w.size());
    for (int j = 0; j < w.size(); ++j) u.segment(j * p, p) = a * w[j];
    return u;
}

// Hyperspherical coordinates of S^{k-1}; psi_1..psi_{k-2} in [0, pi], psi_{k-1} periodic.
inline Vector hyperspherical(const Vector& psi) {
    const int k = static_cast<int>(psi.size()) + 1;
    Vector w(k);
    double prod = 1.0;
    for (int i = 0; i < k - 1; ++i) {
        w[i] = prod * std::cos(psi[i]);
        prod *= std::sin(psi[i]);
    }
    w[k - 1] = prod;
    return w;
}

inline std::vector<Axis> hyperspherical_axes(int k) {
    std::vector<Axis> axes;
    for (int i = 0; i < k - 2; ++i) axes.push_back(Axis{0.0, kPi, false});
    if (k >= 2) axes.push_back(Axis{0.0, 2 * kPi, true});
    return axes;
}

}  // namespace detail

/// Largest singular value of Lambda^{1/2} Xi for a 2 x nu Gaussian Xi, as the
/// maximum of sigma(u) <u, vec Xi> over M = {a(theta) (x) w}. Chart
/// (theta, t_2..t_nu) with v = (cos theta, sin theta) and the square-root
/// chart for w. n = 2 nu, d = nu.
class Wishart2Model final : public ManifoldModel {
public:
    Wishart2Model(double lambda1, double lambda2, int nu) : l1_(lambda1), l2_(lambda2), nu_(nu) {
        if (!(lambda2 > 0.0) || !(lambda1 >= lambda2)) {
            throw DomainError("wishart2: need lambda1 >= lambda2 > 0");
        }
        if (nu < 2) throw DomainError("wishart2: need nu >= 2");
    }

    double lambda1() const { return l1_; }
    double lambda2() const { return l2_; }
    int nu() const { return nu_; }

    std::string name() const override { return "wishart2"; }
    int dim() const override { return nu_; }
    int ambient_dim() const override { return 2 * nu_; }
    std::vector<Axis> box() const override {
        std::vector<Axis> axes{Axis{0.0, 2 * detail::kPi, true}};
        for (int i = 1; i < nu_; ++i) axes.push_back(Axis{-0.5, 0.5, false});
        return axes;
    }

    double S(double th) const {
        const double c = std::cos(th), s = std::sin(th);
        return l1_ * c * c + l2_ * s * s;
    }
    Vector a(double th) const {
        const double sg = std::sqrt(S(th));
        return Vector{{std::sqrt(l1_) * std::cos(th) / sg, std::sqrt(l2_) * std::sin(th) / sg}};
    }
    Vector a_dot(double th) const {
        const double Sv = S(th);
        const double sg = std::sqrt(Sv);
        const double dS = (l2_ - l1_) * std::sin(2 * th);
        const Vector raw{{-std::sqrt(l1_) * std::sin(th), std::sqrt(l2_) * std::cos(th)}};
        return raw / sg - a(th) * (dS / (2.0 * Sv));
    }

    Vector phi(const Vector& t) const override {
        return detail::kron_vec(a(t[0]), detail::sphere_chart(t.tail(nu_ - 1)));
    }
    double sigma(const Vector& t) const override { return std::sqrt(S(t[0])); }

    std::optional<Matrix> tangent(const Vector& t) const override {
        const Vector tw = t.tail(nu_ - 1);
        const Vector w = detail::sphere_chart(tw);
        const Matrix Tw = detail::sphere_chart_tangent(tw);
        const Vector av = a(t[0]);
        Matrix T(2 * nu_, nu_);
        T.col(0) = detail::kron_vec(a_dot(t[0]), w);
        for (int k = 0; k < nu_ - 1; ++k) T.col(k + 1) = detail::kron_vec(av, Tw.col(k));
        return T;
    }

    std::optional<MetricJet> metric_jet(const Vector& t) const override {
        const int d = nu_;
        const double th = t[0];
        const double Sv = S(th);
        const double dS = (l2_ - l1_) * std::sin(2 * th);
        const double d2S = 2.0 * (l2_ - l1_) * std::cos(2 * th);
        const double L = l1_ * l2_;
        MetricJet j{Matrix::Zero(d, d), Tensor3(d), Tensor4(d)};
        j.G(0, 0) = L / (Sv * Sv);
        j.dG(0, 0, 0) = -2.0 * L * dS / (Sv * Sv * Sv);
        j.d2G(0, 0, 0, 0) = L * (6.0 * dS * dS / (Sv * Sv * Sv * Sv) - 2.0 * d2S / (Sv * Sv * Sv));

        const Vector tw = t.tail(d - 1);
        const double s = 1.0 / (1.0 - tw.squaredNorm());
        const int k = d - 1;
        auto delta = [](int x, int y) { return x == y ? 1.0 : 0.0; };
        for (int i = 0; i < k; ++i)
            for (int jj = 0; jj < k; ++jj) {
                j.G(i + 1, jj + 1) = delta(i, jj) + s * tw[i] * tw[jj];
                for (int a = 0; a < k; ++a) {
                    j.dG(a + 1, i + 1, jj + 1) = s * (delta(i, a) * tw[jj] + delta(jj, a) * tw[i]) +
                                                 2.0 * s * s * tw[i] * tw[jj] * tw[a];
                    for (int b = 0; b < k; ++b) {
                        j.d2G(a + 1, b + 1, i + 1, jj + 1) =
                            s * (delta(i, a) * delta(jj, b) + delta(jj, a) * delta(i, b)) +
                            2.0 * s * s *
                                (delta(i, a) * tw[jj] * tw[b] + delta(jj, a) * tw[i] * tw[b] +
                                 delta(i, b) * tw[jj] * tw[a] + delta(jj, b) * tw[i] * tw[a] +
                                 delta(a, b) * tw[i] * tw[jj]) +
                            8.0 * s * s * s * tw[i] * tw[jj] * tw[a] * tw[b];
                    }
                }
            }
        return j;
    }

    std::optional<LogSigmaJet> log_sigma_jet(const Vector& t) const override {
        const int d = nu_;
        const double th = t[0];
        const double Sv = S(th);
        const double dS = (l2_ - l1_) * std::sin(2 * th);
        const double d2S = 2.0 * (l2_ - l1_) * std::cos(2 * th);
        LogSigmaJet j;
        j.ell = 0.5 * std::log(Sv);
        j.grad = Vector::Zero(d);
        j.hess = Matrix::Zero(d, d);
        j.grad[0] = dS / (2.0 * Sv);
        j.hess(0, 0) = d2S / (2.0 * Sv) - dS * dS / (2.0 * Sv * Sv);
        return j;
    }

    std::map<std::string, double> parameters() const override {
        return {{"lambda1", l1_}, {"lambda2", l2_}, {"nu", static_cast<double>(nu_)}};
    }

    /// The integrand is invariant under rotations of w, so theta is integrated
    /// at w = e_1 and the hemisphere of w contributes Omega_nu / 2.
    IntegrationDomain integration_domain() const override {
        const int k = nu_ - 1;
        return IntegrationDomain{{Axis{0.0, 2 * detail::kPi, true}},
                                 [k](const Vector& s) {
                                     Vector t = Vector::Zero(k + 1);
                                     t[0] = s[0];
                                     return t;
                                 },
                                 0.5 * sphere_volume(nu_), "theta at w = e1, times Omega_nu / 2"};
    }

    /// u = a(theta) (x) e_1; the other point is a(s) (x) (cos psi e_1 + sin psi e_2).
    /// Rotations of w reduce every pair to this form.
    PairSearchSpace pair_search() const override {
        const int k = nu_ - 1;
        return PairSearchSpace{{Axis{0.0, 2 * detail::kPi, true}},
                               [k](const Vector& s) {
                                   Vector t = Vector::Zero(k + 1);
                                   t[0] = s[0];
                                   return t;
                               },
                               {Axis{0.0, 2 * detail::kPi, true}, Axis{0.0, 2 * detail::kPi, true}},
                               [this](const Vector& s) {
                                   Vector w = Vector::Zero(nu_);
                                   w[0] = std::cos(s[1]);
                                   w[1] = std::sin(s[1]);
                                   return Probe{detail::kron_vec(a(s[0]), w), std::sqrt(S(s[0]))};
                               }};
    }

    std::optional<MaximizerManifold> maximizer() const override {
        if (l1_ > l2_) {
            return MaximizerManifold{nu_ - 1, {WeightedPoint{Vector::Zero(nu_), sphere_volume(nu_)}}};
        }
        return MaximizerManifold{nu_,
                                 {WeightedPoint{Vector::Zero(nu_), detail::kPi * sphere_volume(nu_)}}};
    }

    /// Global parameterization of M for field-maximum simulation:
    /// theta in [0, 2 pi) and hyperspherical angles of w.
    std::vector<Axis> field_axes() const override {
        std::vector<Axis> axes{Axis{0.0, 2 * detail::kPi, true}};
        for (const auto& ax : detail::hyperspherical_axes(nu_)) axes.push_back(ax);
        return axes;
    }
    Probe field_probe(const Vector& s) const override {
        const Vector w = detail::hyperspherical(s.tail(nu_ - 1));
        return Probe{detail::kron_vec(a(s[0]), w), std::sqrt(S(s[0]))};
    }

private:
    double l1_, l2_;
    int nu_;
};

/// Closed-form reference quantities of the 2 x 2 Wishart model.
struct Wishart2Reference {
    double lambda1, lambda2;
    int nu;
    double sigma2(double th) const {
        return lambda1 * std::cos(th) * std::cos(th) + lambda2 * std::sin(th) * std::sin(th);
    }
    double q(double th) const {
        return std::cos(th) * std::cos(th) / lambda1 + std::sin(th) * std::sin(th) / lambda2;
    }
    double det_I_plus_CGinv(double th) const {
        const double s2 = sigma2(th);
        return s2 * s2 / (lambda1 * lambda2);
    }
    double g11(double th) const {
        const double s2 = sigma2(th);
        return lambda1 * lambda2 / (s2 * s2);
    }
    double zeta2(double th) const { return -(nu - 1) * g11(th); }
    double bcri() const { return std::sqrt(lambda1 * lambda2 / (lambda1 + lambda2)); }
};

inline Wishart2Reference wishart2_reference(double lambda1, double lambda2, int nu) {
    if (!(lambda2 > 0.0) || !(lambda1 >= lambda2)) {
        throw DomainError("wishart2_reference: need lambda1 >= lambda2 > 0");
    }
    return Wishart2Reference{lambda1, lambda2, nu};
}

/// p x p Wishart largest root with Lambda = diag(lambdas), lambda_1 = ... =
/// lambda_q > lambda_{q+1} >= ... > 0. Local square-root charts for v and w
/// around u0 = phi(e_1, e_1); d = p + nu - 2, n = p nu. Intended for the
/// Laplace approximation on M0 = {v in span(e_1..e_q)}.
class WishartPQModel final : public ManifoldModel {
public:
    WishartPQModel(std::vector<double> lambdas, int nu, int q = 0)
        : lam_(std::move(lambdas)), nu_(nu), q_(q) {
        const int p = static_cast<int>(lam_.size());
        if (p < 1) throw DomainError("wishartpq: need p >= 1");
        if (nu < 1) throw DomainError("wishartpq: need nu >= 1");
        for (int i = 0; i < p; ++i) {
            if (!(lam_[i] > 0.0)) throw DomainError("wishartpq: eigenvalues must be positive");
            if (i > 0 && lam_[i] > lam_[i - 1]) {
                throw DomainError("wishartpq: eigenvalues must be in descending order");
            }
        }
        int inferred = 0;
        while (inferred < p && lam_[inferred] == lam_[0]) ++inferred;
        if (q_ == 0) q_ = inferred;
        if (q_ != inferred) {
            throw DomainError("wishartpq: q = " + std::to_string(q_) +
                              " disagrees with the multiplicity of lambda_1 (" +
                              std::to_string(inferred) + ")");
        }
    }

    int p() const { return static_cast<int>(lam_.size()); }
    int q() const { return q_; }
    int nu() const { return nu_; }
    const std::vector<double>& lambdas() const { return lam_; }

    std::string name() const override { return "wishartpq"; }
    int dim() const override { return p() + nu_ - 2; }
    int ambient_dim() const override { return p() * nu_; }
    std::vector<Axis> box() const override {
        return std::vector<Axis>(static_cast<std::size_t>(dim()), Axis{-0.5, 0.5, false});
    }

    Vector phi(const Vector& t) const override {
        const Vector v = detail::sphere_chart(t.head(p() - 1));
        const Vector w = detail::sphere_chart(t.tail(nu_ - 1));
        return detail::kron_vec(scaled(v) / sigma_of(v), w);
    }
    double sigma(const Vector& t) const override {
        return sigma_of(detail::sphere_chart(t.head(p() - 1)));
    }
    std::optional<Matrix> tangent(const Vector& t) const override {
        const int pv = p() - 1;
        const Vector tv = t.head(pv);
        const Vector tw = t.tail(nu_ - 1);
        const Vector v = detail::sphere_chart(tv);
        const Vector w = detail::sphere_chart(tw);
        const Matrix Tv = detail::sphere_chart_tangent(tv);
        const Matrix Tw = detail::sphere_chart_tangent(tw);
        const double sg = sigma_of(v);
        const Vector av = scaled(v) / sg;
        Matrix T(ambient_dim(), dim());
        for (int k = 0; k < pv; ++k) {
            const Vector dv = Tv.col(k);
            const double dS = 2.0 * v.dot(scaled(scaled(dv)));  // d(v' Lambda v)
            const Vector da = scaled(dv) / sg - av * (dS / (2.0 * sg * sg));
            T.col(k) = detail::kron_vec(da, w);
        }
        for (int k = 0; k < nu_ - 1; ++k) T.col(pv + k) = detail::kron_vec(av, Tw.col(k));
        return T;
    }

    std::map<std::string, double> parameters() const override {
        std::map<std::string, double> out{{"p", static_cast<double>(p())},
                                          {"q", static_cast<double>(q_)},
                                          {"nu", static_cast<double>(nu_)}};
        for (int i = 0; i < p(); ++i) out["lambda" + std::to_string(i + 1)] = lam_[i];
        return out;
    }

    /// The Laplace integrand is constant on M0 by symmetry, so M0 is represented
    /// by u0 with weight Vol(M0) = Omega_q Omega_nu / Omega_1.
    std::optional<MaximizerManifold> maximizer() const override {
        const double vol = sphere_volume(q_) * sphere_volume(nu_) / sphere_volume(1);
        return MaximizerManifold{q_ + nu_ - 2, {WeightedPoint{Vector::Zero(dim()), vol}}};
    }

private:
    Vector scaled(const Vector& v) const {
        Vector out(v.size());
        for (int i = 0; i < v.size(); ++i) out[i] = std::sqrt(lam_[i]) * v[i];
        return out;
    }
    double sigma_of(const Vector& v) const { return scaled(v).norm(); }

    std::vector<double> lam_;
    int nu_;
    int q_;
};

/// Clifford-type flat torus phi = (cos t1, sin t1, cos t2, sin t2) / sqrt 2 in
/// S^3 with constant sigma. g = I / 2, R = 0.
class TorusModel final : public ManifoldModel {
public:
    explicit TorusModel(double sigma0 = 1.0) : s0_(sigma0) {}
    std::string name() const override { return "torus"; }
    int dim() const override { return 2; }
    int ambient_dim() const override { return 4; }
    std::vector<Axis> box() const override {
        return {Axis{0.0, 2 * detail::kPi, true}, Axis{0.0, 2 * detail::kPi, true}};
    }
    Vector phi(const Vector& t) const override {
        return Vector{{std::cos(t[0]), std::sin(t[0]), std::cos(t[1]), std::sin(t[1])}} /
               std::numbers::sqrt2;
    }
    double sigma(const Vector&) const override { return s0_; }
    std::optional<Matrix> tangent(const Vector& t) const override {
        Matrix T = Matrix::Zero(4, 2);
        T(0, 0) = -std::sin(t[0]);
        T(1, 0) = std::cos(t[0]);
        T(2, 1) = -std::sin(t[1]);
        T(3, 1) = std::cos(t[1]);
        return T / std::numbers::sqrt2;
    }

private:
    double s0_;
};

/// Great 2-sphere (sin a cos b, sin a sin b, cos a, 0) in S^3, polar chart
/// restricted away from the poles. Only phi is supplied, so every derivative
/// is taken by differences.
class GreatSphereModel final : public ManifoldModel {
public:
    std::string name() const override { return "great-sphere"; }
    int dim() const override { return 2; }
    int ambient_dim() const override { return 4; }
    std::vector<Axis> box() const override {
        return {Axis{0.2, detail::kPi - 0.2, false}, Axis{0.0, 2 * detail::kPi, true}};
    }
    Vector phi(const Vector& t) const override {
        return Vector{{std::sin(t[0]) * std::cos(t[1]), std::sin(t[0]) * std::sin(t[1]),
                       std::cos(t[0]), 0.0}};
    }
    double sigma(const Vector&) const override { return 1.0; }
};

/// A single point u0 = e_1 in S^{n-1}; d = 0.
class PointModel final : public ManifoldModel {
public:
    explicit PointModel(int n = 3, double sigma0 = 1.0) : n_(n), s0_(sigma0) {}
    std::string name() const override { return "point"; }
    int dim() const override { return 0; }
    int ambient_dim() const override { return n_; }
    std::vector<Axis> box() const override { return {}; }
    Vector phi(const Vector&) const override { return Vector::Unit(n_, 0); }
    double sigma(const Vector&) const override { return s0_; }

private:
    int n_;
    double s0_;
};

/// sigma replaced by kappa * sigma; the embedding and the derivatives of
/// log sigma other than its value are unchanged.
class ScaledModel final : public ManifoldModel {
public:
    ScaledModel(std::shared_ptr<const ManifoldModel> base, double kappa)
        : base_(std::move(base)), kappa_(kappa) {
        if (!(kappa > 0.0)) throw DomainError("scaled model: kappa must be positive");
    }
    std::string name() const override { return base_->name(); }
    int dim() const override { return base_->dim(); }
    int ambient_dim() const override { return base_->ambient_dim(); }
    std::vector<Axis> box() const override { return base_->box(); }
    Vector phi(const Vector& t) const override { return base_->phi(t); }
    double sigma(const Vector& t) const override { return kappa_ * base_->sigma(t); }
    std::optional<Matrix> tangent(const Vector& t) const override { return base_->tangent(t); }
    std::optional<MetricJet> metric_jet(const Vector& t) const override {
        return base_->metric_jet(t);
    }
    std::optional<LogSigmaJet> log_sigma_jet(const Vector& t) const override {
        auto j = base_->log_sigma_jet(t);
        if (j) j->ell += std::log(kappa_);
        return j;
    }
    std::map<std::string, double> parameters() const override {
        auto p = base_->parameters();
        p["kappa"] = kappa_;
        return p;
    }
    IntegrationDomain integration_domain() const override { return base_->integration_domain(); }
    PairSearchSpace pair_search() const override {
        auto ps = base_->pair_search();
        auto inner = ps.probe_w;
        const double k = kappa_;
        ps.probe_w = [inner, k](const Vector& s) {
            Probe pr = inner(s);
            pr.sigma *= k;
            return pr;
        };
        return ps;
    }
    std::optional<MaximizerManifold> maximizer() const override { return base_->maximizer(); }
    std::vector<Axis> field_axes() const override { return base_->field_axes(); }
    Probe field_probe(const Vector& s) const override {
        Probe pr = base_->field_probe(s);
        pr.sigma *= kappa_;
        return pr;
    }

private:
    std::shared_ptr<const ManifoldModel> base_;
    double kappa_;
};

}  // namespace tubemax
