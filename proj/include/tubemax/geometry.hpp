#pragma once

// Local Riemannian quantities of a chart point: metric, connection,
// curvature, the variance correction C and the curvature invariants zeta_e.

#include "tubemax/error.hpp"
#include "tubemax/model.hpp"
#include "tubemax/specfun.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace tubemax {

/// How derivatives of the model are obtained.
///   automatic:         analytic jets when the model supplies them, else differences
///   analytic:          require analytic jets (error if missing)
///   finite_difference: differences of g (uses an analytic tangent if supplied)
///   phi_only:          differences of phi itself, ignoring every analytic hook
enum class DerivativeMode { automatic, analytic, finite_difference, phi_only };

struct GeometryOptions {
    DerivativeMode mode = DerivativeMode::automatic;
    bool curvature = true;
    double cond_limit = 1e12;
};

struct PointGeometry {
    Vector t;
    Vector u;
    Matrix tangent;  // n x d, columns phi_i
    double sigma = 1.0;
    double ell = 0.0;
    Vector dell;   // d_i ell
    Matrix d2ell;  // d_i d_j ell

    Matrix G;
    Matrix G_inv;
    double sqrt_det_G = 1.0;
    Tensor3 Gamma;  // Gamma(i, j, k) = Gamma_{ij,k}
    Tensor4 R;      // R(i, j, k, l) = R_{ij;kl}
    Matrix C;

    Vector grad_ell;          // coefficients ell_i g^{ij}
    Vector grad_ell_ambient;  // sum_j (ell_i g^{ij}) phi_j in R^n
    double grad_ell_norm2 = 0.0;
    double det_I_plus_CGinv = 1.0;

    bool has_curvature = false;
    bool gtilde_singular = false;
    Matrix Gtilde_inv;
    Tensor4 Rtilde;  // Rtilde(i, j, k, l) = Rtilde_{ij}^{kl}
    std::vector<double> zeta;  // zeta_0..zeta_d; empty when unavailable

    int dim() const { return static_cast<int>(t.size()); }
};

namespace detail {

inline double fd_scale(double t) { return std::max(1.0, std::abs(t)); }

inline Vector shifted(const Vector& t, int i, double h) {
    Vector s = t;
    s[i] += h;
    return s;
}

inline Vector shifted2(const Vector& t, int i, double hi, int j, double hj) {
    Vector s = t;
    s[i] += hi;
    s[j] += hj;
    return s;
}

// Fourth-order central difference of phi along every chart axis.
inline Matrix fd_tangent(const ManifoldModel& model, const Vector& t) {
    const int d = model.dim();
    const int n = model.ambient_dim();
    const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.2);
    Matrix T(n, d);
    for (int i = 0; i < d; ++i) {
        const double h = base * fd_scale(t[i]);
        const Vector p2 = model.phi(model.wrap(shifted(t, i, 2 * h)));
        const Vector p1 = model.phi(model.wrap(shifted(t, i, h)));
        const Vector m1 = model.phi(model.wrap(shifted(t, i, -h)));
        const Vector m2 = model.phi(model.wrap(shifted(t, i, -2 * h)));
        T.col(i) = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
    }
    return T;
}

inline Matrix tangent_for(const ManifoldModel& model, const Vector& t, DerivativeMode mode) {
    if (mode != DerivativeMode::phi_only) {
        if (auto T = model.tangent(t)) return *T;
        if (mode == DerivativeMode::analytic) {
            throw DomainError(model.name() + ": analytic tangent requested but not supplied");
        }
    }
    return fd_tangent(model, t);
}

// Generic first/second differences of a function of the chart point, all
// fourth order. Step sizes balance roundoff against truncation: eps^(1/5) and
// eps^(1/6) when the function is smooth to roundoff (analytic tangent or
// scalar sigma), wider when its values carry differencing noise of their own.
template <class F, class V>
void fd_jet(const ManifoldModel& model, const Vector& t, const F& f, bool noisy,
            std::vector<V>& first, std::vector<std::vector<V>>& second) {
    const int d = static_cast<int>(t.size());
    const double eps = std::numeric_limits<double>::epsilon();
    const double b1 = noisy ? 1e-3 : std::pow(eps, 0.2);
    const double b2 = noisy ? 3e-3 : std::pow(eps, 1.0 / 6.0);
    auto at = [&](const Vector& s) -> V { return f(model.wrap(s)); };
    first.assign(static_cast<std::size_t>(d), V{});
    second.assign(static_cast<std::size_t>(d), std::vector<V>(static_cast<std::size_t>(d)));
    const V f0 = at(t);
    for (int i = 0; i < d; ++i) {
        const double h = b1 * fd_scale(t[i]);
        first[i] = (-at(shifted(t, i, 2 * h)) + 8.0 * at(shifted(t, i, h)) -
                    8.0 * at(shifted(t, i, -h)) + at(shifted(t, i, -2 * h))) /
                   (12.0 * h);
    }
    for (int i = 0; i < d; ++i) {
        const double hi = b2 * fd_scale(t[i]);
        second[i][i] = (-at(shifted(t, i, 2 * hi)) + 16.0 * at(shifted(t, i, hi)) - 30.0 * f0 +
                        16.0 * at(shifted(t, i, -hi)) - at(shifted(t, i, -2 * hi))) /
                       (12.0 * hi * hi);
        for (int j = i + 1; j < d; ++j) {
            const double hj = b2 * fd_scale(t[j]);
            auto mixed = [&](double a, double b) -> V {
                return (at(shifted2(t, i, a, j, b)) - at(shifted2(t, i, a, j, -b)) -
                        at(shifted2(t, i, -a, j, b)) + at(shifted2(t, i, -a, j, -b))) /
                       (4.0 * a * b);
            };
            // Richardson on (h, 2h) lifts the four-point stencil to fourth order.
            const V v = (4.0 * mixed(hi, hj) - mixed(2 * hi, 2 * hj)) / 3.0;
            second[i][j] = v;
            second[j][i] = v;
        }
    }
}

inline MetricJet fd_metric_jet(const ManifoldModel& model, const Vector& t, DerivativeMode mode) {
    const int d = model.dim();
    const bool noisy = mode == DerivativeMode::phi_only || !model.tangent(t).has_value();
    auto metric = [&](const Vector& s) -> Matrix {
        const Matrix T = tangent_for(model, s, mode);
        return T.transpose() * T;
    };
    std::vector<Matrix> first;
    std::vector<std::vector<Matrix>> second;
    fd_jet<decltype(metric), Matrix>(model, t, metric, noisy, first, second);
    MetricJet jet;
    jet.G = metric(t);
    jet.dG = Tensor3(d);
    jet.d2G = Tensor4(d);
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) jet.dG(k, i, j) = 0.5 * (first[k](i, j) + first[k](j, i));
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    jet.d2G(a, b, i, j) = 0.5 * (second[a][b](i, j) + second[a][b](j, i));
    return jet;
}

inline LogSigmaJet fd_log_sigma_jet(const ManifoldModel& model, const Vector& t) {
    const int d = model.dim();
    auto ell = [&](const Vector& s) -> double { return std::log(model.sigma(s)); };
    std::vector<double> first;
    std::vector<std::vector<double>> second;
    fd_jet<decltype(ell), double>(model, t, ell, false, first, second);
    LogSigmaJet jet;
    jet.ell = ell(t);
    jet.grad = Vector(d);
    jet.hess = Matrix(d, d);
    for (int i = 0; i < d; ++i) {
        jet.grad[i] = first[i];
        for (int j = 0; j < d; ++j) jet.hess(i, j) = second[i][j];
    }
    return jet;
}

inline MetricJet metric_jet_for(const ManifoldModel& model, const Vector& t, DerivativeMode mode) {
    if (mode == DerivativeMode::automatic || mode == DerivativeMode::analytic) {
        if (auto jet = model.metric_jet(t)) return *jet;
        if (mode == DerivativeMode::analytic) {
            throw DomainError(model.name() + ": analytic metric jet requested but not supplied");
        }
    }
    return fd_metric_jet(model, t, mode);
}

inline LogSigmaJet log_sigma_jet_for(const ManifoldModel& model, const Vector& t,
                                     DerivativeMode mode) {
    if (mode == DerivativeMode::automatic || mode == DerivativeMode::analytic) {
        if (auto jet = model.log_sigma_jet(t)) return *jet;
        if (mode == DerivativeMode::analytic) {
            throw DomainError(model.name() + ": analytic log-sigma jet requested but not supplied");
        }
    }
    return fd_log_sigma_jet(model, t);
}

inline void check_finite(const Matrix& A, const char* what) {
    if (!A.allFinite()) throw AccuracyError(std::string("non-finite ") + what);
}

}  // namespace detail

/// Gamma_{ij,k} = (d_i g_jk + d_j g_ik - d_k g_ij) / 2.
inline Tensor3 christoffel(const MetricJet& jet) {
    const int d = static_cast<int>(jet.G.rows());
    Tensor3 Gam(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                Gam(i, j, k) = 0.5 * (jet.dG(i, j, k) + jet.dG(j, i, k) - jet.dG(k, i, j));
    return Gam;
}

/// Curvature tensor normalized so that R_{ij;kl} = g_ik g_jl - g_il g_jk on
/// the unit sphere (the sign fixed by the Gauss equation for submanifolds of
/// the sphere). Built from d Gamma and Gamma only.
inline Tensor4 curvature(const MetricJet& jet, const Tensor3& Gam, const Matrix& G_inv) {
    const int d = static_cast<int>(jet.G.rows());
    // dGam(a, j, k, l) = d_a Gamma_{jk,l}
    Tensor4 dGam(d);
    for (int a = 0; a < d; ++a)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                for (int l = 0; l < d; ++l)
                    dGam(a, j, k, l) =
                        0.5 * (jet.d2G(a, j, k, l) + jet.d2G(a, k, j, l) - jet.d2G(a, l, j, k));
    // contracted(p, q, r, s) = sum Gamma_{pq,alpha} Gamma_{rs,beta} g^{alpha beta}
    Tensor4 contracted(d);
    for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q)
            for (int r = 0; r < d; ++r)
                for (int s = 0; s < d; ++s) {
                    double acc = 0.0;
                    for (int al = 0; al < d; ++al)
                        for (int be = 0; be < d; ++be)
                            acc += Gam(p, q, al) * Gam(r, s, be) * G_inv(al, be);
                    contracted(p, q, r, s) = acc;
                }
    Tensor4 R(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                for (int l = 0; l < d; ++l) {
                    const double v = dGam(i, j, k, l) - dGam(j, i, k, l) +
                                     contracted(i, k, j, l) - contracted(i, l, j, k);
                    R(i, j, k, l) = -v;
                }
    return R;
}

/// c_ij = -(d_i d_j ell - Gamma_{ij,k} d_l ell g^{kl}) + d_i ell d_j ell.
inline Matrix c_matrix(const Tensor3& Gam, const Matrix& G_inv, const LogSigmaJet& ell) {
    const int d = static_cast<int>(G_inv.rows());
    const Vector a = G_inv * ell.grad;
    Matrix C(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double conn = 0.0;
            for (int k = 0; k < d; ++k) conn += Gam(i, j, k) * a[k];
            C(i, j) = -(ell.hess(i, j) - conn) + ell.grad[i] * ell.grad[j];
        }
    return 0.5 * (C + C.transpose());
}

/// zeta_e from a precomputed Rtilde; 0 for odd e and 1 for e = 0.
inline double zeta_from_rtilde(const Tensor4& Rt, int d, int e) {
    if (e < 0 || e > d) throw DomainError("zeta: e outside [0, d]");
    if (e % 2 == 1) return 0.0;
    if (e == 0) return 1.0;
    auto s = [&Rt](int i, int j, int k, int l) { return Rt(i, j, k, l); };
    double total = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(e));
    for (int i = 0; i < e; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        total += pairing_expansion(idx, s);
        int pos = e - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == d - e + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < e; ++j)
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
    return total;
}

/// All local quantities at chart point t.
inline PointGeometry point_geometry(const ManifoldModel& model, const Vector& t,
                                    const GeometryOptions& opt = {}) {
    const int d = model.dim();
    if (t.size() != d) throw DomainError(model.name() + ": chart point has wrong dimension");
    PointGeometry g;
    g.t = t;
    g.u = model.phi(t);
    g.sigma = model.sigma(t);
    check_model_point(model, t, g.u, g.sigma);
    g.tangent = detail::tangent_for(model, t, opt.mode);

    const MetricJet jet = detail::metric_jet_for(model, t, opt.mode);
    const LogSigmaJet lj = detail::log_sigma_jet_for(model, t, opt.mode);
    detail::check_finite(jet.G, "metric");
    detail::check_finite(lj.hess, "log-sigma Hessian");
    g.G = 0.5 * (jet.G + jet.G.transpose());
    g.ell = lj.ell;
    g.dell = lj.grad;
    g.d2ell = lj.hess;

    if (d > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(g.G, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > opt.cond_limit) {
            throw DegenerateChartError(model.name() + ": metric is rank deficient (cond = " +
                                       std::to_string(lo > 0.0 ? hi / lo : INFINITY) + ")");
        }
    }
    g.G_inv = g.G.inverse();
    g.G_inv = 0.5 * (g.G_inv + g.G_inv.transpose());
    g.sqrt_det_G = std::sqrt(g.G.determinant());
    g.Gamma = christoffel(jet);
    g.C = c_matrix(g.Gamma, g.G_inv, lj);

    g.grad_ell = g.G_inv * g.dell;
    g.grad_ell_norm2 = std::max(0.0, g.dell.dot(g.grad_ell));
    g.grad_ell_ambient = g.tangent * g.grad_ell;
    g.det_I_plus_CGinv = (Matrix::Identity(d, d) + g.C * g.G_inv).determinant();

    if (opt.curvature) {
        g.R = curvature(jet, g.Gamma, g.G_inv);
        g.has_curvature = true;
        g.zeta.assign(static_cast<std::size_t>(d + 1), 0.0);
        g.zeta[0] = 1.0;
        if (d >= 2) {
            const Matrix Gt = g.G + g.C;
            Eigen::FullPivLU<Matrix> lu(Gt);
            // Numerically singular: smallest singular value of G + C below
            // differencing noise relative to the metric scale.
            const Eigen::JacobiSVD<Matrix> svd(Gt);
            const double floor = 1e-7 * g.G.operatorNorm();
            if (!lu.isInvertible() || svd.singularValues()(d - 1) < floor) {
                g.gtilde_singular = true;
                g.zeta.clear();
            } else {
                g.Gtilde_inv = lu.inverse();
                g.Gtilde_inv = 0.5 * (g.Gtilde_inv + g.Gtilde_inv.transpose());
                // S(i, j, a, b) = R_{ij;ab} - (g_ia g_jb - g_ib g_ja)
                Tensor4 S(d);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        for (int a = 0; a < d; ++a)
                            for (int b = 0; b < d; ++b)
                                S(i, j, a, b) = g.R(i, j, a, b) -
                                                (g.G(i, a) * g.G(j, b) - g.G(i, b) * g.G(j, a));
                g.Rtilde = Tensor4(d);
                const Matrix& Gi = g.Gtilde_inv;
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        for (int k = 0; k < d; ++k)
                            for (int l = 0; l < d; ++l) {
                                double acc = 0.0;
                                for (int a = 0; a < d; ++a)
                                    for (int b = 0; b < d; ++b)
                                        acc += S(i, j, a, b) * Gi(a, k) * Gi(b, l);
                                g.Rtilde(i, j, k, l) = acc;
                            }
                for (int e = 2; e <= d; e += 2) {
                    g.zeta[static_cast<std::size_t>(e)] = zeta_from_rtilde(g.Rtilde, d, e);
                }
            }
        }
    }
    return g;
}

/// Metric and volume factor at t.
struct MetricValue {
    Matrix G;
    double sqrt_det_G;
};

inline MetricValue metric_at(const ManifoldModel& model, const Vector& t,
                             DerivativeMode mode = DerivativeMode::automatic) {
    const auto g = point_geometry(model, t, GeometryOptions{mode, false});
    return {g.G, g.sqrt_det_G};
}

inline Tensor3 connection_at(const ManifoldModel& model, const Vector& t,
                             DerivativeMode mode = DerivativeMode::automatic) {
    return point_geometry(model, t, GeometryOptions{mode, false}).Gamma;
}

inline Tensor4 curvature_at(const ManifoldModel& model, const Vector& t,
                            DerivativeMode mode = DerivativeMode::automatic) {
    return point_geometry(model, t, GeometryOptions{mode, true}).R;
}

inline Matrix c_matrix_at(const ManifoldModel& model, const Vector& t,
                          DerivativeMode mode = DerivativeMode::automatic) {
    return point_geometry(model, t, GeometryOptions{mode, false}).C;
}

/// zeta_e at a computed point.
inline double zeta_at(const PointGeometry& geom, int e) {
    const int d = geom.dim();
    if (e < 0 || e > d) throw DomainError("zeta_at: e outside [0, d]");
    if (e % 2 == 1) return 0.0;
    if (e == 0) return 1.0;
    if (!geom.has_curvature) throw DomainError("zeta_at: geometry computed without curvature");
    if (geom.gtilde_singular) {
        throw SingularGeometryError("zeta_at: G + C is singular at this point");
    }
    return geom.zeta[static_cast<std::size_t>(e)];
}

/// Squared length of the projection of w onto the normal space N_u, clamped to [0, 1].
/// Evaluated on x = w - u, which has the same projection, to avoid cancellation near u.
inline double normal_residual2(const PointGeometry& geom, const Vector& w) {
    const Vector x = w - geom.u;
    const Vector r = x - geom.u * geom.u.dot(x) - geom.tangent * (geom.G_inv * (geom.tangent.transpose() * x));
    return std::clamp(r.squaredNorm(), 0.0, 1.0);
}

}  // namespace tubemax
