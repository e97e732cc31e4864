#pragma once

// Tube-formula tail approximations: the sphere (beta) form, the Gaussian
// (chi-square) form, the Laplace approximation on the variance maximizer, and
// the closed form for the 2 x 2 Wishart largest eigenvalue.

#include "tubemax/error.hpp"
#include "tubemax/geometry.hpp"
#include "tubemax/model.hpp"
#include "tubemax/quadrature.hpp"
#include "tubemax/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace tubemax {

enum class TailKind { sphere, gauss };

struct QuadratureSpec {
    int nodes = 64;  // per axis at the first level
    int gl_order = 8;
    int max_doublings = 6;
    double rel_tol = 1e-6;
    double abs_floor = 1e-14;
    bool check_convergence = true;
    DerivativeMode mode = DerivativeMode::automatic;
    int threads = 0;  // 0 = hardware concurrency
};

struct TubeOptions {
    QuadratureSpec quad;
    bool restrict_mcri = false;
    std::optional<double> bcri;
};

/// Integrand data at one quadrature node. weight already includes the volume
/// element and the domain factor.
struct NodeSample {
    Vector t;
    double weight = 0.0;
    double sigma = 1.0;
    double grad2 = 0.0;
    double det_ic = 1.0;
    std::vector<double> zeta;  // zeta_0..zeta_d
    bool in_mcri = true;
    bool skipped = false;
};

struct DomainSample {
    int d = 0;
    int n = 0;
    int resolution = 0;
    std::vector<NodeSample> nodes;
    int skipped = 0;
};

struct TubeValue {
    double value = 0.0;
    std::map<int, double> terms;  // by e, odd e included as exact zeros
};

struct TailApproximation {
    TailKind kind = TailKind::gauss;
    std::vector<double> thresholds;
    std::vector<double> tube;
    std::map<int, std::vector<double>> terms;
    std::vector<double> laplace;  // empty when no maximizer is declared
    bool restricted = false;
    int resolution = 0;
    double convergence_delta = 0.0;  // max relative change on the last doubling
    int skipped_nodes = 0;
    int total_nodes = 0;
};

/// 1 / ((2 pi)^{e/2} Omega_{d-e+1})
inline double tube_term_constant(int d, int e) {
    return 1.0 / (std::pow(2.0 * std::numbers::pi, 0.5 * e) * sphere_volume(d - e + 1));
}

inline bool in_mcri(double sigma, double grad2, double bcri) {
    return (1.0 + grad2) * bcri * bcri / (sigma * sigma) < 1.0;
}

namespace detail {

inline double mcri_margin(const ManifoldModel& model, const IntegrationDomain& dom, double s,
                          double bcri, DerivativeMode mode) {
    const auto g = point_geometry(model, dom.embed(Vector::Constant(1, s)),
                                  GeometryOptions{mode, false});
    return 1.0 - (1.0 + g.grad_ell_norm2) * bcri * bcri / (g.sigma * g.sigma);
}

// Sub-intervals of a one-dimensional domain where the M_cri margin is
// positive, with endpoints located by bisection.
inline std::vector<std::pair<double, double>> mcri_intervals(const ManifoldModel& model,
                                                             const IntegrationDomain& dom,
                                                             double bcri, int scan,
                                                             DerivativeMode mode) {
    const Axis& ax = dom.axes[0];
    const double h = ax.length() / scan;
    std::vector<double> xs(static_cast<std::size_t>(scan) + 1);
    std::vector<double> fs(xs.size());
    for (int i = 0; i <= scan; ++i) {
        xs[static_cast<std::size_t>(i)] = ax.lo + i * h;
        const double x = ax.periodic && i == scan ? ax.lo : xs[static_cast<std::size_t>(i)];
        const double xe = ax.periodic ? x : std::clamp(x, ax.lo + 1e-12 * ax.length(), ax.hi - 1e-12 * ax.length());
        fs[static_cast<std::size_t>(i)] = mcri_margin(model, dom, xe, bcri, mode);
    }
    auto root = [&](double a, double fa, double b) {
        for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
            const double m = 0.5 * (a + b);
            const double fm = mcri_margin(model, dom, m, bcri, mode);
            if ((fm > 0.0) == (fa > 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        return 0.5 * (a + b);
    };
    std::vector<std::pair<double, double>> out;
    bool inside = fs[0] > 0.0;
    double start = ax.lo;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const bool now = fs[i] > 0.0;
        if (now != inside) {
            const double r = root(xs[i - 1], fs[i - 1], xs[i]);
            if (inside) out.emplace_back(start, r);
            start = r;
            inside = now;
        }
    }
    if (inside) out.emplace_back(start, ax.hi);
    return out;
}

}  // namespace detail

/// Evaluates the geometric integrand at every node of the integration domain
/// at resolution `nodes` per axis. Under restriction, nodes outside M_cri are
/// flagged and contribute zero; with `split` on a one-dimensional domain the
/// rule is instead split at the boundary of M_cri.
inline DomainSample sample_domain(const ManifoldModel& model, int nodes, const TubeOptions& opt,
                                  bool split = false) {
    check_model_shape(model);
    if (opt.restrict_mcri && !opt.bcri) {
        throw PreconditionError("restriction to M_cri requires b_cri");
    }
    const IntegrationDomain dom = model.integration_domain();
    const int dd = static_cast<int>(dom.axes.size());
    TensorRule rule;
    if (opt.restrict_mcri && split && dd == 1) {
        const double len = dom.axes[0].length();
        Rule1D r;
        const int order = opt.quad.gl_order;
        const int panels_total = std::max(1, (nodes + order - 1) / order);
        for (auto [a, b] : detail::mcri_intervals(model, dom, *opt.bcri, 4 * nodes, opt.quad.mode)) {
            if (!(b > a)) continue;
            const int panels = std::max(1, static_cast<int>(std::ceil(panels_total * (b - a) / len)));
            // s = a + (b - a)(3v^2 - 2v^3) flattens square-root edges at both ends.
            const Rule1D piece = composite_gauss(0.0, 1.0, panels, order);
            for (std::size_t k = 0; k < piece.x.size(); ++k) {
                const double v = piece.x[k];
                r.x.push_back(a + (b - a) * v * v * (3.0 - 2.0 * v));
                r.w.push_back(piece.w[k] * (b - a) * 6.0 * v * (1.0 - v));
            }
        }
        if (r.x.empty()) {
            DomainSample empty;
            empty.d = model.dim();
            empty.n = model.ambient_dim();
            empty.resolution = nodes;
            return empty;
        }
        rule = tensor_rule({r});
    } else {
        std::vector<Rule1D> axes;
        for (const auto& ax : dom.axes) axes.push_back(axis_rule(ax, nodes, opt.quad.gl_order));
        rule = tensor_rule(axes);
    }

    DomainSample out;
    out.d = model.dim();
    out.n = model.ambient_dim();
    out.resolution = nodes;
    out.nodes.resize(rule.points.size());
    const GeometryOptions gopt{opt.quad.mode, out.d >= 2};
    parallel_for(rule.points.size(), opt.quad.threads, [&](std::size_t i) {
        NodeSample& ns = out.nodes[i];
        ns.t = dom.embed(rule.points[i]);
        const auto g = point_geometry(model, ns.t, gopt);
        ns.weight = rule.weights[i] * g.sqrt_det_G * dom.factor;
        ns.sigma = g.sigma;
        ns.grad2 = g.grad_ell_norm2;
        ns.det_ic = g.det_I_plus_CGinv;
        if (opt.restrict_mcri) ns.in_mcri = in_mcri(g.sigma, g.grad_ell_norm2, *opt.bcri);
        ns.zeta.assign(static_cast<std::size_t>(out.d + 1), 0.0);
        ns.zeta[0] = 1.0;
        if (out.d >= 2) {
            if (g.gtilde_singular) {
                ns.skipped = true;
            } else {
                for (int e = 1; e <= out.d; ++e) ns.zeta[static_cast<std::size_t>(e)] = zeta_at(g, e);
            }
        }
    });
    for (const auto& ns : out.nodes) out.skipped += ns.skipped ? 1 : 0;
    if (!out.nodes.empty() && out.skipped > 0.001 * static_cast<double>(out.nodes.size())) {
        throw AccuracyError(model.name() + ": G + C singular at " + std::to_string(out.skipped) + " of " +
                            std::to_string(out.nodes.size()) + " quadrature nodes");
    }
    return out;
}

/// Tube terms at one threshold from sampled nodes.
inline TubeValue evaluate_terms(const DomainSample& s, TailKind kind, double threshold) {
    if (!(threshold >= 0.0)) throw DomainError("tube: threshold must be nonnegative");
    TubeValue out;
    const int d = s.d, n = s.n;
    for (int e = 0; e <= d; ++e) {
        if (e % 2 == 1) {
            for (const auto& ns : s.nodes) {
                if (!ns.skipped && ns.zeta[static_cast<std::size_t>(e)] != 0.0) {
                    throw SingularGeometryError("odd curvature invariant is not zero");
                }
            }
            out.terms[e] = 0.0;
            continue;
        }
        const int k = d - e + 1;
        const double konst = tube_term_constant(d, e);
        std::vector<double> parts;
        parts.reserve(s.nodes.size());
        for (const auto& ns : s.nodes) {
            if (ns.skipped || !ns.in_mcri) {
                parts.push_back(0.0);
                continue;
            }
            const double a = 1.0 + ns.grad2;
            const double x = a * threshold * threshold / (ns.sigma * ns.sigma);
            const double tail = kind == TailKind::sphere ? beta_upper(0.5 * k, 0.5 * (n - d + e - 1), x)
                                                         : chisq_upper(k, x);
            parts.push_back(ns.weight * ns.det_ic * std::pow(a, -0.5 * k) * tail *
                            ns.zeta[static_cast<std::size_t>(e)]);
        }
        out.terms[e] = konst * pairwise_sum(parts);
    }
    std::vector<double> vals;
    for (const auto& [e, v] : out.terms) vals.push_back(v);
    out.value = pairwise_sum(vals);
    return out;
}

namespace detail {

inline double relative_change(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
    }
    return worst;
}

}  // namespace detail

/// Tube approximation on a threshold grid. Resolution is doubled until the
/// largest relative change (floored at abs_floor) is below rel_tol.
inline TailApproximation tube_curve(const ManifoldModel& model, const std::vector<double>& thresholds,
                                    TailKind kind, const TubeOptions& opt = {}) {
    if (thresholds.empty()) throw ConfigError("tube: empty threshold grid");
    if (opt.restrict_mcri && !opt.bcri) throw PreconditionError("restriction to M_cri requires b_cri");
    const bool one_dim = model.integration_domain().axes.size() == 1;
    // Splitting keeps the integrand smooth where it is cut: by the M_cri mask
    // in the Gaussian form, and in the sphere form also where the beta
    // argument reaches 1 (a square-root edge). For the sphere form the cut is
    // at max(b, b_cri), so b >= b_cri gives the same nodes with or without
    // restriction.
    auto run = [&](int nodes, DomainSample& sample) {
        std::vector<TubeValue> vals;
        if (kind == TailKind::sphere && one_dim) {
            for (double b : thresholds) {
                TubeOptions o = opt;
                const double cut = opt.restrict_mcri && opt.bcri ? std::max(b, *opt.bcri) : b;
                if (cut > 0.0) {
                    o.restrict_mcri = true;
                    o.bcri = cut;
                }
                sample = sample_domain(model, nodes, o, cut > 0.0);
                vals.push_back(evaluate_terms(sample, kind, b));
            }
            return vals;
        }
        sample = sample_domain(model, nodes, opt, opt.restrict_mcri && one_dim);
        for (double c : thresholds) vals.push_back(evaluate_terms(sample, kind, c));
        return vals;
    };
    auto totals = [](const std::vector<TubeValue>& v) {
        std::vector<double> out;
        for (const auto& x : v) out.push_back(x.value);
        return out;
    };

    int nodes = opt.quad.nodes;
    DomainSample sample;
    std::vector<TubeValue> current = run(nodes, sample);
    double delta = 0.0;
    if (opt.quad.check_convergence) {
        bool ok = false;
        for (int level = 0; level < opt.quad.max_doublings; ++level) {
            DomainSample finer_sample;
            std::vector<TubeValue> finer = run(2 * nodes, finer_sample);
            delta = detail::relative_change(totals(current), totals(finer), opt.quad.abs_floor);
            nodes *= 2;
            current = std::move(finer);
            sample = std::move(finer_sample);
            if (delta < opt.quad.rel_tol) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw AccuracyError(model.name() + ": tube quadrature did not converge (relative change " +
                                std::to_string(delta) + " at " + std::to_string(nodes) + " nodes per axis)");
        }
    }

    TailApproximation out;
    out.kind = kind;
    out.thresholds = thresholds;
    out.restricted = opt.restrict_mcri;
    out.resolution = nodes;
    out.convergence_delta = delta;
    out.skipped_nodes = sample.skipped;
    out.total_nodes = static_cast<int>(sample.nodes.size());
    for (const auto& v : current) {
        out.tube.push_back(v.value);
        for (const auto& [e, x] : v.terms) out.terms[e].push_back(x);
    }
    return out;
}

/// Sphere form: P(max <u, xi/|xi|> sigma(u) > b) approximated by the tube volume.
inline TubeValue tube_tail_sphere(const ManifoldModel& model, double b, const TubeOptions& opt = {}) {
    const auto curve = tube_curve(model, {b}, TailKind::sphere, opt);
    TubeValue out{curve.tube[0], {}};
    for (const auto& [e, v] : curve.terms) out.terms[e] = v[0];
    return out;
}

/// Gaussian form: P(max X(u) > c) approximated by the chi-square mixture.
inline TubeValue tube_tail_gauss(const ManifoldModel& model, double c, const TubeOptions& opt = {}) {
    const auto curve = tube_curve(model, {c}, TailKind::gauss, opt);
    TubeValue out{curve.tube[0], {}};
    for (const auto& [e, v] : curve.terms) out.terms[e] = v[0];
    return out;
}

/// Laplace approximation on the declared variance maximizer M0:
/// (1/Omega_{d0+1}) sum_w det(I+CG^-1)^{1/2} tr_{d-d0}(CG^-1)^{-1/2} weight
/// times Gbar_{d0+1}(c^2 / sigma0^2).
struct LaplaceCoefficient {
    int d0 = 0;
    double sigma0 = 1.0;
    double coefficient = 0.0;

    double operator()(double c) const {
        return coefficient * chisq_upper(d0 + 1, c * c / (sigma0 * sigma0));
    }
};

inline LaplaceCoefficient laplace_coefficient(const ManifoldModel& model,
                                              DerivativeMode mode = DerivativeMode::automatic) {
    const auto mx = model.maximizer();
    if (!mx) throw PreconditionError(model.name() + ": Laplace approximation needs a declared maximizer M0");
    const int d = model.dim();
    if (mx->d0 < 0 || mx->d0 > d) throw DomainError("maximizer dimension outside [0, d]");
    if (mx->points.empty()) throw DomainError("maximizer has no points");
    LaplaceCoefficient out;
    out.d0 = mx->d0;
    out.sigma0 = model.sigma(model.wrap(mx->points[0].t));
    double total = 0.0;
    for (const auto& p : mx->points) {
        const auto g = point_geometry(model, p.t, GeometryOptions{mode, false});
        const Matrix A = g.C * g.G_inv;
        const double tr = elementary_symmetric(A, d - mx->d0);
        const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
        if (!(tr > 1e-10 * std::pow(scale, d - mx->d0))) {
            throw DegenerateMaximumError(model.name() + ": tr_{d-d0}(C G^-1) = " + std::to_string(tr) +
                                         " on M0; the maximum is not quadratic");
        }
        total += p.weight * std::sqrt(g.det_I_plus_CGinv / tr);
    }
    out.coefficient = total / sphere_volume(mx->d0 + 1);
    return out;
}

inline double laplace_tail(const ManifoldModel& model, double c) { return laplace_coefficient(model)(c); }

/// Theorem-5 Laplace approximation for the largest eigenvalue of W_p(nu, diag(lambda)),
/// eigenvalue threshold x.
inline double wishart_laplace_tail(const std::vector<double>& lambdas, int nu, double x) {
    if (lambdas.empty() || nu < 1) throw DomainError("wishart_laplace_tail: bad shape");
    const double l1 = lambdas[0];
    int q = 0;
    double prod = 1.0;
    for (double l : lambdas) {
        if (l > l1) throw DomainError("wishart_laplace_tail: lambdas must be descending");
        if (l == l1) {
            ++q;
        } else {
            prod *= 1.0 - l / l1;
        }
    }
    const double coef = sphere_volume(q) * sphere_volume(nu) / (sphere_volume(q + nu - 1) * sphere_volume(1));
    return coef / std::sqrt(prod) * chisq_upper(q + nu - 1, x / l1);
}

/// Hand-reduced tube formula for the largest eigenvalue of W_2(nu, diag(l1, l2))
/// at eigenvalue threshold x, integrated over theta by the periodic trapezoid
/// rule until successive doublings agree to 1e-13 relative.
inline double wishart_tube_closed_form(double l1, double l2, int nu, double x) {
    if (!(l1 >= l2 && l2 > 0.0)) throw DomainError("wishart_tube_closed_form: need l1 >= l2 > 0");
    if (nu < 2) throw DomainError("wishart_tube_closed_form: need nu >= 2");
    if (!(x > 0.0)) throw DomainError("wishart_tube_closed_form: need x > 0");
    const double r = std::sqrt(l1 * l2);
    auto f = [&](double th) {
        const double c = std::cos(th), s = std::sin(th);
        const double s2 = l1 * c * c + l2 * s * s;
        const double q = c * c / l1 + s * s / l2;
        return std::pow(s2 * q, -0.5 * (nu + 1)) *
               (s2 / r * chisq_upper(nu + 1, q * x) - r * q * chisq_upper(nu - 1, q * x));
    };
    auto integrate = [&](int n) {
        std::vector<double> v;
        const double h = 2.0 * std::numbers::pi / n;
        for (int i = 0; i < n; ++i) v.push_back(f(i * h) * h);
        return pairwise_sum(v);
    };
    int n = 64;
    double prev = integrate(n);
    for (int level = 0; level < 12; ++level) {
        n *= 2;
        const double cur = integrate(n);
        if (std::abs(cur - prev) <= 1e-13 * std::max(std::abs(cur), 1e-300)) {
            prev = cur;
            break;
        }
        prev = cur;
    }
    return sphere_volume(nu) / (2.0 * sphere_volume(nu + 1)) * prev;
}

/// Thresholds whose e = 0 tube term takes `count` log-spaced values between
/// p_max and p_min, in increasing order.
inline std::vector<double> default_threshold_grid(const ManifoldModel& model, TailKind kind,
                                                  const TubeOptions& opt = {}, int count = 200,
                                                  double p_max = 0.5, double p_min = 1e-6) {
    if (count < 1) throw ConfigError("threshold grid needs at least one point");
    if (!(p_max > p_min && p_min > 0.0)) throw ConfigError("threshold grid needs 0 < p_min < p_max");
    TubeOptions o = opt;
    o.restrict_mcri = false;
    const DomainSample s = sample_domain(model, opt.quad.nodes, o);
    double smax = 0.0;
    for (const auto& ns : s.nodes) smax = std::max(smax, ns.sigma);
    auto term0 = [&](double c) { return evaluate_terms(s, kind, c).terms.at(0); };
    const double hi_cap = kind == TailKind::sphere ? smax : 1e3 * smax;
    std::vector<double> out;
    for (int i = 0; i < count; ++i) {
        const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        const double p = std::exp(std::log(p_max) + frac * (std::log(p_min) - std::log(p_max)));
        double lo = 0.0, hi = hi_cap;
        if (term0(lo) < p) {
            out.push_back(0.0);
            continue;
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (term0(mid) > p ? lo : hi) = mid;
            if (hi - lo < 1e-13 * hi) break;
        }
        out.push_back(0.5 * (lo + hi));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace tubemax
