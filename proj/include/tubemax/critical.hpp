#pragma once

// Critical threshold b_cri: the largest b below which the tube of radius
// b / sigma self-overlaps, estimated by grid search over point pairs with
// simplex refinement and a separate extrapolation of the diagonal limit.
// Also the supporting-point diagnostic and M_cri membership.

#include "tubemax/error.hpp"
#include "tubemax/geometry.hpp"
#include "tubemax/model.hpp"
#include "tubemax/nelder_mead.hpp"
#include "tubemax/quadrature.hpp"
#include "tubemax/tube.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace tubemax {

struct HValue {
    enum class Kind { finite, infinite, indeterminate };
    Kind kind = Kind::finite;
    double value = 0.0;      // h when finite
    double numerator = 0.0;  // sigma(u)/sigma(w) - <w, u - grad ell(u)>
    double p2 = 0.0;         // |P_u^perp w|^2
};

/// Relative floor on |P_u^perp w|^2, in units of |w - u|^2.
inline constexpr double kNormalClampFloor = 1e-14;

/// sigma(u)/sigma(w) - <w, u - grad ell(u)>, evaluated as
/// expm1(ell(u) - ell(w)) + |w - u|^2 / 2 + <w - u, grad ell(u)>.
/// Also returns the roundoff scale of that sum.
inline double support_numerator(const PointGeometry& g, const Vector& w, double sigma_w,
                                double* roundoff = nullptr) {
    const Vector x = w - g.u;
    const double a = std::expm1(g.ell - std::log(sigma_w));
    const double b = 0.5 * x.squaredNorm();
    const double c = x.dot(g.grad_ell_ambient);
    if (roundoff) *roundoff = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(a) + b + std::abs(c));
    return a + b + c;
}

inline HValue h_value(const PointGeometry& g, const Vector& w, double sigma_w) {
    HValue out;
    double tol = 0.0;
    out.numerator = support_numerator(g, w, sigma_w, &tol);
    out.p2 = normal_residual2(g, w);
    const double floor = kNormalClampFloor * (w - g.u).squaredNorm();
    const double pos = std::max(out.numerator, 0.0);
    if (out.p2 <= floor) {
        out.kind = pos > tol ? HValue::Kind::infinite : HValue::Kind::indeterminate;
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }
    const double ratio = pos / std::sqrt(out.p2);
    out.value = g.grad_ell_norm2 + ratio * ratio;
    return out;
}

/// sigma(u)^2 / (1 + h(u, w)); zero when h is infinite.
inline double pair_objective(const PointGeometry& g, const HValue& h) {
    if (h.kind != HValue::Kind::finite) return 0.0;
    return g.sigma * g.sigma / (1.0 + h.value);
}

inline bool mcri_membership(const PointGeometry& g, double bcri) {
    return in_mcri(g.sigma, g.grad_ell_norm2, bcri);
}

struct CriticalSearchSpec {
    std::vector<int> u_grid;  // points per u axis; empty = 400 on the first axis, 64 after
    std::vector<int> w_grid;  // same for w axes
    double delta0 = 1e-2;
    int levels = 6;
    int restarts = 3;
    double perturb = 1e-6;
    bool diagonal = true;
    int threads = 0;
    DerivativeMode mode = DerivativeMode::automatic;
};

struct LocalThreshold {
    Vector s;  // u search coordinates
    double bcri = 0.0;
};

struct DeltaLevel {
    double delta = 0.0;
    double b2 = 0.0;
    Vector t;    // model chart point u
    Vector dir;  // unit chart direction of w - u
};

struct CriticalRadiusReport {
    double bcri = 0.0;
    double bcri2 = 0.0;
    double sigma0 = 0.0;
    bool valid = false;
    bool diagonal_limit_flag = false;
    bool warning = false;
    std::string warning_text;

    double offdiag_b2 = 0.0;
    Vector offdiag_u;  // search coordinates
    Vector offdiag_w;
    double diag_b2 = 0.0;  // extrapolated to separation 0
    double diag_slope = 0.0;
    double diag_fit_rms = 0.0;
    std::vector<DeltaLevel> delta_sequence;

    Vector argmax_u;  // model chart coordinates of u
    Vector argmax_w;  // model chart coordinates of w (diagonal: last level)
    std::vector<LocalThreshold> bcri_local;
    long long grid_pairs = 0;
};

namespace detail {

inline std::vector<double> grid_axis(const Axis& ax, int n) {
    std::vector<double> out;
    const double h = ax.length() / n;
    for (int i = 0; i < n; ++i) out.push_back(ax.periodic ? ax.lo + i * h : ax.lo + (i + 0.5) * h);
    return out;
}

inline std::vector<Vector> grid_points(const std::vector<Axis>& axes, const std::vector<int>& per_axis) {
    std::vector<Rule1D> rules;
    for (std::size_t i = 0; i < axes.size(); ++i) {
        Rule1D r;
        r.x = grid_axis(axes[i], per_axis[i]);
        r.w.assign(r.x.size(), 1.0);
        rules.push_back(std::move(r));
    }
    return tensor_rule(rules).points;
}

inline std::vector<int> resolve_grid(const std::vector<int>& spec, std::size_t naxes) {
    std::vector<int> out;
    for (std::size_t i = 0; i < naxes; ++i) {
        if (i < spec.size() && spec[i] > 0) {
            out.push_back(spec[i]);
        } else {
            out.push_back(i == 0 ? 400 : 64);
        }
    }
    return out;
}

// Maps search coordinates into the box: wraps periodic axes, rejects others.
inline std::optional<Vector> into_box(const std::vector<Axis>& axes, const Vector& s) {
    Vector out = s;
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const auto& ax = axes[i];
        const int k = static_cast<int>(i);
        if (ax.periodic) {
            out[k] = ax.wrap(s[k]);
        } else if (s[k] < ax.lo || s[k] > ax.hi) {
            return std::nullopt;
        }
    }
    return out;
}

// Unit directions (in the metric) used to approach the diagonal: the
// eigenframe of G and the normalized sums and differences of its pairs.
inline std::vector<Vector> diagonal_directions(const Matrix& G) {
    const int d = static_cast<int>(G.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    std::vector<Vector> base;
    for (int i = 0; i < d; ++i) base.push_back(es.eigenvectors().col(i) / std::sqrt(es.eigenvalues()[i]));
    std::vector<Vector> dirs;
    for (const auto& b : base) {
        dirs.push_back(b);
        dirs.push_back(-b);
    }
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            for (double si : {1.0, -1.0})
                for (double sj : {1.0, -1.0}) {
                    const Vector v = si * base[static_cast<std::size_t>(i)] + sj * base[static_cast<std::size_t>(j)];
                    dirs.push_back(v / std::sqrt(v.dot(G * v)));
                }
    return dirs;
}

}  // namespace detail

/// Evaluates sigma(u)^2 / (1 + h) for a pair, resolving 0/0 by perturbing the
/// w search coordinates by +-perturb along the first axis and keeping the
/// larger h.
inline double resolve_pair(const PointGeometry& g, const Probe& w,
                           const std::function<std::optional<Probe>(double)>& perturbed) {
    const HValue h = h_value(g, w.point, w.sigma);
    if (h.kind != HValue::Kind::indeterminate) return pair_objective(g, h);
    double worst = std::numeric_limits<double>::infinity();
    bool any = false;
    for (double sgn : {1.0, -1.0}) {
        const auto p = perturbed(sgn);
        if (!p) continue;
        const HValue hp = h_value(g, p->point, p->sigma);
        if (hp.kind == HValue::Kind::finite) {
            worst = any ? std::max(worst, hp.value) : hp.value;
            any = true;
        } else {
            return 0.0;
        }
    }
    return any ? g.sigma * g.sigma / (1.0 + worst) : 0.0;
}

/// Grid + simplex estimate of b_cri^2 = sup_u sup_{w != u} sigma(u)^2 / (1 + h(u, w)).
inline CriticalRadiusReport critical_threshold(const ManifoldModel& model, const CriticalSearchSpec& spec = {}) {
    check_model_shape(model, false);
    if (model.dim() < 1) throw DomainError("critical_threshold: model must have d >= 1");
    if (!(spec.delta0 > 0.0) || spec.levels < 2) throw DomainError("critical_threshold: bad delta schedule");
    const PairSearchSpace ps = model.pair_search();
    const GeometryOptions gopt{spec.mode, false};
    CriticalRadiusReport rep;

    const auto u_pts = detail::grid_points(ps.u_axes, detail::resolve_grid(spec.u_grid, ps.u_axes.size()));
    const auto w_pts = detail::grid_points(ps.w_axes, detail::resolve_grid(spec.w_grid, ps.w_axes.size()));

    std::vector<PointGeometry> gu(u_pts.size());
    parallel_for(u_pts.size(), spec.threads, [&](std::size_t i) {
        gu[i] = point_geometry(model, ps.embed_u(u_pts[i]), gopt);
    });
    std::vector<Probe> pw(w_pts.size());
    parallel_for(w_pts.size(), spec.threads, [&](std::size_t i) { pw[i] = ps.probe_w(w_pts[i]); });

    auto probe_at = [&](const Vector& sw) -> std::optional<Probe> {
        const auto s = detail::into_box(ps.w_axes, sw);
        if (!s) return std::nullopt;
        return ps.probe_w(*s);
    };
    auto perturbation = [&](const Vector& sw) {
        return [&, sw](double sgn) {
            Vector s = sw;
            s[0] += sgn * spec.perturb;
            return probe_at(s);
        };
    };

    // Off-diagonal grid, excluding pairs closer than delta0 in R^n.
    std::vector<double> best_f(u_pts.size(), 0.0);
    std::vector<std::size_t> best_w(u_pts.size(), 0);
    const double sep2 = spec.delta0 * spec.delta0;
    parallel_for(u_pts.size(), spec.threads, [&](std::size_t i) {
        const PointGeometry& g = gu[i];
        for (std::size_t j = 0; j < pw.size(); ++j) {
            if ((pw[j].point - g.u).squaredNorm() < sep2) continue;
            const double f = resolve_pair(g, pw[j], perturbation(w_pts[j]));
            if (f > best_f[i]) {
                best_f[i] = f;
                best_w[i] = j;
            }
        }
    });
    rep.grid_pairs = static_cast<long long>(u_pts.size()) * static_cast<long long>(w_pts.size());
    for (std::size_t i = 0; i < u_pts.size(); ++i) rep.bcri_local.push_back({u_pts[i], std::sqrt(best_f[i])});

    std::vector<std::size_t> order(u_pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best_f[a] > best_f[b]; });
    rep.offdiag_b2 = best_f[order[0]];
    rep.offdiag_u = u_pts[order[0]];
    rep.offdiag_w = w_pts[best_w[order[0]]];

    const int ku = static_cast<int>(ps.u_axes.size());
    const int kw = static_cast<int>(ps.w_axes.size());
    auto joint = [&](const Vector& z) -> double {
        const auto su = detail::into_box(ps.u_axes, z.head(ku));
        if (!su) return 1e300;
        const Vector sw = z.tail(kw);
        const auto w = probe_at(sw);
        if (!w) return 1e300;
        PointGeometry g;
        try {
            g = point_geometry(model, ps.embed_u(*su), gopt);
        } catch (const DegenerateChartError&) {
            return 1e300;
        }
        if ((w->point - g.u).squaredNorm() < sep2) return 1e300;
        return -resolve_pair(g, *w, perturbation(sw));
    };
    double cell = std::numeric_limits<double>::infinity();
    const auto ug = detail::resolve_grid(spec.u_grid, ps.u_axes.size());
    for (std::size_t i = 0; i < ps.u_axes.size(); ++i) cell = std::min(cell, ps.u_axes[i].length() / ug[i]);
    const int starts = std::min<int>(spec.restarts, static_cast<int>(order.size()));
    std::vector<NelderMeadResult> refined(static_cast<std::size_t>(starts));
    parallel_for(static_cast<std::size_t>(starts), spec.threads, [&](std::size_t r) {
        Vector z(ku + kw);
        z << u_pts[order[r]], w_pts[best_w[order[r]]];
        refined[r] = nelder_mead(joint, z, NelderMeadOptions{cell, 1e-13, 1e-12, 3000});
    });
    for (const auto& r : refined) {
        if (-r.f > rep.offdiag_b2) {
            rep.offdiag_b2 = -r.f;
            rep.offdiag_u = r.x.head(ku);
            rep.offdiag_w = r.x.tail(kw);
        }
    }
    const Vector off_u_chart = ps.embed_u(*detail::into_box(ps.u_axes, rep.offdiag_u));

    // Diagonal limit: w = phi(t + delta * dir) with unit metric directions.
    bool diag_wins = false;
    if (spec.diagonal) {
        auto level_value = [&](const PointGeometry& g, double delta, const std::vector<Vector>& dirs,
                               Vector* best_dir) {
            double best = 0.0;
            for (const auto& dir : dirs) {
                const Vector t = model.wrap(g.t + delta * dir);
                const auto box = model.box();
                bool inside = true;
                for (int k = 0; k < t.size(); ++k) {
                    const auto& ax = box[static_cast<std::size_t>(k)];
                    if (!ax.periodic && (t[k] < ax.lo || t[k] > ax.hi)) inside = false;
                }
                if (!inside) continue;
                const Probe w{model.phi(t), model.sigma(t)};
                const HValue h = h_value(g, w.point, w.sigma);
                const double f = pair_objective(g, h);
                if (f > best) {
                    best = f;
                    if (best_dir) *best_dir = dir;
                }
            }
            return best;
        };
        std::vector<std::vector<Vector>> dirs(u_pts.size());
        for (std::size_t i = 0; i < u_pts.size(); ++i) dirs[i] = detail::diagonal_directions(gu[i].G);

        double delta = spec.delta0;
        for (int lev = 0; lev < spec.levels; ++lev, delta *= 0.5) {
            std::vector<double> vals(u_pts.size(), 0.0);
            parallel_for(u_pts.size(), spec.threads, [&](std::size_t i) {
                vals[i] = level_value(gu[i], delta, dirs[i], nullptr);
            });
            std::vector<std::size_t> ord(u_pts.size());
            std::iota(ord.begin(), ord.end(), 0);
            std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
            DeltaLevel dl;
            dl.delta = delta;
            dl.b2 = vals[ord[0]];
            dl.t = gu[ord[0]].t;
            level_value(gu[ord[0]], delta, dirs[ord[0]], &dl.dir);
            auto obj = [&](const Vector& su) -> double {
                const auto s = detail::into_box(ps.u_axes, su);
                if (!s) return 1e300;
                PointGeometry g;
                try {
                    g = point_geometry(model, ps.embed_u(*s), gopt);
                } catch (const DegenerateChartError&) {
                    return 1e300;
                }
                return -level_value(g, delta, detail::diagonal_directions(g.G), nullptr);
            };
            for (int r = 0; r < starts; ++r) {
                const auto res = nelder_mead(obj, u_pts[ord[static_cast<std::size_t>(r)]],
                                             NelderMeadOptions{cell, 1e-13, 1e-12, 2000});
                if (-res.f > dl.b2) {
                    dl.b2 = -res.f;
                    const auto g = point_geometry(model, ps.embed_u(*detail::into_box(ps.u_axes, res.x)), gopt);
                    dl.t = g.t;
                    level_value(g, delta, detail::diagonal_directions(g.G), &dl.dir);
                }
            }
            rep.delta_sequence.push_back(dl);
        }
        // Least squares b^2(delta) = b0^2 + a delta^2.
        double s0 = 0, s1 = 0, s2 = 0, y0 = 0, y1 = 0;
        for (const auto& dl : rep.delta_sequence) {
            const double x = dl.delta * dl.delta;
            s0 += 1;
            s1 += x;
            s2 += x * x;
            y0 += dl.b2;
            y1 += x * dl.b2;
        }
        const double det = s0 * s2 - s1 * s1;
        rep.diag_b2 = (s2 * y0 - s1 * y1) / det;
        rep.diag_slope = (s0 * y1 - s1 * y0) / det;
        double rss = 0.0;
        for (const auto& dl : rep.delta_sequence) {
            const double r = dl.b2 - rep.diag_b2 - rep.diag_slope * dl.delta * dl.delta;
            rss += r * r;
        }
        rep.diag_fit_rms = std::sqrt(rss / s0);
        const double last = rep.delta_sequence.back().b2;
        const double step = std::abs(last - rep.delta_sequence[rep.delta_sequence.size() - 2].b2);
        if (rep.diag_fit_rms > 1e-3 * std::max(std::abs(rep.diag_b2), 1e-300) ||
            std::abs(rep.diag_b2 - last) > 10.0 * step + 1e-12 * std::abs(last)) {
            rep.warning = true;
            rep.warning_text = "diagonal extrapolation did not settle (fit rms " + std::to_string(rep.diag_fit_rms) + ")";
        }
        // A tie goes to the diagonal: the off-diagonal search excludes a
        // delta0-neighbourhood of it and cannot certify a larger value there.
        diag_wins = rep.diag_b2 >= rep.offdiag_b2 * (1.0 - 1e-9);
    }

    rep.diagonal_limit_flag = diag_wins;
    rep.bcri2 = diag_wins ? rep.diag_b2 : rep.offdiag_b2;
    if (diag_wins) {
        const auto& dl = rep.delta_sequence.back();
        rep.argmax_u = dl.t;
        rep.argmax_w = model.wrap(dl.t + dl.delta * dl.dir);
    } else {
        rep.argmax_u = off_u_chart;
        rep.argmax_w = rep.offdiag_w;
    }
    rep.bcri = std::sqrt(std::max(rep.bcri2, 0.0));

    double s0 = 0.0;
    if (const auto mx = model.maximizer()) s0 = model.sigma(model.wrap(mx->points[0].t));
    for (const auto& g : gu) s0 = std::max(s0, g.sigma);
    rep.sigma0 = s0;
    rep.valid = rep.bcri <= s0 * (1.0 - 1e-9);
    return rep;
}

/// b'_cri(u) over a finite probe set (w search coordinates); probes equal to u are skipped.
inline double local_threshold(const ManifoldModel& model, const Vector& t, const std::vector<Vector>& probe_coords,
                              DerivativeMode mode = DerivativeMode::automatic) {
    const PairSearchSpace ps = model.pair_search();
    const auto g = point_geometry(model, t, GeometryOptions{mode, false});
    double best = 0.0;
    for (const auto& s : probe_coords) {
        const Probe w = ps.probe_w(s);
        if ((w.point - g.u).squaredNorm() == 0.0) continue;
        best = std::max(best, pair_objective(g, h_value(g, w.point, w.sigma)));
    }
    return std::sqrt(best);
}

struct SupportResult {
    bool supporting = true;
    double min_numerator = std::numeric_limits<double>::infinity();
    std::vector<Vector> witnesses;  // w search coordinates with numerator < -tol
};

/// Proposition-style test: u is a supporting point iff
/// sigma(u)/sigma(w) - <w, u - grad ell(u)> >= -tol for every probe w.
inline SupportResult supporting_point_test(const ManifoldModel& model, const Vector& t,
                                           const std::vector<Vector>& probe_coords, double tol = 1e-12,
                                           DerivativeMode mode = DerivativeMode::automatic) {
    const PairSearchSpace ps = model.pair_search();
    const auto g = point_geometry(model, t, GeometryOptions{mode, false});
    SupportResult out;
    for (const auto& s : probe_coords) {
        const Probe w = ps.probe_w(s);
        const double v = support_numerator(g, w.point, w.sigma);
        out.min_numerator = std::min(out.min_numerator, v);
        if (v < -tol) {
            out.supporting = false;
            out.witnesses.push_back(s);
        }
    }
    return out;
}

inline std::vector<Vector> probe_grid(const ManifoldModel& model, int per_axis) {
    const PairSearchSpace ps = model.pair_search();
    std::vector<int> n(ps.w_axes.size(), per_axis);
    return detail::grid_points(ps.w_axes, n);
}

/// Minimum over w of the support numerator at u: grid, then simplex from the best probe.
inline double min_support_numerator(const ManifoldModel& model, const Vector& t, const std::vector<Vector>& probes,
                                    DerivativeMode mode = DerivativeMode::automatic) {
    const PairSearchSpace ps = model.pair_search();
    const auto g = point_geometry(model, t, GeometryOptions{mode, false});
    double best = std::numeric_limits<double>::infinity();
    Vector arg;
    for (const auto& s : probes) {
        const Probe w = ps.probe_w(s);
        const double v = support_numerator(g, w.point, w.sigma);
        if (v < best) {
            best = v;
            arg = s;
        }
    }
    double cell = std::numeric_limits<double>::infinity();
    for (const auto& ax : ps.w_axes) cell = std::min(cell, ax.length() / std::max<std::size_t>(probes.size(), 1));
    cell = std::max(cell, 1e-4);
    auto obj = [&](const Vector& s) -> double {
        const auto sb = detail::into_box(ps.w_axes, s);
        if (!sb) return 1e300;
        const Probe w = ps.probe_w(*sb);
        return support_numerator(g, w.point, w.sigma);
    };
    const auto r = nelder_mead(obj, arg, NelderMeadOptions{cell, 1e-15, 1e-13, 2000});
    return std::min(best, r.f);
}

/// Non-supporting set of a model with a one-dimensional u search space, as
/// intervals in those coordinates with endpoints refined by bisection.
inline std::vector<std::pair<double, double>> nonsupporting_intervals(const ManifoldModel& model, int scan,
                                                                     int probes_per_axis, double tol = 1e-12) {
    const PairSearchSpace ps = model.pair_search();
    if (ps.u_axes.size() != 1) throw DomainError("nonsupporting_intervals: needs a one-dimensional u space");
    const auto probes = probe_grid(model, probes_per_axis);
    const Axis ax = ps.u_axes[0];
    auto margin = [&](double s) {
        return min_support_numerator(model, ps.embed_u(Vector::Constant(1, s)), probes) + tol;
    };
    const double h = ax.length() / scan;
    std::vector<double> xs, fs;
    for (int i = 0; i <= scan; ++i) {
        xs.push_back(ax.lo + i * h);
        fs.push_back(margin(ax.periodic && i == scan ? ax.lo : std::min(ax.lo + i * h, ax.hi)));
    }
    auto root = [&](double a, double fa, double b) {
        for (int it = 0; it < 60 && b - a > 1e-12; ++it) {
            const double m = 0.5 * (a + b);
            const double fm = margin(m);
            if ((fm < 0.0) == (fa < 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        return 0.5 * (a + b);
    };
    std::vector<std::pair<double, double>> out;
    bool inside = fs[0] < 0.0;
    double start = ax.lo;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const bool now = fs[i] < 0.0;
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

}  // namespace tubemax
