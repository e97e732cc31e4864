#pragma once

// Derivative-free local minimization (Nelder-Mead simplex).

#include "tubemax/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace tubemax {

struct NelderMeadOptions {
    double step = 1e-2;  // initial simplex edge
    double ftol = 1e-14;
    double xtol = 1e-12;
    int max_evals = 4000;
};

struct NelderMeadResult {
    Vector x;
    double f = 0.0;
    int evals = 0;
    bool converged = false;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                                    const NelderMeadOptions& opt = {}) {
    const int k = static_cast<int>(x0.size());
    NelderMeadResult out;
    if (k == 0) {
        out.x = x0;
        out.f = f(x0);
        out.evals = 1;
        out.converged = true;
        return out;
    }
    std::vector<Vector> p(static_cast<std::size_t>(k + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(k + 1));
    for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i + 1)][i] += opt.step;
    int evals = 0;
    auto eval = [&](const Vector& x) {
        ++evals;
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    for (std::size_t i = 0; i < p.size(); ++i) fv[i] = eval(p[i]);
    std::vector<std::size_t> order(p.size());
    while (evals < opt.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        double size = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) size = std::max(size, (p[i] - p[best]).cwiseAbs().maxCoeff());
        const double spread = std::abs(fv[worst] - fv[best]);
        if (std::isfinite(fv[worst]) &&
            spread <= opt.ftol * (std::abs(fv[best]) + 1e-300) && size <= opt.xtol * (1.0 + p[best].norm())) {
            out.converged = true;
            break;
        }
        if (size <= 1e-15 * (1.0 + p[best].norm())) {
            out.converged = true;
            break;
        }
        Vector centroid = Vector::Zero(k);
        for (std::size_t i = 0; i < p.size(); ++i)
            if (i != worst) centroid += p[i];
        centroid /= k;
        const Vector xr = centroid + (centroid - p[worst]);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            const Vector xe = centroid + 2.0 * (centroid - p[worst]);
            const double fe = eval(xe);
            if (fe < fr) {
                p[worst] = xe;
                fv[worst] = fe;
            } else {
                p[worst] = xr;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            p[worst] = xr;
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                      : Vector(centroid + 0.5 * (p[worst] - centroid));
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[worst])) {
                p[worst] = xc;
                fv[worst] = fc;
            } else {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    if (i == best) continue;
                    p[i] = p[best] + 0.5 * (p[i] - p[best]);
                    fv[i] = eval(p[i]);
                }
            }
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    out.x = p[static_cast<std::size_t>(it - fv.begin())];
    out.f = *it;
    out.evals = evals;
    return out;
}

}  // namespace tubemax
