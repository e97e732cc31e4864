#pragma once

// Quadrature rules on chart boxes and a deterministic parallel loop.

#include "tubemax/error.hpp"
#include "tubemax/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <numbers>
#include <thread>
#include <vector>

namespace tubemax {

struct Rule1D {
    std::vector<double> x;
    std::vector<double> w;
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline Rule1D gauss_legendre(int n) {
    if (n < 1) throw DomainError("gauss_legendre: need n >= 1");
    Rule1D r;
    r.x.assign(static_cast<std::size_t>(n), 0.0);
    r.w.assign(static_cast<std::size_t>(n), 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double wt = 2.0 / ((1.0 - z * z) * pp * pp);
        r.x[static_cast<std::size_t>(i)] = -z;
        r.x[static_cast<std::size_t>(n - 1 - i)] = z;
        r.w[static_cast<std::size_t>(i)] = wt;
        r.w[static_cast<std::size_t>(n - 1 - i)] = wt;
    }
    return r;
}

/// Composite Gauss-Legendre on [a, b] with `panels` panels of `order` nodes.
inline Rule1D composite_gauss(double a, double b, int panels, int order) {
    const Rule1D base = gauss_legendre(order);
    Rule1D r;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        for (std::size_t k = 0; k < base.x.size(); ++k) {
            r.x.push_back(lo + 0.5 * h * (base.x[k] + 1.0));
            r.w.push_back(0.5 * h * base.w[k]);
        }
    }
    return r;
}

/// Trapezoid rule on a periodic interval: n equispaced nodes, equal weights.
inline Rule1D periodic_trapezoid(double a, double b, int n) {
    Rule1D r;
    const double h = (b - a) / n;
    for (int i = 0; i < n; ++i) {
        r.x.push_back(a + i * h);
        r.w.push_back(h);
    }
    return r;
}

/// Per-axis rule with roughly `nodes` points: trapezoid on periodic axes,
/// composite Gauss-Legendre otherwise.
inline Rule1D axis_rule(const Axis& ax, int nodes, int order) {
    if (ax.periodic) return periodic_trapezoid(ax.lo, ax.hi, nodes);
    const int panels = std::max(1, (nodes + order - 1) / order);
    return composite_gauss(ax.lo, ax.hi, panels, order);
}

struct TensorRule {
    std::vector<Vector> points;
    std::vector<double> weights;
};

inline TensorRule tensor_rule(const std::vector<Rule1D>& axes) {
    TensorRule out;
    const int d = static_cast<int>(axes.size());
    if (d == 0) {
        out.points.emplace_back(0);
        out.weights.push_back(1.0);
        return out;
    }
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    while (true) {
        Vector p(d);
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            const auto& r = axes[static_cast<std::size_t>(i)];
            p[i] = r.x[idx[static_cast<std::size_t>(i)]];
            w *= r.w[idx[static_cast<std::size_t>(i)]];
        }
        out.points.push_back(std::move(p));
        out.weights.push_back(w);
        int k = 0;
        while (k < d && ++idx[static_cast<std::size_t>(k)] == axes[static_cast<std::size_t>(k)].x.size()) {
            idx[static_cast<std::size_t>(k)] = 0;
            ++k;
        }
        if (k == d) break;
    }
    return out;
}

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    const int nt = std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(count, 1)));
    if (nt <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < nt; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < count; i += static_cast<std::size_t>(nt)) {
                    body(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace tubemax
