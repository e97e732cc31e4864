#pragma once

#include "tubemax/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tubemax {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense rank-3 array with every axis of length d.
class Tensor3 {
public:
    Tensor3() = default;
    explicit Tensor3(int d) : d_(d), data_(static_cast<std::size_t>(d * d * d), 0.0) {}

    int dim() const { return d_; }
    double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
    double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>((i * d_ + j) * d_ + k);
    }
    int d_ = 0;
    std::vector<double> data_;
};

/// Dense rank-4 array with every axis of length d.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(int d) : d_(d), data_(static_cast<std::size_t>(d * d * d * d), 0.0) {}

    int dim() const { return d_; }
    double& operator()(int i, int j, int k, int l) { return data_[index(i, j, k, l)]; }
    double operator()(int i, int j, int k, int l) const { return data_[index(i, j, k, l)]; }
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::size_t index(int i, int j, int k, int l) const {
        return static_cast<std::size_t>(((i * d_ + j) * d_ + k) * d_ + l);
    }
    int d_ = 0;
    std::vector<double> data_;
};

/// One chart coordinate interval.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    bool periodic = false;

    double length() const { return hi - lo; }
    double wrap(double t) const {
        if (!periodic) return t;
        const double L = hi - lo;
        double r = std::fmod(t - lo, L);
        if (r < 0.0) r += L;
        return lo + r;
    }
};

/// Metric g_ij with first and second coordinate derivatives.
/// dG(k, i, j) = d_k g_ij and d2G(a, b, i, j) = d_a d_b g_ij.
struct MetricJet {
    Matrix G;
    Tensor3 dG;
    Tensor4 d2G;
};

/// ell = log sigma with gradient and Hessian in chart coordinates.
struct LogSigmaJet {
    double ell = 0.0;
    Vector grad;
    Matrix hess;
};

/// Ambient point with its standard deviation; what the critical search needs
/// to know about the "other" point w.
struct Probe {
    Vector point;
    double sigma = 1.0;
};

/// Coordinates over which the tube integral is evaluated. Integrated
/// coordinates s are mapped to a chart point by `embed`; `factor` multiplies
/// the integral (used when the integrand is constant along symmetric factors).
struct IntegrationDomain {
    std::vector<Axis> axes;
    std::function<Vector(const Vector&)> embed;
    double factor = 1.0;
    std::string note;
};

/// Search space for the critical threshold. u-params map to chart points
/// (geometry is needed there); w-params only need an ambient probe.
struct PairSearchSpace {
    std::vector<Axis> u_axes;
    std::function<Vector(const Vector&)> embed_u;
    std::vector<Axis> w_axes;
    std::function<Probe(const Vector&)> probe_w;
};

struct WeightedPoint {
    Vector t;
    double weight = 1.0;
};

/// The set M0 where sigma attains its maximum, as a quadrature over M0 with
/// respect to its own volume element. A single point has d0 = 0 and weight 1.
struct MaximizerManifold {
    int d0 = 0;
    std::vector<WeightedPoint> points;
};

/// A d-dimensional chart of M inside the unit sphere of R^n together with the
/// standard deviation sigma(t) > 0 of the field X(u) = sigma(u) <u, xi>.
class ManifoldModel {
public:
    virtual ~ManifoldModel() = default;

    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual int ambient_dim() const = 0;
    virtual std::vector<Axis> box() const = 0;

    /// Unit-norm embedding phi(t).
    virtual Vector phi(const Vector& t) const = 0;
    virtual double sigma(const Vector& t) const = 0;

    /// Optional analytic derivatives. Returning nullopt selects finite differences.
    virtual std::optional<Matrix> tangent(const Vector&) const { return std::nullopt; }
    virtual std::optional<MetricJet> metric_jet(const Vector&) const { return std::nullopt; }
    virtual std::optional<LogSigmaJet> log_sigma_jet(const Vector&) const { return std::nullopt; }

    virtual std::map<std::string, double> parameters() const { return {}; }

    virtual IntegrationDomain integration_domain() const {
        return IntegrationDomain{box(), [](const Vector& s) { return s; }, 1.0, "full chart"};
    }

    virtual PairSearchSpace pair_search() const {
        return PairSearchSpace{box(), [](const Vector& s) { return s; }, box(),
                               [this](const Vector& s) {
                                   Vector t = wrap(s);
                                   return Probe{phi(t), sigma(t)};
                               }};
    }

    virtual std::optional<MaximizerManifold> maximizer() const { return std::nullopt; }

    /// Parameterization of all of M used to maximize a sample path.
    virtual std::vector<Axis> field_axes() const { return box(); }
    virtual Probe field_probe(const Vector& s) const {
        const Vector t = wrap(s);
        return Probe{phi(t), sigma(t)};
    }

    /// Wrap periodic coordinates into the chart box.
    Vector wrap(const Vector& t) const {
        const auto axes = box();
        Vector out = t;
        for (int i = 0; i < static_cast<int>(axes.size()) && i < t.size(); ++i) {
            out[i] = axes[static_cast<std::size_t>(i)].wrap(t[i]);
        }
        return out;
    }

    double max_sigma_on_grid(int per_axis = 256) const;
};

/// Checks the pointwise model invariants: unit-norm phi and positive sigma.
inline void check_model_point(const ManifoldModel& model, const Vector& t, const Vector& u,
                              double sigma) {
    if (u.size() != model.ambient_dim()) {
        throw DomainError(model.name() + ": phi returned wrong ambient dimension");
    }
    if (std::abs(u.norm() - 1.0) > 1e-10) {
        throw DomainError(model.name() + ": phi(t) is not unit norm (|phi|-1 = " +
                          std::to_string(u.norm() - 1.0) + ")");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError(model.name() + ": sigma(t) must be positive and finite");
    }
    (void)t;
}

/// Checks the global shape constraints of a model.
inline void check_model_shape(const ManifoldModel& model, bool proper_submanifold = true) {
    const int d = model.dim();
    const int n = model.ambient_dim();
    if (d < 0 || n < 1) throw DomainError(model.name() + ": invalid dimensions");
    if (static_cast<int>(model.box().size()) != d) {
        throw DomainError(model.name() + ": chart box has wrong number of axes");
    }
    if (proper_submanifold && !(d < n - 1)) {
        throw DomainError(model.name() + ": need d < n - 1 (got d=" + std::to_string(d) +
                          ", n=" + std::to_string(n) + ")");
    }
}

inline double ManifoldModel::max_sigma_on_grid(int per_axis) const {
    const auto axes = box();
    const int d = dim();
    if (d == 0) return sigma(Vector(0));
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    double best = 0.0;
    Vector t(d);
    while (true) {
        for (int i = 0; i < d; ++i) {
            const auto& ax = axes[static_cast<std::size_t>(i)];
            const double h = ax.length() / per_axis;
            t[i] = ax.periodic ? ax.lo + idx[static_cast<std::size_t>(i)] * h
                               : ax.lo + (idx[static_cast<std::size_t>(i)] + 0.5) * h;
        }
        best = std::max(best, sigma(t));
        int k = 0;
        while (k < d && ++idx[static_cast<std::size_t>(k)] == per_axis) {
            idx[static_cast<std::size_t>(k)] = 0;
            ++k;
        }
        if (k == d) break;
    }
    return best;
}

}  // namespace tubemax
