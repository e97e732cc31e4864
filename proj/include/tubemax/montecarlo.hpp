#pragma once

// Monte Carlo oracles for P(X_max > c), P(Y_max > b), the largest Wishart
// eigenvalue and finite Gaussian systems.
//
// Streams: replication r draws from std::mt19937_64 seeded by
// std::seed_seq{seed_lo, seed_hi, r_lo, r_hi} (32-bit halves). Uniforms are
// u = (k + 1) 2^-53 with k the top 53 bits of one engine output, so u lies in
// (0, 1]. Normals are Box-Muller pairs sqrt(-2 log u1) (cos, sin)(2 pi u2),
// used in that order. Results do not depend on the thread count.

#include "tubemax/bonferroni.hpp"
#include "tubemax/error.hpp"
#include "tubemax/model.hpp"
#include "tubemax/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace tubemax {

class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t replication) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32)};
        engine_.seed(seq);
    }

    double uniform() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill(Eigen::Ref<Eigen::VectorXd> v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = (*this)();
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SimulationResult {
    std::vector<double> thresholds;
    std::vector<double> p_hat;
    std::vector<double> se;
    long long N = 0;
    std::uint64_t seed = 0;
    std::vector<int> resolution;  // maximizer grid per axis; empty for exact oracles
    std::vector<double> maxima;   // sorted per-replication maxima
};

/// Empirical tails P(max > c) and binomial standard errors from sorted maxima.
inline SimulationResult summarize(std::vector<double> maxima, const std::vector<double>& thresholds,
                                  std::uint64_t seed) {
    std::sort(maxima.begin(), maxima.end());
    SimulationResult out;
    out.thresholds = thresholds;
    out.N = static_cast<long long>(maxima.size());
    out.seed = seed;
    const double N = static_cast<double>(maxima.size());
    for (double c : thresholds) {
        const auto above = maxima.end() - std::upper_bound(maxima.begin(), maxima.end(), c);
        const double p = static_cast<double>(above) / N;
        out.p_hat.push_back(p);
        out.se.push_back(std::sqrt(p * (1.0 - p) / N));
    }
    out.maxima = std::move(maxima);
    return out;
}

/// Runs draw(r, stream) for every replication r and collects the maxima.
template <class Draw>
std::vector<double> replicate(long long N, std::uint64_t seed, int threads, Draw draw) {
    if (N < 1) throw DomainError("simulation: need N >= 1");
    std::vector<double> maxima(static_cast<std::size_t>(N));
    parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t r) {
        NormalStream z(seed, r);
        maxima[r] = draw(r, z);
    });
    return maxima;
}

struct FieldMaxSpec {
    int per_axis = 0;         // 0 = 2048 for d = 1, 128 for d >= 2 (capped by max_grid)
    long long max_grid = 1 << 22;
    int ascent_iterations = 50;
    bool normalize = false;   // Y_max = X_max / |xi| instead of X_max
    int threads = 0;
};

inline std::vector<int> field_resolution(const ManifoldModel& model, const FieldMaxSpec& spec) {
    const int k = static_cast<int>(model.field_axes().size());
    if (k == 0) return {};
    int per = spec.per_axis > 0 ? spec.per_axis : (k == 1 ? 2048 : 128);
    while (per > 2 && std::pow(static_cast<double>(per), k) > static_cast<double>(spec.max_grid)) --per;
    return std::vector<int>(static_cast<std::size_t>(k), per);
}

/// Sample-path maxima of X(u) = sigma(u) <u, xi>: grid maximum over the field
/// axes, then a compass search started there that halves its steps on failure
/// and never accepts a lower value.
inline SimulationResult simulate_field_max(const ManifoldModel& model, const std::vector<double>& thresholds,
                                           long long N, std::uint64_t seed, const FieldMaxSpec& spec = {}) {
    const auto axes = model.field_axes();
    const int k = static_cast<int>(axes.size());
    const int n = model.ambient_dim();
    const auto res = field_resolution(model, spec);

    std::vector<Rule1D> rules;
    std::vector<double> spacing;
    for (int i = 0; i < k; ++i) {
        const auto& ax = axes[static_cast<std::size_t>(i)];
        const int m = res[static_cast<std::size_t>(i)];
        Rule1D r;
        const double h = ax.length() / m;
        for (int j = 0; j < m; ++j) r.x.push_back(ax.periodic ? ax.lo + j * h : ax.lo + (j + 0.5) * h);
        r.w.assign(r.x.size(), 1.0);
        rules.push_back(std::move(r));
        spacing.push_back(h);
    }
    const auto grid = tensor_rule(rules).points;
    Eigen::MatrixXd A(n, static_cast<Eigen::Index>(grid.size()));  // columns sigma(u) u
    parallel_for(grid.size(), spec.threads, [&](std::size_t j) {
        const Probe p = model.field_probe(grid[j]);
        A.col(static_cast<Eigen::Index>(j)) = p.sigma * p.point;
    });

    auto value = [&](const Vector& s, const Eigen::VectorXd& xi) {
        const Probe p = model.field_probe(s);
        return p.sigma * p.point.dot(xi);
    };
    auto clamp_box = [&](Vector s) {
        for (int i = 0; i < k; ++i) {
            const auto& ax = axes[static_cast<std::size_t>(i)];
            if (!ax.periodic) s[i] = std::clamp(s[i], ax.lo, ax.hi);
        }
        return s;
    };

    auto draw = [&](std::size_t, NormalStream& z) {
        Eigen::VectorXd xi(n);
        z.fill(xi);
        const Eigen::VectorXd vals = A.transpose() * xi;
        Eigen::Index best = 0;
        double fbest = vals.maxCoeff(&best);
        Vector s = grid[static_cast<std::size_t>(best)];
        std::vector<double> step = spacing;
        for (int it = 0; it < spec.ascent_iterations && k > 0; ++it) {
            bool moved = false;
            for (int i = 0; i < k; ++i) {
                for (double sgn : {1.0, -1.0}) {
                    Vector trial = s;
                    trial[i] += sgn * step[static_cast<std::size_t>(i)];
                    trial = clamp_box(trial);
                    const double f = value(trial, xi);
                    if (f > fbest) {
                        fbest = f;
                        s = trial;
                        moved = true;
                    }
                }
            }
            if (!moved)
                for (auto& h : step) h *= 0.5;
        }
        return spec.normalize ? fbest / xi.norm() : fbest;
    };
    auto out = summarize(replicate(N, seed, spec.threads, draw), thresholds, seed);
    out.resolution = res;
    return out;
}

/// Largest eigenvalue of Lambda^{1/2} Xi Xi^T Lambda^{1/2} with Xi a p x nu
/// standard Gaussian matrix, by dense symmetric eigensolve.
inline SimulationResult simulate_wishart_lmax(const std::vector<double>& lambdas, int nu,
                                              const std::vector<double>& thresholds, long long N, std::uint64_t seed,
                                              int threads = 0) {
    const int p = static_cast<int>(lambdas.size());
    if (p < 1 || p > 4) throw DomainError("wishart simulation: need 1 <= p <= 4");
    if (nu < 1) throw DomainError("wishart simulation: need nu >= 1");
    for (double l : lambdas)
        if (!(l > 0.0)) throw DomainError("wishart simulation: lambdas must be positive");
    Eigen::VectorXd root(p);
    for (int i = 0; i < p; ++i) root[i] = std::sqrt(lambdas[static_cast<std::size_t>(i)]);
    auto draw = [&](std::size_t, NormalStream& z) {
        Eigen::MatrixXd X(p, nu);
        for (int j = 0; j < nu; ++j) z.fill(X.col(j));
        X = root.asDiagonal() * X;
        const Eigen::MatrixXd W = X * X.transpose();
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W, Eigen::EigenvaluesOnly).eigenvalues()[p - 1];
    };
    return summarize(replicate(N, seed, threads, draw), thresholds, seed);
}

/// max_i sigma_i X_i with corr(X) = rho, realized through rho = V D V^T.
inline SimulationResult simulate_finite_max(const FiniteGaussianSystem& in, const std::vector<double>& thresholds,
                                            long long N, std::uint64_t seed, bool normalize = false,
                                            int threads = 0) {
    const auto sys = validate(in);
    const int K = sys.K();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.rho);
    // Columns ordered by decreasing eigenvalue; the first n carry the realization.
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, sys.n);
    for (int j = 0; j < std::min(sys.n, K); ++j) {
        const int c = K - 1 - j;
        L.col(j) = es.eigenvectors().col(c) * std::sqrt(std::max(es.eigenvalues()[c], 0.0));
    }
    // Unit-norm rows: u_i in S^{n-1} with <u_i, u_j> = rho_ij.
    for (int i = 0; i < K; ++i) L.row(i).normalize();
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(sys.sigmas.data(), K);
    auto draw = [&](std::size_t, NormalStream& z) {
        Eigen::VectorXd xi(sys.n);
        z.fill(xi);
        const double mx = (s.asDiagonal() * (L * xi)).maxCoeff();
        return normalize ? mx / xi.norm() : mx;
    };
    return summarize(replicate(N, seed, threads, draw), thresholds, seed);
}

}  // namespace tubemax
