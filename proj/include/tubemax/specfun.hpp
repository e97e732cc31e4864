#pragma once

// Scalar special functions and the pairing combinatorics used by the tube
// formulas: sphere volumes, beta / chi-square / normal upper tails,
// elementary symmetric functions of eigenvalues and ordered index pairings.

#include "tubemax/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace tubemax {

/// Volume Omega_n of the (n-1)-dimensional unit sphere, 2 pi^{n/2} / Gamma(n/2).
inline double sphere_volume(int n) {
    if (n < 1) throw DomainError("sphere_volume: n must be >= 1, got " + std::to_string(n));
    const double half = 0.5 * n;
    return 2.0 * std::exp(half * std::log(std::numbers::pi) - std::lgamma(half));
}

namespace detail {

constexpr double kCfEps = 4.0 * std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

// Lower regularized gamma P(a, x) by its power series; valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kCfEps) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw AccuracyError("gamma_p_series: no convergence");
}

// Upper regularized gamma Q(a, x) by modified Lentz continued fraction; x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kCfEps) {
            return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
        }
    }
    throw AccuracyError("gamma_q_cf: no convergence");
}

// Continued fraction for the incomplete beta function (Lentz).
inline double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kCfEps) return h;
    }
    throw AccuracyError("beta_cf: no convergence");
}

}  // namespace detail

/// Upper regularized incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
    if (!(a > 0.0)) throw DomainError("gamma_q: a must be positive");
    if (std::isnan(x)) return x;
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

/// Upper tail of Beta(a, b) at x; 1 for x <= 0 and exactly 0 for x >= 1.
inline double beta_upper(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw DomainError("beta_upper: parameters must be positive");
    }
    if (std::isnan(x)) return x;
    if (x <= 0.0) return 1.0;
    if (x >= 1.0) return 0.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return 1.0 - front * detail::beta_cf(a, b, x) / a;
    }
    return front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Upper tail of the chi-square distribution with nu degrees of freedom.
inline double chisq_upper(int nu, double x) {
    if (nu < 1) throw DomainError("chisq_upper: nu must be >= 1, got " + std::to_string(nu));
    return gamma_q(0.5 * nu, 0.5 * x);
}

/// Density of chi-square with nu degrees of freedom.
inline double chisq_density(int nu, double x) {
    if (nu < 1) throw DomainError("chisq_density: nu must be >= 1");
    if (x < 0.0) return 0.0;
    if (x == 0.0) return nu == 2 ? 0.5 : (nu == 1 ? std::numeric_limits<double>::infinity() : 0.0);
    const double k = 0.5 * nu;
    return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::numbers::ln2 - std::lgamma(k));
}

/// Standard normal upper tail.
inline double normal_upper(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// k-th elementary symmetric function of the eigenvalues of a square matrix,
/// i.e. the sum of its k x k principal minors. tr_0 = 1.
inline double elementary_symmetric(const Eigen::MatrixXd& A, int k) {
    if (A.rows() != A.cols()) throw DomainError("elementary_symmetric: matrix must be square");
    const int d = static_cast<int>(A.rows());
    if (k < 0 || k > d) {
        throw DomainError("elementary_symmetric: k=" + std::to_string(k) + " outside [0, " +
                          std::to_string(d) + "]");
    }
    if (k == 0) return 1.0;
    if (k == d) return A.determinant();
    double total = 0.0;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    Eigen::MatrixXd sub(k, k);
    while (true) {
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < k; ++c) sub(r, c) = A(idx[r], idx[c]);
        total += sub.determinant();
        int pos = k - 1;
        while (pos >= 0 && idx[pos] == d - k + pos) --pos;
        if (pos < 0) break;
        ++idx[pos];
        for (int j = pos + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return total;
}

/// A perfect matching of an index set, listed pair by pair.
struct IndexPairing {
    std::vector<std::pair<int, int>> pairs;
    int sign = 1;

    /// Flattened sequence (pi_1, pi_2, pi_3, ...).
    std::vector<int> sequence() const {
        std::vector<int> out;
        out.reserve(2 * pairs.size());
        for (auto [a, b] : pairs) {
            out.push_back(a);
            out.push_back(b);
        }
        return out;
    }
};

/// Parity of a sequence relative to its sorted order, by inversion count.
inline int permutation_sign(const std::vector<int>& seq) {
    int inversions = 0;
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = i + 1; j < seq.size(); ++j)
            if (seq[i] > seq[j]) ++inversions;
    return (inversions % 2 == 0) ? 1 : -1;
}

namespace detail {

inline void enumerate_pairings(std::vector<int>& remaining,
                               std::vector<std::pair<int, int>>& current,
                               std::vector<IndexPairing>& out) {
    if (remaining.empty()) {
        IndexPairing p{current, 1};
        p.sign = permutation_sign(p.sequence());
        out.push_back(std::move(p));
        return;
    }
    const int first = remaining.front();
    for (std::size_t k = 1; k < remaining.size(); ++k) {
        const int partner = remaining[k];
        std::vector<int> rest;
        rest.reserve(remaining.size() - 2);
        for (std::size_t j = 1; j < remaining.size(); ++j)
            if (j != k) rest.push_back(remaining[j]);
        current.emplace_back(first, partner);
        enumerate_pairings(rest, current, out);
        current.pop_back();
    }
}

}  // namespace detail

/// All perfect matchings of `indices`, each pair written (smaller, larger) and
/// the pairs ordered by their first element. There are e! / (2^{e/2} (e/2)!).
inline std::vector<IndexPairing> ordered_pairings(std::vector<int> indices) {
    if (indices.size() % 2 != 0) {
        throw DomainError("ordered_pairings: index set must have even size");
    }
    std::sort(indices.begin(), indices.end());
    if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
        throw DomainError("ordered_pairings: indices must be distinct");
    }
    std::vector<IndexPairing> out;
    std::vector<std::pair<int, int>> current;
    detail::enumerate_pairings(indices, current, out);
    return out;
}

namespace detail {

inline double permanent_rec(const Eigen::MatrixXd& A, int row, std::vector<bool>& used) {
    const int m = static_cast<int>(A.rows());
    if (row == m) return 1.0;
    double total = 0.0;
    for (int c = 0; c < m; ++c) {
        if (used[c]) continue;
        used[c] = true;
        total += A(row, c) * permanent_rec(A, row + 1, used);
        used[c] = false;
    }
    return total;
}

}  // namespace detail

inline double permanent(const Eigen::MatrixXd& A) {
    std::vector<bool> used(static_cast<std::size_t>(A.cols()), false);
    return detail::permanent_rec(A, 0, used);
}

/// Signed pairing expansion over an even index set I:
///
///   1/(e/2)! * sum_{pi, tau in Pi(I)} sgn(pi) sgn(tau) prod_k s(pi_{2k-1}, pi_{2k}; tau_{2k-1}, tau_{2k})
///
/// where Pi(I) runs over every ordering of the pairs. Reordering the pairs of
/// pi and tau together leaves a summand unchanged, so the sum is evaluated over
/// canonical matchings with a permanent over the pair-to-pair assignment.
inline double pairing_expansion(const std::vector<int>& indices,
                                const std::function<double(int, int, int, int)>& s) {
    if (indices.empty()) return 1.0;
    const auto matchings = ordered_pairings(indices);
    const int half = static_cast<int>(indices.size() / 2);
    Eigen::MatrixXd block(half, half);
    double total = 0.0;
    for (const auto& pi : matchings) {
        for (const auto& tau : matchings) {
            for (int a = 0; a < half; ++a)
                for (int b = 0; b < half; ++b)
                    block(a, b) = s(pi.pairs[a].first, pi.pairs[a].second, tau.pairs[b].first,
                                    tau.pairs[b].second);
            total += pi.sign * tau.sign * permanent(block);
        }
    }
    return total;
}

/// Pairwise (cascade) summation; fixed association order for reproducibility.
inline double pairwise_sum(const double* x, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

}  // namespace tubemax
