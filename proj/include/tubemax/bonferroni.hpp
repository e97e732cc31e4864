#pragma once

// Finite index sets: Y_max = max_i sigma_i <xi_i, U> with <xi_i, xi_j> = rho_ij.
// Exact spherical tail above b_cri, Bonferroni sum for the Gaussian tail,
// the pairwise threshold and its closed-form upper bound.

#include "tubemax/error.hpp"
#include "tubemax/specfun.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tubemax {

struct FiniteGaussianSystem {
    std::vector<double> sigmas;
    Eigen::MatrixXd rho;
    int n = 0;  // 0 = numerical rank of rho

    int K() const { return static_cast<int>(sigmas.size()); }
    double sigma0() const { return *std::max_element(sigmas.begin(), sigmas.end()); }
};

inline int numerical_rank(const Eigen::MatrixXd& rho) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rho);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    int r = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] > 1e-10 * std::max(top, 1.0)) ++r;
    return r;
}

/// Validates the system and fills n with the rank of rho when unset.
inline FiniteGaussianSystem validate(FiniteGaussianSystem sys) {
    const int K = sys.K();
    if (K < 1) throw DomainError("finite system: need K >= 1");
    if (sys.rho.rows() != K || sys.rho.cols() != K) throw DomainError("finite system: rho must be K x K");
    for (double s : sys.sigmas)
        if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("finite system: sigma_i must be positive");
    for (int i = 0; i < K; ++i) {
        if (std::abs(sys.rho(i, i) - 1.0) > 1e-12) throw DomainError("finite system: rho needs a unit diagonal");
        for (int j = 0; j < K; ++j) {
            if (std::abs(sys.rho(i, j) - sys.rho(j, i)) > 1e-12) throw DomainError("finite system: rho not symmetric");
            if (i != j && !(std::abs(sys.rho(i, j)) < 1.0)) {
                throw DomainError("finite system: |rho_ij| must be < 1 off the diagonal");
            }
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.rho);
    if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("finite system: rho is not positive semidefinite");
    const int rank = numerical_rank(sys.rho);
    if (sys.n == 0) sys.n = rank;
    if (sys.n < rank) throw DomainError("finite system: n must be at least rank(rho)");
    return sys;
}

struct FiniteBcri {
    double bcri = 0.0;
    Eigen::MatrixXd h;  // h(i, j); diagonal unused
    int arg_i = 0, arg_j = 0;
};

inline double finite_h(double si, double sj, double rho) {
    if (!(std::abs(rho) < 1.0)) throw DomainError("finite_h: |rho| must be < 1");
    const double num = std::max(si / sj - rho, 0.0);
    return num * num / (1.0 - rho * rho);
}

/// b_cri^2 = max_{i != j} sigma_i^2 / (1 + h(i, j)); 0 when K = 1.
inline FiniteBcri finite_bcri(const FiniteGaussianSystem& in) {
    const auto sys = validate(in);
    const int K = sys.K();
    FiniteBcri out;
    out.h = Eigen::MatrixXd::Zero(K, K);
    double best = 0.0;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            if (i == j) continue;
            const double si = sys.sigmas[static_cast<std::size_t>(i)];
            out.h(i, j) = finite_h(si, sys.sigmas[static_cast<std::size_t>(j)], sys.rho(i, j));
            const double v = si * si / (1.0 + out.h(i, j));
            if (v > best) {
                best = v;
                out.arg_i = i;
                out.arg_j = j;
            }
        }
    out.bcri = std::sqrt(best);
    return out;
}

/// max_{i<j} sqrt((1 + rho_ij) / 2) sigma0.
inline double bcri_bound(const FiniteGaussianSystem& in) {
    const auto sys = validate(in);
    if (sys.K() < 2) throw DomainError("bcri_bound: need K >= 2");
    double r = -1.0;
    for (int i = 0; i < sys.K(); ++i)
        for (int j = i + 1; j < sys.K(); ++j) r = std::max(r, sys.rho(i, j));
    return std::sqrt(0.5 * (1.0 + r)) * sys.sigma0();
}

/// P(Y_max > b) = sum_i (1/2) Bbar_{1/2,(n-1)/2}(b^2 / sigma_i^2), exact for b >= b_cri.
/// Terms with sigma_i <= b_cri are identically zero there and may be skipped.
inline double finite_sphere_tail(const FiniteGaussianSystem& in, double b, bool only_above_bcri = false) {
    const auto sys = validate(in);
    if (sys.n < 2) throw DomainError("finite_sphere_tail: need n >= 2");
    const double bc = finite_bcri(sys).bcri;
    if (!(b >= bc)) throw PreconditionError("finite_sphere_tail: b below b_cri, the formula is not exact there");
    std::vector<double> terms;
    for (double s : sys.sigmas) {
        if (only_above_bcri && !(s > bc)) continue;
        terms.push_back(0.5 * beta_upper(0.5, 0.5 * (sys.n - 1), b * b / (s * s)));
    }
    return pairwise_sum(terms);
}

struct BonferroniTail {
    double value = 0.0;
    double error_scale = 0.0;  // Gbar_n(c^2 / b_cri^2)
};

/// sum_i Phibar(c / sigma_i) and the order of its error.
inline BonferroniTail finite_gauss_tail(const FiniteGaussianSystem& in, double c, bool only_above_bcri = false) {
    const auto sys = validate(in);
    if (!(c > 0.0)) throw DomainError("finite_gauss_tail: need c > 0");
    const double bc = finite_bcri(sys).bcri;
    std::vector<double> terms;
    for (double s : sys.sigmas) {
        if (only_above_bcri && !(s > bc)) continue;
        terms.push_back(normal_upper(c / s));
    }
    BonferroniTail out;
    out.value = pairwise_sum(terms);
    out.error_scale = bc > 0.0 ? chisq_upper(sys.n, c * c / (bc * bc)) : 0.0;
    return out;
}

/// The three-variable example: sigma = (2, 1, 3), rho12 = rho23 = 1/sqrt 2, rho13 = 1/2.
inline FiniteGaussianSystem bonferroni_example() {
    FiniteGaussianSystem sys;
    sys.sigmas = {2.0, 1.0, 3.0};
    const double r = 1.0 / std::sqrt(2.0);
    sys.rho.resize(3, 3);
    sys.rho << 1.0, r, 0.5, r, 1.0, r, 0.5, r, 1.0;
    return validate(sys);
}

/// JSON: {"sigma": [...], "rho": [[...], ...], "n": optional}.
inline FiniteGaussianSystem finite_system_from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "sigma" && it.key() != "rho" && it.key() != "n") {
            throw ConfigError("finite system: unknown key '" + it.key() + "'");
        }
    }
    if (!j.contains("sigma") || !j.contains("rho")) throw ConfigError("finite system: needs sigma and rho");
    FiniteGaussianSystem sys;
    sys.sigmas = j.at("sigma").get<std::vector<double>>();
    const auto rows = j.at("rho").get<std::vector<std::vector<double>>>();
    const int K = static_cast<int>(rows.size());
    sys.rho.resize(K, K);
    for (int i = 0; i < K; ++i) {
        if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != K) throw ConfigError("finite system: rho not square");
        for (int k = 0; k < K; ++k) sys.rho(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    if (j.contains("n")) sys.n = j.at("n").get<int>();
    return validate(sys);
}

/// CSV: first row sigma_1..sigma_K, then the K rows of rho. Blank lines and
/// lines starting with '#' are ignored.
inline FiniteGaussianSystem finite_system_from_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ConfigError("finite system CSV: bad number '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("finite system CSV: empty input");
    const int K = static_cast<int>(rows[0].size());
    if (static_cast<int>(rows.size()) != K + 1) throw ConfigError("finite system CSV: expected 1 + K rows");
    FiniteGaussianSystem sys;
    sys.sigmas = rows[0];
    sys.rho.resize(K, K);
    for (int i = 0; i < K; ++i) {
        if (static_cast<int>(rows[static_cast<std::size_t>(i + 1)].size()) != K) throw ConfigError("finite system CSV: ragged rho");
        for (int k = 0; k < K; ++k) sys.rho(i, k) = rows[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(k)];
    }
    return validate(sys);
}

inline FiniteGaussianSystem load_finite_system(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open " + path);
    const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    if (json) {
        try {
            return finite_system_from_json(nlohmann::json::parse(f));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("finite system JSON: ") + e.what());
        }
    }
    return finite_system_from_csv(f);
}

}  // namespace tubemax
