#pragma once

// Worked examples: the circle-process panels, the 2 x 2 Wishart panels and
// the three-variable Bonferroni example, each compared against simulation.

#include "tubemax/bonferroni.hpp"
#include "tubemax/critical.hpp"
#include "tubemax/io.hpp"
#include "tubemax/models.hpp"
#include "tubemax/montecarlo.hpp"
#include "tubemax/tube.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace tubemax {

struct PanelSpec {
    std::string label;
    double m = 0.0;             // circle panels
    double l1 = 1.0, l2 = 1.0;  // Wishart panels
};

struct Panel {
    std::string label;
    double bcri = 0.0;
    std::vector<double> threshold;  // c for the circle, eigenvalue x for Wishart
    std::vector<double> simulation, se, tube, laplace, remainder;
    int checked = 0;
    int failures = 0;
    double worst_ratio = 0.0;  // max |sim - tube| / (3 se + remainder) over checked rows
    double worst_z = 0.0;      // max |sim - tube| / se over checked rows, remainder ignored

    CsvTable table(const std::string& threshold_name) const {
        CsvTable t;
        t.add(threshold_name, threshold);
        t.add("simulation", simulation);
        t.add("se", se);
        t.add("tube", tube);
        t.add("laplace", laplace);
        t.add("remainder", remainder);
        return t;
    }
};

struct ReproduceSpec {
    long long reps = 10000;
    std::uint64_t seed = 20240601;
    int threads = 0;
    int grid = 40;        // thresholds per panel
    double p_lo = 0.01;   // acceptance band on the tube value
    double p_hi = 0.20;
};

inline void check_panel(Panel& p, const ReproduceSpec& spec) {
    for (std::size_t i = 0; i < p.threshold.size(); ++i) {
        if (p.tube[i] < spec.p_lo || p.tube[i] > spec.p_hi) continue;
        ++p.checked;
        const double ratio = std::abs(p.simulation[i] - p.tube[i]) / (3.0 * p.se[i] + p.remainder[i]);
        p.worst_ratio = std::max(p.worst_ratio, ratio);
        if (p.se[i] > 0.0) p.worst_z = std::max(p.worst_z, std::abs(p.simulation[i] - p.tube[i]) / p.se[i]);
        if (ratio > 1.0) ++p.failures;
    }
}

inline const std::vector<PanelSpec>& fig2_panels() {
    static const std::vector<PanelSpec> panels{
        {"m=0", 0.0}, {"m=1/16", 1.0 / 16}, {"m=1/4", 0.25}, {"m=3/2", 1.5}};
    return panels;
}

inline const std::vector<PanelSpec>& fig3_panels() {
    static const std::vector<PanelSpec> panels{{"diag(1,1)", 0, 1.0, 1.0},
                                               {"diag(1,7/8)", 0, 1.0, 0.875},
                                               {"diag(1,3/4)", 0, 1.0, 0.75},
                                               {"diag(1,1/4)", 0, 1.0, 0.25}};
    return panels;
}

/// Circle process: simulation of X_max, tube formula, Laplace approximation;
/// remainder scale Gbar_3(c^2 / b_cri^2) with b_cri from the critical search.
inline std::vector<Panel> reproduce_fig2(const ReproduceSpec& spec) {
    std::vector<Panel> out;
    std::uint64_t k = 0;
    for (const auto& ps : fig2_panels()) {
        const CircleModel model(ps.m);
        TubeOptions opt;
        opt.quad.threads = spec.threads;
        const auto cs = default_threshold_grid(model, TailKind::gauss, opt, spec.grid, 0.5, 1e-4);
        const auto tube = tube_curve(model, cs, TailKind::gauss, opt);
        CriticalSearchSpec cspec;
        cspec.threads = spec.threads;
        const auto crit = critical_threshold(model, cspec);
        FieldMaxSpec fspec;
        fspec.threads = spec.threads;
        const auto sim = simulate_field_max(model, cs, spec.reps, spec.seed + k++, fspec);
        const auto lap = laplace_coefficient(model);
        Panel p;
        p.label = ps.label;
        p.bcri = crit.bcri;
        p.threshold = cs;
        p.simulation = sim.p_hat;
        p.se = sim.se;
        p.tube = tube.tube;
        for (double c : cs) {
            p.laplace.push_back(lap(c));
            p.remainder.push_back(chisq_upper(model.ambient_dim(), c * c / crit.bcri2));
        }
        check_panel(p, spec);
        out.push_back(std::move(p));
    }
    return out;
}

/// Largest eigenvalue of W_2(4, Lambda): exact-eigensolve simulation, tube
/// formula on the Wishart2 model, Laplace approximation; remainder scale
/// Gbar_{2 nu}(x / b_cri^2) with the closed-form b_cri.
inline std::vector<Panel> reproduce_fig3(const ReproduceSpec& spec) {
    constexpr int nu = 4;
    std::vector<Panel> out;
    std::uint64_t k = 100;
    for (const auto& ps : fig3_panels()) {
        const Wishart2Model model(ps.l1, ps.l2, nu);
        TubeOptions opt;
        opt.quad.threads = spec.threads;
        const auto cs = default_threshold_grid(model, TailKind::gauss, opt, spec.grid, 0.5, 1e-4);
        const auto tube = tube_curve(model, cs, TailKind::gauss, opt);
        std::vector<double> xs;
        for (double c : cs) xs.push_back(c * c);
        const auto sim = simulate_wishart_lmax({ps.l1, ps.l2}, nu, xs, spec.reps, spec.seed + k++, spec.threads);
        const double bcri = wishart2_reference(ps.l1, ps.l2, nu).bcri();
        Panel p;
        p.label = ps.label;
        p.bcri = bcri;
        p.threshold = xs;
        p.simulation = sim.p_hat;
        p.se = sim.se;
        p.tube = tube.tube;
        for (double x : xs) {
            p.laplace.push_back(wishart_laplace_tail({ps.l1, ps.l2}, nu, x));
            p.remainder.push_back(chisq_upper(2 * nu, x / (bcri * bcri)));
        }
        check_panel(p, spec);
        out.push_back(std::move(p));
    }
    return out;
}

inline nlohmann::json panel_summary(const std::vector<Panel>& panels, const ReproduceSpec& spec) {
    nlohmann::json j;
    j["reps"] = spec.reps;
    j["seed"] = spec.seed;
    j["band"] = {spec.p_lo, spec.p_hi};
    j["criterion"] = "|simulation - tube| <= 3 se + remainder where tube is in the band";
    bool ok = true;
    for (const auto& p : panels) {
        j["panels"].push_back({{"label", p.label},
                               {"bcri", p.bcri},
                               {"checked", p.checked},
                               {"failures", p.failures},
                               {"worst_ratio", p.worst_ratio},
                               {"worst_z", p.worst_z}});
        ok = ok && p.failures == 0 && p.checked > 0;
    }
    j["pass"] = ok;
    return j;
}

struct BonferroniExampleResult {
    double bcri = 0.0;
    double bound = 0.0;
    std::vector<double> b, sphere_tail;
    std::vector<double> c, gauss_tail, error_scale;
};

inline BonferroniExampleResult reproduce_bonferroni_example() {
    const auto sys = bonferroni_example();
    BonferroniExampleResult r;
    r.bcri = finite_bcri(sys).bcri;
    r.bound = bcri_bound(sys);
    for (int i = 0; i <= 20; ++i) {
        const double b = r.bcri + (sys.sigma0() - r.bcri) * i / 20.0;
        r.b.push_back(b);
        r.sphere_tail.push_back(finite_sphere_tail(sys, b));
    }
    for (int i = 0; i <= 20; ++i) {
        const double c = 2.0 + 0.25 * i;
        const auto g = finite_gauss_tail(sys, c);
        r.c.push_back(c);
        r.gauss_tail.push_back(g.value);
        r.error_scale.push_back(g.error_scale);
    }
    return r;
}

}  // namespace tubemax
