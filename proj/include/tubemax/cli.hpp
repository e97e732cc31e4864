#pragma once

// Command-line front end: tail, critical, simulate, reproduce.
// Needs CLI11.hpp on the include path. Exit status: 0 success, 1 a
// computation or reproduction check failed, 2 usage or configuration error.

#include "tubemax/bonferroni.hpp"
#include "tubemax/critical.hpp"
#include "tubemax/io.hpp"
#include "tubemax/montecarlo.hpp"
#include "tubemax/registry.hpp"
#include "tubemax/reproduce.hpp"
#include "tubemax/tube.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace tubemax {

struct RunConfig {
    std::string command;
    std::string figure;
    ModelSpec model;
    std::string system;  // finite Gaussian system file (CSV or JSON)
    int grid = 60;       // thresholds in the default grid
    std::vector<double> thresholds;
    std::string kind = "gauss";
    double p_max = 0.5;
    double p_min = 1e-6;
    int resolution = 64;
    std::vector<int> search_grid;
    long long reps = 10000;
    std::uint64_t seed = 20240601;
    std::string out;
    bool restrict_mcri = false;
    int threads = 0;
};

namespace detail {

inline void apply_config(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> keys{
        "model", "m", "l1", "l2", "nu", "p", "q", "lambdas", "n", "sigma0", "custom", "system",
        "grid", "thresholds", "kind", "p_min", "p_max", "resolution", "search_grid", "reps", "seed",
        "out", "restrict_mcri", "threads"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    try {
        auto get = [&](const char* k, auto& dst) {
            if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
        };
        get("model", c.model.name);
        get("m", c.model.m);
        get("l1", c.model.l1);
        get("l2", c.model.l2);
        get("nu", c.model.nu);
        get("p", c.model.p);
        get("q", c.model.q);
        get("lambdas", c.model.lambdas);
        get("n", c.model.n);
        get("sigma0", c.model.sigma0);
        if (j.contains("custom")) c.model.custom = j.at("custom");
        get("system", c.system);
        get("grid", c.grid);
        get("thresholds", c.thresholds);
        get("kind", c.kind);
        get("p_min", c.p_min);
        get("p_max", c.p_max);
        get("resolution", c.resolution);
        get("search_grid", c.search_grid);
        get("reps", c.reps);
        get("seed", c.seed);
        get("out", c.out);
        get("restrict_mcri", c.restrict_mcri);
        get("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline void validate_config(const RunConfig& c) {
    if (c.kind != "gauss" && c.kind != "sphere") throw ConfigError("--kind must be gauss or sphere");
    if (c.grid < 1 && c.thresholds.empty()) throw ConfigError("empty threshold grid (--grid must be >= 1)");
    if (!(c.p_max > c.p_min && c.p_min > 0.0 && c.p_max < 1.0)) throw ConfigError("need 0 < p_min < p_max < 1");
    if (c.resolution < 2) throw ConfigError("--resolution must be >= 2");
    if (c.reps < 1) throw ConfigError("--reps must be >= 1");
    if (c.threads < 0) throw ConfigError("--threads must be >= 0");
    for (int g : c.search_grid)
        if (g < 1) throw ConfigError("--search-grid entries must be >= 1");
}

inline std::string slug(const std::string& s) {
    std::string out;
    for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_';
    return out;
}

inline nlohmann::json config_json(const RunConfig& c) {
    nlohmann::json j{{"command", c.command},
                     {"model", c.model.name},
                     {"grid", c.grid},
                     {"kind", c.kind},
                     {"p_min", c.p_min},
                     {"p_max", c.p_max},
                     {"resolution", c.resolution},
                     {"reps", c.reps},
                     {"seed", c.seed},
                     {"restrict_mcri", c.restrict_mcri}};
    if (!c.system.empty()) j["system"] = c.system;
    if (!c.thresholds.empty()) j["thresholds"] = c.thresholds;
    if (!c.search_grid.empty()) j["search_grid"] = c.search_grid;
    if (!c.figure.empty()) j["figure"] = c.figure;
    return j;
}

inline nlohmann::json model_json(const ManifoldModel& m) {
    return {{"name", m.name()}, {"d", m.dim()}, {"n", m.ambient_dim()}, {"parameters", m.parameters()}};
}

inline TubeOptions tube_options(const RunConfig& c) {
    TubeOptions o;
    o.quad.nodes = c.resolution;
    o.quad.threads = c.threads;
    return o;
}

// Search points per axis: the u axes first, then the w axes.
inline CriticalSearchSpec critical_spec(const RunConfig& c, const ManifoldModel& model) {
    CriticalSearchSpec s;
    s.threads = c.threads;
    const auto ps = model.pair_search();
    const auto& g = c.search_grid;
    for (std::size_t i = 0; i < ps.u_axes.size() && i < g.size(); ++i) s.u_grid.push_back(g[i]);
    for (std::size_t i = ps.u_axes.size(); i < g.size(); ++i) s.w_grid.push_back(g[i]);
    return s;
}

inline std::vector<double> thresholds_for(const RunConfig& c, const ManifoldModel& model, TailKind kind) {
    if (!c.thresholds.empty()) {
        auto t = c.thresholds;
        std::sort(t.begin(), t.end());
        return t;
    }
    return default_threshold_grid(model, kind, tube_options(c), c.grid, c.p_max, c.p_min);
}

inline bool is_wishart(const ManifoldModel& m) { return m.name() == "wishart2" || m.name() == "wishartpq"; }

inline int cmd_tail(const RunConfig& c, std::ostream& out) {
    const auto dir = output_dir(c.out);
    const TailKind kind = c.kind == "sphere" ? TailKind::sphere : TailKind::gauss;
    if (!c.system.empty()) {
        const auto sys = load_finite_system(c.system);
        const auto fb = finite_bcri(sys);
        CsvTable t;
        std::vector<double> th = c.thresholds, vals, scale;
        if (kind == TailKind::sphere) {
            if (th.empty())
                for (int i = 0; i < c.grid; ++i)
                    th.push_back(fb.bcri + (sys.sigma0() - fb.bcri) * i / std::max(c.grid - 1, 1));
            for (double b : th) vals.push_back(finite_sphere_tail(sys, b));
            t.add("b", th);
            t.add("sphere_tail", vals);
        } else {
            if (th.empty())
                for (int i = 0; i < c.grid; ++i) th.push_back(sys.sigma0() * (1.0 + 5.0 * i / std::max(c.grid - 1, 1)));
            for (double x : th) {
                const auto g = finite_gauss_tail(sys, x);
                vals.push_back(g.value);
                scale.push_back(g.error_scale);
            }
            t.add("c", th);
            t.add("bonferroni", vals);
            t.add("error_scale", scale);
        }
        write_csv(dir / "tail_finite.csv", t);
        write_json(dir / "tail_finite.json",
                   {{"config", config_json(c)}, {"bcri", fb.bcri}, {"K", sys.K()}, {"n", sys.n}});
        out << "wrote " << (dir / "tail_finite.csv").string() << "\n";
        return 0;
    }
    const auto model = make_model(c.model);
    auto opt = tube_options(c);
    nlohmann::json meta{{"config", config_json(c)}, {"model", model_json(*model)}};
    if (c.restrict_mcri) {
        const auto rep = critical_threshold(*model, critical_spec(c, *model));
        opt.restrict_mcri = true;
        opt.bcri = rep.bcri;
        meta["bcri"] = rep.bcri;
    }
    const auto th = thresholds_for(c, *model, kind);
    const auto tail = tube_curve(*model, th, kind, opt);
    CsvTable t;
    t.add(kind == TailKind::sphere ? "b" : "c", th);
    if (kind == TailKind::gauss && is_wishart(*model)) {
        std::vector<double> x;
        for (double v : th) x.push_back(v * v);
        t.add("eigenvalue", x);
    }
    t.add("tube", tail.tube);
    if (kind == TailKind::gauss && model->maximizer()) {
        const auto lap = laplace_coefficient(*model, opt.quad.mode);
        std::vector<double> l;
        for (double v : th) l.push_back(lap(v));
        t.add("laplace", l);
        meta["laplace"] = {{"d0", lap.d0}, {"sigma0", lap.sigma0}, {"coefficient", lap.coefficient}};
    }
    for (const auto& [e, vals] : tail.terms) t.add("term_e" + std::to_string(e), vals);
    meta["resolution"] = tail.resolution;
    meta["convergence_delta"] = tail.convergence_delta;
    meta["skipped_nodes"] = tail.skipped_nodes;
    meta["total_nodes"] = tail.total_nodes;
    meta["restricted"] = tail.restricted;
    const std::string base = "tail_" + slug(model->name());
    write_csv(dir / (base + ".csv"), t);
    write_json(dir / (base + ".json"), meta);
    out << "wrote " << (dir / (base + ".csv")).string() << "\n";
    return 0;
}

inline int cmd_critical(const RunConfig& c, std::ostream& out) {
    const auto dir = output_dir(c.out);
    if (!c.system.empty()) {
        const auto sys = load_finite_system(c.system);
        const auto fb = finite_bcri(sys);
        nlohmann::json j{{"config", config_json(c)}, {"bcri", fb.bcri}, {"sigma0", sys.sigma0()},
                         {"valid", fb.bcri < sys.sigma0()}, {"argmax_pair", {fb.arg_i + 1, fb.arg_j + 1}}};
        if (sys.K() >= 2) j["bound"] = bcri_bound(sys);
        for (int i = 0; i < sys.K(); ++i) {
            std::vector<double> row;
            for (int k = 0; k < sys.K(); ++k) row.push_back(fb.h(i, k));
            j["h"].push_back(row);
        }
        write_json(dir / "critical_finite.json", j);
        out << "bcri " << format_number(fb.bcri) << "\n";
        return 0;
    }
    const auto model = make_model(c.model);
    const auto rep = critical_threshold(*model, critical_spec(c, *model));
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j{{"config", config_json(c)},
                     {"model", model_json(*model)},
                     {"bcri", rep.bcri},
                     {"bcri2", rep.bcri2},
                     {"sigma0", rep.sigma0},
                     {"valid", rep.valid},
                     {"diagonal_limit_flag", rep.diagonal_limit_flag},
                     {"warning", rep.warning},
                     {"warning_text", rep.warning_text},
                     {"argmax_pair", {{"u", vec(rep.argmax_u)}, {"w", vec(rep.argmax_w)}}},
                     {"offdiagonal", {{"b2", rep.offdiag_b2}, {"u", vec(rep.offdiag_u)}, {"w", vec(rep.offdiag_w)}}},
                     {"diagonal", {{"b2", rep.diag_b2}, {"slope", rep.diag_slope}, {"fit_rms", rep.diag_fit_rms}}},
                     {"grid_pairs", rep.grid_pairs}};
    for (const auto& d : rep.delta_sequence) {
        j["delta_sequence"].push_back({{"delta", d.delta}, {"b2", d.b2}, {"t", vec(d.t)}, {"dir", vec(d.dir)}});
    }
    const std::string base = "critical_" + slug(model->name());
    write_json(dir / (base + ".json"), j);
    CsvTable t;
    const auto ps = model->pair_search();
    for (std::size_t a = 0; a < ps.u_axes.size(); ++a) {
        std::vector<double> col;
        for (const auto& l : rep.bcri_local) col.push_back(l.s[static_cast<Eigen::Index>(a)]);
        t.add("s" + std::to_string(a + 1), col);
    }
    std::vector<double> b;
    for (const auto& l : rep.bcri_local) b.push_back(l.bcri);
    t.add("bcri_local", b);
    write_csv(dir / (base + "_local.csv"), t);
    out << "bcri " << format_number(rep.bcri) << (rep.diagonal_limit_flag ? " (diagonal limit)" : "") << "\n";
    return rep.valid ? 0 : 1;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
    const auto dir = output_dir(c.out);
    const bool sphere = c.kind == "sphere";
    SimulationResult sim;
    std::string base;
    nlohmann::json meta{{"config", config_json(c)}};
    if (!c.system.empty()) {
        const auto sys = load_finite_system(c.system);
        std::vector<double> th = c.thresholds;
        if (th.empty())
            for (int i = 0; i < c.grid; ++i)
                th.push_back(sys.sigma0() * (sphere ? static_cast<double>(i) / std::max(c.grid - 1, 1)
                                                    : 1.0 + 4.0 * i / std::max(c.grid - 1, 1)));
        sim = simulate_finite_max(sys, th, c.reps, c.seed, sphere, c.threads);
        base = "simulate_finite";
    } else {
        const auto model = make_model(c.model);
        const auto th = thresholds_for(c, *model, sphere ? TailKind::sphere : TailKind::gauss);
        meta["model"] = model_json(*model);
        if (model->name() == "wishart2" && !sphere) {
            const auto& w = dynamic_cast<const Wishart2Model&>(*model);
            std::vector<double> xs;
            for (double v : th) xs.push_back(v * v);
            sim = simulate_wishart_lmax({w.lambda1(), w.lambda2()}, w.nu(), xs, c.reps, c.seed, c.threads);
            sim.thresholds = th;
            meta["oracle"] = "exact eigensolve; thresholds on the sqrt(eigenvalue) scale";
        } else {
            FieldMaxSpec f;
            f.normalize = sphere;
            f.threads = c.threads;
            sim = simulate_field_max(*model, th, c.reps, c.seed, f);
            meta["oracle"] = "grid maximum plus compass ascent";
        }
        base = "simulate_" + slug(model->name());
    }
    CsvTable t;
    t.add(sphere ? "b" : "c", sim.thresholds);
    t.add("p_hat", sim.p_hat);
    t.add("se", sim.se);
    meta["N"] = sim.N;
    meta["seed"] = sim.seed;
    meta["resolution"] = sim.resolution;
    write_csv(dir / (base + ".csv"), t);
    write_json(dir / (base + ".json"), meta);
    out << "wrote " << (dir / (base + ".csv")).string() << "\n";
    return 0;
}

inline int cmd_reproduce(const RunConfig& c, std::ostream& out) {
    const auto dir = output_dir(c.out);
    if (c.figure == "bonferroni-example") {
        const auto r = reproduce_bonferroni_example();
        CsvTable s, g;
        s.add("b", r.b);
        s.add("sphere_tail", r.sphere_tail);
        g.add("c", r.c);
        g.add("bonferroni", r.gauss_tail);
        g.add("error_scale", r.error_scale);
        write_csv(dir / "bonferroni-example" / "sphere_tail.csv", s);
        write_csv(dir / "bonferroni-example" / "gauss_tail.csv", g);
        const bool ok = std::abs(r.bcri - 3.0 * std::sqrt(3.0 / 7.0)) < 1e-9 &&
                        std::abs(r.bound - 3.0 * std::sqrt((1.0 + 1.0 / std::sqrt(2.0)) / 2.0)) < 1e-9;
        write_json(dir / "bonferroni-example" / "summary.json",
                   {{"bcri", r.bcri}, {"bound", r.bound}, {"sigma", {2, 1, 3}},
                    {"rho", {{"12", 1.0 / std::sqrt(2.0)}, {"13", 0.5}, {"23", 1.0 / std::sqrt(2.0)}}}, {"pass", ok}});
        out << "bcri " << format_number(r.bcri) << " bound " << format_number(r.bound) << "\n";
        return ok ? 0 : 1;
    }
    ReproduceSpec spec;
    spec.reps = c.reps;
    spec.seed = c.seed;
    spec.threads = c.threads;
    spec.grid = c.grid;
    const bool fig2 = c.figure == "fig2";
    const auto panels = fig2 ? reproduce_fig2(spec) : reproduce_fig3(spec);
    for (const auto& p : panels) {
        write_csv(dir / c.figure / (slug(p.label) + ".csv"), p.table(fig2 ? "c" : "eigenvalue"));
    }
    const auto summary = panel_summary(panels, spec);
    write_json(dir / c.figure / "summary.json", summary);
    bool ok = summary.at("pass").get<bool>();
    for (const auto& p : panels) {
        out << p.label << ": checked " << p.checked << ", failures " << p.failures << "\n";
        if (p.failures > 0 || p.checked == 0) std::cerr << "reproduction check failed for panel " << p.label << "\n";
    }
    return ok ? 0 : 1;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Tail probabilities of Gaussian field maxima by the volume-of-tube method"};
    app.require_subcommand(1);
    RunConfig flags;
    std::string config_path;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;

    auto common = [&](CLI::App* sub) {
        auto bind = [&](CLI::Option* o, std::function<void(RunConfig&)> copy) { overrides.emplace_back(o, copy); };
        bind(sub->add_option("--model", flags.model.name, "circle, wishart2, wishartpq, custom, torus, great-sphere, point"),
             [&](RunConfig& r) { r.model.name = flags.model.name; });
        bind(sub->add_option("--m", flags.model.m, "circle variance parameter"), [&](RunConfig& r) { r.model.m = flags.model.m; });
        bind(sub->add_option("--l1", flags.model.l1, "wishart2 lambda1"), [&](RunConfig& r) { r.model.l1 = flags.model.l1; });
        bind(sub->add_option("--l2", flags.model.l2, "wishart2 lambda2"), [&](RunConfig& r) { r.model.l2 = flags.model.l2; });
        bind(sub->add_option("--nu", flags.model.nu, "Wishart degrees of freedom"), [&](RunConfig& r) { r.model.nu = flags.model.nu; });
        bind(sub->add_option("--p", flags.model.p, "wishartpq dimension (checked against --lambdas)"),
             [&](RunConfig& r) { r.model.p = flags.model.p; });
        bind(sub->add_option("--q", flags.model.q, "wishartpq multiplicity of lambda1"), [&](RunConfig& r) { r.model.q = flags.model.q; });
        bind(sub->add_option("--lambdas", flags.model.lambdas, "wishartpq eigenvalues, descending")->delimiter(','),
             [&](RunConfig& r) { r.model.lambdas = flags.model.lambdas; });
        bind(sub->add_option("--n", flags.model.n, "ambient dimension (checked; sets it for point)"),
             [&](RunConfig& r) { r.model.n = flags.model.n; });
        bind(sub->add_option("--system", flags.system, "finite Gaussian system, CSV or JSON"),
             [&](RunConfig& r) { r.system = flags.system; });
        bind(sub->add_option("--grid", flags.grid, "number of thresholds"), [&](RunConfig& r) { r.grid = flags.grid; });
        bind(sub->add_option("--thresholds", flags.thresholds, "explicit thresholds")->delimiter(','),
             [&](RunConfig& r) { r.thresholds = flags.thresholds; });
        bind(sub->add_option("--kind", flags.kind, "gauss (X_max) or sphere (Y_max)"), [&](RunConfig& r) { r.kind = flags.kind; });
        bind(sub->add_option("--p-min", flags.p_min, "smallest tail value of the default grid"),
             [&](RunConfig& r) { r.p_min = flags.p_min; });
        bind(sub->add_option("--p-max", flags.p_max, "largest tail value of the default grid"),
             [&](RunConfig& r) { r.p_max = flags.p_max; });
        bind(sub->add_option("--resolution", flags.resolution, "quadrature nodes per axis at the first level"),
             [&](RunConfig& r) { r.resolution = flags.resolution; });
        bind(sub->add_option("--search-grid", flags.search_grid, "critical search points per axis, u axes then w axes")
                 ->delimiter(','),
             [&](RunConfig& r) { r.search_grid = flags.search_grid; });
        bind(sub->add_option("--reps", flags.reps, "Monte Carlo replications"), [&](RunConfig& r) { r.reps = flags.reps; });
        bind(sub->add_option("--seed", flags.seed, "Monte Carlo seed"), [&](RunConfig& r) { r.seed = flags.seed; });
        bind(sub->add_option("--out", flags.out, "output directory (default $TUBEMAX_OUT_DIR or ./tubemax-out)"),
             [&](RunConfig& r) { r.out = flags.out; });
        bind(sub->add_flag("--restrict-mcri", flags.restrict_mcri, "integrate over M_cri only"),
             [&](RunConfig& r) { r.restrict_mcri = flags.restrict_mcri; });
        bind(sub->add_option("--threads", flags.threads, "worker threads, 0 = logical cores"),
             [&](RunConfig& r) { r.threads = flags.threads; });
        sub->add_option("--config", config_path, "JSON config; flags override it");
    };

    auto* tail = app.add_subcommand("tail", "tube and Laplace tail curves");
    auto* critical = app.add_subcommand("critical", "critical threshold search");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo tail of the maximum");
    auto* reproduce = app.add_subcommand("reproduce", "reproduce a worked example");
    for (auto* s : {tail, critical, simulate, reproduce}) common(s);
    reproduce->add_option("figure", flags.figure, "fig2, fig3 or bonferroni-example")
        ->required()
        ->check(CLI::IsMember({"fig2", "fig3", "bonferroni-example"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw ConfigError("cannot open config " + config_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(f);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
            detail::apply_config(cfg, j);
        }
        for (auto& [opt, copy] : overrides)
            if (opt->count() > 0) copy(cfg);
        cfg.figure = flags.figure;
        cfg.command = app.get_subcommands().front()->get_name();
        detail::validate_config(cfg);
        if (cfg.command == "tail") return detail::cmd_tail(cfg, out);
        if (cfg.command == "critical") return detail::cmd_critical(cfg, out);
        if (cfg.command == "simulate") return detail::cmd_simulate(cfg, out);
        return detail::cmd_reproduce(cfg, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tubemax
