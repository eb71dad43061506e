// reldiff: numerical laboratory for a class of relativistic diffusions.
//
// Subcommands:
//   model     hypothesis checks for a named model
//   psi       tabulate the auxiliary function psi (CSV)
//   sigma2    limiting variance by the requested methods (CSV)
//   simulate  seeded Euler-Maruyama Monte Carlo runs and beta sweeps (CSV + JSON)
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reldiff/io.hpp"
#include "reldiff/model.hpp"
#include "reldiff/psi.hpp"
#include "reldiff/simulate.hpp"
#include "reldiff/variance.hpp"

namespace {

using nlohmann::json;

struct GridFlags {
    std::size_t nodes_log = 4096;
    double h_uniform = 0.0;  // 0 = beta-scaled default
    double r_max = 0.0;      // 0 = policy default
};

reldiff::RadialGrid make_grid(const reldiff::ModelSpec& m, const GridFlags& gf) {
    return reldiff::make_standard_grid(m.beta, m.epsilon, gf.nodes_log, gf.h_uniform, gf.r_max);
}

reldiff::PsiSolution solve_psi(const reldiff::DerivedCoefficients& dc,
                               const reldiff::RadialGrid& grid, const std::string& method) {
    if (method == "d1") return reldiff::solve_psi_d1(dc, grid);
    if (method == "general") return reldiff::solve_psi_general(dc, grid);
    return dc.dimension() == 1 ? reldiff::solve_psi_d1(dc, grid)
                               : reldiff::solve_psi_general(dc, grid);
}

std::string manifest_path(const std::string& out, const std::string& cmd) {
    if (!out.empty()) return out + ".manifest.json";
    return "reldiff-" + cmd + ".manifest.json";
}

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

int cmd_model(const std::string& cmdline, const std::string& name, double beta, int d,
              double r_max, int n_scan, const std::string& json_out) {
    const reldiff::ModelSpec spec = reldiff::make_registry_model(name, beta, d);
    const reldiff::HypothesesReport rep = reldiff::check_hypotheses(spec, r_max, n_scan);

    auto line = [](const char* what, bool ok) {
        std::cout << what << (ok ? "PASS" : "FAIL") << '\n';
    };
    std::cout << "model: " << spec.name << " (d=" << spec.d << ", beta=" << spec.beta
              << ", eps=" << spec.epsilon << ", r_hyp=" << spec.r_hyp << ")\n";
    line("  sigma >= eps on scan grid ............ ", rep.sigma_ok);
    line("  g >= eps on [r_hyp, r_max] ........... ", rep.g_tail_ok);
    line("  f growth: eps' < beta*eps/2 .......... ", rep.f_growth_ok);
    std::cout << "  observed eps' = " << rep.observed_eps_prime << " (bound "
              << 0.5 * beta * spec.epsilon << ")\n";
    std::cout << "  " << rep.notes << '\n';

    json j;
    j["model"] = spec.name;
    j["d"] = spec.d;
    j["beta"] = spec.beta;
    j["epsilon"] = spec.epsilon;
    j["r_hyp"] = spec.r_hyp;
    j["sigma_ok"] = rep.sigma_ok;
    j["g_tail_ok"] = rep.g_tail_ok;
    j["f_growth_ok"] = rep.f_growth_ok;
    j["scan_r_max"] = rep.scan_r_max;
    j["observed_eps_prime"] = rep.observed_eps_prime;
    j["notes"] = rep.notes;

    reldiff::RunManifest man;
    man.command_line = cmdline;
    man.started_at = reldiff::iso8601_now();
    man.config = {{"command", "model"}, {"model", name},     {"beta", beta},
                  {"d", d},             {"r_max", r_max},    {"n_scan", n_scan},
                  {"json", json_out}};
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw std::invalid_argument("cannot open --json path '" + json_out + "'");
        out << j.dump(2) << '\n';
        man.outputs.push_back(json_out);
    } else {
        std::cout << j.dump(2) << '\n';
    }
    man.finished_at = reldiff::iso8601_now();
    const std::string mp = manifest_path(json_out, "model");
    man.outputs.push_back(mp);
    man.write(mp);
    return rep.all_ok() ? 0 : 2;
}

int cmd_psi(const std::string& cmdline, const std::string& name, double beta, int d,
            const std::string& method, const GridFlags& gf, double residual_tol,
            const std::string& out) {
    const reldiff::ModelSpec spec = reldiff::make_registry_model(name, beta, d);
    if (method == "d1" && d != 1)
        throw std::invalid_argument("--method d1 requires --d 1 (got d=" + std::to_string(d) + ")");

    reldiff::RunManifest man;
    man.command_line = cmdline;
    man.started_at = reldiff::iso8601_now();
    man.config = {{"command", "psi"},   {"model", name},           {"beta", beta},
                  {"d", d},             {"method", method},        {"nodes_log", gf.nodes_log},
                  {"h_uniform", gf.h_uniform}, {"r_max", gf.r_max}, {"residual_tol", residual_tol},
                  {"out", out}};

    // Open the output before the (potentially long) solve so a bad path is a
    // fast configuration error.
    reldiff::CsvWriter csv(out, {"r", "psi", "psi_prime", "residual"});

    const reldiff::DerivedCoefficients dc = reldiff::derive(spec);
    const reldiff::RadialGrid grid = make_grid(spec, gf);
    const reldiff::PsiSolution sol = solve_psi(dc, grid, method);

    for (std::size_t i = 0; i < grid.size(); ++i)
        csv.write_row({reldiff::fmt17(grid.nodes[i]), reldiff::fmt17(sol.psi[i]),
                       reldiff::fmt17(sol.psi_prime[i]), reldiff::fmt17(sol.residual[i])});
    csv.close();

    std::cout << "method: "
              << (sol.method == reldiff::PsiMethod::d1_closed_form ? "d1_closed_form" : "general_Psi")
              << "\nresidual_sup = " << sol.residual_sup << " (tolerance " << residual_tol << ")\n"
              << "wrote " << out << " (" << grid.size() << " rows)\n";

    man.finished_at = reldiff::iso8601_now();
    man.outputs.push_back(out);
    const std::string mp = manifest_path(out, "psi");
    man.outputs.push_back(mp);
    man.write(mp);
    return sol.residual_sup <= residual_tol ? 0 : 2;
}

int cmd_sigma2(const std::string& cmdline, const std::string& name, double beta_unused, int d,
               const std::vector<double>& betas, std::vector<std::string> methods,
               const GridFlags& gf, const std::string& out) {
    (void)beta_unused;
    if (betas.empty()) throw std::invalid_argument("--beta-list must not be empty");
    if (methods.empty()) methods = {"prop2"};
    for (const auto& m : methods)
        if (m != "prop2" && m != "lemma2" && m != "dh_d1" && m != "asymptotic")
            throw std::invalid_argument("unknown method '" + m +
                                        "' (expected prop2|lemma2|dh_d1|asymptotic)");
    auto wants = [&](const char* m) {
        return std::find(methods.begin(), methods.end(), m) != methods.end();
    };
    const bool want_prop2 = wants("prop2");
    const bool want_lemma2 = wants("lemma2");
    const bool want_dh = wants("dh_d1");
    const bool want_asym = wants("asymptotic");
    if (want_dh && (name != "dh" || d != 1))
        throw std::invalid_argument("method dh_d1 applies only to --model dh --d 1 (got model=" +
                                    name + ", d=" + std::to_string(d) + ")");

    reldiff::RunManifest man;
    man.command_line = cmdline;
    man.started_at = reldiff::iso8601_now();
    man.config = {{"command", "sigma2"}, {"model", name},     {"d", d},
                  {"beta_list", betas},  {"methods", methods}, {"out", out}};

    reldiff::CsvWriter csv(out, {"beta", "sigma2_prop2", "sigma2_lemma2", "sigma2_dh_d1",
                                 "asymptote", "error_estimate"});

    for (double beta : betas) {
        std::string c_prop2, c_lemma2, c_dh, c_asym;
        double err = 0.0;
        if (want_prop2 || want_lemma2) {
            const reldiff::ModelSpec spec = reldiff::make_registry_model(name, beta, d);
            const reldiff::DerivedCoefficients dc = reldiff::derive(spec);
            const reldiff::RadialGrid grid = make_grid(spec, gf);
            const reldiff::PsiSolution psi = solve_psi(dc, grid, "auto");
            if (want_prop2) {
                const auto v = reldiff::sigma2_prop2(dc, psi);
                c_prop2 = reldiff::fmt17(v.sigma2);
                err = std::max(err, v.error_estimate);
            }
            if (want_lemma2) {
                const auto v = reldiff::sigma2_lemma2(dc, psi);
                c_lemma2 = reldiff::fmt17(v.sigma2);
                err = std::max(err, v.error_estimate);
            }
        }
        if (want_dh) {
            const auto v = reldiff::sigma2_dh_d1(beta);
            c_dh = reldiff::fmt17(v.sigma2);
            err = std::max(err, v.error_estimate);
        }
        if (want_asym) {
            const auto v = reldiff::sigma2_asymptotic(
                beta, beta >= 1.0 ? reldiff::AsymptoticRegime::large
                                  : reldiff::AsymptoticRegime::small);
            c_asym = reldiff::fmt17(v.sigma2);
        }
        csv.write_row({reldiff::fmt17(beta), c_prop2, c_lemma2, c_dh, c_asym, reldiff::fmt17(err)});
        std::cout << "beta=" << beta;
        if (!c_prop2.empty()) std::cout << "  prop2=" << c_prop2;
        if (!c_lemma2.empty()) std::cout << "  lemma2=" << c_lemma2;
        if (!c_dh.empty()) std::cout << "  dh_d1=" << c_dh;
        if (!c_asym.empty()) std::cout << "  asymptote=" << c_asym;
        std::cout << '\n';
    }
    csv.close();

    man.finished_at = reldiff::iso8601_now();
    man.outputs.push_back(out);
    const std::string mp = manifest_path(out, "sigma2");
    man.outputs.push_back(mp);
    man.write(mp);
    return 0;
}

int cmd_simulate(const std::string& cmdline, const std::string& name, double beta, int d,
                 double T, int N, double dt, std::uint64_t seed, std::vector<double> sweep,
                 bool check_clt, double hist_rmax, int hist_bins, const std::string& out) {
    reldiff::SimConfig cfg;
    cfg.model = reldiff::make_registry_model(name, beta, d);
    cfg.dt = dt;
    cfg.T = T;
    cfg.N = N;
    cfg.seed = seed;
    cfg.hist_rmax = hist_rmax;
    cfg.hist_bins = hist_bins;
    cfg.validate();

    reldiff::RunManifest man;
    man.command_line = cmdline;
    man.seed = seed;
    man.started_at = reldiff::iso8601_now();
    man.config = {{"command", "simulate"}, {"model", name},   {"beta", beta},
                  {"d", d},                {"T", T},          {"N", N},
                  {"dt", dt},              {"seed", seed},    {"sweep", sweep},
                  {"check_clt", check_clt}, {"hist_rmax", hist_rmax},
                  {"hist_bins", hist_bins}, {"out", out}};

    reldiff::CsvWriter csv(out, {"beta", "log10_inv_beta", "msd_over_t", "stderr",
                                 "sigma2_quadrature", "conjecture_2_over_2_plus_beta"});

    // Quadrature Sigma^2 pairing: exact special-case route for dh d=1; the
    // prop2 route for other models at moderate beta (the psi grid cannot
    // resolve the e^{-beta G} weight once 1/beta far exceeds its radius).
    auto sigma2_provider = [&](double b) -> std::optional<double> {
        try {
            if (name == "dh" && d == 1) return reldiff::sigma2_dh_d1(b).sigma2;
            if (b >= 0.05) {
                const reldiff::ModelSpec spec = reldiff::make_registry_model(name, b, d);
                const reldiff::DerivedCoefficients dc = reldiff::derive(spec);
                const reldiff::RadialGrid grid = reldiff::make_standard_grid(b, spec.epsilon);
                const reldiff::PsiSolution psi = solve_psi(dc, grid, "auto");
                return reldiff::sigma2_prop2(dc, psi).sigma2;
            }
        } catch (const std::exception&) {
        }
        return std::nullopt;
    };

    json summary;
    summary["config"] = man.config;
    summary["runs"] = json::array();

    auto write_row = [&](double b, std::uint64_t row_seed, const reldiff::EnsembleStats& st) {
        const std::optional<double> s2 = sigma2_provider(b);
        csv.write_row({reldiff::fmt17(b), reldiff::fmt17(std::log10(1.0 / b)),
                       reldiff::fmt17(st.msd_over_t), reldiff::fmt17(st.stderr_msd),
                       s2 ? reldiff::fmt17(*s2) : std::string{},
                       reldiff::fmt17(2.0 / (2.0 + b))});
        json run;
        run["beta"] = b;
        run["seed"] = row_seed;
        run["msd_over_t"] = st.msd_over_t;
        run["stderr"] = st.stderr_msd;
        run["n_diverged"] = st.n_diverged;
        if (s2) run["sigma2_quadrature"] = *s2;
        run["skewness"] = st.skewness;
        run["excess_kurtosis"] = st.excess_kurtosis;
        run["histogram_edges"] = st.radial_histogram.edges();
        run["histogram_counts"] = st.radial_histogram.counts;
        summary["runs"].push_back(run);
        std::cout << "beta=" << b << "  msd/T=" << st.msd_over_t << " +- " << st.stderr_msd
                  << (s2 ? ("  sigma2_quadrature=" + std::to_string(*s2)) : std::string{}) << '\n';
    };

    if (sweep.empty()) {
        const reldiff::Ensemble ens = reldiff::run_ensemble(cfg);
        const reldiff::EnsembleStats st = reldiff::estimate_msd(ens);
        write_row(beta, seed, st);
        if (check_clt) {
            const std::optional<double> s2 = sigma2_provider(beta);
            const double sigma2 = s2 ? *s2 : st.msd_over_t / d;
            const reldiff::CltReport rep = reldiff::clt_check(ens, sigma2);
            json jc;
            jc["sigma2_used"] = sigma2;
            jc["sigma2_source"] = s2 ? "quadrature" : "self_normalized_msd";
            jc["skewness"] = rep.skewness;
            jc["excess_kurtosis"] = rep.excess_kurtosis;
            jc["ks_stat"] = rep.ks_stat;
            jc["ks_threshold"] = rep.ks_threshold;
            jc["pass"] = rep.pass;
            summary["clt_check"] = jc;
            std::cout << "clt_check: " << (rep.pass ? "PASS" : "FAIL") << " (ks=" << rep.ks_stat
                      << " < " << rep.ks_threshold << ")\n";
        }
    } else {
        const auto rows = reldiff::sweep_beta(cfg, sweep, sigma2_provider);
        for (const auto& row : rows) {
            if (!row.ok) {
                std::cout << "beta=" << row.beta << "  ERROR: " << row.error << '\n';
                json run;
                run["beta"] = row.beta;
                run["seed"] = row.seed;
                run["error"] = row.error;
                summary["runs"].push_back(run);
                continue;
            }
            reldiff::EnsembleStats st;
            st.msd_over_t = row.msd_over_t;
            st.stderr_msd = row.stderr_msd;
            csv.write_row({reldiff::fmt17(row.beta), reldiff::fmt17(std::log10(1.0 / row.beta)),
                           reldiff::fmt17(row.msd_over_t), reldiff::fmt17(row.stderr_msd),
                           row.sigma2_quadrature ? reldiff::fmt17(*row.sigma2_quadrature)
                                                 : std::string{},
                           reldiff::fmt17(2.0 / (2.0 + row.beta))});
            json run;
            run["beta"] = row.beta;
            run["seed"] = row.seed;
            run["msd_over_t"] = row.msd_over_t;
            run["stderr"] = row.stderr_msd;
            if (row.sigma2_quadrature) run["sigma2_quadrature"] = *row.sigma2_quadrature;
            summary["runs"].push_back(run);
            std::cout << "beta=" << row.beta << "  msd/T=" << row.msd_over_t << " +- "
                      << row.stderr_msd << '\n';
        }
    }
    csv.close();

    const std::string summary_path = out + ".summary.json";
    {
        std::ofstream s(summary_path);
        if (!s) throw std::invalid_argument("cannot open summary path '" + summary_path + "'");
        s << summary.dump(2) << '\n';
    }

    man.finished_at = reldiff::iso8601_now();
    man.outputs.push_back(out);
    man.outputs.push_back(summary_path);
    const std::string mp = manifest_path(out, "simulate");
    man.outputs.push_back(mp);
    man.write(mp);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reldiff: limiting variance and Monte Carlo verification for a class of "
                 "relativistic diffusions"};
    app.require_subcommand(1);
    const std::string cmdline = join_args(argc, argv);

    std::string model = "roup";
    double beta = 1.0;
    int d = 1;
    GridFlags gf;

    auto add_model_flags = [&](CLI::App* sub) {
        sub->add_option("--model", model, "model name (roup|dh|ou|zeroforce|zerodrift)");
        sub->add_option("--beta", beta, "inverse noise/heat parameter (> 0)");
        sub->add_option("--d", d, "space dimension (>= 1)");
    };
    auto add_grid_flags = [&](CLI::App* sub) {
        sub->add_option("--nodes-log", gf.nodes_log, "grid nodes on the geometric section");
        sub->add_option("--h-uniform", gf.h_uniform, "grid spacing on [1, R_max] (0 = auto)");
        sub->add_option("--r-max-grid", gf.r_max, "grid truncation radius (0 = policy default)");
    };

    // model
    auto* sc_model = app.add_subcommand("model", "check the standing hypotheses numerically");
    double scan_r_max = 100.0;
    int n_scan = 400;
    std::string model_json;
    add_model_flags(sc_model);
    sc_model->add_option("--r-max", scan_r_max, "scan radius");
    sc_model->add_option("--n-scan", n_scan, "scan points (>= 100)");
    sc_model->add_option("--json", model_json, "write the report as JSON to this path");

    // psi
    auto* sc_psi = app.add_subcommand("psi", "tabulate psi and its residual diagnostics");
    std::string psi_method = "auto";
    std::string psi_out = "psi.csv";
    double residual_tol = 1e-4;
    add_model_flags(sc_psi);
    add_grid_flags(sc_psi);
    sc_psi->add_option("--method", psi_method, "d1 | general | auto")
        ->check(CLI::IsMember({"d1", "general", "auto"}));
    sc_psi->add_option("--residual-tol", residual_tol, "pass/fail residual threshold");
    sc_psi->add_option("--out", psi_out, "output CSV path")->required();

    // sigma2
    auto* sc_s2 = app.add_subcommand("sigma2", "limiting variance by the requested methods");
    std::vector<double> beta_list;
    std::vector<std::string> methods;
    std::string s2_out = "sigma2.csv";
    add_model_flags(sc_s2);
    add_grid_flags(sc_s2);
    sc_s2->add_option("--beta-list", beta_list, "comma-separated beta values")
        ->required()
        ->delimiter(',');
    sc_s2->add_option("--methods", methods, "subset of prop2,lemma2,dh_d1,asymptotic")
        ->delimiter(',');
    sc_s2->add_option("--out", s2_out, "output CSV path");

    // simulate
    auto* sc_sim = app.add_subcommand("simulate", "Monte Carlo ensemble runs / beta sweeps");
    double T = 1000.0, dt = 0.01;
    int N = 1000;
    std::uint64_t seed = 42;
    std::vector<double> sweep;
    bool check_clt = false;
    double hist_rmax = 10.0;
    int hist_bins = 60;
    std::string sim_out = "sim.csv";
    add_model_flags(sc_sim);
    sc_sim->add_option("--T", T, "time horizon (>= 1)");
    sc_sim->add_option("--N", N, "ensemble size");
    sc_sim->add_option("--dt", dt, "Euler step (< 0.1)");
    sc_sim->add_option("--seed", seed, "base RNG seed");
    sc_sim->add_option("--sweep", sweep, "comma-separated beta values to sweep")->delimiter(',');
    sc_sim->add_flag("--check-clt", check_clt, "append a normality report to the summary");
    sc_sim->add_option("--hist-rmax", hist_rmax, "radial histogram range");
    sc_sim->add_option("--hist-bins", hist_bins, "radial histogram bins");
    sc_sim->add_option("--out", sim_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sc_model->parsed())
            return cmd_model(cmdline, model, beta, d, scan_r_max, n_scan, model_json);
        if (sc_psi->parsed())
            return cmd_psi(cmdline, model, beta, d, psi_method, gf, residual_tol, psi_out);
        if (sc_s2->parsed())
            return cmd_sigma2(cmdline, model, beta, d, beta_list, methods, gf, s2_out);
        if (sc_sim->parsed())
            return cmd_simulate(cmdline, model, beta, d, T, N, dt, seed, sweep, check_clt,
                                hist_rmax, hist_bins, sim_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
