#include "wasscopos/cli.hpp"

#include <chrono>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wasscopos/bound.hpp"
#include "wasscopos/calibrate.hpp"
#include "wasscopos/errors.hpp"
#include "wasscopos/experiments.hpp"
#include "wasscopos/io.hpp"
#include "wasscopos/log.hpp"
#include "wasscopos/thread_pool.hpp"

namespace wasscopos {

namespace {

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw config_error("empty numeric list: " + s);
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
    return out;
}

void write_manifest(const std::string& outdir, const std::string& subcommand,
                    const std::vector<std::string>& argv, const nlohmann::json& config) {
    nlohmann::json m;
    m["tool"] = "wasscopos";
    m["subcommand"] = subcommand;
    m["argv"] = argv;
    m["config"] = config;
    write_text(std::filesystem::path(outdir) / "manifest.json", m.dump(2) + "\n");
}

struct CommonArgs {
    std::string outdir = ".";
    std::uint64_t seed = 0;
    double feas_tol = 1e-7;
    double gap_tol = 1e-7;
    int max_iter = 200;

    void attach(CLI::App* cmd) {
        cmd->add_option("--out", outdir, "output directory for manifest and files");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--feas-tol", feas_tol, "solver feasibility tolerance");
        cmd->add_option("--gap-tol", gap_tol, "solver relative gap tolerance");
        cmd->add_option("--max-iter", max_iter, "solver iteration limit");
    }

    SolverOptions solver() const {
        SolverOptions o;
        o.feas_tol = feas_tol;
        o.gap_tol = gap_tol;
        o.max_iter = max_iter;
        return o;
    }

    nlohmann::json config() const {
        return {{"out", outdir}, {"seed", seed},        {"feas_tol", feas_tol},
                {"gap_tol", gap_tol}, {"max_iter", max_iter}};
    }
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_rerun(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
    nlohmann::json m = load_json(manifest_path);
    std::vector<std::string> argv;
    for (const auto& a : m.at("argv")) argv.push_back(a.get<std::string>());
    return run(argv, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Data-driven distributionally robust bounds for uncertain mixed 0-1 linear programs"};
    app.require_subcommand(1);

    // ---- bound ----
    auto* cb = app.add_subcommand("bound", "solve the Wasserstein-ball upper bound at a fixed radius");
    std::string b_instance, b_dataset;
    double b_eps = 0.0;
    double b_r = 0.0;
    bool b_has_r = false;
    bool b_implied = false;
    CommonArgs b_common;
    cb->add_option("instance", b_instance, "instance JSON")->required();
    cb->add_option("dataset", b_dataset, "dataset JSON")->required();
    cb->add_option("--epsilon", b_eps, "Wasserstein radius")->required();
    auto* ropt = cb->add_option("--r", b_r, "trace bound (omit when the support is unbounded)");
    cb->add_flag("--implied-bounds", b_implied, "binary bounds are implied by the constraints");
    b_common.attach(cb);

    // ---- calibrate ----
    auto* cc = app.add_subcommand("calibrate", "empirical confidence curve and radius selection");
    std::string c_instance, c_dataset, c_grid;
    double c_beta = 0.10;
    int c_K = 100, c_NT = 0;
    int c_jobs = default_jobs();
    bool c_implied = false;
    CommonArgs c_common;
    cc->add_option("instance", c_instance, "instance JSON")->required();
    cc->add_option("dataset", c_dataset, "dataset JSON")->required();
    cc->add_option("--beta", c_beta, "significance level (target confidence 1-beta)");
    cc->add_option("--grid", c_grid, "comma-separated candidate radii");
    cc->add_option("--K", c_K, "number of train/validation splits");
    cc->add_option("--NT", c_NT, "training-set size (default ceil(N/2))");
    cc->add_option("--jobs", c_jobs, "parallel workers");
    cc->add_flag("--implied-bounds", c_implied, "binary bounds are implied by the constraints");
    c_common.attach(cc);

    // ---- experiment ----
    auto* ce = app.add_subcommand("experiment", "calibrated trials with Monte Carlo validation");
    std::string e_case, e_nlist = "10,20", e_grid;
    int e_trials = 100, e_mc = 100000, e_K = 100;
    int e_jobs = default_jobs();
    double e_beta = 0.10;
    bool e_single = false;
    CommonArgs e_common;
    ce->add_option("--case", e_case, "case name: ssa, project, or knapsack")->required();
    ce->add_option("--N-list", e_nlist, "comma-separated sample sizes");
    ce->add_option("--trials", e_trials, "trials per sample size");
    ce->add_option("--beta", e_beta, "significance level");
    ce->add_option("--mc-samples", e_mc, "Monte Carlo samples for the simulated value");
    ce->add_option("--K", e_K, "calibration splits");
    ce->add_option("--grid", e_grid, "comma-separated candidate radii");
    ce->add_option("--jobs", e_jobs, "parallel workers");
    ce->add_flag("--single-dist", e_single, "reuse one underlying distribution for all trials");
    e_common.attach(ce);

    // ---- simulate ----
    auto* cs = app.add_subcommand("simulate", "Monte Carlo estimate of the expected optimal value");
    std::string s_instance, s_dist;
    int s_samples = 100000;
    bool s_implied = false;
    CommonArgs s_common;
    cs->add_option("instance", s_instance, "instance JSON")->required();
    cs->add_option("dist", s_dist, "distribution-spec JSON")->required();
    cs->add_option("--samples", s_samples, "number of Monte Carlo samples");
    cs->add_flag("--implied-bounds", s_implied, "binary bounds are implied by the constraints");
    s_common.attach(cs);

    // ---- rerun ----
    auto* cr = app.add_subcommand("rerun", "repeat a run from its manifest");
    std::string r_manifest;
    cr->add_option("manifest", r_manifest, "manifest JSON from a previous run")->required();

    std::vector<std::string> argv_copy = args;
    std::vector<const char*> argv_c;
    argv_c.push_back("wasscopos");
    for (const auto& a : args) argv_c.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv_c.size()), argv_c.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << nlohmann::json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
        return 3;
    }

    if (cb->parsed()) {
        if (b_eps < 0) throw config_error("radius must be nonnegative");
        b_has_r = ropt->count() > 0;
        InstanceFile inst = load_instance(b_instance);
        Dataset data = load_dataset(b_dataset);
        MixedBinaryProgram prog = enforce_binary_bounds(inst.prog, b_implied);
        std::optional<double> r = b_has_r ? std::optional<double>(b_r) : inst.r;
        BoundOptions opts;
        opts.solver = b_common.solver();
        BoundResult res = solve_bound(prog, data, b_eps, r, opts);
        nlohmann::json config = b_common.config();
        config["instance"] = b_instance;
        config["dataset"] = b_dataset;
        config["epsilon"] = b_eps;
        if (r) config["r"] = *r;
        config["implied_bounds"] = b_implied;
        write_manifest(b_common.outdir, "bound", args, config);
        nlohmann::json rj = bound_result_to_json(res);
        write_text(std::filesystem::path(b_common.outdir) / "result.json", rj.dump(2) + "\n");
        out << rj.dump() << "\n";
        return res.certified ? 0 : 4;
    }

    if (cc->parsed()) {
        InstanceFile inst = load_instance(c_instance);
        Dataset data = load_dataset(c_dataset);
        MixedBinaryProgram prog = enforce_binary_bounds(inst.prog, c_implied);
        std::vector<double> grid = c_grid.empty() ? default_radius_grid() : parse_double_list(c_grid);
        const int NT = c_NT > 0 ? c_NT : (data.size() + 1) / 2;
        BoundOptions opts;
        opts.solver = c_common.solver();
        CalibrationCurve curve =
            compute_curve(prog, data, grid, c_K, NT, c_common.seed, opts, c_jobs);
        nlohmann::json config = c_common.config();
        config["instance"] = c_instance;
        config["dataset"] = c_dataset;
        config["beta"] = c_beta;
        config["K"] = c_K;
        config["NT"] = NT;
        config["grid"] = grid;
        config["jobs"] = c_jobs;
        config["implied_bounds"] = c_implied;
        write_manifest(c_common.outdir, "calibrate", args, config);
        write_curve_csv(std::filesystem::path(c_common.outdir) / "curve.csv", curve);
        const double eps = select_radius(curve, c_beta);  // throws config when none qualifies
        double conf = 0.0;
        for (std::size_t i = 0; i < curve.grid.size(); ++i)
            if (curve.grid[i] == eps) conf = curve.confidence[i];
        out << nlohmann::json{{"epsilon", eps}, {"confidence", conf}}.dump() << "\n";
        return 0;
    }

    if (ce->parsed()) {
        ExperimentConfig cfg;
        cfg.case_name = e_case;
        cfg.Ns = parse_int_list(e_nlist);
        cfg.trials = e_trials;
        cfg.beta = e_beta;
        cfg.seed = e_common.seed;
        cfg.mc_samples = e_mc;
        cfg.K = e_K;
        if (!e_grid.empty()) cfg.grid = parse_double_list(e_grid);
        cfg.single_distribution = e_single;
        cfg.jobs = e_jobs;
        cfg.bound_opts.solver = e_common.solver();
        nlohmann::json config = e_common.config();
        config["case"] = e_case;
        config["N_list"] = cfg.Ns;
        config["trials"] = e_trials;
        config["beta"] = e_beta;
        config["mc_samples"] = e_mc;
        config["K"] = e_K;
        config["grid"] = cfg.grid;
        config["jobs"] = e_jobs;
        config["single_dist"] = e_single;
        write_manifest(e_common.outdir, "experiment", args, config);
        ExperimentResult res = run_trials(cfg);
        write_text(std::filesystem::path(e_common.outdir) / "trials.csv", trials_csv(res.trials));
        write_text(std::filesystem::path(e_common.outdir) / "aggregates.csv",
                   aggregates_csv(res.aggregates));
        std::string curves = "epsilon,confidence,K,N_T,seed\n";
        for (const auto& [N, curve] : res.curves) append_curve_csv(curves, curve);
        write_text(std::filesystem::path(e_common.outdir) / "curve.csv", curves);
        int failed = 0;
        for (const auto& a : res.aggregates) failed += a.trials_failed;
        out << nlohmann::json{{"trials", static_cast<int>(res.trials.size())},
                              {"failed", failed},
                              {"out", e_common.outdir}}
                   .dump()
            << "\n";
        return failed == 0 ? 0 : 4;
    }

    if (cs->parsed()) {
        InstanceFile inst = load_instance(s_instance);
        DistributionSpec dist = load_distribution(s_dist);
        MixedBinaryProgram prog = enforce_binary_bounds(inst.prog, s_implied);
        Rng rng = Rng::stream(s_common.seed, /*purpose=*/1000);
        const double value = simulate_expected_value(prog, dist, s_samples, rng);
        nlohmann::json config = s_common.config();
        config["instance"] = s_instance;
        config["dist"] = s_dist;
        config["samples"] = s_samples;
        config["implied_bounds"] = s_implied;
        write_manifest(s_common.outdir, "simulate", args, config);
        out << nlohmann::json{{"value", value}, {"samples", s_samples}}.dump() << "\n";
        return 0;
    }

    if (cr->parsed()) return cmd_rerun(r_manifest, out, err);
    return 3;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return run(args, out, err);
    } catch (const Error& e) {
        err << nlohmann::json{{"error", e.kind_name()}, {"message", e.what()}}.dump() << "\n";
        switch (e.kind()) {
            case ErrorKind::io: return 2;
            case ErrorKind::config: return 3;
            case ErrorKind::solver: return 4;
            case ErrorKind::internal: return 1;
        }
        return 1;
    } catch (const std::exception& e) {
        err << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
}

}  // namespace wasscopos
