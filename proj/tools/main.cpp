// wbar: penalized Wasserstein-barycenter model averaging on the command line.
//
// Subcommands: simulate (synthetic experiments), fit (calibrate weights),
// sequential (claims forecasting workflow), risk (VaR/ES of a model).
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wbar/claims.hpp"
#include "wbar/io.hpp"
#include "wbar/quantile.hpp"
#include "wbar/risk.hpp"
#include "wbar/sequential.hpp"
#include "wbar/simharness.hpp"
#include "wbar/solver.hpp"
#include "wbar/tuning.hpp"

namespace {

using ConfigMap = std::map<std::string, std::string>;

double to_double(const ConfigMap& m, const std::string& key, double fallback) {
    const auto it = m.find(key);
    if (it == m.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw wbar::config_error("config key '" + key + "': non-numeric value '" + it->second +
                                 "'");
    }
}

long to_long(const ConfigMap& m, const std::string& key, long fallback) {
    const auto it = m.find(key);
    if (it == m.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw wbar::config_error("config key '" + key + "': non-integer value '" + it->second +
                                 "'");
    }
}

std::string to_string_key(const ConfigMap& m, const std::string& key, std::string fallback) {
    const auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
}

ConfigMap load_config(const std::string& path, const std::set<std::string>& allowed) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw wbar::config_error("cannot open config file '" + path + "'");
    return wbar::parse_config_file(in, allowed);
}

wbar::PenaltyKind parse_kind(const std::string& text) {
    if (text == "pure") return wbar::PenaltyKind::pure;
    if (text == "lasso") return wbar::PenaltyKind::lasso;
    if (text == "ridge") return wbar::PenaltyKind::ridge;
    if (text == "enet") return wbar::PenaltyKind::elastic_net;
    throw wbar::config_error("unknown penalty kind '" + text +
                             "' (expected pure|lasso|ridge|enet)");
}

std::vector<wbar::Method> parse_methods(const std::string& text) {
    std::vector<wbar::Method> methods;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        const std::string name = wbar::detail::strip(token);
        if (name == "pure")
            methods.push_back(wbar::Method::pure);
        else if (name == "lasso")
            methods.push_back(wbar::Method::lasso);
        else if (name == "ridge")
            methods.push_back(wbar::Method::ridge);
        else if (name == "enet")
            methods.push_back(wbar::Method::enet);
        else
            throw wbar::config_error("unknown method '" + name + "'");
    }
    if (methods.empty()) throw wbar::config_error("--methods: empty list");
    return methods;
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path);
    if (!out) throw wbar::config_error("cannot write output file '" + path + "'");
    return out;
}

wbar::SolverOptions solver_from_config(const ConfigMap& cfg) {
    wbar::SolverOptions opts;
    if (cfg.count("solver.eta")) opts.eta = to_double(cfg, "solver.eta", 0.0);
    opts.tol = to_double(cfg, "solver.tol", opts.tol);
    opts.max_iter = static_cast<int>(to_long(cfg, "solver.max_iter", opts.max_iter));
    opts.eps_lqa = to_double(cfg, "solver.eps_lqa", opts.eps_lqa);
    return opts;
}

const std::set<std::string> kSimulateKeys{
    "grid.nodes",       "grid.trim",         "output.dir",        "solver.eta",
    "solver.tol",       "solver.max_iter",   "solver.eps_lqa",    "experiment.family",
    "experiment.j",     "experiment.n",      "experiment.b",      "experiment.seed",
    "experiment.methods", "experiment.threads", "experiment.cv_splits",
    "noise.c",          "noise.a",           "noise.b",           "noise.a1",
    "noise.b1",         "noise.a2",          "noise.b2",          "true.mean",
    "true.sigma",       "true.shape",        "true.scale"};

const std::set<std::string> kFitKeys{"grid.nodes",     "grid.trim",      "output.dir",
                                     "solver.eta",     "solver.tol",     "solver.max_iter",
                                     "solver.eps_lqa", "penalty.kind",   "penalty.lambda",
                                     "penalty.alpha",  "tuning.lambdas", "tuning.alphas",
                                     "fit.tune"};

const std::set<std::string> kSequentialKeys{
    "grid.nodes",        "grid.trim",      "output.dir",     "solver.eta",
    "solver.tol",        "solver.max_iter", "solver.eps_lqa", "penalty.kind",
    "penalty.lambda",    "penalty.alpha",  "sequential.delta", "sequential.rho",
    "sequential.warmup", "sequential.zeros", "sequential.tune_delta", "risk.levels"};

const std::set<std::string> kRiskKeys{"grid.nodes", "grid.trim", "output.dir", "risk.levels"};

// ---------------------------------------------------------------------------

int run_simulate(const std::string& config_path, const ConfigMap& flag_values) {
    ConfigMap cfg = load_config(config_path, kSimulateKeys);
    for (const auto& [k, v] : flag_values) cfg[k] = v;  // flags win

    wbar::ExperimentConfig c;
    const std::string family = to_string_key(cfg, "experiment.family", "normal");
    if (family == "normal")
        c.family = wbar::Family::normal;
    else if (family == "weibull")
        c.family = wbar::Family::weibull;
    else
        throw wbar::config_error("unknown family '" + family + "'");
    c.num_models = static_cast<std::size_t>(to_long(cfg, "experiment.j", 5));
    c.sample_size = static_cast<std::size_t>(to_long(cfg, "experiment.n", 100));
    c.replications = static_cast<std::size_t>(to_long(cfg, "experiment.b", 200));
    c.seed = static_cast<std::uint64_t>(to_long(cfg, "experiment.seed", 1));
    c.threads = static_cast<unsigned>(to_long(cfg, "experiment.threads", 0));
    c.cv_splits = static_cast<std::size_t>(to_long(cfg, "experiment.cv_splits", 8));
    c.methods = parse_methods(to_string_key(cfg, "experiment.methods", "pure,lasso,ridge,enet"));
    c.normal_mean = to_double(cfg, "true.mean", c.normal_mean);
    c.normal_sigma = to_double(cfg, "true.sigma", c.normal_sigma);
    c.weibull_shape = to_double(cfg, "true.shape", c.weibull_shape);
    c.weibull_scale = to_double(cfg, "true.scale", c.weibull_scale);
    c.normal_noise.c = to_double(cfg, "noise.c", c.normal_noise.c);
    c.normal_noise.a = to_double(cfg, "noise.a", c.normal_noise.a);
    c.normal_noise.b = to_double(cfg, "noise.b", c.normal_noise.b);
    c.weibull_noise.a1 = to_double(cfg, "noise.a1", c.weibull_noise.a1);
    c.weibull_noise.b1 = to_double(cfg, "noise.b1", c.weibull_noise.b1);
    c.weibull_noise.a2 = to_double(cfg, "noise.a2", c.weibull_noise.a2);
    c.weibull_noise.b2 = to_double(cfg, "noise.b2", c.weibull_noise.b2);
    c.grid = wbar::Grid(static_cast<std::size_t>(to_long(cfg, "grid.nodes", 1000)),
                        to_double(cfg, "grid.trim", 0.0));
    c.solver = solver_from_config(cfg);
    if (!cfg.count("solver.tol")) c.solver.tol = 1e-7;
    if (!cfg.count("solver.max_iter")) c.solver.max_iter = 2000;

    const auto report = wbar::run_experiment(c);
    const std::string out_dir = to_string_key(cfg, "output.dir", ".");
    {
        auto out = open_output(out_dir, "report.csv");
        wbar::write_experiment_csv(report, out);
    }
    {
        auto out = open_output(out_dir, "report.json");
        out << wbar::experiment_report_json(report).dump(2) << '\n';
    }
    std::cout << "simulate: wrote " << out_dir << "/report.csv and report.json\n";
    return 0;
}

int run_fit(const std::string& config_path, const ConfigMap& flag_values,
            const std::string& target_path, const std::string& models_path, bool tune) {
    ConfigMap cfg = load_config(config_path, kFitKeys);
    for (const auto& [k, v] : flag_values) cfg[k] = v;
    if (cfg.count("fit.tune")) tune = cfg["fit.tune"] == "true" || cfg["fit.tune"] == "1";

    const wbar::Grid grid(static_cast<std::size_t>(to_long(cfg, "grid.nodes", 1000)),
                          to_double(cfg, "grid.trim", 0.0));
    const auto opts = solver_from_config(cfg);
    const auto target = wbar::empirical_quantile(wbar::load_sample(target_path));
    std::ifstream spec_in(models_path);
    if (!spec_in) throw wbar::data_format_error("cannot open model spec '" + models_path + "'");
    const std::string base_dir = std::filesystem::path(models_path).parent_path().string();
    const auto models = wbar::parse_model_spec(spec_in, base_dir);

    wbar::FitResult fit;
    double lambda = 0.0, alpha = 0.0;
    if (tune) {
        wbar::TuningGrid tuning = wbar::TuningGrid::defaults();
        if (cfg.count("tuning.lambdas"))
            tuning.lambdas = wbar::parse_double_list(cfg["tuning.lambdas"], "tuning.lambdas");
        if (cfg.count("tuning.alphas"))
            tuning.alphas = wbar::parse_double_list(cfg["tuning.alphas"], "tuning.alphas");
        const auto tuned = wbar::grid_search(models, target, grid, tuning, opts);
        fit = tuned.fit;
        lambda = tuned.lambda;
        alpha = tuned.alpha;
    } else {
        const auto kind = parse_kind(to_string_key(cfg, "penalty.kind", "pure"));
        const auto gram = wbar::gram_system(models, target, grid);
        if (kind == wbar::PenaltyKind::pure) {
            fit = wbar::solve_pure(gram, opts);
        } else {
            lambda = to_double(cfg, "penalty.lambda", 1.0);
            alpha = kind == wbar::PenaltyKind::lasso   ? 1.0
                    : kind == wbar::PenaltyKind::ridge ? 0.0
                                                       : to_double(cfg, "penalty.alpha", 0.5);
            fit = wbar::solve(gram, wbar::PenaltyConfig(lambda, alpha), opts);
        }
    }
    const std::string out_dir = to_string_key(cfg, "output.dir", ".");
    auto out = open_output(out_dir, "weights.json");
    out << wbar::fit_result_json(fit, lambda, alpha).dump(2) << '\n';
    std::cout << "fit: wrote " << out_dir << "/weights.json\n";
    return 0;
}

int run_sequential_cmd(const std::string& config_path, const ConfigMap& flag_values,
                       const std::string& claims_path) {
    ConfigMap cfg = load_config(config_path, kSequentialKeys);
    for (const auto& [k, v] : flag_values) cfg[k] = v;

    const auto panel = wbar::load_claims(claims_path);
    wbar::SequentialConfig sc;
    sc.kind = parse_kind(to_string_key(cfg, "penalty.kind", "pure"));
    if (cfg.count("penalty.lambda")) sc.lambda = to_double(cfg, "penalty.lambda", 0.0);
    if (cfg.count("penalty.alpha")) sc.alpha = to_double(cfg, "penalty.alpha", 0.5);
    sc.rho = to_double(cfg, "sequential.rho", sc.rho);
    sc.warmup = static_cast<std::size_t>(to_long(cfg, "sequential.warmup", 5));
    sc.grid = wbar::Grid(static_cast<std::size_t>(to_long(cfg, "grid.nodes", 1000)),
                         to_double(cfg, "grid.trim", 0.001));
    sc.solver = solver_from_config(cfg);
    if (!cfg.count("solver.tol")) sc.solver.tol = 1e-8;
    if (!cfg.count("solver.max_iter")) sc.solver.max_iter = 5000;
    if (cfg.count("risk.levels")) {
        sc.risk_levels = wbar::parse_double_list(cfg["risk.levels"], "risk.levels");
        for (double p : sc.risk_levels)
            if (!(p > 0.0 && p < 1.0))
                throw wbar::config_error("risk level " + wbar::format_double(p) +
                                         " outside (0,1)");
    }
    if (cfg.count("sequential.tune_delta")) {
        const auto candidates =
            wbar::parse_double_list(cfg["sequential.tune_delta"], "sequential.tune_delta");
        sc.delta = wbar::tune_delta(panel, candidates, sc.warmup, sc);
        std::cout << "sequential: tuned delta = " << wbar::format_double(sc.delta) << '\n';
    } else {
        sc.delta = to_double(cfg, "sequential.delta", sc.delta);
    }

    const auto run = wbar::run_sequential(panel, sc);
    const std::string zeros = to_string_key(cfg, "sequential.zeros", "blank");
    if (zeros != "blank" && zeros != "numeric")
        throw wbar::config_error("sequential.zeros must be 'blank' or 'numeric'");
    const std::string out_dir = to_string_key(cfg, "output.dir", ".");
    {
        auto out = open_output(out_dir, "sequential_weights.csv");
        wbar::write_sequential_weights_csv(run, out, zeros == "numeric");
    }
    {
        auto out = open_output(out_dir, "sequential_extended_weights.csv");
        wbar::write_sequential_extended_weights_csv(run, out, zeros == "numeric");
    }
    {
        auto out = open_output(out_dir, "sequential_risk.csv");
        wbar::write_sequential_risk_csv(run, out);
    }
    std::cout << "sequential: " << run.records.size() << " validation periods; wrote " << out_dir
              << "/sequential_weights.csv and sequential_risk.csv\n";
    return 0;
}

int run_risk(const std::string& config_path, const ConfigMap& flag_values,
             const std::string& spec_path, const std::string& sample_path) {
    ConfigMap cfg = load_config(config_path, kRiskKeys);
    for (const auto& [k, v] : flag_values) cfg[k] = v;

    if (spec_path.empty() == sample_path.empty())
        throw wbar::config_error("risk: provide exactly one of --spec or --sample");
    const wbar::Grid grid(static_cast<std::size_t>(to_long(cfg, "grid.nodes", 1000)),
                          to_double(cfg, "grid.trim", 0.0));
    std::optional<wbar::QuantileFunction> model;
    if (!sample_path.empty()) {
        model = wbar::empirical_quantile(wbar::load_sample(sample_path));
    } else {
        std::ifstream in(spec_path);
        if (!in) throw wbar::data_format_error("cannot open model spec '" + spec_path + "'");
        const std::string base_dir = std::filesystem::path(spec_path).parent_path().string();
        auto models = wbar::parse_model_spec(in, base_dir);
        if (models.size() != 1)
            throw wbar::config_error("risk: model spec must contain exactly one model, got " +
                                     std::to_string(models.size()));
        model = std::move(models.front());
    }
    std::vector<double> levels = wbar::default_risk_levels();
    if (cfg.count("risk.levels")) levels = wbar::parse_double_list(cfg["risk.levels"], "risk.levels");
    for (double p : levels)
        if (!(p > 0.0 && p < 1.0))
            throw wbar::config_error("risk level " + wbar::format_double(p) + " outside (0,1)");

    const auto report = wbar::risk_report(*model, grid, levels);
    const std::string out_dir = to_string_key(cfg, "output.dir", ".");
    auto out = open_output(out_dir, "risk.csv");
    wbar::write_risk_csv(report, out);
    std::cout << "risk: wrote " << out_dir << "/risk.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized Wasserstein-barycenter model averaging"};
    app.require_subcommand(1);

    // shared flag storage; each subcommand copies what it saw into a ConfigMap
    std::string config_path, out_dir, target_path, models_path, claims_path, spec_path,
        sample_path;
    std::string family, methods, penalty, zeros, tune_delta_list, levels_list;
    long grid_nodes = -1, j_models = -1, n_samples = -1, b_reps = -1, warmup = -1, threads = -1;
    double trim = -1.0, lambda = -1.0, alpha = -1.0, delta = -1.0, rho = -1.0;
    long seed = -1;
    bool tune = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key=value configuration file");
        cmd->add_option("--out", out_dir, "output directory (default .)");
        cmd->add_option("--grid-nodes", grid_nodes, "quadrature nodes (default 1000)");
        cmd->add_option("--trim", trim, "tail trim of the quadrature grid");
    };

    auto* simulate = app.add_subcommand("simulate", "run a synthetic experiment");
    add_common(simulate);
    simulate->add_option("--family", family, "normal|weibull");
    simulate->add_option("--J", j_models, "number of candidate models");
    simulate->add_option("--n", n_samples, "sample size per model");
    simulate->add_option("--B", b_reps, "Monte Carlo replications");
    simulate->add_option("--seed", seed, "RNG seed");
    simulate->add_option("--methods", methods, "comma list of pure,lasso,ridge,enet");
    simulate->add_option("--threads", threads, "worker threads (0 = hardware)");

    auto* fit = app.add_subcommand("fit", "calibrate barycenter weights to a sample");
    add_common(fit);
    fit->add_option("--target", target_path, "target sample file (one value per line)")
        ->required();
    fit->add_option("--models", models_path, "model spec file")->required();
    fit->add_option("--penalty", penalty, "pure|lasso|ridge|enet");
    fit->add_option("--lambda", lambda, "penalty strength");
    fit->add_option("--alpha", alpha, "elastic-net mix in [0,1]");
    fit->add_flag("--tune", tune, "grid-search (lambda, alpha)");

    auto* sequential = app.add_subcommand("sequential", "claims forecasting workflow");
    add_common(sequential);
    sequential->add_option("--claims", claims_path, "claims CSV (period,loss)")->required();
    sequential->add_option("--delta", delta, "weight share of the newest period");
    sequential->add_option("--tune-delta", tune_delta_list, "comma list of delta candidates");
    sequential->add_option("--rho", rho, "EWMA decay of the bias correction");
    sequential->add_option("--warmup", warmup, "initial observed periods (default 5)");
    sequential->add_option("--penalty", penalty, "pure|lasso|ridge|enet");
    sequential->add_option("--lambda", lambda, "fixed penalty strength");
    sequential->add_option("--alpha", alpha, "elastic-net mix");
    sequential->add_option("--zeros", zeros, "blank|numeric zero-weight cells");
    sequential->add_option("--levels", levels_list, "comma list of risk levels");

    auto* risk = app.add_subcommand("risk", "VaR and ES of a model or sample");
    add_common(risk);
    risk->add_option("--spec", spec_path, "model spec file with exactly one model");
    risk->add_option("--sample", sample_path, "sample file (one value per line)");
    risk->add_option("--levels", levels_list, "comma list of levels in (0,1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }

    try {
        ConfigMap flags;
        auto put_if = [&](CLI::App* cmd, const char* flag, const std::string& key,
                          const std::string& value) {
            if (cmd->count(flag)) flags[key] = value;
        };
        CLI::App* active = app.get_subcommands().front();
        put_if(active, "--out", "output.dir", out_dir);
        if (active->count("--grid-nodes")) flags["grid.nodes"] = std::to_string(grid_nodes);
        if (active->count("--trim")) flags["grid.trim"] = wbar::format_double(trim);

        if (active == simulate) {
            put_if(active, "--family", "experiment.family", family);
            if (active->count("--J")) flags["experiment.j"] = std::to_string(j_models);
            if (active->count("--n")) flags["experiment.n"] = std::to_string(n_samples);
            if (active->count("--B")) flags["experiment.b"] = std::to_string(b_reps);
            if (active->count("--seed")) flags["experiment.seed"] = std::to_string(seed);
            if (active->count("--threads")) flags["experiment.threads"] = std::to_string(threads);
            put_if(active, "--methods", "experiment.methods", methods);
            return run_simulate(config_path, flags);
        }
        if (active == fit) {
            put_if(active, "--penalty", "penalty.kind", penalty);
            if (active->count("--lambda")) flags["penalty.lambda"] = wbar::format_double(lambda);
            if (active->count("--alpha")) flags["penalty.alpha"] = wbar::format_double(alpha);
            return run_fit(config_path, flags, target_path, models_path, tune);
        }
        if (active == sequential) {
            put_if(active, "--penalty", "penalty.kind", penalty);
            if (active->count("--lambda")) flags["penalty.lambda"] = wbar::format_double(lambda);
            if (active->count("--alpha")) flags["penalty.alpha"] = wbar::format_double(alpha);
            if (active->count("--delta")) flags["sequential.delta"] = wbar::format_double(delta);
            if (active->count("--rho")) flags["sequential.rho"] = wbar::format_double(rho);
            if (active->count("--warmup")) flags["sequential.warmup"] = std::to_string(warmup);
            put_if(active, "--zeros", "sequential.zeros", zeros);
            put_if(active, "--tune-delta", "sequential.tune_delta", tune_delta_list);
            put_if(active, "--levels", "risk.levels", levels_list);
            return run_sequential_cmd(config_path, flags, claims_path);
        }
        if (active == risk) {
            put_if(active, "--levels", "risk.levels", levels_list);
            return run_risk(config_path, flags, spec_path, sample_path);
        }
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const wbar::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const wbar::invalid_input_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const wbar::data_format_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const wbar::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
