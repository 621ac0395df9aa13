#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esreg/esreg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;
constexpr int kExitBand = 4;

int env_threads() {
    if (const char* s = std::getenv("ESREG_THREADS")) {
        const int v = std::atoi(s);
        if (v > 0) return v;
    }
    return 0;
}

struct FitArgs {
    std::string input;
    std::string response;
    double alpha = 0.1;
    std::string method = "ls";
    double level = 0.95;
    std::optional<double> gamma;
    std::optional<double> bandwidth;
    std::uint64_t seed = 0;
    std::string output;
    double tol = 1e-6;
    int max_iter = 5000;
};

int run_fit(const FitArgs& args) {
    using namespace esreg;
    const auto method = parse_method(args.method);
    if (!method || *method == EsMethod::oracle) {
        std::cerr << "esreg fit: unknown method '" << args.method << "'\n";
        return kExitInput;
    }
    if (!(args.alpha > 0.0 && args.alpha < 1.0) || !(args.level > 0.0 && args.level < 1.0)) {
        std::cerr << "esreg fit: alpha and level must lie in (0,1)\n";
        return kExitInput;
    }

    LoadedCsv csv;
    try {
        csv = load_csv_dataset(args.input, args.response);
    } catch (const InputError& e) {
        std::cerr << "esreg fit: " << e.what() << "\n";
        return kExitInput;
    }

    const SolverControl control{args.tol, args.max_iter, args.seed};
    Json doc;
    try {
        const QuantileFit qr =
            smoothed_qr_fit(csv.data, args.alpha, args.bandwidth, control);

        EsFit fit;
        switch (*method) {
            case EsMethod::ls: fit = es_ls_fit(csv.data, qr.beta, args.alpha); break;
            case EsMethod::huber:
                fit = adaptive_huber_es(csv.data, qr.beta, args.alpha, control).fit;
                break;
            case EsMethod::nc_ls: fit = nc_es_ls_fit(csv.data, qr.beta, args.alpha); break;
            case EsMethod::nc_huber:
                fit = nc_es_huber_fit(csv.data, qr.beta, args.alpha, control);
                break;
            case EsMethod::oracle: break;  // rejected above
        }

        const auto [eps, omega] = es_residuals(csv.data, qr.beta, fit.theta, args.alpha);
        const bool robust = *method == EsMethod::huber || *method == EsMethod::nc_huber;
        const CovarianceEstimate cov = robust
                                           ? truncated_covariance(csv.data, omega, args.gamma)
                                           : plugin_covariance(csv.data, omega);
        const InferenceResult inf = confidence_intervals(fit.theta, cov.sandwich, csv.data.n(),
                                                         args.alpha, args.level, cov.gamma);

        doc = Json{{"alpha", args.alpha},
                   {"method", to_string(fit.method)},
                   {"beta", to_json(qr.beta)},
                   {"theta", to_json(fit.theta)},
                   {"tau", fit.tau ? Json(*fit.tau) : Json(nullptr)},
                   {"se", to_json(inf.se)},
                   {"ci_lower", to_json(inf.ci_lower)},
                   {"ci_upper", to_json(inf.ci_upper)},
                   {"gamma", inf.gamma ? Json(*inf.gamma) : Json(nullptr)},
                   {"crossings", fit.crossings},
                   {"diagnostics",
                    Json{{"first_stage", to_json(qr.diagnostics)},
                         {"second_stage", to_json(fit.diagnostics)},
                         {"bandwidth", qr.bandwidth},
                         {"response", csv.response_name},
                         {"n", csv.data.n()},
                         {"p", csv.data.p()}}}};
    } catch (const SolverError& e) {
        std::cerr << "esreg fit: solver failure: " << e.what() << "\n";
        return kExitSolver;
    }

    const std::string text = doc.dump(2) + "\n";
    if (args.output.empty() || args.output == "-") {
        std::cout << text;
    } else {
        std::ofstream out(args.output, std::ios::binary);
        if (!out) {
            std::cerr << "esreg fit: cannot write '" << args.output << "'\n";
            return kExitInput;
        }
        out << text;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace esreg;
    CLI::App app{"Two-step quantile / expected-shortfall regression"};
    app.require_subcommand(1);

    // fit ---------------------------------------------------------------
    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit one model from a CSV file");
    fit->add_option("--input", fit_args.input, "CSV file (header row required)")->required();
    fit->add_option("--response", fit_args.response, "Response column name or 0-based index")
        ->required();
    fit->add_option("--alpha", fit_args.alpha, "Quantile level in (0,1)")->required();
    fit->add_option("--method", fit_args.method, "ls | huber | nc-ls | nc-huber");
    fit->add_option("--level", fit_args.level, "Confidence level (default 0.95)");
    double fit_gamma = 0.0, fit_bw = 0.0;
    auto* gopt = fit->add_option("--gamma", fit_gamma, "Covariance truncation level");
    auto* bopt = fit->add_option("--bandwidth", fit_bw, "QR smoothing bandwidth");
    fit->add_option("--seed", fit_args.seed, "RNG seed (default 0)");
    fit->add_option("--output", fit_args.output, "Output path (default stdout)");
    fit->add_option("--tol", fit_args.tol, "Solver tolerance");
    fit->add_option("--max-iter", fit_args.max_iter, "Solver iteration cap");

    // simulate ------------------------------------------------------------
    std::string sim_config_path, sim_out_dir = ".";
    bool sim_timings = false;
    SimConfig sim_cfg;
    std::string sim_model = "hetero", sim_dist = "normal";
    std::vector<std::string> sim_methods;
    double sim_nu = 2.5, sim_gamma = 0.0, sim_bw = 0.0;
    long long sim_n = 0;
    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study");
    sim->add_option("--config", sim_config_path, "JSON or TOML config file");
    sim->add_option("--model", sim_model, "hetero | qar | nc-benchmark");
    sim->add_option("--dist", sim_dist, "normal | t");
    sim->add_option("--nu", sim_nu, "Student t degrees of freedom");
    sim->add_option("--p", sim_cfg.p, "Number of generated regressors");
    sim->add_option("--alpha", sim_cfg.alpha, "Quantile level");
    sim->add_option("--n", sim_n, "Sample size (default ceil(50 p / alpha))");
    sim->add_option("--reps", sim_cfg.reps, "Replications");
    sim->add_option("--level", sim_cfg.level, "Confidence level");
    sim->add_option("--methods", sim_methods, "Subset of ls,huber,oracle,nc-ls,nc-huber");
    sim->add_option("--seed", sim_cfg.seed, "RNG seed");
    sim->add_option("--threads", sim_cfg.threads, "Worker threads (default all cores)");
    auto* sgopt = sim->add_option("--gamma", sim_gamma, "Covariance truncation level");
    auto* sbopt = sim->add_option("--bandwidth", sim_bw, "QR smoothing bandwidth");
    sim->add_option("--tol", sim_cfg.control.tol, "Solver tolerance");
    sim->add_option("--out-dir", sim_out_dir, "Directory for report.json / summary.csv");
    sim->add_flag("--timings", sim_timings, "Include wall-clock timings in reports");

    // replicate -----------------------------------------------------------
    std::string rep_table;
    ReplicateOptions rep_opts;
    auto* rep = app.add_subcommand("replicate", "Re-run a stored benchmark table");
    rep->add_option("table", rep_table,
                    "t-relerr | normal-relerr | t-coverage | normal-coverage | noncross-fig")
        ->required();
    rep->add_option("--reps", rep_opts.reps, "Replications (default: table nominal)");
    rep->add_option("--scale", rep_opts.scale, "Multiply the nominal replication count");
    rep->add_option("--seed", rep_opts.seed, "RNG seed");
    rep->add_option("--threads", rep_opts.threads, "Worker threads");

    CLI11_PARSE(app, argc, argv);

    if (fit->parsed()) {
        if (gopt->count()) fit_args.gamma = fit_gamma;
        if (bopt->count()) fit_args.bandwidth = fit_bw;
        return run_fit(fit_args);
    }

    if (sim->parsed()) {
        try {
            SimConfig cfg;
            if (!sim_config_path.empty()) {
                cfg = load_sim_config(sim_config_path);
            } else {
                Json j{{"model", sim_model}, {"dist", sim_dist}, {"nu", sim_nu}};
                cfg = sim_config_from_json(j);
            }
            // Flags override file values where given.
            if (sim->count("--p")) cfg.p = sim_cfg.p;
            if (sim->count("--alpha")) cfg.alpha = sim_cfg.alpha;
            if (sim->count("--n")) cfg.n = static_cast<Eigen::Index>(sim_n);
            if (sim->count("--reps")) cfg.reps = sim_cfg.reps;
            if (sim->count("--level")) cfg.level = sim_cfg.level;
            if (sim->count("--seed")) cfg.seed = sim_cfg.seed;
            if (sim->count("--threads")) cfg.threads = sim_cfg.threads;
            if (sim->count("--tol")) cfg.control.tol = sim_cfg.control.tol;
            if (sgopt->count()) cfg.gamma = sim_gamma;
            if (sbopt->count()) cfg.bandwidth = sim_bw;
            if (!sim_methods.empty()) {
                cfg.methods.clear();
                for (const auto& s : sim_methods) {
                    const auto m = parse_method(s);
                    if (!m) throw InputError("unknown method '" + s + "'");
                    cfg.methods.push_back(*m);
                }
            }
            if (cfg.threads == 0) cfg.threads = env_threads();
            if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
                throw InputError("alpha must lie in (0,1)");

            const SimulationReport report = run_replications(cfg);

            namespace fs = std::filesystem;
            fs::create_directories(sim_out_dir);
            {
                std::ofstream out(fs::path(sim_out_dir) / "report.json", std::ios::binary);
                if (!out) throw InputError("cannot write report.json in '" + sim_out_dir + "'");
                out << report_to_json(report, sim_timings).dump(2) << "\n";
            }
            {
                std::ofstream out(fs::path(sim_out_dir) / "summary.csv", std::ios::binary);
                if (!out) throw InputError("cannot write summary.csv in '" + sim_out_dir + "'");
                out << report_to_summary_csv(report, sim_timings);
            }
            std::cout << report_to_summary_csv(report, sim_timings);
            return kExitOk;
        } catch (const InputError& e) {
            std::cerr << "esreg simulate: " << e.what() << "\n";
            return kExitInput;
        } catch (const SolverError& e) {
            std::cerr << "esreg simulate: solver failure: " << e.what() << "\n";
            return kExitSolver;
        }
    }

    if (rep->parsed()) {
        const auto table = parse_table(rep_table);
        if (!table) {
            std::cerr << "esreg replicate: unknown table '" << rep_table << "'\n";
            return kExitInput;
        }
        if (rep_opts.threads == 0) rep_opts.threads = env_threads();
        try {
            const ReplicateOutcome out = run_replicate(*table, rep_opts);
            for (const auto& c : out.checks) {
                const char* mark = !c.enforced ? "INFO" : (c.pass ? "PASS" : "FAIL");
                std::printf("[%s] %s: %.4f (%s)\n", mark, c.label.c_str(), c.value,
                            c.band.c_str());
            }
            if (out.advisory)
                std::printf("advisory mode: %d reps below the nominal %d, bands not enforced\n",
                            rep_opts.reps, nominal_reps(*table));
            return out.all_pass() ? kExitOk : kExitBand;
        } catch (const SolverError& e) {
            std::cerr << "esreg replicate: solver failure: " << e.what() << "\n";
            return kExitSolver;
        }
    }
    return kExitOk;
}
