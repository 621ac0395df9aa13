#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "esreg/sim.hpp"
#include "esreg/types.hpp"

namespace esreg {

// Stored reference values from the benchmark study this tool reproduces:
// mean relative errors, CI coverage/width, and non-crossing MSEs, with the
// acceptance band applied to each.

enum class ReplicateTable { t_relerr, normal_relerr, t_coverage, normal_coverage, noncross_fig };

inline std::optional<ReplicateTable> parse_table(const std::string& s) {
    if (s == "t-relerr") return ReplicateTable::t_relerr;
    if (s == "normal-relerr") return ReplicateTable::normal_relerr;
    if (s == "t-coverage") return ReplicateTable::t_coverage;
    if (s == "normal-coverage") return ReplicateTable::normal_coverage;
    if (s == "noncross-fig") return ReplicateTable::noncross_fig;
    return std::nullopt;
}

inline const char* to_string(ReplicateTable t) {
    switch (t) {
        case ReplicateTable::t_relerr: return "t-relerr";
        case ReplicateTable::normal_relerr: return "normal-relerr";
        case ReplicateTable::t_coverage: return "t-coverage";
        case ReplicateTable::normal_coverage: return "normal-coverage";
        case ReplicateTable::noncross_fig: return "noncross-fig";
    }
    return "?";
}

struct ReplicateCheck {
    std::string label;
    double value = 0.0;
    std::string band;    // human-readable description of the reference band
    bool pass = true;
    bool enforced = true;
};

struct ReplicateOutcome {
    std::vector<ReplicateCheck> checks;
    bool advisory = false;  // reps below nominal: report but never fail

    bool all_pass() const {
        if (advisory) return true;
        for (const auto& c : checks)
            if (c.enforced && !c.pass) return false;
        return true;
    }
};

inline int nominal_reps(ReplicateTable t) {
    switch (t) {
        case ReplicateTable::t_relerr:
        case ReplicateTable::normal_relerr: return 200;
        default: return 500;
    }
}

namespace detail {

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline void check_abs_band(ReplicateOutcome& out, const std::string& label, double value,
                           double reference, double tol) {
    out.checks.push_back({label, value,
                          fmt(reference) + " +/- " + fmt(tol),
                          std::fabs(value - reference) <= tol, true});
}

inline void check_interval(ReplicateOutcome& out, const std::string& label, double value,
                           double lo, double hi) {
    out.checks.push_back({label, value, "[" + fmt(lo) + ", " + fmt(hi) + "]",
                          value >= lo && value <= hi, true});
}

inline void check_less(ReplicateOutcome& out, const std::string& label, double value,
                       double other, bool strict = true) {
    out.checks.push_back({label, value, std::string(strict ? "< " : "<= ") + fmt(other),
                          strict ? value < other : value <= other, true});
}

inline void info(ReplicateOutcome& out, const std::string& label, double value,
                 const std::string& note) {
    out.checks.push_back({label, value, note, true, false});
}

}  // namespace detail

struct ReplicateOptions {
    int reps = 0;  // 0: nominal
    double scale = 1.0;
    std::uint64_t seed = 0;
    int threads = 0;
    SolverControl control{1e-6, 5000, 0};
};

inline ReplicateOutcome run_replicate(ReplicateTable table, const ReplicateOptions& opts = {}) {
    ReplicateOutcome out;
    int reps = opts.reps > 0 ? opts.reps
                             : static_cast<int>(std::lround(nominal_reps(table) * opts.scale));
    reps = std::max(1, reps);
    out.advisory = reps < nominal_reps(table);

    auto base_cfg = [&](Noise noise, double alpha, std::uint64_t block) {
        SimConfig cfg;
        cfg.kind = ModelKind::hetero;
        cfg.noise = noise;
        cfg.p = 20;
        cfg.alpha = alpha;
        cfg.reps = reps;
        cfg.seed = split_seed(opts.seed, 1000 + block);
        cfg.threads = opts.threads;
        cfg.control = opts.control;
        // Mean errors vary noticeably with the coefficient draw (sd ~ 0.03
        // across draws); redrawing per replication makes the reported mean
        // target the draw-averaged value the reference numbers sit near.
        cfg.redraw_coefficients = true;
        return cfg;
    };

    const double alphas[3] = {0.05, 0.1, 0.2};

    switch (table) {
        case ReplicateTable::t_relerr: {
            const double ref_ah[3] = {0.484, 0.470, 0.429};
            const double ref_ls[3] = {0.612, 0.606, 0.532};
            for (int i = 0; i < 3; ++i) {
                SimConfig cfg = base_cfg(Noise::student_t(2.5), alphas[i], i);
                cfg.methods = {EsMethod::huber, EsMethod::ls, EsMethod::oracle};
                const SimulationReport rep = run_replications(cfg);
                const auto ah = aggregate(rep.records[0]);
                const auto ls = aggregate(rep.records[1]);
                const auto ora = aggregate(rep.records[2]);
                const std::string tag = "t-relerr alpha=" + detail::fmt(alphas[i]);
                detail::check_abs_band(out, tag + " 2S-AH rel_error", ah.rel_error_mean,
                                       ref_ah[i], 0.05);
                detail::check_less(out, tag + " 2S-AH below 2S-LS (" +
                                            detail::fmt(ls.rel_error_mean) + ")",
                                   ah.rel_error_mean, ls.rel_error_mean);
                detail::info(out, tag + " 2S-LS rel_error", ls.rel_error_mean,
                             "reference " + detail::fmt(ref_ls[i]));
                detail::info(out, tag + " 2S-oracle rel_error", ora.rel_error_mean,
                             "reference " + detail::fmt(ref_ls[i]));
            }
            break;
        }
        case ReplicateTable::normal_relerr: {
            const double ref_val[3] = {0.130, 0.150, 0.171};
            for (int i = 0; i < 3; ++i) {
                SimConfig cfg = base_cfg(Noise::normal(), alphas[i], i);
                cfg.methods = {EsMethod::huber, EsMethod::ls, EsMethod::oracle};
                const SimulationReport rep = run_replications(cfg);
                const auto ah = aggregate(rep.records[0]);
                const auto ls = aggregate(rep.records[1]);
                const auto ora = aggregate(rep.records[2]);
                const std::string tag = "normal-relerr alpha=" + detail::fmt(alphas[i]);
                detail::check_abs_band(out, tag + " 2S-AH rel_error", ah.rel_error_mean,
                                       ref_val[i], 0.02);
                detail::check_abs_band(out, tag + " 2S-LS rel_error", ls.rel_error_mean,
                                       ref_val[i], 0.02);
                detail::check_abs_band(out, tag + " |2S-AH - 2S-LS|",
                                       std::fabs(ah.rel_error_mean - ls.rel_error_mean), 0.0,
                                       0.005);
                detail::info(out, tag + " 2S-oracle rel_error", ora.rel_error_mean,
                             "reference " + detail::fmt(i == 0 ? 0.129 : (i == 1 ? 0.149 : 0.171)));
            }
            break;
        }
        case ReplicateTable::t_coverage: {
            const double ref_cov[3] = {0.947, 0.946, 0.948};
            const double ref_wid[3] = {3.633, 2.790, 2.243};
            for (int i = 0; i < 3; ++i) {
                SimConfig cfg = base_cfg(Noise::student_t(2.5), alphas[i], i);
                cfg.methods = {EsMethod::huber, EsMethod::ls};
                const SimulationReport rep = run_replications(cfg);
                const auto ah = aggregate(rep.records[0]);
                const auto ls = aggregate(rep.records[1]);
                const std::string tag = "t-coverage alpha=" + detail::fmt(alphas[i]);
                detail::check_interval(out, tag + " 2S-AH coverage", ah.coverage_mean, 0.92,
                                       0.97);
                detail::info(out, tag + " 2S-AH coverage reference", ref_cov[i], "target");
                if (alphas[i] == 0.1) {
                    detail::check_abs_band(out, tag + " 2S-AH width", ah.width_mean,
                                           ref_wid[i], 0.4);
                    detail::check_less(out, tag + " 2S-AH width below 2S-LS (" +
                                                detail::fmt(ls.width_mean) + ")",
                                       ah.width_mean, ls.width_mean);
                } else {
                    detail::info(out, tag + " 2S-AH width", ah.width_mean,
                                 "reference " + detail::fmt(ref_wid[i]));
                }
            }
            break;
        }
        case ReplicateTable::normal_coverage: {
            const double ref_cov[3] = {0.950, 0.949, 0.948};
            const double ref_wid[3] = {0.595, 0.660, 0.744};
            for (int i = 0; i < 3; ++i) {
                SimConfig cfg = base_cfg(Noise::normal(), alphas[i], i);
                cfg.methods = {EsMethod::huber, EsMethod::ls};
                const SimulationReport rep = run_replications(cfg);
                const auto ah = aggregate(rep.records[0]);
                const std::string tag = "normal-coverage alpha=" + detail::fmt(alphas[i]);
                detail::check_interval(out, tag + " 2S-AH coverage", ah.coverage_mean, 0.92,
                                       0.97);
                detail::info(out, tag + " 2S-AH coverage reference", ref_cov[i], "target");
                detail::info(out, tag + " 2S-AH width", ah.width_mean,
                             "reference " + detail::fmt(ref_wid[i]));
            }
            break;
        }
        case ReplicateTable::noncross_fig: {
            SimConfig cfg;
            cfg.kind = ModelKind::nc_benchmark;
            cfg.noise = Noise::normal();
            cfg.p = 10;
            cfg.alpha = 0.1;
            cfg.n = 5000;
            cfg.reps = reps;
            cfg.seed = split_seed(opts.seed, 1000);
            cfg.threads = opts.threads;
            cfg.control = opts.control;
            cfg.methods = {EsMethod::ls, EsMethod::nc_ls, EsMethod::huber, EsMethod::nc_huber};
            const SimulationReport rep = run_replications(cfg);
            const double ref_mse[4] = {0.0534, 0.0407, 0.0532, 0.0408};
            MethodAggregates agg[4];
            for (int i = 0; i < 4; ++i) agg[i] = aggregate(rep.records[i]);
            const char* names[4] = {"LS", "NC-LS", "Huber", "NC-Huber"};
            for (int i = 0; i < 4; ++i)
                detail::check_abs_band(out, std::string("noncross ") + names[i] + " MSE",
                                       agg[i].mse_full, ref_mse[i], 0.3 * ref_mse[i]);
            detail::check_less(out, "noncross NC-LS MSE below LS (" + detail::fmt(agg[0].mse_full) + ")",
                               agg[1].mse_full, agg[0].mse_full);
            detail::check_less(out, "noncross NC-Huber MSE at most Huber (" +
                                        detail::fmt(agg[2].mse_full) + ")",
                               agg[3].mse_full, agg[2].mse_full, /*strict=*/false);
            detail::check_abs_band(out, "noncross NC-LS total crossings",
                                   static_cast<double>(agg[1].crossings_total), 0.0, 0.0);
            detail::check_abs_band(out, "noncross NC-Huber total crossings",
                                   static_cast<double>(agg[3].crossings_total), 0.0, 0.0);

            // Heavy-tailed companion run, reported for reference only
            // (references 0.8587, 0.5277, 0.4951, 0.3794).
            SimConfig tcfg = cfg;
            tcfg.noise = Noise::student_t(2.5);
            tcfg.n = 10000;
            tcfg.reps = std::max(10, reps / 5);
            tcfg.seed = split_seed(opts.seed, 1001);
            const SimulationReport trep = run_replications(tcfg);
            const double ref_t[4] = {0.8587, 0.5277, 0.4951, 0.3794};
            for (int i = 0; i < 4; ++i)
                detail::info(out, std::string("noncross t_2.5 ") + names[i] + " MSE",
                             aggregate(trep.records[i]).mse_full,
                             "reference " + detail::fmt(ref_t[i]));
            break;
        }
    }
    return out;
}

}  // namespace esreg
