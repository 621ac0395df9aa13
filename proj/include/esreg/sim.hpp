#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "esreg/distributions.hpp"
#include "esreg/es.hpp"
#include "esreg/huber.hpp"
#include "esreg/inference.hpp"
#include "esreg/noncross.hpp"
#include "esreg/qr.hpp"
#include "esreg/rng.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// True coefficients in the estimation parameterization (intercept first).
struct TrueCoefficients {
    Vector beta_star;
    Vector theta_star;
    double q_eps = 0.0;
    double es_eps = 0.0;
};

// Heteroscedastic cross-sectional model y = x'g + (x'e) eps with
// x_j ~ U(0, 1.5), g_j Rademacher, e_j in {0, 0.5}. Coefficients are drawn
// once per model and shared across replications.
struct HeteroModel {
    int p = 0;
    Noise noise;
    double alpha = 0.0;
    Vector gamma_star;
    Vector eta_star;
};

inline HeteroModel make_hetero_model(int p, const Noise& noise, double alpha,
                                     std::uint64_t seed) {
    HeteroModel m{p, noise, alpha, Vector(p), Vector(p)};
    Rng rng(seed);
    for (int j = 0; j < p; ++j) m.gamma_star(j) = rng.rademacher();
    for (int j = 0; j < p; ++j) m.eta_star(j) = rng.bernoulli(0.5) ? 0.5 : 0.0;
    return m;
}

inline TrueCoefficients true_coefficients(const HeteroModel& m) {
    const QuantileEs qe = dist_quantile_es(m.noise, m.alpha);
    TrueCoefficients t;
    t.q_eps = qe.q;
    t.es_eps = qe.es;
    t.beta_star = Vector::Zero(m.p + 1);
    t.theta_star = Vector::Zero(m.p + 1);
    t.beta_star.tail(m.p) = m.gamma_star + qe.q * m.eta_star;
    t.theta_star.tail(m.p) = m.gamma_star + qe.es * m.eta_star;
    return t;
}

inline Dataset gen_hetero(const HeteroModel& m, Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.x = Matrix::Ones(n, m.p + 1);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < m.p; ++j) d.x(i, j + 1) = rng.uniform(0.0, 1.5);
        const double eps = sample_noise(m.noise, rng);
        const auto row = d.x.row(i).tail(m.p);
        d.y(i) = row.dot(m.gamma_star) + row.dot(m.eta_star) * eps;
    }
    return d;
}

// Benchmark model for the non-crossing comparison: y = 2 + x'g + (x'e) eps
// with x_j ~ U(0, 2), e = (0.5, 0.5, 0, ...), and g on a sphere (radius 1
// under normal noise, sqrt(5) under Student t).
struct NcBenchmarkModel {
    int p = 0;
    Noise noise;
    double alpha = 0.0;
    Vector gamma_star;
    Vector eta_star;
};

inline NcBenchmarkModel make_nc_benchmark_model(int p, const Noise& noise, double alpha,
                                                std::uint64_t seed) {
    NcBenchmarkModel m{p, noise, alpha, Vector(p), Vector::Zero(p)};
    m.eta_star(0) = 0.5;
    if (p > 1) m.eta_star(1) = 0.5;
    Rng rng(seed);
    for (int j = 0; j < p; ++j) m.gamma_star(j) = rng.normal();
    const double radius = noise.kind == Noise::Kind::normal ? 1.0 : std::sqrt(5.0);
    m.gamma_star *= radius / m.gamma_star.norm();
    return m;
}

inline TrueCoefficients true_coefficients(const NcBenchmarkModel& m) {
    const QuantileEs qe = dist_quantile_es(m.noise, m.alpha);
    TrueCoefficients t;
    t.q_eps = qe.q;
    t.es_eps = qe.es;
    t.beta_star = Vector::Zero(m.p + 1);
    t.theta_star = Vector::Zero(m.p + 1);
    t.beta_star(0) = t.theta_star(0) = 2.0;
    t.beta_star.tail(m.p) = m.gamma_star + qe.q * m.eta_star;
    t.theta_star.tail(m.p) = m.gamma_star + qe.es * m.eta_star;
    return t;
}

inline Dataset gen_nc_benchmark(const NcBenchmarkModel& m, Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.x = Matrix::Ones(n, m.p + 1);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < m.p; ++j) d.x(i, j + 1) = rng.uniform(0.0, 2.0);
        const double eps = sample_noise(m.noise, rng);
        const auto row = d.x.row(i).tail(m.p);
        d.y(i) = 2.0 + row.dot(m.gamma_star) + row.dot(m.eta_star) * eps;
    }
    return d;
}

// Quantile autoregression y_t = F^{-1}(u_t) + (a0 + a1 u_t) y_{t-1}
//                               + z_{t-1} (b0 + b1 u_t), u_t ~ U(0, 1).
struct QarModel {
    double a0 = 0.5, a1 = 0.5, b0 = 0.95, b1 = 0.5;
    Noise noise;
    int burn_in = 20;

    void validate() const {
        if (!(a0 > 0.0 && a1 >= 0.0 && b1 >= 0.0 && a0 + a1 <= 1.0))
            throw std::invalid_argument("qar model: need a0 > 0, a1, b1 >= 0, a0 + a1 <= 1");
    }
};

struct QarSample {
    Dataset data;            // rows x_t = (1, y_{t-1}, z_{t-1})
    TrueCoefficients truth;  // at the requested level
    int monotonicity_violations = 0;
};

inline double noise_density(const Noise& d, double x) {
    return d.kind == Noise::Kind::normal ? norm_pdf(x) : student_t_pdf(x, d.nu);
}

inline QarSample gen_qar(const QarModel& m, Eigen::Index t_len, double alpha,
                         std::uint64_t seed) {
    m.validate();
    Rng rng(seed);
    QarSample out;
    out.data.x = Matrix::Ones(t_len, 3);
    out.data.y = Vector(t_len);

    double y_prev = 0.0;
    double z_prev = rng.uniform();
    for (Eigen::Index t = 0; t < t_len + m.burn_in; ++t) {
        const double u = rng.uniform();
        const double q = noise_quantile(m.noise, std::min(std::max(u, 1e-12), 1.0 - 1e-12));
        const double y = q + (m.a0 + m.a1 * u) * y_prev + z_prev * (m.b0 + m.b1 * u);
        // The conditional quantile reading of the recursion needs the right
        // side increasing in u; count where the derivative fails.
        const double slope = 1.0 / std::max(noise_density(m.noise, q), 1e-300) +
                             m.a1 * y_prev + m.b1 * z_prev;
        if (t >= m.burn_in) {
            const Eigen::Index i = t - m.burn_in;
            out.data.x(i, 1) = y_prev;
            out.data.x(i, 2) = z_prev;
            out.data.y(i) = y;
            if (slope <= 0.0) ++out.monotonicity_violations;
        }
        y_prev = y;
        z_prev = rng.uniform();
    }

    const QuantileEs qe = dist_quantile_es(m.noise, alpha);
    out.truth.q_eps = qe.q;
    out.truth.es_eps = qe.es;
    out.truth.beta_star = Vector(3);
    out.truth.theta_star = Vector(3);
    out.truth.beta_star << qe.q, m.a0 + m.a1 * alpha, m.b0 + m.b1 * alpha;
    out.truth.theta_star << qe.es, m.a0 + 0.5 * m.a1 * alpha, m.b0 + 0.5 * m.b1 * alpha;
    return out;
}

enum class ModelKind { hetero, qar, nc_benchmark };

struct SimConfig {
    ModelKind kind = ModelKind::hetero;
    Noise noise;
    int p = 20;
    double alpha = 0.1;
    Eigen::Index n = 0;  // 0: use ceil(50 p / alpha)
    int reps = 200;
    double level = 0.95;
    std::vector<EsMethod> methods{EsMethod::ls, EsMethod::huber};
    std::uint64_t seed = 0;
    int threads = 0;  // 0: hardware concurrency
    bool include_intercept_in_error = false;
    bool redraw_coefficients = false;
    std::optional<double> gamma;
    double gamma_scale = 1.0;  // multiplier on the default truncation rule
    std::optional<double> bandwidth;
    SolverControl control{1e-6, 5000, 0};
    QarModel qar;

    Eigen::Index sample_size() const {
        if (n > 0) return n;
        return static_cast<Eigen::Index>(std::ceil(50.0 * p / alpha));
    }
};

struct ReplicationRecord {
    bool failed = false;
    std::string error;
    double rel_error = 0.0;      // slope block unless configured otherwise
    double sq_error_full = 0.0;  // squared l2-error over all coefficients
    std::vector<std::uint8_t> covered;
    std::vector<double> width;
    int crossings = 0;
    double elapsed_sec = 0.0;
};

struct MethodAggregates {
    double rel_error_mean = 0.0, rel_error_se = 0.0;
    double mse_full = 0.0, mse_full_se = 0.0;
    double coverage_mean = 0.0, coverage_se = 0.0;
    double width_mean = 0.0, width_se = 0.0;
    double crossings_mean = 0.0;
    long crossings_total = 0;
    double elapsed_mean = 0.0;
    int failures = 0;
    int successes = 0;
};

struct SimulationReport {
    SimConfig config;
    Eigen::Index n = 0;
    TrueCoefficients truth;  // for redraw_coefficients this is replication 0's
    std::vector<EsMethod> methods;
    std::vector<std::vector<ReplicationRecord>> records;  // [method][rep]
    long qar_monotonicity_violations = 0;
};

namespace detail {

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
    if (v.empty()) return {};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() == 1) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

inline MethodAggregates aggregate(const std::vector<ReplicationRecord>& recs) {
    MethodAggregates agg;
    std::vector<double> rel, mse, cov, wid, elapsed;
    for (const auto& r : recs) {
        if (r.failed) {
            ++agg.failures;
            continue;
        }
        ++agg.successes;
        rel.push_back(r.rel_error);
        mse.push_back(r.sq_error_full);
        if (!r.covered.empty()) {
            double c = 0.0, w = 0.0;
            for (std::size_t j = 0; j < r.covered.size(); ++j) {
                c += r.covered[j] ? 1.0 : 0.0;
                w += r.width[j];
            }
            cov.push_back(c / static_cast<double>(r.covered.size()));
            wid.push_back(w / static_cast<double>(r.width.size()));
        }
        agg.crossings_total += r.crossings;
        elapsed.push_back(r.elapsed_sec);
    }
    const auto rel_ms = detail::mean_se(rel);
    const auto mse_ms = detail::mean_se(mse);
    const auto cov_ms = detail::mean_se(cov);
    const auto wid_ms = detail::mean_se(wid);
    agg.rel_error_mean = rel_ms.mean;
    agg.rel_error_se = rel_ms.se;
    agg.mse_full = mse_ms.mean;
    agg.mse_full_se = mse_ms.se;
    agg.coverage_mean = cov_ms.mean;
    agg.coverage_se = cov_ms.se;
    agg.width_mean = wid_ms.mean;
    agg.width_se = wid_ms.se;
    agg.crossings_mean =
        agg.successes > 0 ? static_cast<double>(agg.crossings_total) / agg.successes : 0.0;
    agg.elapsed_mean = detail::mean_se(elapsed).mean;
    return agg;
}

namespace detail {

inline ReplicationRecord fit_one_method(const Dataset& data, const TrueCoefficients& truth,
                                        const SimConfig& cfg, EsMethod method,
                                        const QuantileFit& qr) {
    ReplicationRecord rec;
    const auto start = std::chrono::steady_clock::now();

    EsFit fit;
    const Vector& beta = method == EsMethod::oracle ? truth.beta_star : qr.beta;
    switch (method) {
        case EsMethod::ls: fit = es_ls_fit(data, beta, cfg.alpha); break;
        case EsMethod::oracle: fit = oracle_es_fit(data, beta, cfg.alpha); break;
        case EsMethod::huber:
            fit = adaptive_huber_es(data, beta, cfg.alpha, cfg.control).fit;
            break;
        case EsMethod::nc_ls: fit = nc_es_ls_fit(data, beta, cfg.alpha); break;
        case EsMethod::nc_huber:
            fit = nc_es_huber_fit(data, beta, cfg.alpha, cfg.control);
            break;
    }

    const auto [eps, omega] = es_residuals(data, beta, fit.theta, cfg.alpha);
    const bool robust = method == EsMethod::huber || method == EsMethod::nc_huber;
    const CovarianceEstimate cov = robust
                                       ? truncated_covariance(data, omega, cfg.gamma,
                                                              cfg.gamma_scale)
                                       : plugin_covariance(data, omega);
    const InferenceResult inf =
        confidence_intervals(fit.theta, cov.sandwich, data.n(), cfg.alpha, cfg.level, cov.gamma);

    const Eigen::Index p_slopes = data.p() - 1;
    const Vector diff = fit.theta - truth.theta_star;
    rec.sq_error_full = diff.squaredNorm();
    if (cfg.include_intercept_in_error)
        rec.rel_error = diff.norm() / truth.theta_star.norm();
    else
        rec.rel_error = diff.tail(p_slopes).norm() / truth.theta_star.tail(p_slopes).norm();

    rec.covered.resize(p_slopes);
    rec.width.resize(p_slopes);
    for (Eigen::Index j = 0; j < p_slopes; ++j) {
        const double t = truth.theta_star(j + 1);
        rec.covered[j] = inf.ci_lower(j + 1) <= t && t <= inf.ci_upper(j + 1);
        rec.width[j] = inf.ci_upper(j + 1) - inf.ci_lower(j + 1);
    }
    rec.crossings = fit.crossings;
    rec.elapsed_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace detail

/// Monte Carlo driver: replication k draws its data from
/// split_seed(seed, k), methods share the first-stage QR fit, and records
/// are reduced in replication order so reports do not depend on scheduling.
inline SimulationReport run_replications(const SimConfig& cfg) {
    SimulationReport report;
    report.config = cfg;
    report.n = cfg.sample_size();
    report.methods = cfg.methods;
    report.records.assign(cfg.methods.size(), std::vector<ReplicationRecord>(cfg.reps));

    const std::uint64_t coef_stream = split_seed(cfg.seed, 0x636F6566ull);
    HeteroModel hetero;
    NcBenchmarkModel ncb;
    if (cfg.kind == ModelKind::hetero)
        hetero = make_hetero_model(cfg.p, cfg.noise, cfg.alpha, coef_stream);
    else if (cfg.kind == ModelKind::nc_benchmark)
        ncb = make_nc_benchmark_model(cfg.p, cfg.noise, cfg.alpha, coef_stream);
    QarModel qar = cfg.qar;
    qar.noise = cfg.noise;

    std::atomic<long> qar_violations{0};
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int rep = next.fetch_add(1);
            if (rep >= cfg.reps) return;
            const std::uint64_t rep_seed = split_seed(cfg.seed, static_cast<std::uint64_t>(rep));

            Dataset data;
            TrueCoefficients truth;
            try {
                if (cfg.kind == ModelKind::hetero) {
                    HeteroModel m = hetero;
                    if (cfg.redraw_coefficients)
                        m = make_hetero_model(cfg.p, cfg.noise, cfg.alpha,
                                              split_seed(rep_seed, 0x636F6566ull));
                    truth = true_coefficients(m);
                    data = gen_hetero(m, report.n, rep_seed);
                } else if (cfg.kind == ModelKind::nc_benchmark) {
                    NcBenchmarkModel m = ncb;
                    if (cfg.redraw_coefficients)
                        m = make_nc_benchmark_model(cfg.p, cfg.noise, cfg.alpha,
                                                    split_seed(rep_seed, 0x636F6566ull));
                    truth = true_coefficients(m);
                    data = gen_nc_benchmark(m, report.n, rep_seed);
                } else {
                    QarSample s = gen_qar(qar, report.n, cfg.alpha, rep_seed);
                    truth = s.truth;
                    data = std::move(s.data);
                    qar_violations += s.monotonicity_violations;
                }

                bool need_qr = false;
                for (EsMethod m : cfg.methods)
                    if (m != EsMethod::oracle) need_qr = true;
                QuantileFit qr;
                if (need_qr)
                    qr = smoothed_qr_fit(data, cfg.alpha, cfg.bandwidth, cfg.control);

                for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
                    try {
                        report.records[mi][rep] =
                            detail::fit_one_method(data, truth, cfg, cfg.methods[mi], qr);
                    } catch (const std::exception& e) {
                        report.records[mi][rep].failed = true;
                        report.records[mi][rep].error = e.what();
                    }
                }
            } catch (const std::exception& e) {
                for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
                    report.records[mi][rep].failed = true;
                    report.records[mi][rep].error = e.what();
                }
            }
            if (rep == 0) report.truth = truth;
        }
    };

    int nthreads = cfg.threads > 0 ? cfg.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, std::min(nthreads, cfg.reps));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    report.qar_monotonicity_violations = qar_violations.load();

    if (!cfg.redraw_coefficients) {
        if (cfg.kind == ModelKind::hetero)
            report.truth = true_coefficients(hetero);
        else if (cfg.kind == ModelKind::nc_benchmark)
            report.truth = true_coefficients(ncb);
    }
    return report;
}

}  // namespace esreg
