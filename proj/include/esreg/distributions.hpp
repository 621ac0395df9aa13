#pragma once

#include <cmath>
#include <stdexcept>

#include "esreg/normal.hpp"
#include "esreg/rng.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// Noise law for the simulation models: standard normal or Student t with
/// nu > 2 degrees of freedom (finite variance).
struct Noise {
    enum class Kind { normal, student_t } kind = Kind::normal;
    double nu = 0.0;

    static Noise normal() { return {Kind::normal, 0.0}; }
    static Noise student_t(double nu) { return {Kind::student_t, nu}; }
};

namespace detail {

// Regularized incomplete beta I_x(a,b) by Lentz's continued fraction.
inline double beta_cont_frac(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h;
}

inline double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cont_frac(a, b, x) / a;
    return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double student_t_pdf(double t, double nu) {
    const double lc = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                      0.5 * std::log(nu * M_PI);
    return std::exp(lc - 0.5 * (nu + 1.0) * std::log1p(t * t / nu));
}

inline double student_t_cdf(double t, double nu) {
    const double x = nu / (nu + t * t);
    const double tail = 0.5 * detail::inc_beta(0.5 * nu, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

// Bisection bracket plus Newton polish on the CDF.
inline double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("student_t_quantile: p must lie in (0,1)");
    double lo = -1.0, hi = 1.0;
    while (student_t_cdf(lo, nu) > p) lo *= 2.0;
    while (student_t_cdf(hi, nu) < p) hi *= 2.0;
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = student_t_cdf(t, nu) - p;
        if (f > 0.0)
            hi = t;
        else
            lo = t;
        const double dens = student_t_pdf(t, nu);
        double next = (dens > 1e-300) ? t - f / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - t) <= 1e-14 * (1.0 + std::fabs(t))) return next;
        t = next;
    }
    return t;
}

inline double noise_quantile(const Noise& d, double p) {
    return d.kind == Noise::Kind::normal ? norm_quantile(p) : student_t_quantile(p, d.nu);
}

struct QuantileEs {
    double q;
    double es;
};

/// alpha-quantile and alpha-level expected shortfall of the noise law.
/// ES uses the closed forms: normal -phi(q)/alpha, Student t
/// -f(q)(nu+q^2)/((nu-1) alpha); both equal (1/alpha) int_0^alpha Q_u du.
inline QuantileEs dist_quantile_es(const Noise& d, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("dist_quantile_es: alpha must lie in (0,1)");
    if (d.kind == Noise::Kind::normal) {
        const double q = norm_quantile(alpha);
        return {q, -norm_pdf(q) / alpha};
    }
    if (!(d.nu > 2.0)) throw BadDegrees("dist_quantile_es: Student t needs nu > 2");
    const double q = student_t_quantile(alpha, d.nu);
    const double es = -student_t_pdf(q, d.nu) * (d.nu + q * q) / ((d.nu - 1.0) * alpha);
    return {q, es};
}

inline double sample_noise(const Noise& d, Rng& rng) {
    return d.kind == Noise::Kind::normal ? rng.normal() : rng.student_t(d.nu);
}

}  // namespace esreg
