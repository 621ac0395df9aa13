#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <optional>
#include <vector>

#include "esreg/linalg.hpp"
#include "esreg/types.hpp"

namespace esreg {

struct EsFit {
    Vector theta;
    double alpha = 0.0;
    EsMethod method = EsMethod::ls;
    std::optional<double> tau;  // huber methods only; +inf marks no truncation
    int crossings = 0;
    FitDiagnostics diagnostics;
};

/// Number of observations whose fitted ES exceeds the fitted quantile.
inline int count_crossings(const Dataset& data, const Vector& beta, const Vector& theta) {
    const Vector diff = data.x * (theta - beta);
    return static_cast<int>((diff.array() > 1e-10).count());
}

/// Generated responses Z_i = (y_i - x_i'b) 1(y_i <= x_i'b) + alpha x_i'b.
/// Ties y_i = x_i'b are kept in the indicator.
inline Vector generate_response(const Dataset& data, const Vector& beta, double alpha) {
    const Vector fitted = data.x * beta;
    Vector z(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double r = data.y(i) - fitted(i);
        z(i) = (r <= 0.0 ? r : 0.0) + alpha * fitted(i);
    }
    return z;
}

/// Second-stage least-squares ES fit. Evaluates the closed form
/// theta = beta + (sum x x')^{-1} (1/alpha) sum (y - x'b) x 1(y <= x'b)
/// and cross-checks it against the regression of Z/alpha on x.
inline EsFit es_ls_fit(const Dataset& data, const Vector& beta, double alpha) {
    const auto n = data.n();
    Vector score = Vector::Zero(data.p());
    const Vector fitted = data.x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = data.y(i) - fitted(i);
        if (r <= 0.0) score += r * data.x.row(i).transpose();
    }
    Vector theta;
    try {
        const Cholesky xtx(data.x.transpose() * data.x);
        theta = beta + xtx.solve(Vector(score / alpha));
#ifndef NDEBUG
        const Vector z = generate_response(data, beta, alpha);
        const Vector theta_reg = xtx.solve(Vector(data.x.transpose() * z / alpha));
        assert((theta - theta_reg).lpNorm<Eigen::Infinity>() <=
               1e-8 * (1.0 + theta_reg.lpNorm<Eigen::Infinity>()));
#endif
    } catch (const NotPositiveDefinite&) {
        throw DegenerateDesign("es_ls_fit: rank-deficient design");
    }

    EsFit fit;
    fit.alpha = alpha;
    fit.method = EsMethod::ls;
    fit.crossings = count_crossings(data, beta, theta);
    fit.theta = std::move(theta);
    fit.diagnostics.converged = true;
    fit.diagnostics.iterations = 0;
    return fit;
}

/// Sample alpha-quantile inf{y : Fhat(y) >= alpha}.
inline double sample_quantile(const Vector& y, double alpha) {
    std::vector<double> s(y.data(), y.data() + y.size());
    const auto n = s.size();
    const auto k = static_cast<std::size_t>(
        std::max<long>(0, static_cast<long>(std::ceil(alpha * static_cast<double>(n))) - 1));
    std::nth_element(s.begin(), s.begin() + k, s.end());
    return s[k];
}

/// Univariate ES estimate
/// (1/(alpha n)) sum y_i 1(y_i <= Qhat) + Qhat {1 - Fhat(Qhat)/alpha}.
inline double univariate_es(const Vector& y, double alpha) {
    if (y.size() < 1) throw std::invalid_argument("univariate_es: empty sample");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("univariate_es: alpha must lie in (0,1)");
    const double q = sample_quantile(y, alpha);
    const double n = static_cast<double>(y.size());
    double tail_sum = 0.0;
    double tail_count = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) <= q) {
            tail_sum += y(i);
            tail_count += 1.0;
        }
    }
    const double f_at_q = tail_count / n;
    return tail_sum / (alpha * n) + q * (1.0 - f_at_q / alpha);
}

/// Oracle ES estimator: least squares of y on x over {y_i <= x_i' beta_star}.
/// A simulation benchmark; beta_star is the true quantile coefficient.
inline EsFit oracle_es_fit(const Dataset& data, const Vector& beta_star, double alpha) {
    const Vector fitted = data.x * beta_star;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        if (data.y(i) <= fitted(i)) idx.push_back(i);
    if (static_cast<Eigen::Index>(idx.size()) < data.p())
        throw DegenerateDesign("oracle_es_fit: fewer selected rows than parameters");

    Matrix xs(idx.size(), data.p());
    Vector ys(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        xs.row(k) = data.x.row(idx[k]);
        ys(k) = data.y(idx[k]);
    }
    Vector theta;
    try {
        theta = Cholesky(xs.transpose() * xs).solve(Vector(xs.transpose() * ys));
    } catch (const NotPositiveDefinite&) {
        throw DegenerateDesign("oracle_es_fit: selected subsample rank-deficient");
    }

    EsFit fit;
    fit.alpha = alpha;
    fit.method = EsMethod::oracle;
    fit.crossings = count_crossings(data, beta_star, theta);
    fit.theta = std::move(theta);
    fit.diagnostics.converged = true;
    return fit;
}

}  // namespace esreg
