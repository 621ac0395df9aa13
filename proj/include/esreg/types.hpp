#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace esreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Hard failures. Convergence problems are reported through FitDiagnostics
// flags instead; only structurally broken inputs throw.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotPositiveDefinite : SolverError {
    using SolverError::SolverError;
};
struct DegenerateDesign : SolverError {
    using SolverError::SolverError;
};
struct NoSolution : SolverError {
    using SolverError::SolverError;
};
struct Infeasible : SolverError {
    using SolverError::SolverError;
};
struct ZeroVariance : SolverError {
    using SolverError::SolverError;
};
struct BadDegrees : SolverError {
    using SolverError::SolverError;
};

/// Observations (y, x). Column 0 of x is the constant intercept column.
struct Dataset {
    Matrix x;
    Vector y;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index p() const { return x.cols(); }

    void validate() const {
        if (x.rows() != y.size())
            throw std::invalid_argument("dataset: x rows and y length differ");
        if (x.cols() < 1 || x.rows() < x.cols())
            throw std::invalid_argument("dataset: need n >= p >= 1");
        if (!x.allFinite() || !y.allFinite())
            throw std::invalid_argument("dataset: non-finite entries");
        if ((x.col(0).array() != 1.0).any())
            throw std::invalid_argument("dataset: column 0 must be the intercept");
    }
};

struct SolverControl {
    double tol = 1e-6;        // stopping threshold on the gradient/score norm
    int max_iter = 5000;
    std::uint64_t seed = 0;
};

struct FitDiagnostics {
    int iterations = 0;
    bool converged = false;
    double final_gradient_norm = 0.0;
    double objective = 0.0;
};

enum class EsMethod { ls, huber, nc_ls, nc_huber, oracle };

inline std::string to_string(EsMethod m) {
    switch (m) {
        case EsMethod::ls: return "ls";
        case EsMethod::huber: return "huber";
        case EsMethod::nc_ls: return "nc-ls";
        case EsMethod::nc_huber: return "nc-huber";
        case EsMethod::oracle: return "oracle";
    }
    return "?";
}

inline std::optional<EsMethod> parse_method(const std::string& s) {
    if (s == "ls") return EsMethod::ls;
    if (s == "huber") return EsMethod::huber;
    if (s == "nc-ls" || s == "nc_ls") return EsMethod::nc_ls;
    if (s == "nc-huber" || s == "nc_huber") return EsMethod::nc_huber;
    if (s == "oracle") return EsMethod::oracle;
    return std::nullopt;
}

}  // namespace esreg
