#pragma once

#include <cmath>
#include <limits>

#include "esreg/types.hpp"

namespace esreg {

/// Sample second-moment matrix (1/n) x^T x.
inline Matrix gram(const Matrix& x) {
    Matrix g = Matrix::Zero(x.cols(), x.cols());
    g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(x.rows()));
    return g.selfadjointView<Eigen::Lower>();
}

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
// A pivot at or below p * eps * max|diag| is treated as rank deficiency.
class Cholesky {
  public:
    explicit Cholesky(const Matrix& a) : l_(a.rows(), a.cols()) {
        const Eigen::Index p = a.rows();
        const double thresh = static_cast<double>(p) *
                              std::numeric_limits<double>::epsilon() *
                              std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        l_.setZero();
        for (Eigen::Index j = 0; j < p; ++j) {
            double d = a(j, j) - l_.row(j).head(j).squaredNorm();
            if (!(d > thresh))
                throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) +
                                          " not positive definite");
            l_(j, j) = std::sqrt(d);
            for (Eigen::Index i = j + 1; i < p; ++i) {
                double s = a(i, j) - l_.row(i).head(j).dot(l_.row(j).head(j));
                l_(i, j) = s / l_(j, j);
            }
        }
    }

    template <class Rhs>
    auto solve(const Rhs& b) const {
        auto z = l_.triangularView<Eigen::Lower>().solve(b).eval();
        return l_.transpose().triangularView<Eigen::Upper>().solve(z).eval();
    }

    Matrix inverse() const { return solve(Matrix(Matrix::Identity(l_.rows(), l_.cols()))); }

    const Matrix& factor() const { return l_; }

  private:
    Matrix l_;
};

/// Solve a x = b for symmetric positive-definite a.
inline Vector cholesky_solve(const Matrix& a, const Vector& b) { return Cholesky(a).solve(b); }
inline Matrix cholesky_solve(const Matrix& a, const Matrix& b) { return Cholesky(a).solve(b); }

}  // namespace esreg
