#pragma once

#include <utility>

#include "esreg/types.hpp"

namespace esreg::detail {

struct BbOptions {
    double step_max = 100.0;
    int max_halvings = 50;
};

// Barzilai–Borwein gradient descent with a monotone safeguard: each BB step
// is halved until the objective does not increase. Stops when the gradient
// l2-norm falls at or below control.tol.
template <class Objective, class Gradient>
std::pair<Vector, FitDiagnostics> bb_minimize(Vector x, Objective&& obj, Gradient&& grad,
                                              const SolverControl& control,
                                              const BbOptions& opts = {}) {
    FitDiagnostics diag;
    Vector g = grad(x);
    double f = obj(x);
    double gnorm = g.norm();
    Vector x_prev = x, g_prev = g;
    bool have_prev = false;

    int it = 0;
    for (; it < control.max_iter && gnorm > control.tol; ++it) {
        double step = 1.0;
        if (have_prev) {
            const Vector s = x - x_prev;
            const Vector yv = g - g_prev;
            const double sy = s.dot(yv);
            if (sy > 0.0) {
                const double a1 = sy / yv.squaredNorm();
                const double a2 = s.squaredNorm() / sy;
                step = std::min(std::min(a1, a2), opts.step_max);
            }
        } else {
            step = 1.0 / std::max(1.0, gnorm);
        }

        Vector x_try = x - step * g;
        double f_try = obj(x_try);
        int halvings = 0;
        while (f_try > f && halvings < opts.max_halvings) {
            step *= 0.5;
            x_try = x - step * g;
            f_try = obj(x_try);
            ++halvings;
        }
        if (f_try > f) break;  // stalled: step underflowed without progress

        x_prev = x;
        g_prev = g;
        x = std::move(x_try);
        f = f_try;
        g = grad(x);
        gnorm = g.norm();
        have_prev = true;
    }

    diag.iterations = it;
    diag.final_gradient_norm = gnorm;
    diag.converged = gnorm <= control.tol;
    diag.objective = f;
    return {std::move(x), diag};
}

}  // namespace esreg::detail
