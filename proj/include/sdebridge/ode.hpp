#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sdebridge/errors.hpp"

namespace sdebridge {

/// Substep count so that (t1 - t0)/n <= max_step.
inline int substeps_for(double length, double max_step) {
    if (!(length > 0.0)) return 0;
    return std::max(1, static_cast<int>(std::ceil(length / max_step - 1e-12)));
}

/// Classical fixed-step RK4. Integrates dy/dt = rhs(t, y) from (t0, y0) and
/// returns the solution at each requested time (times must be nondecreasing,
/// times.front() >= t0). Each span between consecutive output times is split
/// into equal substeps no longer than max_step. State must support Eigen-style
/// arithmetic and allFinite().
template <typename State, typename Rhs>
std::vector<State> solve_ode(Rhs&& rhs, double t0, const State& y0, std::span<const double> times,
                             double max_step = 0.01) {
    std::vector<State> out;
    out.reserve(times.size());
    State y = y0;
    double t = t0;
    for (double target : times) {
        if (target < t - 1e-12 * std::max(1.0, std::abs(t)))
            throw Error("solve_ode: output times must be nondecreasing");
        const int n = substeps_for(target - t, max_step);
        const double h = n > 0 ? (target - t) / n : 0.0;
        for (int i = 0; i < n; ++i) {
            const double ti = t + i * h;
            State k1 = rhs(ti, y);
            State k2 = rhs(ti + 0.5 * h, State(y + (0.5 * h) * k1));
            State k3 = rhs(ti + 0.5 * h, State(y + (0.5 * h) * k2));
            State k4 = rhs(ti + h, State(y + h * k3));
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!y.allFinite())
                throw NonFiniteState("solve_ode: non-finite state at t = " +
                                     std::to_string(ti + h));
        }
        t = target;
        out.push_back(y);
    }
    return out;
}

}  // namespace sdebridge
