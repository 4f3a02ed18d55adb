#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdebridge/errors.hpp"
#include "sdebridge/gaussian.hpp"
#include "sdebridge/random.hpp"

namespace sdebridge {

/// Equidistant partition of [0, T] into m intervals. Node times are computed
/// as k*T/m (never by cumulative addition) and the last node is pinned to T.
struct TimeGrid {
    double T = 1.0;
    int m = 1;

    TimeGrid() = default;
    TimeGrid(double T_, int m_) : T(T_), m(m_) {
        if (!(T > 0.0) || m < 1) throw Error("TimeGrid: need T > 0 and m >= 1");
    }

    double dtau() const { return T / m; }
    double time(int k) const { return k == m ? T : k * T / m; }
    /// Delta_k = T - tau_k.
    double remaining(int k) const { return T - time(k); }
    int nodes() const { return m + 1; }
};

/// Discrete-time state trajectory on a grid: states[k] lives at grid.time(k).
struct SkeletonPath {
    TimeGrid grid;
    std::vector<VectorXd> states;
};

using DriftFn = std::function<void(const VectorXd& x, const VectorXd& theta, VectorXd& out)>;
using DiffusionFn = std::function<void(const VectorXd& x, const VectorXd& theta, MatrixXd& out)>;
using JacobianFn = DiffusionFn;
using AdmissibleFn = std::function<bool(const VectorXd& x)>;

/// Analytic solution of the LNA ODE system from origin (x0 at lag 0):
/// eta(dt), fundamental matrix P(dt) with P(0)=I, scaled covariance psi(dt)
/// with psi(0)=0.
struct ClosedFormLna {
    std::function<void(const VectorXd& x0, double dt, const VectorXd& theta, VectorXd& eta,
                       MatrixXd& P, MatrixXd& psi)>
        eval;
};

/// A d-dimensional Ito diffusion dX = alpha(X) dt + sqrt(beta(X)) dW with a
/// fixed parameter vector. Callbacks write into caller-owned buffers so the
/// integrators can run allocation-free; the by-value accessors below are for
/// convenience. Immutable after construction and safe to share across threads.
struct DiffusionModel {
    std::string name;
    int d = 1;
    VectorXd theta;
    DriftFn drift_fn;
    DiffusionFn diffusion_fn;
    JacobianFn jacobian_fn;
    AdmissibleFn admissible_fn;  // empty means every state is admissible
    std::optional<ClosedFormLna> lna_closed_form;

    void drift_into(const VectorXd& x, VectorXd& out) const { drift_fn(x, theta, out); }
    void diffusion_into(const VectorXd& x, MatrixXd& out) const { diffusion_fn(x, theta, out); }
    void jacobian_into(const VectorXd& x, MatrixXd& out) const { jacobian_fn(x, theta, out); }

    VectorXd drift(const VectorXd& x) const {
        VectorXd out(d);
        drift_fn(x, theta, out);
        return out;
    }
    MatrixXd diffusion(const VectorXd& x) const {
        MatrixXd out(d, d);
        diffusion_fn(x, theta, out);
        return out;
    }
    MatrixXd jacobian(const VectorXd& x) const {
        MatrixXd out(d, d);
        jacobian_fn(x, theta, out);
        return out;
    }
    bool admissible(const VectorXd& x) const { return !admissible_fn || admissible_fn(x); }
};

enum class Regime { Exact, Noisy };

/// Terminal observation Y_T = F' X_T + eps, eps ~ N(0, Sigma). The Exact
/// regime (x_T known) is the degenerate case F = I, Sigma = 0; a Noisy model
/// with Sigma identically zero is rejected, use exact() instead.
struct ObservationModel {
    Regime regime = Regime::Exact;
    int d_o = 0;
    MatrixXd F;      // d x d_o
    MatrixXd Sigma;  // d_o x d_o

    static ObservationModel exact(int d) {
        ObservationModel out;
        out.regime = Regime::Exact;
        out.d_o = d;
        out.F = MatrixXd::Identity(d, d);
        out.Sigma = MatrixXd::Zero(d, d);
        return out;
    }

    static ObservationModel noisy(MatrixXd F, MatrixXd Sigma) {
        ObservationModel out;
        out.regime = Regime::Noisy;
        out.d_o = static_cast<int>(F.cols());
        if (F.rows() < F.cols()) throw Error("ObservationModel: need d_o <= d");
        if (Sigma.rows() != out.d_o || Sigma.cols() != out.d_o)
            throw Error("ObservationModel: Sigma must be d_o x d_o");
        double scale = std::max(1.0, Sigma.cwiseAbs().maxCoeff());
        if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw Error("ObservationModel: Sigma must be symmetric");
        if (Sigma.cwiseAbs().maxCoeff() == 0.0)
            throw Error("ObservationModel: Sigma is identically zero; use the Exact regime");
        cholesky_lower(Sigma);  // PSD check
        out.F = std::move(F);
        out.Sigma = std::move(Sigma);
        return out;
    }

    int d() const { return static_cast<int>(F.rows()); }
};

/// One Euler-Maruyama update x + alpha(x) dtau + sqrt(beta(x)) sqrt(dtau) z.
/// Admissibility of the result is the caller's policy (rejection or retry).
inline VectorXd em_step(const DiffusionModel& model, const VectorXd& x, double dtau,
                        const VectorXd& z) {
    const MatrixXd L = cholesky_lower(model.diffusion(x));
    return x + model.drift(x) * dtau + std::sqrt(dtau) * (L * z);
}

/// Unconditioned forward simulation on a grid. Steps landing outside the
/// admissible region are redrawn up to `retry_budget` times, after which the
/// step index is reported.
inline SkeletonPath simulate_forward(const DiffusionModel& model, const VectorXd& x0,
                                     const TimeGrid& grid, std::uint64_t seed,
                                     int retry_budget = 100) {
    if (!model.admissible(x0)) throw InadmissibleState("simulate_forward: x0 inadmissible");
    Rng rng(seed);
    SkeletonPath path;
    path.grid = grid;
    path.states.reserve(grid.nodes());
    path.states.push_back(x0);
    VectorXd z(model.d);
    const double dtau = grid.dtau();
    for (int k = 0; k < grid.m; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt <= retry_budget; ++attempt) {
            rng.fill_normal(z);
            VectorXd next = em_step(model, path.states.back(), dtau, z);
            if (model.admissible(next)) {
                path.states.push_back(std::move(next));
                placed = true;
                break;
            }
        }
        if (!placed)
            throw InadmissibleState("simulate_forward: retry budget exhausted at step " +
                                    std::to_string(k));
    }
    return path;
}

/// Log density of the discretised target. Noisy regime: Euler transition
/// terms plus log N(y; F'x_T, Sigma). Exact regime: transition terms with the
/// final state fixed at x_T (unnormalised; constants cancel in MH ratios).
inline double log_target_density(const SkeletonPath& path, const DiffusionModel& model,
                                 const ObservationModel& obs, const VectorXd& y) {
    if (static_cast<int>(path.states.size()) != path.grid.nodes())
        throw Error("log_target_density: path/grid mismatch");
    const double dtau = path.grid.dtau();
    double lt = 0.0;
    for (int k = 0; k < path.grid.m; ++k) {
        const VectorXd& x = path.states[k];
        lt += gaussian_logpdf(path.states[k + 1], x + model.drift(x) * dtau,
                              model.diffusion(x) * dtau);
    }
    if (obs.regime == Regime::Noisy)
        lt += gaussian_logpdf(y, obs.F.transpose() * path.states.back(), obs.Sigma);
    return lt;
}

}  // namespace sdebridge
