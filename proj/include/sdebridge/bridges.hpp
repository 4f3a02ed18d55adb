#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdebridge/errors.hpp"
#include "sdebridge/gaussian.hpp"
#include "sdebridge/lna.hpp"
#include "sdebridge/random.hpp"
#include "sdebridge/sde.hpp"

namespace sdebridge {

enum class BridgeFamily { Em, Mdb, Lb, Rb, RbMinus, Gp, GpN, GpS, GpMdb };

/// How the guided-proposal LNA quantities are obtained: one solve over [0, T]
/// propagated by the identities, or a fresh solve of [tau_k, T] started at
/// the current state for every step.
enum class GpMode { IntegrateOnce, IntegratePerInterval };

struct BridgeKind {
    BridgeFamily family = BridgeFamily::Em;
    double gamma = 0.0;                // Lindstrom bias weight, > 0
    std::optional<GpMode> gp_mode;     // overrides the context default

    static BridgeKind em() { return {BridgeFamily::Em}; }
    static BridgeKind mdb() { return {BridgeFamily::Mdb}; }
    static BridgeKind lb(double gamma) { return {BridgeFamily::Lb, gamma}; }
    static BridgeKind rb() { return {BridgeFamily::Rb}; }
    static BridgeKind rbminus() { return {BridgeFamily::RbMinus}; }
    static BridgeKind gp(std::optional<GpMode> mode = {}) { return {BridgeFamily::Gp, 0.0, mode}; }
    static BridgeKind gpn() { return {BridgeFamily::GpN}; }
    static BridgeKind gps() { return {BridgeFamily::GpS}; }
    static BridgeKind gpmdb(std::optional<GpMode> mode = {}) {
        return {BridgeFamily::GpMdb, 0.0, mode};
    }

    std::string name() const {
        switch (family) {
            case BridgeFamily::Em: return "em";
            case BridgeFamily::Mdb: return "mdb";
            case BridgeFamily::Lb: return "lb";
            case BridgeFamily::Rb: return "rb";
            case BridgeFamily::RbMinus: return "rbminus";
            case BridgeFamily::Gp: return "gp";
            case BridgeFamily::GpN: return "gpn";
            case BridgeFamily::GpS: return "gps";
            case BridgeFamily::GpMdb: return "gpmdb";
        }
        return "?";
    }
};

inline void validate_kind(const BridgeKind& kind, Regime regime) {
    if (kind.family == BridgeFamily::Lb && !(kind.gamma > 0.0))
        throw Error("lb requires gamma > 0");
    if (kind.family == BridgeFamily::GpS && regime == Regime::Noisy)
        throw Error("gps is only defined in the exact observation regime");
}

inline GpMode default_gp_mode(Regime regime) {
    return regime == Regime::Exact ? GpMode::IntegratePerInterval : GpMode::IntegrateOnce;
}

/// Everything a construct needs to turn (k, x) into a proposal step:
/// the model, the observation regime, the conditioning value (x_T or y_T),
/// and the precomputed deterministic tracks. Immutable and shareable; one
/// context serves every construct it was built for.
struct BridgeContext {
    DiffusionModel model;
    ObservationModel obs;
    TimeGrid grid;
    VectorXd x0;
    VectorXd target;  // x_T in the exact regime, y_T in the noisy regime

    std::optional<LnaSolution> lna;
    std::optional<RhoHatTrack> rho;
    std::vector<VectorXd> chord_eta;  // (eta_{k+1} - eta_k)/dtau, length m
    std::vector<VectorXd> chord_rho;  // (rho_{k+1} - rho_k)/dtau, length m
    std::vector<MatrixXd> once_P;     // P_{T|tau_k} via the identities
    std::vector<MatrixXd> once_psi;   // psi_{T|tau_k} via the identities
    std::optional<MatrixXd> beta_target_chol;  // chol(beta(x_T)), exact regime

    GpMode gp_mode = GpMode::IntegratePerInterval;
    double ode_max_step = 0.01;

    GpMode resolved_gp_mode(const BridgeKind& kind) const {
        return kind.gp_mode ? *kind.gp_mode : gp_mode;
    }
};

struct BridgeContextOptions {
    std::optional<GpMode> gp_mode;
    double ode_max_step = 0.01;
};

namespace detail {

inline bool kind_needs_lna(const BridgeKind& kind, GpMode resolved) {
    switch (kind.family) {
        case BridgeFamily::Rb:
        case BridgeFamily::RbMinus:
        case BridgeFamily::GpN:
        case BridgeFamily::GpS: return true;
        case BridgeFamily::Gp:
        case BridgeFamily::GpMdb: return resolved == GpMode::IntegrateOnce;
        default: return false;
    }
}

inline bool kind_needs_once_tables(const BridgeKind& kind, GpMode resolved) {
    switch (kind.family) {
        case BridgeFamily::GpN: return true;
        case BridgeFamily::Gp:
        case BridgeFamily::GpMdb: return resolved == GpMode::IntegrateOnce;
        default: return false;
    }
}

}  // namespace detail

inline BridgeContext make_bridge_context(DiffusionModel model, ObservationModel obs,
                                         TimeGrid grid, VectorXd x0, VectorXd target,
                                         std::span<const BridgeKind> kinds,
                                         BridgeContextOptions opts = {}) {
    if (obs.d() != model.d) throw Error("make_bridge_context: observation/model dimension");
    if (!model.admissible(x0)) throw InadmissibleState("make_bridge_context: x0 inadmissible");
    const int want = obs.regime == Regime::Exact ? model.d : obs.d_o;
    if (target.size() != want)
        throw Error("make_bridge_context: conditioning value has wrong length");

    BridgeContext ctx;
    ctx.model = std::move(model);
    ctx.obs = std::move(obs);
    ctx.grid = grid;
    ctx.x0 = std::move(x0);
    ctx.target = std::move(target);
    ctx.gp_mode = opts.gp_mode ? *opts.gp_mode : default_gp_mode(ctx.obs.regime);
    ctx.ode_max_step = opts.ode_max_step;

    bool need_lna = false, need_rho = false, need_once = false, need_gps = false;
    for (const BridgeKind& kind : kinds) {
        validate_kind(kind, ctx.obs.regime);
        const GpMode mode = ctx.resolved_gp_mode(kind);
        need_lna |= detail::kind_needs_lna(kind, mode);
        need_once |= detail::kind_needs_once_tables(kind, mode);
        need_rho |= kind.family == BridgeFamily::RbMinus;
        need_gps |= kind.family == BridgeFamily::GpS;
    }

    if (need_lna) {
        ctx.lna = solve_lna(ctx.model, ctx.x0, grid, ctx.ode_max_step);
        const double dtau = grid.dtau();
        ctx.chord_eta.reserve(grid.m);
        for (int k = 0; k < grid.m; ++k)
            ctx.chord_eta.push_back((ctx.lna->eta[k + 1] - ctx.lna->eta[k]) / dtau);
    }
    if (need_rho) {
        VectorXd y = ctx.target;
        ctx.rho = rho_hat(*ctx.lna, ctx.obs, y);
        const double dtau = grid.dtau();
        ctx.chord_rho.reserve(grid.m);
        for (int k = 0; k < grid.m; ++k)
            ctx.chord_rho.push_back((ctx.rho->rho[k + 1] - ctx.rho->rho[k]) / dtau);
    }
    if (need_once) {
        ctx.once_P.reserve(grid.m);
        ctx.once_psi.reserve(grid.m);
        for (int k = 0; k < grid.m; ++k) {
            LnaTransition tt = lna_transition_terms(*ctx.lna, k);
            ctx.once_P.push_back(std::move(tt.P));
            ctx.once_psi.push_back(std::move(tt.psi));
        }
    }
    if (need_gps) ctx.beta_target_chol = cholesky_lower(ctx.model.diffusion(ctx.target));
    return ctx;
}

/// Reusable buffers for the per-interval guided-proposal integrations; one per
/// chain keeps the hot loop allocation-free.
struct GpWorkspace {
    LnaIntegrator integ;
    explicit GpWorkspace(const DiffusionModel& model, double max_step = 0.01)
        : integ(model, max_step) {}
};

namespace detail {

inline GaussianStep collapse_to(const VectorXd& x_T, int d) {
    return {x_T, MatrixXd::Zero(d, d)};
}

/// Shared conditioning core of the MDB-type constructs in the noisy regime:
///   S    = F' beta F * delta_s + Sigma
///   mean = x + alpha dtau + beta F S^{-1} v dtau
///   cov  = (beta - beta F S^{-1} F' beta dtau) dtau
/// where v is the construct's innovation and delta_s its predictive horizon.
inline GaussianStep mdb_family_noisy(const VectorXd& x, const VectorXd& alpha,
                                     const MatrixXd& beta, const ObservationModel& obs,
                                     double dtau, double delta_s, const VectorXd& v) {
    const MatrixXd B = beta * obs.F;  // d x d_o
    const MatrixXd S = symmetrized(obs.F.transpose() * B * delta_s + obs.Sigma);
    MatrixXd L;
    try {
        L = cholesky_lower(S);
    } catch (const NotPositiveDefinite&) {
        throw SingularObservationBlock("bridge step: predictive observation block singular");
    }
    if (!strictly_positive_diagonal(L))
        throw SingularObservationBlock("bridge step: predictive observation block singular");
    VectorXd w = v;
    chol_solve_in_place(L, w);
    MatrixXd M = B.transpose();
    chol_solve_in_place(L, M);  // S^{-1} F' beta
    GaussianStep out;
    out.mean = x + alpha * dtau + (B * w) * dtau;
    out.cov = symmetrized(beta - B * M * dtau) * dtau;
    return out;
}

}  // namespace detail

/// Myopic proposal: the unconditioned Euler-Maruyama transition.
inline GaussianStep em_step_proposal(const BridgeContext& ctx, int k, const VectorXd& x) {
    (void)k;
    const double dtau = ctx.grid.dtau();
    return {x + ctx.model.drift(x) * dtau, symmetrized(ctx.model.diffusion(x)) * dtau};
}

/// Modified diffusion bridge: condition the joint Gaussian approximation of
/// (X_{k+1}, Y_T) on the observation. With x_T known this reduces to the
/// linear pull (x_T - x)/(T - tau_k) with the (T - tau_{k+1})/(T - tau_k)
/// variance multiplier.
inline GaussianStep mdb_step(const BridgeContext& ctx, int k, const VectorXd& x) {
    const double dtau = ctx.grid.dtau();
    const double delta_k = ctx.grid.remaining(k);
    if (ctx.obs.regime == Regime::Exact) {
        if (k == ctx.grid.m - 1) return detail::collapse_to(ctx.target, ctx.model.d);
        const double mult = ctx.grid.remaining(k + 1) / delta_k;
        GaussianStep out;
        out.mean = x + ((ctx.target - x) / delta_k) * dtau;
        out.cov = symmetrized(ctx.model.diffusion(x)) * (mult * dtau);
        return out;
    }
    const VectorXd alpha = ctx.model.drift(x);
    const MatrixXd beta = ctx.model.diffusion(x);
    const VectorXd v = ctx.target - ctx.obs.F.transpose() * (x + alpha * delta_k);
    return detail::mdb_family_noisy(x, alpha, beta, ctx.obs, dtau, delta_k, v);
}

/// Lindstrom bridge: MDB with the predictive variance inflated by the squared
/// one-step bias, gamma beta (T - tau_{k+1})^2 / dtau. gamma -> 0 recovers the
/// MDB, gamma -> infinity the myopic sampler.
inline GaussianStep lb_step(const BridgeContext& ctx, int k, const VectorXd& x, double gamma) {
    if (!(gamma > 0.0)) throw Error("lb_step: gamma must be > 0");
    const double dtau = ctx.grid.dtau();
    const double delta_k = ctx.grid.remaining(k);
    const double delta_k1 = ctx.grid.remaining(k + 1);
    if (ctx.obs.regime == Regime::Exact) {
        if (k == ctx.grid.m - 1) return detail::collapse_to(ctx.target, ctx.model.d);
        // Convex combination of the MDB and myopic moments.
        const double w = (dtau * delta_k) / (dtau * delta_k + gamma * delta_k1 * delta_k1);
        const VectorXd mu = w * ((ctx.target - x) / delta_k) + (1.0 - w) * ctx.model.drift(x);
        const double cov_scale = w * (delta_k1 / delta_k) + (1.0 - w);
        GaussianStep out;
        out.mean = x + mu * dtau;
        out.cov = symmetrized(ctx.model.diffusion(x)) * (cov_scale * dtau);
        return out;
    }
    const double delta_gamma = delta_k + gamma * delta_k1 * delta_k1 / dtau;
    const VectorXd alpha = ctx.model.drift(x);
    const MatrixXd beta = ctx.model.diffusion(x);
    const VectorXd v = ctx.target - ctx.obs.F.transpose() * (x + alpha * delta_k);
    return detail::mdb_family_noisy(x, alpha, beta, ctx.obs, dtau, delta_gamma, v);
}

/// Residual bridge: MDB applied to the residual against the drift ODE
/// solution eta, using the chord of eta across each interval.
inline GaussianStep rb_step(const BridgeContext& ctx, int k, const VectorXd& x) {
    if (!ctx.lna || ctx.chord_eta.empty()) throw Error("rb_step: context lacks the eta track");
    const double dtau = ctx.grid.dtau();
    const double delta_k = ctx.grid.remaining(k);
    const LnaSolution& lna = *ctx.lna;
    const int m = ctx.grid.m;
    if (ctx.obs.regime == Regime::Exact) {
        if (k == m - 1) return detail::collapse_to(ctx.target, ctx.model.d);
        const double mult = ctx.grid.remaining(k + 1) / delta_k;
        const VectorXd mu =
            ctx.chord_eta[k] + ((ctx.target - x) - (lna.eta[m] - lna.eta[k])) / delta_k;
        GaussianStep out;
        out.mean = x + mu * dtau;
        out.cov = symmetrized(ctx.model.diffusion(x)) * (mult * dtau);
        return out;
    }
    const VectorXd alpha = ctx.model.drift(x);
    const MatrixXd beta = ctx.model.diffusion(x);
    const VectorXd r = x - lna.eta[k];
    const VectorXd v =
        ctx.target -
        ctx.obs.F.transpose() * (lna.eta[m] + r + (alpha - ctx.chord_eta[k]) * delta_k);
    return detail::mdb_family_noisy(x, alpha, beta, ctx.obs, dtau, delta_k, v);
}

/// Residual bridge that additionally subtracts the LNA mean of the
/// endpoint-conditioned residual, rho_hat.
inline GaussianStep rbminus_step(const BridgeContext& ctx, int k, const VectorXd& x) {
    if (!ctx.rho || ctx.chord_rho.empty()) throw Error("rbminus_step: context lacks rho_hat");
    const double dtau = ctx.grid.dtau();
    const double delta_k = ctx.grid.remaining(k);
    const LnaSolution& lna = *ctx.lna;
    const RhoHatTrack& rho = *ctx.rho;
    const int m = ctx.grid.m;
    if (ctx.obs.regime == Regime::Exact) {
        if (k == m - 1) return detail::collapse_to(ctx.target, ctx.model.d);
        const double mult = ctx.grid.remaining(k + 1) / delta_k;
        const VectorXd mu = ctx.chord_eta[k] + ctx.chord_rho[k] +
                            ((ctx.target - x) - (lna.eta[m] - lna.eta[k]) -
                             (rho.rho[m] - rho.rho[k])) /
                                delta_k;
        GaussianStep out;
        out.mean = x + mu * dtau;
        out.cov = symmetrized(ctx.model.diffusion(x)) * (mult * dtau);
        return out;
    }
    const VectorXd alpha = ctx.model.drift(x);
    const MatrixXd beta = ctx.model.diffusion(x);
    const VectorXd r = x - lna.eta[k] - rho.rho[k];
    const VectorXd v =
        ctx.target -
        ctx.obs.F.transpose() * (lna.eta[m] + rho.rho[m] + r +
                                 (alpha - ctx.chord_eta[k] - ctx.chord_rho[k]) * delta_k);
    return detail::mdb_family_noisy(x, alpha, beta, ctx.obs, dtau, delta_k, v);
}

/// Guided-proposal drift alpha(x) + beta(x) P' F (F' P psi P' F + Sigma)^{-1} v
/// with (P, psi) = (P_{T|t}, psi_{T|t}) under the requested mode. In
/// IntegrateOnce mode v = y - F'(eta_T + P (x - eta_t)); in per-interval mode
/// the LNA is restarted at eta_{tau_k} = x and v = y - F' eta_T.
inline VectorXd gp_drift(const BridgeContext& ctx, int k, const VectorXd& x, GpMode mode,
                         GpWorkspace* ws = nullptr) {
    const MatrixXd beta = ctx.model.diffusion(x);
    MatrixXd P, psi;
    VectorXd v;
    if (mode == GpMode::IntegrateOnce) {
        if (ctx.once_P.empty()) throw Error("gp_drift: context lacks the once-mode tables");
        P = ctx.once_P[k];
        psi = ctx.once_psi[k];
        v = ctx.target - ctx.obs.F.transpose() *
                             (ctx.lna->eta[ctx.grid.m] + P * (x - ctx.lna->eta[k]));
    } else {
        LnaTransition tt;
        if (ws && !ctx.model.lna_closed_form) {
            tt = ws->integ.propagate(x, ctx.grid.time(k), ctx.grid.T);
        } else {
            tt = lna_transition_terms(ctx.model, x, ctx.grid.time(k), ctx.grid.T,
                                      ctx.ode_max_step);
        }
        P = std::move(tt.P);
        psi = std::move(tt.psi);
        v = ctx.target - ctx.obs.F.transpose() * tt.eta_end;
    }
    const MatrixXd G = ctx.obs.F.transpose() * P;  // d_o x d
    const MatrixXd S = symmetrized(G * psi * G.transpose() + ctx.obs.Sigma);
    MatrixXd L;
    try {
        L = cholesky_lower(S);
    } catch (const NotPositiveDefinite&) {
        throw SingularObservationBlock("gp_drift: guiding term singular at step " +
                                       std::to_string(k));
    }
    if (!detail::strictly_positive_diagonal(L))
        throw SingularObservationBlock("gp_drift: guiding term singular at step " +
                                       std::to_string(k));
    detail::chol_solve_in_place(L, v);
    return ctx.model.drift(x) + beta * (G.transpose() * v);
}

/// Simplified guided proposal (exact regime): the linear-process transition
/// with constant diffusion beta(x_T) and drift run along eta.
inline GaussianStep gps_step(const BridgeContext& ctx, int k, const VectorXd& x) {
    if (ctx.obs.regime != Regime::Exact) throw Error("gps_step: exact regime only");
    if (!ctx.lna) throw Error("gps_step: context lacks the eta track");
    const double dtau = ctx.grid.dtau();
    const double delta_k = ctx.grid.remaining(k);
    const LnaSolution& lna = *ctx.lna;
    const int m = ctx.grid.m;
    const MatrixXd beta = ctx.model.diffusion(x);
    const MatrixXd& L = ctx.beta_target_chol ? *ctx.beta_target_chol
                                             : cholesky_lower(ctx.model.diffusion(ctx.target));
    if (!detail::strictly_positive_diagonal(L))
        throw NotPositiveDefinite("gps_step: beta(x_T) is singular");
    VectorXd core = (ctx.target - x - (lna.eta[m] - lna.eta[k])) / delta_k;
    detail::chol_solve_in_place(L, core);
    GaussianStep out;
    out.mean = x + (ctx.model.drift(x) + beta * core) * dtau;
    out.cov = symmetrized(beta) * dtau;
    return out;
}

/// Dispatch a construct to its per-step proposal moments.
inline GaussianStep bridge_step(const BridgeContext& ctx, const BridgeKind& kind, int k,
                                const VectorXd& x, GpWorkspace* ws = nullptr) {
    if (k < 0 || k >= ctx.grid.m) throw Error("bridge_step: step index out of range");
    switch (kind.family) {
        case BridgeFamily::Em: return em_step_proposal(ctx, k, x);
        case BridgeFamily::Mdb: return mdb_step(ctx, k, x);
        case BridgeFamily::Lb: return lb_step(ctx, k, x, kind.gamma);
        case BridgeFamily::Rb: return rb_step(ctx, k, x);
        case BridgeFamily::RbMinus: return rbminus_step(ctx, k, x);
        case BridgeFamily::GpS: return gps_step(ctx, k, x);
        case BridgeFamily::Gp:
        case BridgeFamily::GpN: {
            const GpMode mode = kind.family == BridgeFamily::GpN ? GpMode::IntegrateOnce
                                                                 : ctx.resolved_gp_mode(kind);
            GaussianStep out;
            out.mean = x + gp_drift(ctx, k, x, mode, ws) * ctx.grid.dtau();
            out.cov = symmetrized(ctx.model.diffusion(x)) * ctx.grid.dtau();
            return out;
        }
        case BridgeFamily::GpMdb: {
            // Guided drift with the MDB variance.
            GaussianStep cov_step = mdb_step(ctx, k, x);
            if (ctx.obs.regime == Regime::Exact && k == ctx.grid.m - 1) return cov_step;
            const GpMode mode = ctx.resolved_gp_mode(kind);
            cov_step.mean = x + gp_drift(ctx, k, x, mode, ws) * ctx.grid.dtau();
            return cov_step;
        }
    }
    throw Error("bridge_step: unknown construct");
}

struct BridgeSample {
    SkeletonPath path;
    double log_q = 0.0;
};

/// Sample a whole skeleton bridge by iterating bridge_step from x0. In the
/// exact regime steps k = 0..m-2 are sampled and the final state is pinned to
/// x_T; in the noisy regime all m steps are sampled. Returns nullopt when a
/// draw leaves the admissible region (an MH rejection for the caller).
inline std::optional<BridgeSample> sample_bridge(const BridgeContext& ctx,
                                                 const BridgeKind& kind, Rng& rng,
                                                 GpWorkspace* ws = nullptr) {
    validate_kind(kind, ctx.obs.regime);
    const int m = ctx.grid.m;
    const int n_sampled = ctx.obs.regime == Regime::Exact ? m - 1 : m;
    BridgeSample out;
    out.path.grid = ctx.grid;
    out.path.states.reserve(m + 1);
    out.path.states.push_back(ctx.x0);
    VectorXd z(ctx.model.d);
    for (int k = 0; k < n_sampled; ++k) {
        const GaussianStep step = bridge_step(ctx, kind, k, out.path.states.back(), ws);
        const MatrixXd L = cholesky_lower(step.cov);
        if (!detail::strictly_positive_diagonal(L))
            throw DegenerateStep("sample_bridge: singular proposal covariance at step " +
                                 std::to_string(k));
        rng.fill_normal(z);
        VectorXd next = step.mean + L * z;
        if (!ctx.model.admissible(next)) return std::nullopt;
        double log_det = 0.0;
        for (int i = 0; i < ctx.model.d; ++i) log_det += std::log(L(i, i));
        out.log_q += -0.5 * (ctx.model.d * kLog2Pi + z.squaredNorm()) - log_det;
        out.path.states.push_back(std::move(next));
    }
    if (ctx.obs.regime == Regime::Exact) out.path.states.push_back(ctx.target);
    return out;
}

inline std::optional<BridgeSample> sample_bridge(const BridgeContext& ctx,
                                                 const BridgeKind& kind, std::uint64_t seed) {
    Rng rng(seed);
    return sample_bridge(ctx, kind, rng);
}

/// Proposal log density of an existing path under a construct, recomputing
/// the step moments from the path states.
inline double proposal_logpdf(const BridgeContext& ctx, const BridgeKind& kind,
                              const SkeletonPath& path, GpWorkspace* ws = nullptr) {
    validate_kind(kind, ctx.obs.regime);
    const int m = ctx.grid.m;
    if (static_cast<int>(path.states.size()) != m + 1)
        throw Error("proposal_logpdf: path/grid mismatch");
    if ((path.states.front() - ctx.x0).cwiseAbs().maxCoeff() != 0.0)
        throw Error("proposal_logpdf: path does not start at x0");
    if (ctx.obs.regime == Regime::Exact &&
        (path.states.back() - ctx.target).cwiseAbs().maxCoeff() != 0.0)
        throw Error("proposal_logpdf: path does not end at x_T");
    const int n_sampled = ctx.obs.regime == Regime::Exact ? m - 1 : m;
    double log_q = 0.0;
    for (int k = 0; k < n_sampled; ++k) {
        const GaussianStep step = bridge_step(ctx, kind, k, path.states[k], ws);
        try {
            log_q += gaussian_logpdf(path.states[k + 1], step.mean, step.cov);
        } catch (const NotPositiveDefinite&) {
            throw DegenerateStep("proposal_logpdf: singular step covariance at step " +
                                 std::to_string(k));
        }
    }
    return log_q;
}

}  // namespace sdebridge
