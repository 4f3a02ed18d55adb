#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sdebridge/bridges.hpp"
#include "sdebridge/errors.hpp"
#include "sdebridge/sde.hpp"

namespace sdebridge {

struct MhConfig {
    long long iterations = 100000;
    long long burn_in = 0;
    std::uint64_t seed = 1;
    int stride = 10;             // every stride-th path is kept for the band
    bool store_midpoint = true;  // keep X_{T/2} per iteration for ESS
};

/// Pointwise mean and central 95% band of a set of stored paths.
struct CredibleBand {
    std::vector<VectorXd> mean;
    std::vector<VectorXd> lower;
    std::vector<VectorXd> upper;
};

struct ChainSummary {
    double acceptance_rate = 0.0;
    long long accept_count = 0;
    long long iteration_count = 0;
    VectorXd ess_midpoint;  // per component of X_{T/2}; NaN when undefined
    std::vector<VectorXd> path_mean, path_lower, path_upper;
    double wallclock_seconds = 0.0;
    double cpu_seconds = 0.0;  // thread CPU time; robust under concurrent chains
};

/// Independence-sampler log acceptance ratio
/// log pi(x*) - log pi(x) - log q(x*) + log q(x).
inline double mh_acceptance_log_ratio(double current_log_target, double current_log_q,
                                      double proposed_log_target, double proposed_log_q) {
    return (proposed_log_target - proposed_log_q) - (current_log_target - current_log_q);
}

/// Linear-interpolation (type 7) quantile of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 0) throw Error("quantile_sorted: empty sample");
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

/// Effective sample size N / (1 + 2 sum rho_j) with Geyer's initial positive
/// sequence truncation of the empirical autocorrelations, clamped to (0, N].
/// Returns nullopt for a constant series (ESS undefined).
inline std::optional<double> effective_sample_size(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 100) throw Error("effective_sample_size: need at least 100 samples");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    auto autocov = [&](std::size_t lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i)
            c += (series[i] - mean) * (series[i + lag] - mean);
        return c / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    // A constant series has undefined ESS; compare against the mean scale so
    // pure accumulation roundoff does not masquerade as variance.
    if (!(c0 > 1e-24 * std::max(1.0, mean * mean))) return std::nullopt;

    // tau = 2 sum_m Gamma_m - 1 with Gamma_m = rho_{2m} + rho_{2m+1} while > 0.
    double tau = -1.0;
    for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
        const double gamma = (autocov(lag) + autocov(lag + 1)) / c0;
        if (gamma <= 0.0) break;
        tau += 2.0 * gamma;
    }
    const double N = static_cast<double>(n);
    if (tau <= 0.0) return N;  // antithetic chains clamp at N
    return std::min(N, N / tau);
}

/// Pointwise empirical mean and 2.5%/97.5% quantiles of stored paths. Each
/// snapshot is a d x (m+1) matrix of states by grid node.
inline CredibleBand path_credible_band(const std::vector<MatrixXd>& snapshots) {
    if (snapshots.size() < 100) throw Error("path_credible_band: need at least 100 paths");
    const Eigen::Index d = snapshots.front().rows();
    const Eigen::Index nodes = snapshots.front().cols();
    CredibleBand band;
    band.mean.assign(nodes, VectorXd::Zero(d));
    band.lower.assign(nodes, VectorXd::Zero(d));
    band.upper.assign(nodes, VectorXd::Zero(d));
    std::vector<double> vals(snapshots.size());
    for (Eigen::Index kk = 0; kk < nodes; ++kk) {
        for (Eigen::Index c = 0; c < d; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < snapshots.size(); ++s) {
                vals[s] = snapshots[s](c, kk);
                acc += vals[s];
            }
            std::sort(vals.begin(), vals.end());
            band.lower[kk][c] = quantile_sorted(vals, 0.025);
            band.upper[kk][c] = quantile_sorted(vals, 0.975);
            // Clamp: summation roundoff must not push the mean outside the
            // band at pinned (degenerate) nodes.
            band.mean[kk][c] = std::clamp(acc / static_cast<double>(vals.size()),
                                          band.lower[kk][c], band.upper[kk][c]);
        }
    }
    return band;
}

namespace detail {

inline double thread_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace detail

/// Metropolis-Hastings independence sampler over skeleton bridges. The chain
/// is initialised with the first admissible proposal (accepted
/// unconditionally); proposals that leave the admissible region count as
/// rejections. Deterministic given the seed.
inline ChainSummary run_chain(const BridgeContext& ctx, const BridgeKind& kind,
                              const MhConfig& cfg) {
    validate_kind(kind, ctx.obs.regime);
    if (cfg.iterations <= 0 || cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations)
        throw Error("run_chain: need 0 <= burn_in < iterations");
    if (cfg.stride < 1) throw Error("run_chain: stride must be >= 1");

    const auto wall_start = std::chrono::steady_clock::now();
    const double cpu_start = detail::thread_cpu_seconds();

    GpWorkspace ws(ctx.model, ctx.ode_max_step);
    Rng rng(cfg.seed);

    struct PathState {
        SkeletonPath path;
        double log_target = 0.0;
        double log_q = 0.0;
    };
    PathState current;
    bool initialised = false;
    for (int attempt = 0; attempt < 1000 && !initialised; ++attempt) {
        if (auto s = sample_bridge(ctx, kind, rng, &ws)) {
            current.log_target = log_target_density(s->path, ctx.model, ctx.obs, ctx.target);
            current.log_q = s->log_q;
            current.path = std::move(s->path);
            initialised = true;
        }
    }
    if (!initialised)
        throw InitialisationFailed("run_chain: 1000 consecutive initial proposals inadmissible");

    const int mid = ctx.grid.m / 2;
    const long long retained = cfg.iterations - cfg.burn_in;
    MatrixXd mid_series;
    if (cfg.store_midpoint) mid_series.resize(ctx.model.d, retained);
    std::vector<MatrixXd> snapshots;
    snapshots.reserve(static_cast<std::size_t>((retained + cfg.stride - 1) / cfg.stride));

    long long accept = 0;
    for (long long it = 0; it < cfg.iterations; ++it) {
        if (auto s = sample_bridge(ctx, kind, rng, &ws)) {
            const double lt = log_target_density(s->path, ctx.model, ctx.obs, ctx.target);
            const double lr =
                mh_acceptance_log_ratio(current.log_target, current.log_q, lt, s->log_q);
            if (std::log(rng.uniform()) < lr) {
                current.path = std::move(s->path);
                current.log_target = lt;
                current.log_q = s->log_q;
                ++accept;
            }
        }
        const long long r = it - cfg.burn_in;
        if (r < 0) continue;
        if (cfg.store_midpoint) mid_series.col(r) = current.path.states[mid];
        if (r % cfg.stride == 0) {
            MatrixXd snap(ctx.model.d, ctx.grid.nodes());
            for (int kk = 0; kk <= ctx.grid.m; ++kk) snap.col(kk) = current.path.states[kk];
            snapshots.push_back(std::move(snap));
        }
    }

    ChainSummary out;
    out.accept_count = accept;
    out.iteration_count = cfg.iterations;
    out.acceptance_rate = static_cast<double>(accept) / static_cast<double>(cfg.iterations);
    out.ess_midpoint = VectorXd::Constant(ctx.model.d, std::numeric_limits<double>::quiet_NaN());
    if (cfg.store_midpoint && retained >= 100) {
        for (int c = 0; c < ctx.model.d; ++c) {
            std::vector<double> series(mid_series.row(c).begin(), mid_series.row(c).end());
            if (auto ess = effective_sample_size(series)) out.ess_midpoint[c] = *ess;
        }
    }
    if (snapshots.size() >= 100) {
        CredibleBand band = path_credible_band(snapshots);
        out.path_mean = std::move(band.mean);
        out.path_lower = std::move(band.lower);
        out.path_upper = std::move(band.upper);
    }
    out.cpu_seconds = detail::thread_cpu_seconds() - cpu_start;
    out.wallclock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return out;
}

}  // namespace sdebridge
