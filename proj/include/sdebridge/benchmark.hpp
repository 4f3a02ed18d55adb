#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "sdebridge/config.hpp"
#include "sdebridge/mcmc.hpp"

namespace sdebridge {

namespace detail {

/// Workspace-backed Euler stepping for the quantile oracle, which burns on
/// the order of 1e8 steps per table. Low dimensions use closed-form Cholesky.
struct EmKernel {
    const DiffusionModel* model;
    VectorXd drift, z, next;
    MatrixXd beta;

    explicit EmKernel(const DiffusionModel& m)
        : model(&m), drift(m.d), z(m.d), next(m.d), beta(m.d, m.d) {}

    /// One admissibility-checked step; x is only updated on success.
    bool step(VectorXd& x, double h, Rng& rng) {
        model->drift_into(x, drift);
        model->diffusion_into(x, beta);
        rng.fill_normal(z);
        const double sq = std::sqrt(h);
        const int d = model->d;
        if (d == 1 && beta(0, 0) >= 0.0) {
            next[0] = x[0] + drift[0] * h + sq * std::sqrt(beta(0, 0)) * z[0];
        } else if (d == 2 && beta(0, 0) > 0.0) {
            const double l00 = std::sqrt(beta(0, 0));
            const double l10 = beta(1, 0) / l00;
            const double l11 = std::sqrt(std::max(beta(1, 1) - l10 * l10, 0.0));
            next[0] = x[0] + drift[0] * h + sq * l00 * z[0];
            next[1] = x[1] + drift[1] * h + sq * (l10 * z[0] + l11 * z[1]);
        } else {
            next = x + drift * h + sq * (cholesky_lower(beta) * z);
        }
        if (!model->admissible(next)) return false;
        x.swap(next);
        return true;
    }
};

}  // namespace detail

/// Marginal quantile of the endpoint under the forward dynamics, estimated by
/// Euler-Maruyama simulation at a fine step. Exact regime: componentwise
/// quantile of X_T. Noisy regime: quantile of F'X_T + eps.
inline VectorXd generate_endpoint_quantiles(const DiffusionModel& model,
                                            const ObservationModel& obs, const VectorXd& x0,
                                            double T, int level, long long replicates,
                                            double fine_step, std::uint64_t seed) {
    if (replicates < 10000) throw Error("generate_endpoint_quantiles: replicates must be >= 10000");
    if (!(fine_step > 0.0)) throw Error("generate_endpoint_quantiles: fine_step must be > 0");
    const int n_steps = std::max(1, static_cast<int>(std::ceil(T / fine_step - 1e-12)));
    const double h = T / n_steps;
    const int out_dim = obs.regime == Regime::Exact ? model.d : obs.d_o;

    Rng rng(seed);
    detail::EmKernel kernel(model);
    VectorXd x(model.d), zo(obs.d_o);
    const MatrixXd noise_chol =
        obs.regime == Regime::Noisy ? cholesky_lower(obs.Sigma) : MatrixXd();
    std::vector<std::vector<double>> samples(out_dim);
    for (auto& s : samples) s.reserve(replicates);

    for (long long r = 0; r < replicates; ++r) {
        x = x0;
        for (int k = 0; k < n_steps; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt <= 100 && !placed; ++attempt)
                placed = kernel.step(x, h, rng);
            if (!placed)
                throw InadmissibleState("generate_endpoint_quantiles: retry budget exhausted");
        }
        if (obs.regime == Regime::Exact) {
            for (int c = 0; c < model.d; ++c) samples[c].push_back(x[c]);
        } else {
            rng.fill_normal(zo);
            VectorXd y = obs.F.transpose() * x + noise_chol * zo;
            for (int c = 0; c < obs.d_o; ++c) samples[c].push_back(y[c]);
        }
    }
    VectorXd out(out_dim);
    for (int c = 0; c < out_dim; ++c) {
        std::sort(samples[c].begin(), samples[c].end());
        out[c] = quantile_sorted(samples[c], level / 100.0);
    }
    return out;
}

/// One summary.csv line: a (bridge, scenario) cell of the benchmark grid.
struct BenchmarkRow {
    std::string model;
    std::string bridge;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double T = 0.0;
    int m = 0;
    double sigma = std::numeric_limits<double>::quiet_NaN();  // sqrt(Sigma_11), noisy only
    std::string scenario;
    double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
    double min_ess = std::numeric_limits<double>::quiet_NaN();
    double wallclock_s = 0.0;
    double ess_per_s = 0.0;
    std::string error;
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    std::vector<std::string> band_files;
    bool all_failed = false;
};

namespace detail {

inline void parallel_run(std::vector<std::function<void()>>& jobs, int threads) {
    if (threads <= 1 || jobs.size() <= 1) {
        for (auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            jobs[i]();
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(threads, static_cast<int>(jobs.size()));
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline std::string csv_cell(double v) {
    return std::isnan(v) ? std::string("nan") : fmt_double(v);
}

inline std::string bridge_file_label(const BridgeKind& kind) {
    std::string out = kind.name();
    if (kind.family == BridgeFamily::Lb) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "-%g", kind.gamma);
        out += buf;
    }
    return out;
}

}  // namespace detail

/// Run every (bridge, scenario) cell of the configured grid and write
/// summary.csv, one band_<bridge>_<scenario>.csv per successful cell and the
/// resolved configuration, into cfg.out_dir. Cell failures are recorded in
/// the summary's error column; the run continues.
inline BenchmarkResult run_benchmark(const ExperimentConfig& cfg, int threads = 1) {
    if (cfg.bridges.empty()) throw BadConfig("run_benchmark: empty bridge list");
    const DiffusionModel model = cfg.model();
    const ObservationModel obs = cfg.observation();
    const TimeGrid grid(cfg.T, cfg.m);

    struct Scenario {
        std::string label;
        VectorXd target;
    };
    std::vector<Scenario> scenarios;
    if (cfg.endpoint_source == EndpointSource::Quantile) {
        for (int level : cfg.quantile_levels) {
            const VectorXd q = generate_endpoint_quantiles(
                model, obs, cfg.x0, cfg.T, level, cfg.oracle_replicates, cfg.oracle_step,
                cfg.mcmc.seed ^ (0x9e3779b9ull + static_cast<std::uint64_t>(level)));
            scenarios.push_back({"q" + std::to_string(level), q});
        }
    } else {
        for (std::size_t i = 0; i < cfg.endpoint_values.size(); ++i)
            scenarios.push_back({"v" + std::to_string(i), cfg.endpoint_values[i]});
    }

    // One shared immutable context per scenario serves every bridge row.
    BridgeContextOptions ctx_opts;
    ctx_opts.ode_max_step = cfg.lna_step;
    std::vector<BridgeContext> contexts;
    contexts.reserve(scenarios.size());
    for (const Scenario& sc : scenarios)
        contexts.push_back(
            make_bridge_context(model, obs, grid, cfg.x0, sc.target, cfg.bridges, ctx_opts));

    const std::size_t n_rows = scenarios.size() * cfg.bridges.size();
    std::vector<BenchmarkRow> rows(n_rows);
    std::vector<ChainSummary> summaries(n_rows);
    std::vector<bool> ok(n_rows, false);

    std::vector<std::function<void()>> jobs;
    jobs.reserve(n_rows);
    for (std::size_t si = 0; si < scenarios.size(); ++si) {
        for (std::size_t bi = 0; bi < cfg.bridges.size(); ++bi) {
            const std::size_t idx = si * cfg.bridges.size() + bi;
            jobs.push_back([&, si, bi, idx] {
                const BridgeKind& kind = cfg.bridges[bi];
                BenchmarkRow& row = rows[idx];
                row.model = cfg.model_name;
                row.bridge = kind.name();
                if (kind.family == BridgeFamily::Lb) row.gamma = kind.gamma;
                row.T = cfg.T;
                row.m = cfg.m;
                if (cfg.regime == Regime::Noisy && cfg.Sigma.rows() == 1)
                    row.sigma = std::sqrt(cfg.Sigma(0, 0));
                row.scenario = scenarios[si].label;
                try {
                    MhConfig mh = cfg.mcmc;
                    mh.seed = cfg.mcmc.seed ^ static_cast<std::uint64_t>(idx);
                    const ChainSummary summary = run_chain(contexts[si], kind, mh);
                    row.acceptance_rate = summary.acceptance_rate;
                    row.min_ess = summary.ess_midpoint.size() > 0
                                      ? summary.ess_midpoint.minCoeff()
                                      : std::numeric_limits<double>::quiet_NaN();
                    if (cfg.timing) {
                        row.wallclock_s = summary.wallclock_seconds;
                        row.ess_per_s = summary.cpu_seconds > 0.0 && !std::isnan(row.min_ess)
                                            ? row.min_ess / summary.cpu_seconds
                                            : 0.0;
                    }
                    summaries[idx] = summary;
                    ok[idx] = true;
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
            });
        }
    }
    detail::parallel_run(jobs, threads);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    BenchmarkResult result;
    result.rows = rows;
    result.all_failed = std::none_of(ok.begin(), ok.end(), [](bool b) { return b; });

    {
        std::ofstream out(fs::path(cfg.out_dir) / "summary.csv");
        out << "model,bridge,gamma,T,m,sigma,scenario,acceptance_rate,min_ess,wallclock_s,"
               "ess_per_s,error\n";
        for (const BenchmarkRow& row : rows) {
            out << row.model << ',' << row.bridge << ','
                << (std::isnan(row.gamma) ? "" : detail::fmt_double(row.gamma)) << ','
                << detail::fmt_double(row.T) << ',' << row.m << ','
                << (std::isnan(row.sigma) ? "" : detail::fmt_double(row.sigma)) << ','
                << row.scenario << ',' << detail::csv_cell(row.acceptance_rate) << ','
                << detail::csv_cell(row.min_ess) << ',' << detail::fmt_double(row.wallclock_s)
                << ',' << detail::fmt_double(row.ess_per_s) << ',' << row.error << '\n';
        }
        // For Lindstrom sweeps, report the gamma that maximised acceptance.
        for (std::size_t si = 0; si < scenarios.size(); ++si) {
            double best_acc = -1.0, best_gamma = 0.0;
            for (std::size_t bi = 0; bi < cfg.bridges.size(); ++bi) {
                const std::size_t idx = si * cfg.bridges.size() + bi;
                if (cfg.bridges[bi].family == BridgeFamily::Lb && ok[idx] &&
                    rows[idx].acceptance_rate > best_acc) {
                    best_acc = rows[idx].acceptance_rate;
                    best_gamma = cfg.bridges[bi].gamma;
                }
            }
            if (best_acc >= 0.0)
                out << "# best lb gamma " << scenarios[si].label << ": "
                    << detail::fmt_double(best_gamma) << " (acceptance "
                    << detail::fmt_double(best_acc) << ")\n";
        }
    }

    for (std::size_t si = 0; si < scenarios.size(); ++si) {
        for (std::size_t bi = 0; bi < cfg.bridges.size(); ++bi) {
            const std::size_t idx = si * cfg.bridges.size() + bi;
            if (!ok[idx] || summaries[idx].path_mean.empty()) continue;
            const std::string name = "band_" + detail::bridge_file_label(cfg.bridges[bi]) +
                                     "_" + scenarios[si].label + ".csv";
            std::ofstream out(fs::path(cfg.out_dir) / name);
            out << "time,component,mean,lower,upper\n";
            const ChainSummary& s = summaries[idx];
            for (int k = 0; k <= grid.m; ++k)
                for (int c = 0; c < model.d; ++c)
                    out << detail::fmt_double(grid.time(k)) << ',' << c << ','
                        << detail::fmt_double(s.path_mean[k][c]) << ','
                        << detail::fmt_double(s.path_lower[k][c]) << ','
                        << detail::fmt_double(s.path_upper[k][c]) << '\n';
            result.band_files.push_back(name);
        }
    }

    {
        std::ofstream out(fs::path(cfg.out_dir) / "resolved_config.txt");
        out << serialize_config(cfg);
        if (cfg.endpoint_source == EndpointSource::Quantile) {
            out << "\n# resolved endpoints:\n";
            for (const Scenario& sc : scenarios)
                out << "# " << sc.label << " = " << detail::fmt_vector(sc.target) << "\n";
        }
    }
    return result;
}

/// Forward sample paths for the `simulate` subcommand: one row per
/// (path, node, component).
inline void write_paths_csv(const std::string& file, const std::vector<SkeletonPath>& paths) {
    std::ofstream out(file);
    out << "path,time,component,value\n";
    for (std::size_t p = 0; p < paths.size(); ++p)
        for (int k = 0; k <= paths[p].grid.m; ++k)
            for (Eigen::Index c = 0; c < paths[p].states[k].size(); ++c)
                out << p << ',' << detail::fmt_double(paths[p].grid.time(k)) << ',' << c << ','
                    << detail::fmt_double(paths[p].states[k][c]) << '\n';
}

}  // namespace sdebridge
