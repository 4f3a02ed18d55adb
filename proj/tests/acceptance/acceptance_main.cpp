// Acceptance suite: one criterion per section, one pass/fail line each.
// Usage: acceptance [criterion numbers]; default runs all eight.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sdebridge/sdebridge.hpp"

using namespace sdebridge;

namespace {

VectorXd sc(double v) {
    VectorXd out(1);
    out[0] = v;
    return out;
}

VectorXd vec2(double a, double b) {
    VectorXd out(2);
    out << a, b;
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

struct CheckResult {
    std::vector<std::string> failures;
    std::string note;

    void fail(std::string msg) { failures.push_back(std::move(msg)); }
    void expect(bool ok, std::string msg) {
        if (!ok) fail(std::move(msg));
    }
};

// ---------------------------------------------------------------------------
// Benchmark chain grid shared by criteria 5 and 6.

struct ChainSpec {
    std::string key;
    int ctx_index = 0;
    BridgeKind kind;
    long long iterations = 100000;
};

struct ChainGrid {
    std::vector<BridgeContext> contexts;
    std::vector<ChainSpec> specs;
    std::map<std::string, ChainSummary> results;

    const ChainSummary& at(const std::string& key) const {
        auto it = results.find(key);
        if (it == results.end()) throw Error("missing chain result: " + key);
        return it->second;
    }
};

// Reference endpoint quantiles used as conditioning values.
const double kBdQ[2][3] = {{18.49, 24.62, 31.68}, {6.97, 12.00, 18.35}};
const double kLvQ[4][3][2] = {
    {{82.47, 62.78}, {96.82, 71.93}, {112.13, 81.58}},
    {{107.35, 57.95}, {133.35, 70.75}, {162.28, 84.63}},
    {{142.00, 60.02}, {182.64, 77.36}, {228.82, 97.12}},
    {{185.04, 71.23}, {242.08, 97.23}, {308.58, 128.76}},
};
const int kLevels[3] = {5, 50, 95};
// Aphid medians of Y_T per sigma (the noisy-regime conditioning values).
const double kAphidMedian[3] = {786.09, 815.51, 774.41};
const double kAphidSigma[3] = {5.0, 10.0, 50.0};

ChainGrid build_chain_grid() {
    ChainGrid grid;
    VectorXd bd_theta(2), lv_theta(3), aphid_theta(2);
    bd_theta << 0.1, 0.8;
    lv_theta << 0.5, 0.0025, 0.3;
    aphid_theta << 1.45, 0.0009;
    const DiffusionModel bd = make_model("birth-death", bd_theta);
    const DiffusionModel lv = make_model("lotka-volterra", lv_theta);
    const DiffusionModel aphid = make_model("aphid", aphid_theta);

    auto add = [&](const std::string& key, BridgeKind kind, long long iters) {
        grid.specs.push_back({key, static_cast<int>(grid.contexts.size()) - 1, kind, iters});
    };

    // Birth-death: T in {1, 2} x 3 endpoints, m = 50, all at 100K.
    for (int ti = 0; ti < 2; ++ti) {
        for (int qi = 0; qi < 3; ++qi) {
            const std::string base =
                "bd T" + std::to_string(ti + 1) + " q" + std::to_string(kLevels[qi]);
            const std::vector<BridgeKind> kinds = {BridgeKind::mdb(), BridgeKind::rb(),
                                                   BridgeKind::rbminus(), BridgeKind::gpmdb()};
            grid.contexts.push_back(make_bridge_context(bd, ObservationModel::exact(1),
                                                        TimeGrid(ti + 1.0, 50), sc(50.0),
                                                        sc(kBdQ[ti][qi]), kinds));
            for (const BridgeKind& kind : kinds) add(base + " " + kind.name(), kind, 100000);
        }
    }

    // Naive guided proposal at birth-death T = 2 off-median endpoints,
    // m in {25, 100}.
    for (int qi : {0, 2}) {
        for (int m : {25, 100}) {
            grid.contexts.push_back(make_bridge_context(
                bd, ObservationModel::exact(1), TimeGrid(2.0, m), sc(50.0), sc(kBdQ[1][qi]),
                std::vector<BridgeKind>{BridgeKind::gpn()}));
            add("bd T2 q" + std::to_string(kLevels[qi]) + " gpn m" + std::to_string(m),
                BridgeKind::gpn(), 100000);
        }
    }

    // Lotka-Volterra: T in {1..4} x 3 endpoints, m = 50. The residual bridges
    // are cheap and always run at 100K; the per-interval guided chains run at
    // 100K where a criterion needs them and 30K elsewhere.
    for (int ti = 0; ti < 4; ++ti) {
        for (int qi = 0; qi < 3; ++qi) {
            const std::string base =
                "lv T" + std::to_string(ti + 1) + " q" + std::to_string(kLevels[qi]);
            const bool hot =
                (ti == 3 && qi != 2) || (ti == 0 && qi == 0);  // T4 q5/q50, T1 q5
            std::vector<BridgeKind> kinds = {BridgeKind::rb(), BridgeKind::rbminus(),
                                             BridgeKind::gpmdb()};
            if (ti == 0 && qi == 0) kinds.push_back(BridgeKind::gp());
            grid.contexts.push_back(make_bridge_context(
                lv, ObservationModel::exact(2), TimeGrid(ti + 1.0, 50), vec2(71.0, 79.0),
                vec2(kLvQ[ti][qi][0], kLvQ[ti][qi][1]), kinds));
            add(base + " rb", BridgeKind::rb(), 100000);
            add(base + " rbminus", BridgeKind::rbminus(), 100000);
            add(base + " gpmdb", BridgeKind::gpmdb(), hot ? 100000 : 30000);
            if (ti == 0 && qi == 0) add(base + " gp", BridgeKind::gp(), 100000);
        }
    }

    // Aphid: myopic sampler across the measurement-error sweep.
    for (int i = 0; i < 3; ++i) {
        MatrixXd F(2, 1), Sigma(1, 1);
        F << 1.0, 0.0;
        Sigma << kAphidSigma[i] * kAphidSigma[i];
        grid.contexts.push_back(make_bridge_context(
            aphid, ObservationModel::noisy(F, Sigma), TimeGrid(1.28, 50),
            vec2(347.55, 398.94), sc(kAphidMedian[i]),
            std::vector<BridgeKind>{BridgeKind::em()}));
        add("aphid s" + fmt("%g", kAphidSigma[i]) + " em", BridgeKind::em(), 100000);
    }

    // Run everything on the worker pool; seeds are fixed by registration order.
    std::vector<std::function<void()>> jobs;
    std::vector<ChainSummary> summaries(grid.specs.size());
    for (std::size_t i = 0; i < grid.specs.size(); ++i) {
        jobs.push_back([&grid, &summaries, i] {
            const ChainSpec& spec = grid.specs[i];
            MhConfig cfg;
            cfg.iterations = spec.iterations;
            cfg.seed = 0xACCE0000ull + i;
            cfg.stride = 2000000000;  // bands are not needed here
            summaries[i] = run_chain(grid.contexts[spec.ctx_index], spec.kind, cfg);
        });
    }
    const int threads = std::max(2u, std::thread::hardware_concurrency());
    detail::parallel_run(jobs, threads);
    for (std::size_t i = 0; i < grid.specs.size(); ++i)
        grid.results[grid.specs[i].key] = summaries[i];
    return grid;
}

const ChainGrid& chain_grid() {
    static ChainGrid grid = build_chain_grid();
    return grid;
}

// ---------------------------------------------------------------------------
// Criterion 1: per-step moments of MDB, LB, RB, RB- against gaussian_condition
// on the corresponding joints; max abs error < 1e-12 over 100 states x 3
// models.

void criterion_conditioning_oracle(CheckResult& out) {
    struct Case {
        std::string name;
        DiffusionModel model;
        ObservationModel obs;
        VectorXd lo, hi;
        double y;
    };
    std::vector<Case> cases;
    {
        VectorXd theta(2);
        theta << 0.1, 0.8;
        MatrixXd F(1, 1), S(1, 1);
        F << 1.0;
        S << 2.5;
        cases.push_back({"birth-death", make_model("birth-death", theta),
                         ObservationModel::noisy(F, S), sc(5.0), sc(80.0), 30.0});
    }
    {
        VectorXd theta(3);
        theta << 0.5, 0.0025, 0.3;
        MatrixXd F(2, 1), S(1, 1);
        F << 1.0, 0.0;
        S << 9.0;
        cases.push_back({"lotka-volterra", make_model("lotka-volterra", theta),
                         ObservationModel::noisy(F, S), vec2(20.0, 20.0), vec2(350.0, 350.0),
                         150.0});
    }
    {
        VectorXd theta(2);
        theta << 1.45, 0.0009;
        MatrixXd F(2, 1), S(1, 1);
        F << 1.0, 0.0;
        S << 25.0;
        cases.push_back({"aphid", make_model("aphid", theta), ObservationModel::noisy(F, S),
                         vec2(100.0, 100.0), vec2(900.0, 900.0), 800.0});
    }

    const double gamma = 0.05;
    double worst = 0.0;
    Rng rng(314159);
    for (const Case& c : cases) {
        const TimeGrid grid(2.0, 10);
        const double dtau = grid.dtau();
        const int d = c.model.d, d_o = c.obs.d_o;
        const BridgeContext ctx = make_bridge_context(
            c.model, c.obs, grid, 0.5 * (c.lo + c.hi), sc(c.y),
            std::vector<BridgeKind>{BridgeKind::mdb(), BridgeKind::lb(gamma), BridgeKind::rb(),
                                    BridgeKind::rbminus()});
        auto joint_cov = [&](const MatrixXd& beta, double delta_s) {
            MatrixXd cov(d + d_o, d + d_o);
            cov.topLeftCorner(d, d) = beta * dtau;
            cov.topRightCorner(d, d_o) = beta * c.obs.F * dtau;
            cov.bottomLeftCorner(d_o, d) = c.obs.F.transpose() * beta * dtau;
            cov.bottomRightCorner(d_o, d_o) =
                c.obs.F.transpose() * beta * c.obs.F * delta_s + c.obs.Sigma;
            return cov;
        };
        auto track = [&](double err) { worst = std::max(worst, err); };

        for (int trial = 0; trial < 100; ++trial) {
            VectorXd x(d);
            for (int i = 0; i < d; ++i) x[i] = c.lo[i] + (c.hi[i] - c.lo[i]) * rng.uniform();
            const int k = static_cast<int>(rng.uniform() * grid.m);
            const double delta_k = grid.remaining(k);
            const double delta_k1 = grid.remaining(k + 1);
            const VectorXd alpha = c.model.drift(x);
            const MatrixXd beta = c.model.diffusion(x);

            {  // MDB and LB share the joint apart from the predictive horizon
                for (int variant = 0; variant < 2; ++variant) {
                    const double delta_s =
                        variant == 0 ? delta_k : delta_k + gamma * delta_k1 * delta_k1 / dtau;
                    VectorXd mean(d + d_o);
                    mean.head(d) = x + alpha * dtau;
                    mean.tail(d_o) = c.obs.F.transpose() * (x + alpha * delta_k);
                    const GaussianStep cond =
                        gaussian_condition(mean, joint_cov(beta, delta_s), ctx.target);
                    const GaussianStep step = variant == 0 ? mdb_step(ctx, k, x)
                                                           : lb_step(ctx, k, x, gamma);
                    track((step.mean - cond.mean).cwiseAbs().maxCoeff());
                    track((step.cov - cond.cov).cwiseAbs().maxCoeff());
                }
            }
            {  // RB
                const VectorXd r = x - ctx.lna->eta[k];
                const VectorXd dr = alpha - ctx.chord_eta[k];
                VectorXd mean(d + d_o);
                mean.head(d) = r + dr * dtau;
                mean.tail(d_o) = c.obs.F.transpose() * (r + dr * delta_k);
                const VectorXd observed =
                    ctx.target - c.obs.F.transpose() * ctx.lna->eta[grid.m];
                const GaussianStep cond =
                    gaussian_condition(mean, joint_cov(beta, delta_k), observed);
                const GaussianStep step = rb_step(ctx, k, x);
                track((step.mean - (ctx.lna->eta[k + 1] + cond.mean)).cwiseAbs().maxCoeff());
                track((step.cov - cond.cov).cwiseAbs().maxCoeff());
            }
            {  // RB-
                const VectorXd r = x - ctx.lna->eta[k] - ctx.rho->rho[k];
                const VectorXd dr = alpha - ctx.chord_eta[k] - ctx.chord_rho[k];
                VectorXd mean(d + d_o);
                mean.head(d) = r + dr * dtau;
                mean.tail(d_o) = c.obs.F.transpose() * (r + dr * delta_k);
                const VectorXd observed =
                    ctx.target -
                    c.obs.F.transpose() * (ctx.lna->eta[grid.m] + ctx.rho->rho[grid.m]);
                const GaussianStep cond =
                    gaussian_condition(mean, joint_cov(beta, delta_k), observed);
                const GaussianStep step = rbminus_step(ctx, k, x);
                track((step.mean - (ctx.lna->eta[k + 1] + ctx.rho->rho[k + 1] + cond.mean))
                          .cwiseAbs()
                          .maxCoeff());
                track((step.cov - cond.cov).cwiseAbs().maxCoeff());
            }
        }
    }
    out.note = "max |err| " + fmt("%.2e", worst);
    out.expect(worst < 1e-12, "oracle mismatch " + fmt("%.3e", worst) + " >= 1e-12");
}

// ---------------------------------------------------------------------------
// Criterion 2: exact-regime MDB on dX = a dt + sigma dW accepts every
// proposal; each log ratio below 1e-10 in magnitude over 10K iterations.

void criterion_constant_exactness(CheckResult& out) {
    DiffusionModel model;
    model.name = "constant";
    model.d = 1;
    model.drift_fn = [](const VectorXd&, const VectorXd&, VectorXd& o) { o[0] = 1.3; };
    model.diffusion_fn = [](const VectorXd&, const VectorXd&, MatrixXd& o) { o(0, 0) = 2.0; };
    model.jacobian_fn = [](const VectorXd&, const VectorXd&, MatrixXd& o) { o(0, 0) = 0.0; };
    const ObservationModel obs = ObservationModel::exact(1);
    const TimeGrid grid(1.0, 20);
    const BridgeContext ctx = make_bridge_context(
        model, obs, grid, sc(0.0), sc(1.0), std::vector<BridgeKind>{BridgeKind::mdb()});

    Rng rng(271828);
    auto cur = sample_bridge(ctx, BridgeKind::mdb(), rng);
    double cur_lt = log_target_density(cur->path, model, obs, ctx.target);
    double worst = 0.0;
    for (int it = 0; it < 10000; ++it) {
        auto prop = sample_bridge(ctx, BridgeKind::mdb(), rng);
        const double lt = log_target_density(prop->path, model, obs, ctx.target);
        const double lr = mh_acceptance_log_ratio(cur_lt, cur->log_q, lt, prop->log_q);
        worst = std::max(worst, std::abs(lr));
        cur = std::move(prop);
        cur_lt = lt;
    }
    MhConfig cfg;
    cfg.iterations = 10000;
    cfg.seed = 99;
    cfg.stride = 1000000;
    const ChainSummary s = run_chain(ctx, BridgeKind::mdb(), cfg);
    out.note = "max |log ratio| " + fmt("%.2e", worst) + ", acceptance " +
               fmt("%.6f", s.acceptance_rate);
    out.expect(worst < 1e-10, "log ratio " + fmt("%.3e", worst) + " >= 1e-10");
    out.expect(s.acceptance_rate == 1.0,
               "acceptance " + fmt("%.6f", s.acceptance_rate) + " != 1.0");
}

// ---------------------------------------------------------------------------
// Criterion 3: birth-death closed-form LNA vs RK4, max error < 1e-6 on [0,2].

void criterion_birth_death_lna(CheckResult& out) {
    VectorXd theta(2);
    theta << 0.1, 0.8;
    DiffusionModel numeric_model = make_model("birth-death", theta);
    const DiffusionModel closed_model = numeric_model;
    numeric_model.lna_closed_form.reset();
    const TimeGrid grid(2.0, 100);
    const LnaSolution numeric = solve_lna(numeric_model, sc(50.0), grid);
    const LnaSolution closed = solve_lna(closed_model, sc(50.0), grid);
    double err_eta = 0.0, err_P = 0.0, err_psi = 0.0;
    for (int k = 0; k <= grid.m; ++k) {
        err_eta = std::max(err_eta, std::abs(numeric.eta[k][0] - closed.eta[k][0]));
        err_P = std::max(err_P, std::abs(numeric.P[k](0, 0) - closed.P[k](0, 0)));
        err_psi = std::max(err_psi, std::abs(numeric.psi[k](0, 0) - closed.psi[k](0, 0)));
    }
    out.note = "max err eta " + fmt("%.2e", err_eta) + ", P " + fmt("%.2e", err_P) + ", psi " +
               fmt("%.2e", err_psi);
    out.expect(err_eta < 1e-6, "eta error " + fmt("%.3e", err_eta) + " >= 1e-6");
    out.expect(err_P < 1e-6, "P error " + fmt("%.3e", err_P) + " >= 1e-6");
    out.expect(err_psi < 1e-6, "psi error " + fmt("%.3e", err_psi) + " >= 1e-6");
}

// ---------------------------------------------------------------------------
// Criterion 4: endpoint quantile oracle against the reference tables.

void criterion_endpoint_quantiles(CheckResult& out) {
    VectorXd bd_theta(2), lv_theta(3), aphid_theta(2);
    bd_theta << 0.1, 0.8;
    lv_theta << 0.5, 0.0025, 0.3;
    aphid_theta << 1.45, 0.0009;
    const DiffusionModel bd = make_model("birth-death", bd_theta);
    const DiffusionModel lv = make_model("lotka-volterra", lv_theta);
    const DiffusionModel aphid = make_model("aphid", aphid_theta);

    struct Job {
        std::string label;
        std::function<VectorXd()> run;
        VectorXd want;
        double tol;
    };
    std::vector<Job> jobs;

    for (int qi = 0; qi < 3; ++qi)
        jobs.push_back({"birth-death T=1 q" + std::to_string(kLevels[qi]),
                        [=] {
                            return generate_endpoint_quantiles(
                                bd, ObservationModel::exact(1), sc(50.0), 1.0, kLevels[qi],
                                200000, 0.005, 4000 + qi);
                        },
                        sc(kBdQ[0][qi]), 0.3});
    for (int ti = 0; ti < 4; ++ti)
        for (int qi = 0; qi < 3; ++qi)
            jobs.push_back(
                {"lotka-volterra T=" + std::to_string(ti + 1) + " q" +
                     std::to_string(kLevels[qi]),
                 [=] {
                     return generate_endpoint_quantiles(
                         lv, ObservationModel::exact(2), vec2(71.0, 79.0), ti + 1.0,
                         kLevels[qi], 200000, 0.005, 4100 + 10 * ti + qi);
                 },
                 vec2(kLvQ[ti][qi][0], kLvQ[ti][qi][1]), 2.0});
    const double aphid_table[3][3] = {
        {726.75, 786.09, 841.82}, {724.57, 815.51, 856.36}, {762.36, 774.41, 910.86}};
    for (int si = 0; si < 3; ++si)
        for (int qi = 0; qi < 3; ++qi)
            jobs.push_back({"aphid sigma=" + fmt("%g", kAphidSigma[si]) + " q" +
                                std::to_string(kLevels[qi]),
                            [=] {
                                MatrixXd F(2, 1), S(1, 1);
                                F << 1.0, 0.0;
                                S << kAphidSigma[si] * kAphidSigma[si];
                                return generate_endpoint_quantiles(
                                    aphid, ObservationModel::noisy(F, S),
                                    vec2(347.55, 398.94), 1.28, kLevels[qi], 200000, 0.0025,
                                    4200 + 10 * si + qi);
                            },
                            sc(aphid_table[si][qi]), 6.0});

    std::vector<VectorXd> got(jobs.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < jobs.size(); ++i)
        tasks.push_back([&, i] { got[i] = jobs[i].run(); });
    detail::parallel_run(tasks, std::max(2u, std::thread::hardware_concurrency()));

    std::map<std::string, double> worst_by_model;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const double diff = (got[i] - jobs[i].want).cwiseAbs().maxCoeff();
        const std::string model = jobs[i].label.substr(0, jobs[i].label.find(' '));
        worst_by_model[model] = std::max(worst_by_model[model], diff);
        if (diff > jobs[i].tol) {
            std::ostringstream msg;
            msg << jobs[i].label << ": got (";
            for (Eigen::Index c = 0; c < got[i].size(); ++c)
                msg << (c ? ", " : "") << fmt("%.2f", got[i][c]);
            msg << ") vs table (";
            for (Eigen::Index c = 0; c < jobs[i].want.size(); ++c)
                msg << (c ? ", " : "") << fmt("%.2f", jobs[i].want[c]);
            msg << "), |diff| " << fmt("%.2f", diff) << " > " << fmt("%g", jobs[i].tol);
            out.fail(msg.str());
        }
    }
    out.note = "worst |diff|: birth-death " + fmt("%.2f", worst_by_model["birth-death"]) +
               " (tol 0.3), lotka-volterra " + fmt("%.2f", worst_by_model["lotka-volterra"]) +
               " (tol 2), aphid " + fmt("%.2f", worst_by_model["aphid"]) + " (tol 6)";
}

// ---------------------------------------------------------------------------
// Criterion 5: Lotka-Volterra acceptance rates at their reference values.

void criterion_lv_acceptance(CheckResult& out) {
    const ChainGrid& grid = chain_grid();
    struct Check {
        const char* key;
        double want;
    };
    const Check checks[] = {
        {"lv T4 q5 gpmdb", 0.857},
        {"lv T4 q5 rbminus", 0.577},
        {"lv T4 q50 gpmdb", 0.834},
        {"lv T4 q50 rbminus", 0.606},
    };
    std::string note;
    for (const Check& c : checks) {
        const double got = grid.at(c.key).acceptance_rate;
        note += std::string(c.key) + " = " + fmt("%.3f", got) + " (" + fmt("%.3f", c.want) +
                "); ";
        out.expect(std::abs(got - c.want) <= 0.03,
                   std::string(c.key) + ": acceptance " + fmt("%.4f", got) + " outside " +
                       fmt("%.3f", c.want) + " +- 0.03");
    }
    out.note = note;
}

// ---------------------------------------------------------------------------
// Criterion 6: qualitative orderings from the figures.

void criterion_orderings(CheckResult& out) {
    const ChainGrid& grid = chain_grid();
    auto acc = [&](const std::string& key) { return grid.at(key).acceptance_rate; };

    // (a) birth-death T = 2: RB, RB-, GP-MDB each beat the MDB.
    for (int lv : kLevels) {
        const std::string base = "bd T2 q" + std::to_string(lv) + " ";
        const double mdb = acc(base + "mdb");
        for (const char* other : {"rb", "rbminus", "gpmdb"})
            out.expect(acc(base + other) > mdb,
                       "(a) " + base + other + " " + fmt("%.3f", acc(base + other)) +
                           " does not beat mdb " + fmt("%.3f", mdb));
    }

    // (b) GP-MDB >= RB- >= RB (tolerance -0.01) on every scenario.
    std::vector<std::string> scenarios;
    for (int t : {1, 2})
        for (int lv : kLevels)
            scenarios.push_back("bd T" + std::to_string(t) + " q" + std::to_string(lv));
    for (int t : {1, 2, 3, 4})
        for (int lv : kLevels)
            scenarios.push_back("lv T" + std::to_string(t) + " q" + std::to_string(lv));
    for (const std::string& s : scenarios) {
        const double gpmdb = acc(s + " gpmdb");
        const double rbm = acc(s + " rbminus");
        const double rb = acc(s + " rb");
        out.expect(gpmdb >= rbm - 0.01, "(b) " + s + ": gpmdb " + fmt("%.3f", gpmdb) +
                                            " < rbminus " + fmt("%.3f", rbm) + " - 0.01");
        out.expect(rbm >= rb - 0.01, "(b) " + s + ": rbminus " + fmt("%.3f", rbm) + " < rb " +
                                         fmt("%.3f", rb) + " - 0.01");
    }

    // (c) GP-N acceptance decays with m at off-median endpoints.
    for (int lv : {5, 95}) {
        const std::string base = "bd T2 q" + std::to_string(lv) + " gpn ";
        const double drop = acc(base + "m25") - acc(base + "m100");
        out.expect(drop > 0.05, "(c) gpn q" + std::to_string(lv) + " drop " +
                                    fmt("%.3f", drop) + " <= 0.05");
    }

    // (d) aphid EM acceptance strictly increasing in sigma.
    const double em5 = acc("aphid s5 em");
    const double em10 = acc("aphid s10 em");
    const double em50 = acc("aphid s50 em");
    out.expect(em5 < em10 && em10 < em50,
               "(d) aphid em not increasing: " + fmt("%.3f", em5) + ", " + fmt("%.3f", em10) +
                   ", " + fmt("%.3f", em50));

    // (e) ESS/s ordering at Lotka-Volterra T = 1, 5% endpoint.
    auto ess_per_s = [&](const std::string& key) {
        const ChainSummary& s = grid.at(key);
        return s.ess_midpoint.minCoeff() / s.cpu_seconds;
    };
    const double e_rbm = ess_per_s("lv T1 q5 rbminus");
    const double e_rb = ess_per_s("lv T1 q5 rb");
    const double e_gpmdb = ess_per_s("lv T1 q5 gpmdb");
    const double e_gp = ess_per_s("lv T1 q5 gp");
    out.note = "ESS/s rbminus " + fmt("%.0f", e_rbm) + " > rb " + fmt("%.0f", e_rb) +
               " > gpmdb " + fmt("%.0f", e_gpmdb) + " > gp " + fmt("%.0f", e_gp);
    out.expect(e_rbm > e_rb, "(e) ESS/s rbminus " + fmt("%.1f", e_rbm) + " <= rb " +
                                 fmt("%.1f", e_rb));
    out.expect(e_rb > e_gpmdb, "(e) ESS/s rb " + fmt("%.1f", e_rb) + " <= gpmdb " +
                                   fmt("%.1f", e_gpmdb));
    out.expect(e_gpmdb > e_gp, "(e) ESS/s gpmdb " + fmt("%.1f", e_gpmdb) + " <= gp " +
                                   fmt("%.1f", e_gp));
}

// ---------------------------------------------------------------------------
// Criterion 7: proposal_logpdf equals the accumulated log_q for every
// construct across 1000 sampled bridges per model.

void criterion_proposal_consistency(CheckResult& out) {
    VectorXd bd_theta(2), lv_theta(3), aphid_theta(2);
    bd_theta << 0.1, 0.8;
    lv_theta << 0.5, 0.0025, 0.3;
    aphid_theta << 1.45, 0.0009;

    struct Setup {
        std::string name;
        BridgeContext ctx;
        std::vector<BridgeKind> kinds;
    };
    std::vector<Setup> setups;
    {
        const std::vector<BridgeKind> kinds = {
            BridgeKind::em(),      BridgeKind::mdb(), BridgeKind::lb(0.01), BridgeKind::rb(),
            BridgeKind::rbminus(), BridgeKind::gp(),  BridgeKind::gpn(),    BridgeKind::gps(),
            BridgeKind::gpmdb()};
        setups.push_back({"birth-death",
                          make_bridge_context(make_model("birth-death", bd_theta),
                                              ObservationModel::exact(1), TimeGrid(1.0, 20),
                                              sc(50.0), sc(24.62), kinds),
                          kinds});
        setups.push_back({"lotka-volterra",
                          make_bridge_context(make_model("lotka-volterra", lv_theta),
                                              ObservationModel::exact(2), TimeGrid(1.0, 20),
                                              vec2(71.0, 79.0), vec2(96.82, 71.93), kinds),
                          kinds});
    }
    {
        MatrixXd F(2, 1), S(1, 1);
        F << 1.0, 0.0;
        S << 100.0;
        const std::vector<BridgeKind> kinds = {
            BridgeKind::em(),      BridgeKind::mdb(), BridgeKind::lb(0.01), BridgeKind::rb(),
            BridgeKind::rbminus(), BridgeKind::gp(),  BridgeKind::gpn(),    BridgeKind::gpmdb()};
        setups.push_back({"aphid",
                          make_bridge_context(make_model("aphid", aphid_theta),
                                              ObservationModel::noisy(F, S), TimeGrid(1.28, 20),
                                              vec2(347.55, 398.94), sc(815.51), kinds),
                          kinds});
    }

    double worst = 0.0;
    for (const Setup& setup : setups) {
        GpWorkspace ws(setup.ctx.model, setup.ctx.ode_max_step);
        for (const BridgeKind& kind : setup.kinds) {
            Rng rng(0xC7 + setup.ctx.model.d);
            int accepted = 0, attempts = 0;
            while (accepted < 1000 && attempts < 20000) {
                ++attempts;
                const auto sample = sample_bridge(setup.ctx, kind, rng, &ws);
                if (!sample) continue;
                ++accepted;
                const double lq = proposal_logpdf(setup.ctx, kind, sample->path, &ws);
                worst = std::max(worst, std::abs(lq - sample->log_q));
            }
            out.expect(accepted == 1000, setup.name + " " + kind.name() +
                                             ": only " + std::to_string(accepted) +
                                             " admissible bridges in 20000 attempts");
        }
    }
    out.note = "max |log_q mismatch| " + fmt("%.2e", worst);
    out.expect(worst <= 1e-10, "mismatch " + fmt("%.3e", worst) + " > 1e-10");
}

// ---------------------------------------------------------------------------
// Criterion 8: a repeated benchmark run produces byte-identical CSVs.

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_determinism(CheckResult& out) {
    namespace fs = std::filesystem;
    ExperimentConfig cfg;
    cfg.model_name = "birth-death";
    cfg.theta = VectorXd(2);
    cfg.theta << 0.1, 0.8;
    cfg.x0 = sc(50.0);
    cfg.T = 1.0;
    cfg.m = 20;
    cfg.endpoint_source = EndpointSource::Quantile;
    cfg.quantile_levels = {5, 50};
    cfg.oracle_replicates = 20000;
    cfg.oracle_step = 0.005;
    cfg.bridges = {BridgeKind::mdb(), BridgeKind::rbminus()};
    cfg.mcmc.iterations = 3000;
    cfg.mcmc.seed = 4242;
    cfg.mcmc.stride = 10;
    cfg.timing = false;  // timing columns are the one nondeterministic output

    const fs::path dir_a = "acceptance_det_a", dir_b = "acceptance_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    cfg.out_dir = dir_a.string();
    const BenchmarkResult ra = run_benchmark(cfg, 2);
    cfg.out_dir = dir_b.string();
    const BenchmarkResult rb = run_benchmark(cfg, 1);

    out.expect(!ra.rows.empty() && !ra.all_failed, "benchmark run failed");
    out.expect(slurp(dir_a / "summary.csv") == slurp(dir_b / "summary.csv"),
               "summary.csv differs between identical runs");
    out.expect(ra.band_files == rb.band_files, "band file sets differ");
    for (const std::string& band : ra.band_files)
        out.expect(slurp(dir_a / band) == slurp(dir_b / band), band + " differs");
    out.note = std::to_string(1 + ra.band_files.size()) + " CSVs byte-compared";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int number;
        const char* name;
        void (*fn)(CheckResult&);
    };
    const Criterion criteria[] = {
        {1, "conditioning-oracle equivalence", criterion_conditioning_oracle},
        {2, "constant-coefficient exactness", criterion_constant_exactness},
        {3, "birth-death LNA closed form vs RK4", criterion_birth_death_lna},
        {4, "endpoint quantile tables", criterion_endpoint_quantiles},
        {5, "Lotka-Volterra acceptance rates", criterion_lv_acceptance},
        {6, "qualitative orderings", criterion_orderings},
        {7, "proposal-density consistency", criterion_proposal_consistency},
        {8, "benchmark determinism", criterion_determinism},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    int executed = 0;
    for (const Criterion& c : criteria) {
        if (!selected.empty() && !selected.count(c.number)) continue;
        ++executed;
        CheckResult result;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.fn(result);
        } catch (const std::exception& e) {
            result.fail(std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = result.failures.empty();
        std::printf("[%s] %d. %s  (%s%.1fs)\n", pass ? "PASS" : "FAIL", c.number, c.name,
                    result.note.empty() ? "" : (result.note + "; ").c_str(), secs);
        for (const std::string& f : result.failures) std::printf("       %s\n", f.c_str());
        if (!pass) ++failures;
    }
    if (executed == 0) {
        std::printf("usage: acceptance [criterion numbers 1-8]\n");
        return 1;
    }
    return failures;
}
