#pragma once

#include <cmath>
#include <string>

#include "sdebridge/errors.hpp"
#include "sdebridge/random.hpp"
#include "sdebridge/sde.hpp"

namespace sdebridge {

namespace detail {

inline DiffusionModel make_birth_death(VectorXd theta) {
    DiffusionModel m;
    m.name = "birth-death";
    m.d = 1;
    m.theta = std::move(theta);
    m.drift_fn = [](const VectorXd& x, const VectorXd& th, VectorXd& out) {
        out[0] = (th[0] - th[1]) * x[0];
    };
    m.diffusion_fn = [](const VectorXd& x, const VectorXd& th, MatrixXd& out) {
        out(0, 0) = (th[0] + th[1]) * x[0];
    };
    m.jacobian_fn = [](const VectorXd&, const VectorXd& th, MatrixXd& out) {
        out(0, 0) = th[0] - th[1];
    };
    m.admissible_fn = [](const VectorXd& x) { return x[0] > 0.0; };
    // eta = x0 e^{lambda t}, P = e^{lambda t},
    // psi = (th0 + th1) x0 (1 - e^{-lambda t}) / lambda.
    m.lna_closed_form = ClosedFormLna{
        [](const VectorXd& x0, double dt, const VectorXd& th, VectorXd& eta, MatrixXd& P,
           MatrixXd& psi) {
            const double lambda = th[0] - th[1];
            const double g = std::exp(lambda * dt);
            eta[0] = x0[0] * g;
            P(0, 0) = g;
            const double scale = std::abs(lambda * dt) < 1e-12
                                     ? dt
                                     : -std::expm1(-lambda * dt) / lambda;
            psi(0, 0) = (th[0] + th[1]) * x0[0] * scale;
        }};
    return m;
}

inline DiffusionModel make_lotka_volterra(VectorXd theta) {
    DiffusionModel m;
    m.name = "lotka-volterra";
    m.d = 2;
    m.theta = std::move(theta);
    m.drift_fn = [](const VectorXd& x, const VectorXd& th, VectorXd& out) {
        const double inter = th[1] * x[0] * x[1];
        out[0] = th[0] * x[0] - inter;
        out[1] = inter - th[2] * x[1];
    };
    m.diffusion_fn = [](const VectorXd& x, const VectorXd& th, MatrixXd& out) {
        const double inter = th[1] * x[0] * x[1];
        out(0, 0) = th[0] * x[0] + inter;
        out(0, 1) = -inter;
        out(1, 0) = -inter;
        out(1, 1) = th[2] * x[1] + inter;
    };
    m.jacobian_fn = [](const VectorXd& x, const VectorXd& th, MatrixXd& out) {
        out(0, 0) = th[0] - th[1] * x[1];
        out(0, 1) = -th[1] * x[0];
        out(1, 0) = th[1] * x[1];
        out(1, 1) = th[1] * x[0] - th[2];
    };
    m.admissible_fn = [](const VectorXd& x) { return x[0] > 0.0 && x[1] > 0.0; };
    return m;
}

inline DiffusionModel make_aphid(VectorXd theta) {
    DiffusionModel m;
    m.name = "aphid";
    m.d = 2;
    m.theta = std::move(theta);
    // State (N, C): population size and cumulative population size.
    m.drift_fn = [](const VectorXd& x, const VectorXd& th, VectorXd& out) {
        out[0] = th[0] * x[0] - th[1] * x[0] * x[1];
        out[1] = th[0] * x[0];
    };
    m.diffusion_fn = [](const VectorXd& x, const VectorXd& th, MatrixXd& out) {
        const double births = th[0] * x[0];
        out(0, 0) = births + th[1] * x[0] * x[1];
        out(0, 1) = births;
        out(1, 0) = births;
        out(1, 1) = births;
    };
    m.jacobian_fn = [](const VectorXd& x, const VectorXd& th, MatrixXd& out) {
        out(0, 0) = th[0] - th[1] * x[1];
        out(0, 1) = -th[1] * x[0];
        out(1, 0) = th[0];
        out(1, 1) = 0.0;
    };
    m.admissible_fn = [](const VectorXd& x) { return x[0] > 0.0 && x[1] > 0.0; };
    return m;
}

}  // namespace detail

/// The benchmark diffusions by name: "birth-death" (theta = birth, death
/// rates), "lotka-volterra" (prey reproduction, interaction, predator death)
/// and "aphid" (birth, death). Only birth-death registers a closed-form LNA.
inline DiffusionModel make_model(const std::string& name, VectorXd theta) {
    auto expect = [&](Eigen::Index p) {
        if (theta.size() != p)
            throw BadParameterCount(name + ": expected " + std::to_string(p) +
                                    " parameters, got " + std::to_string(theta.size()));
    };
    if (name == "birth-death") {
        expect(2);
        return detail::make_birth_death(std::move(theta));
    }
    if (name == "lotka-volterra") {
        expect(3);
        return detail::make_lotka_volterra(std::move(theta));
    }
    if (name == "aphid") {
        expect(2);
        return detail::make_aphid(std::move(theta));
    }
    throw UnknownModel("unknown model '" + name +
                       "'; valid: birth-death, lotka-volterra, aphid");
}

/// Compare the registered drift Jacobian against central finite differences
/// of the drift at states sampled uniformly from [lo, hi]^d. Returns the
/// worst error relative to the Jacobian scale.
inline double jacobian_selfcheck(const DiffusionModel& model, int samples, std::uint64_t seed,
                                 double lo = 1.0, double hi = 500.0) {
    Rng rng(seed);
    VectorXd x(model.d), xp(model.d), xm(model.d), fp(model.d), fm(model.d);
    MatrixXd H(model.d, model.d);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        for (int i = 0; i < model.d; ++i) x[i] = lo + (hi - lo) * rng.uniform();
        if (!model.admissible(x)) continue;
        model.jacobian_into(x, H);
        const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
        for (int j = 0; j < model.d; ++j) {
            const double h = 1e-4 * std::max(1.0, std::abs(x[j]));
            xp = x;
            xm = x;
            xp[j] += h;
            xm[j] -= h;
            model.drift_into(xp, fp);
            model.drift_into(xm, fm);
            for (int i = 0; i < model.d; ++i) {
                const double fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = std::max(worst, std::abs(H(i, j) - fd) / scale);
            }
        }
    }
    return worst;
}

}  // namespace sdebridge
