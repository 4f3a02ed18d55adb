#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sdebridge/errors.hpp"
#include "sdebridge/gaussian.hpp"
#include "sdebridge/ode.hpp"
#include "sdebridge/sde.hpp"

namespace sdebridge {

/// Symmetrize and clamp a nearly-PSD matrix. Eigenvalues in [-neg_tol, 0) are
/// clamped to zero; anything below -neg_tol throws.
inline MatrixXd clamp_psd(const MatrixXd& m, double neg_tol = 1e-8) {
    MatrixXd s = symmetrized(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
    const VectorXd& ev = eig.eigenvalues();
    if (ev.minCoeff() >= 0.0) return s;
    if (ev.minCoeff() < -neg_tol)
        throw Error("clamp_psd: eigenvalue " + std::to_string(ev.minCoeff()) +
                    " below tolerance");
    VectorXd clamped = ev.cwiseMax(0.0);
    return symmetrized(eig.eigenvectors() * clamped.asDiagonal() *
                       eig.eigenvectors().transpose());
}

/// Deterministic backbone of the linear noise approximation on a grid:
/// eta (drift ODE solution), fundamental matrix P and scaled covariance psi,
/// all relative to the integration origin where P = I and psi = 0.
struct LnaSolution {
    TimeGrid grid;
    double origin_time = 0.0;
    VectorXd origin_state;
    std::vector<VectorXd> eta;
    std::vector<MatrixXd> P;
    std::vector<MatrixXd> psi;
};

/// Conditioned-residual mean track rho_hat on the grid, with
/// rho_hat_t = P_t psi_t P_T' F (F' P_T psi_T P_T' F + Sigma)^{-1} (y - F' eta_T).
struct RhoHatTrack {
    std::vector<VectorXd> rho;
};

/// LNA quantities propagated to the horizon from an intermediate state:
/// eta_end = eta(T), P = P_{T|t}, psi = psi_{T|t}.
struct LnaTransition {
    VectorXd eta_end;
    MatrixXd P;
    MatrixXd psi;
};

namespace detail {

/// In-place LU with partial pivoting for the small dense systems in the LNA
/// right-hand side. Storage is owned by the object so repeated factorisations
/// do not allocate.
class SmallLu {
  public:
    explicit SmallLu(int n) : n_(n), a_(n, n), piv_(n) {}

    void factor(const MatrixXd& a) {
        a_ = a;
        double max_pivot = 0.0;
        double min_pivot = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n_; ++j) {
            int p = j;
            for (int i = j + 1; i < n_; ++i)
                if (std::abs(a_(i, j)) > std::abs(a_(p, j))) p = i;
            piv_[j] = p;
            if (p != j) a_.row(p).swap(a_.row(j));
            const double pivot = std::abs(a_(j, j));
            max_pivot = std::max(max_pivot, pivot);
            min_pivot = std::min(min_pivot, pivot);
            if (pivot == 0.0 || max_pivot / pivot > 1e12)
                throw SingularFundamentalMatrix("fundamental matrix numerically singular");
            const double inv = 1.0 / a_(j, j);
            for (int i = j + 1; i < n_; ++i) {
                const double f = a_(i, j) * inv;
                a_(i, j) = f;
                for (int k = j + 1; k < n_; ++k) a_(i, k) -= f * a_(j, k);
            }
        }
    }

    void solve_in_place(VectorXd& b) const {
        for (int j = 0; j < n_; ++j)
            if (piv_[j] != j) std::swap(b[piv_[j]], b[j]);
        for (int i = 1; i < n_; ++i)
            for (int k = 0; k < i; ++k) b[i] -= a_(i, k) * b[k];
        for (int i = n_ - 1; i >= 0; --i) {
            for (int k = i + 1; k < n_; ++k) b[i] -= a_(i, k) * b[k];
            b[i] /= a_(i, i);
        }
    }

    void solve_in_place(MatrixXd& b) const {
        for (int j = 0; j < n_; ++j)
            if (piv_[j] != j) b.row(piv_[j]).swap(b.row(j));
        for (Eigen::Index c = 0; c < b.cols(); ++c) {
            for (int i = 1; i < n_; ++i)
                for (int k = 0; k < i; ++k) b(i, c) -= a_(i, k) * b(k, c);
            for (int i = n_ - 1; i >= 0; --i) {
                for (int k = i + 1; k < n_; ++k) b(i, c) -= a_(i, k) * b(k, c);
                b(i, c) /= a_(i, i);
            }
        }
    }

  private:
    int n_;
    MatrixXd a_;
    std::vector<int> piv_;
};

}  // namespace detail

/// RK4 integrator for the coupled LNA system
///   deta/dt = alpha(eta),  dP/dt = H(eta) P,  dpsi/dt = P^{-1} beta(eta) P^{-T}.
/// Owns all workspace, so repeated calls do not allocate; this is the hot
/// kernel behind the per-interval guided proposals.
class LnaIntegrator {
  public:
    explicit LnaIntegrator(const DiffusionModel& model, double max_step = 0.01)
        : model_(&model),
          max_step_(max_step),
          lu_(model.d),
          H_(model.d, model.d),
          beta_(model.d, model.d),
          a_(model.d, model.d),
          at_(model.d, model.d),
          eta_s_(model.d),
          P_s_(model.d, model.d) {
        for (int s = 0; s < 4; ++s) {
            ke_[s].resize(model.d);
            kP_[s].resize(model.d, model.d);
            kpsi_[s].resize(model.d, model.d);
        }
    }

    double max_step() const { return max_step_; }

    /// Advance (eta, P, psi) from t0 to t1 using nsub equal RK4 substeps.
    void advance(double t0, double t1, int nsub, VectorXd& eta, MatrixXd& P, MatrixXd& psi) {
        const double h = (t1 - t0) / nsub;
        const int d = model_->d;
        const int n2 = d * d;
        auto stage_state = [&](const VectorXd& e_in, const MatrixXd& P_in, int stage, double w) {
            const double* e = e_in.data();
            const double* p = P_in.data();
            const double* ke = ke_[stage].data();
            const double* kp = kP_[stage].data();
            double* es = eta_s_.data();
            double* ps = P_s_.data();
            for (int i = 0; i < d; ++i) es[i] = e[i] + w * ke[i];
            for (int i = 0; i < n2; ++i) ps[i] = p[i] + w * kp[i];
        };
        for (int i = 0; i < nsub; ++i) {
            rhs(eta, P, 0);
            stage_state(eta, P, 0, 0.5 * h);
            rhs(eta_s_, P_s_, 1);
            stage_state(eta, P, 1, 0.5 * h);
            rhs(eta_s_, P_s_, 2);
            stage_state(eta, P, 2, h);
            rhs(eta_s_, P_s_, 3);
            const double w = h / 6.0;
            double* e = eta.data();
            double* p = P.data();
            double* s = psi.data();
            for (int j = 0; j < d; ++j)
                e[j] += w * (ke_[0][j] + 2.0 * (ke_[1][j] + ke_[2][j]) + ke_[3][j]);
            for (int j = 0; j < n2; ++j)
                p[j] += w * (kP_[0].data()[j] + 2.0 * (kP_[1].data()[j] + kP_[2].data()[j]) +
                             kP_[3].data()[j]);
            for (int j = 0; j < n2; ++j)
                s[j] += w * (kpsi_[0].data()[j] +
                             2.0 * (kpsi_[1].data()[j] + kpsi_[2].data()[j]) +
                             kpsi_[3].data()[j]);
        }
        if (!eta.allFinite() || !P.allFinite() || !psi.allFinite())
            throw NonFiniteState("lna: non-finite state at t = " + std::to_string(t1));
    }

    /// Integrate on [t, t_end] from eta(t) = x with P = I, psi = 0, slicing
    /// the interval as substeps_for() prescribes.
    LnaTransition propagate(const VectorXd& x, double t, double t_end) {
        LnaTransition out;
        out.eta_end = x;
        out.P = MatrixXd::Identity(model_->d, model_->d);
        out.psi = MatrixXd::Zero(model_->d, model_->d);
        const int n = substeps_for(t_end - t, max_step_);
        if (n > 0) advance(t, t_end, n, out.eta_end, out.P, out.psi);
        return out;
    }

  private:
    void rhs(const VectorXd& eta, const MatrixXd& P, int stage) {
        model_->drift_into(eta, ke_[stage]);
        model_->jacobian_into(eta, H_);
        model_->diffusion_into(eta, beta_);
        const int d = model_->d;
        if (d == 1) {
            kP_[stage](0, 0) = H_(0, 0) * P(0, 0);
            const double p = P(0, 0);
            if (std::abs(p) < 1e-300)
                throw SingularFundamentalMatrix("fundamental matrix numerically singular");
            kpsi_[stage](0, 0) = beta_(0, 0) / (p * p);
            return;
        }
        if (d == 2) {
            // Closed-form 2x2 kernels: dP = H P, dpsi = P^{-1} beta P^{-T}.
            const double p00 = P(0, 0), p10 = P(1, 0), p01 = P(0, 1), p11 = P(1, 1);
            MatrixXd& kP = kP_[stage];
            kP(0, 0) = H_(0, 0) * p00 + H_(0, 1) * p10;
            kP(1, 0) = H_(1, 0) * p00 + H_(1, 1) * p10;
            kP(0, 1) = H_(0, 0) * p01 + H_(0, 1) * p11;
            kP(1, 1) = H_(1, 0) * p01 + H_(1, 1) * p11;
            const double det = p00 * p11 - p01 * p10;
            const double scale = std::max({std::abs(p00), std::abs(p01), std::abs(p10),
                                           std::abs(p11)});
            if (!(std::abs(det) > 1e-12 * scale * scale))
                throw SingularFundamentalMatrix("fundamental matrix numerically singular");
            const double inv = 1.0 / det;
            const double i00 = p11 * inv, i01 = -p01 * inv;
            const double i10 = -p10 * inv, i11 = p00 * inv;
            const double b00 = beta_(0, 0), b01 = beta_(0, 1), b11 = beta_(1, 1);
            // A = P^{-1} beta (beta symmetric), then kpsi = A P^{-T}.
            const double a00 = i00 * b00 + i01 * b01;
            const double a01 = i00 * b01 + i01 * b11;
            const double a10 = i10 * b00 + i11 * b01;
            const double a11 = i10 * b01 + i11 * b11;
            MatrixXd& kpsi = kpsi_[stage];
            kpsi(0, 0) = a00 * i00 + a01 * i01;
            kpsi(1, 1) = a10 * i10 + a11 * i11;
            const double off = 0.5 * ((a00 * i10 + a01 * i11) + (a10 * i00 + a11 * i01));
            kpsi(0, 1) = off;
            kpsi(1, 0) = off;
            return;
        }
        kP_[stage].noalias() = H_ * P;
        lu_.factor(P);
        a_ = beta_;
        lu_.solve_in_place(a_);  // P^{-1} beta
        at_ = a_.transpose();
        lu_.solve_in_place(at_);  // P^{-1} (P^{-1} beta)'
        kpsi_[stage] = 0.5 * (at_ + at_.transpose());
    }

    const DiffusionModel* model_;
    double max_step_;
    detail::SmallLu lu_;
    MatrixXd H_, beta_, a_, at_;
    VectorXd eta_s_, ke_[4];
    MatrixXd P_s_, kP_[4], kpsi_[4];
};

/// Solve the LNA system over the whole grid from eta(0) = x0, P(0) = I,
/// psi(0) = 0. Uses the model's closed form when registered, the RK4
/// integrator otherwise.
inline LnaSolution solve_lna(const DiffusionModel& model, const VectorXd& x0,
                             const TimeGrid& grid, double max_step = 0.01) {
    if (!model.admissible(x0)) throw InadmissibleState("solve_lna: origin state inadmissible");
    LnaSolution out;
    out.grid = grid;
    out.origin_time = 0.0;
    out.origin_state = x0;
    out.eta.reserve(grid.nodes());
    out.P.reserve(grid.nodes());
    out.psi.reserve(grid.nodes());

    if (model.lna_closed_form) {
        VectorXd eta(model.d);
        MatrixXd P(model.d, model.d), psi(model.d, model.d);
        for (int k = 0; k <= grid.m; ++k) {
            model.lna_closed_form->eval(x0, grid.time(k), model.theta, eta, P, psi);
            out.eta.push_back(eta);
            out.P.push_back(P);
            out.psi.push_back(k == 0 ? MatrixXd::Zero(model.d, model.d).eval()
                                     : clamp_psd(psi));
        }
        return out;
    }

    LnaIntegrator integ(model, max_step);
    const int nsub = substeps_for(grid.dtau(), max_step);
    VectorXd eta = x0;
    MatrixXd P = MatrixXd::Identity(model.d, model.d);
    MatrixXd psi = MatrixXd::Zero(model.d, model.d);
    out.eta.push_back(eta);
    out.P.push_back(P);
    out.psi.push_back(psi);
    for (int k = 0; k < grid.m; ++k) {
        integ.advance(grid.time(k), grid.time(k + 1), nsub, eta, P, psi);
        out.eta.push_back(eta);
        out.P.push_back(P);
        out.psi.push_back(clamp_psd(psi));
    }
    return out;
}

/// Mean of the endpoint-conditioned LNA residual along the grid. Throws
/// SingularObservationBlock when F' P_T psi_T P_T' F + Sigma cannot be
/// factorised (e.g. a degenerate exact-regime observation).
inline RhoHatTrack rho_hat(const LnaSolution& lna, const ObservationModel& obs,
                           const VectorXd& y) {
    const int m = lna.grid.m;
    const MatrixXd& P_T = lna.P[m];
    const MatrixXd& psi_T = lna.psi[m];
    const MatrixXd G = obs.F.transpose() * P_T;  // d_o x d
    const MatrixXd S = symmetrized(G * psi_T * G.transpose() + obs.Sigma);
    MatrixXd L;
    try {
        L = cholesky_lower(S);
    } catch (const NotPositiveDefinite&) {
        throw SingularObservationBlock("rho_hat: endpoint predictive block not factorisable");
    }
    if (!detail::strictly_positive_diagonal(L))
        throw SingularObservationBlock("rho_hat: endpoint predictive block is singular");
    VectorXd w = y - obs.F.transpose() * lna.eta[m];
    detail::chol_solve_in_place(L, w);
    const VectorXd gain = G.transpose() * w;  // P_T' F S^{-1} (y - F' eta_T)
    RhoHatTrack out;
    out.rho.reserve(m + 1);
    for (int k = 0; k <= m; ++k) out.rho.push_back(lna.P[k] * (lna.psi[k] * gain));
    return out;
}

/// Horizon quantities via the propagation identities P_{T|t} = P_T P_t^{-1}
/// and psi_{T|t} = P_t (psi_T - psi_t) P_t', from a single whole-interval
/// solve.
inline LnaTransition lna_transition_terms(const LnaSolution& lna, int k) {
    const int m = lna.grid.m;
    LnaTransition out;
    out.eta_end = lna.eta[m];
    Eigen::PartialPivLU<MatrixXd> lu(lna.P[k].transpose());
    out.P = lu.solve(lna.P[m].transpose()).transpose();
    out.psi = symmetrized(lna.P[k] * (lna.psi[m] - lna.psi[k]) * lna.P[k].transpose());
    return out;
}

/// Horizon quantities by direct re-integration of the LNA system on [t, T]
/// with eta(t) = x_t, P = I, psi = 0.
inline LnaTransition lna_transition_terms(const DiffusionModel& model, const VectorXd& x_t,
                                          double t, double T, double max_step = 0.01) {
    if (model.lna_closed_form) {
        LnaTransition out;
        out.eta_end.resize(model.d);
        out.P.resize(model.d, model.d);
        out.psi.resize(model.d, model.d);
        model.lna_closed_form->eval(x_t, T - t, model.theta, out.eta_end, out.P, out.psi);
        return out;
    }
    LnaIntegrator integ(model, max_step);
    return integ.propagate(x_t, t, T);
}

}  // namespace sdebridge
