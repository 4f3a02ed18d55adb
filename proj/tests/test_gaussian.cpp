#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sdebridge/gaussian.hpp"
#include "sdebridge/model_zoo.hpp"
#include "sdebridge/random.hpp"

using namespace sdebridge;

TEST_CASE("cholesky_lower handles identity and diagonal matrices") {
    MatrixXd I = MatrixXd::Identity(2, 2);
    REQUIRE((cholesky_lower(I) - I).cwiseAbs().maxCoeff() == 0.0);

    MatrixXd D(2, 2);
    D << 4.0, 0.0, 0.0, 9.0;
    MatrixXd L = cholesky_lower(D);
    REQUIRE(L(0, 0) == 2.0);
    REQUIRE(L(1, 1) == 3.0);
    REQUIRE(L(0, 1) == 0.0);
    REQUIRE(L(1, 0) == 0.0);
}

TEST_CASE("cholesky_lower recomposes the Lotka-Volterra diffusion matrix") {
    VectorXd theta(3);
    theta << 0.5, 0.0025, 0.3;
    const DiffusionModel model = make_model("lotka-volterra", theta);
    VectorXd x(2);
    x << 71.0, 79.0;
    const MatrixXd beta = model.diffusion(x);
    const MatrixXd L = cholesky_lower(beta);
    REQUIRE((L * L.transpose() - beta).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(L(0, 1) == 0.0);
    REQUIRE(L(0, 0) >= 0.0);
    REQUIRE(L(1, 1) >= 0.0);
}

TEST_CASE("cholesky_lower recomposition holds at random admissible states") {
    VectorXd theta(3);
    theta << 0.5, 0.0025, 0.3;
    const DiffusionModel model = make_model("lotka-volterra", theta);
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        VectorXd x(2);
        x << 1.0 + 999.0 * rng.uniform(), 1.0 + 999.0 * rng.uniform();
        const MatrixXd beta = model.diffusion(x);
        const MatrixXd L = cholesky_lower(beta);
        REQUIRE((L * L.transpose() - beta).cwiseAbs().maxCoeff() < 1e-10 * beta.norm());
    }
}

TEST_CASE("cholesky_lower clamps PSD input and rejects indefinite input") {
    REQUIRE(cholesky_lower(MatrixXd::Zero(3, 3)).cwiseAbs().maxCoeff() == 0.0);

    MatrixXd rank1(2, 2);
    rank1 << 1.0, 1.0, 1.0, 1.0;
    const MatrixXd L = cholesky_lower(rank1);
    REQUIRE((L * L.transpose() - rank1).cwiseAbs().maxCoeff() < 1e-12);

    MatrixXd indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    REQUIRE_THROWS_AS(cholesky_lower(indefinite), NotPositiveDefinite);
}

TEST_CASE("gaussian_logpdf standard normal at the mode") {
    VectorXd z = VectorXd::Zero(1);
    const double got = gaussian_logpdf(z, z, MatrixXd::Identity(1, 1));
    REQUIRE(got == Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("gaussian_logpdf at the mean only sees the normalising constant") {
    MatrixXd cov(3, 3);
    cov << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1;
    VectorXd mean(3);
    mean << 1.0, -2.0, 0.5;
    const double expected = -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) +
                                    std::log(cov.determinant()));
    REQUIRE(gaussian_logpdf(mean, mean, cov) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gaussian_logpdf matches a dense-inverse evaluation") {
    MatrixXd cov(3, 3);
    cov << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1;
    VectorXd mean(3), x(3);
    mean << 1.0, -2.0, 0.5;
    x << 0.2, -1.1, 1.4;
    // Independent route: explicit inverse and determinant via full-pivot LU.
    Eigen::FullPivLU<MatrixXd> lu(cov);
    const VectorXd r = x - mean;
    const double expected = -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) +
                                    std::log(lu.determinant()) +
                                    r.dot(lu.inverse() * r));
    REQUIRE(gaussian_logpdf(x, mean, cov) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gaussian_logpdf rejects singular covariance") {
    MatrixXd cov = MatrixXd::Zero(2, 2);
    cov(0, 0) = 1.0;
    REQUIRE_THROWS_AS(gaussian_logpdf(VectorXd::Zero(2), VectorXd::Zero(2), cov),
                      NotPositiveDefinite);
}

TEST_CASE("gaussian_condition leaves independent blocks untouched") {
    VectorXd mean(3);
    mean << 1.0, 2.0, 5.0;
    MatrixXd cov = MatrixXd::Zero(3, 3);
    cov(0, 0) = 2.0;
    cov(1, 1) = 3.0;
    cov(0, 1) = cov(1, 0) = 0.5;
    cov(2, 2) = 4.0;
    VectorXd obs(1);
    obs << 9.0;
    const GaussianStep step = gaussian_condition(mean, cov, obs);
    REQUIRE((step.mean - mean.head(2)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((step.cov - cov.topLeftCorner(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian_condition reproduces the bivariate textbook case") {
    VectorXd mean = VectorXd::Zero(2);
    MatrixXd cov(2, 2);
    cov << 1.0, 0.5, 0.5, 1.0;
    VectorXd obs(1);
    obs << 1.0;
    const GaussianStep step = gaussian_condition(mean, cov, obs);
    REQUIRE(step.mean[0] == Catch::Approx(0.5).epsilon(1e-14));
    REQUIRE(step.cov(0, 0) == Catch::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("gaussian_condition matches brute-force block algebra") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        MatrixXd A(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) A(i, j) = 2.0 * rng.uniform() - 1.0;
        const MatrixXd cov = A * A.transpose() + 0.5 * MatrixXd::Identity(4, 4);
        VectorXd mean(4), obs(2);
        for (int i = 0; i < 4; ++i) mean[i] = rng.normal();
        for (int i = 0; i < 2; ++i) obs[i] = rng.normal();
        const GaussianStep step = gaussian_condition(mean, cov, obs);

        const MatrixXd s22inv = cov.bottomRightCorner(2, 2).inverse();
        const VectorXd mean_ref =
            mean.head(2) + cov.topRightCorner(2, 2) * s22inv * (obs - mean.tail(2));
        const MatrixXd cov_ref =
            cov.topLeftCorner(2, 2) -
            cov.topRightCorner(2, 2) * s22inv * cov.bottomLeftCorner(2, 2);
        REQUIRE((step.mean - mean_ref).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((step.cov - cov_ref).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gaussian_condition rejects a singular observed block") {
    VectorXd mean = VectorXd::Zero(2);
    MatrixXd cov = MatrixXd::Zero(2, 2);
    cov(0, 0) = 1.0;
    VectorXd obs(1);
    obs << 0.5;
    REQUIRE_THROWS_AS(gaussian_condition(mean, cov, obs), SingularObservationBlock);
}
