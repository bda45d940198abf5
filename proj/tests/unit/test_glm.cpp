#include <doctest.h>

#include "pathfx/glm.hpp"
#include "pathfx/rng.hpp"
#include "pathfx/special.hpp"

#include <cmath>

using namespace pathfx;

namespace {

struct Fixture {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Fixture reference_logit_data() {
  Fixture f;
  f.X.resize(20, 2);
  f.y.resize(20);
  const int ys[20] = {0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1};
  for (int i = 0; i < 20; ++i) {
    f.X(i, 0) = 1.0;
    f.X(i, 1) = i / 10.0 - 1.0;
    f.y(i) = ys[i];
  }
  return f;
}

// Plain Newton-Raphson on the logistic log-likelihood with an explicit Hessian.
Eigen::VectorXd newton_logit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd p(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) p(i) = 1.0 / (1.0 + std::exp(-X.row(i).dot(b)));
    const Eigen::VectorXd g = X.transpose() * (y - p);
    const Eigen::MatrixXd H = X.transpose() * (p.array() * (1 - p.array())).matrix().asDiagonal() * X;
    const Eigen::VectorXd step = H.llt().solve(g);
    b += step;
    if (step.norm() < 1e-14) break;
  }
  return b;
}

Fixture random_regression(int n, int p, std::uint64_t seed, bool binary) {
  StreamRng rng(seed, 0);
  Fixture f;
  f.X.resize(n, p);
  f.y.resize(n);
  Eigen::VectorXd beta(p);
  for (int k = 0; k < p; ++k) beta(k) = 0.5 - 0.3 * k;
  for (int i = 0; i < n; ++i) {
    f.X(i, 0) = 1.0;
    for (int k = 1; k < p; ++k) f.X(i, k) = rng.normal();
    const double eta = f.X.row(i).dot(beta);
    f.y(i) = binary ? (rng.uniform() < expit(eta) ? 1.0 : 0.0) : eta + rng.normal();
  }
  return f;
}

}  // namespace

TEST_CASE("OLS matches the normal equations") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fixture f = random_regression(200, 4, seed, false);
    const FittedGlm fit = fit_ols(f.X, f.y);
    const Eigen::VectorXd ne = (f.X.transpose() * f.X).ldlt().solve(f.X.transpose() * f.y);
    CHECK((fit.coefficients - ne).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::VectorXd r = f.y - f.X * ne;
    CHECK(fit.sigma2 == doctest::Approx(r.squaredNorm() / 200.0).epsilon(1e-12));
  }
}

TEST_CASE("weighted OLS matches weighted normal equations") {
  const Fixture f = random_regression(150, 3, 9, false);
  StreamRng rng(9, 1);
  Eigen::VectorXd w(150);
  for (auto& v : w) v = rng.exponential();
  const FittedGlm fit = fit_ols(f.X, f.y, w);
  const Eigen::MatrixXd XtW = f.X.transpose() * w.asDiagonal();
  const Eigen::VectorXd ne = (XtW * f.X).ldlt().solve(XtW * f.y);
  CHECK((fit.coefficients - ne).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((solve_weighted_normal_equations(f.X, f.y, w) - ne).cwiseAbs().maxCoeff() < 1e-10);

  // Mixed-sign weights still solve X'WXb = X'Wy.
  Eigen::VectorXd mixed = w;
  mixed(0) = -0.3;
  mixed(5) = -0.2;
  const Eigen::MatrixXd XtM = f.X.transpose() * mixed.asDiagonal();
  const Eigen::VectorXd b = solve_weighted_normal_equations(f.X, f.y, mixed);
  CHECK((XtM * (f.y - f.X * b)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("logistic IRLS matches Newton") {
  const Fixture ref = reference_logit_data();
  const FittedGlm fit = fit_glm(ref.X, ref.y, Family::BinomialLogit);
  CHECK(fit.converged);
  CHECK(fit.coefficients(0) == doctest::Approx(0.5990881071947534).epsilon(1e-9));
  CHECK(fit.coefficients(1) == doctest::Approx(1.8087858161401653).epsilon(1e-9));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fixture f = random_regression(500, 4, seed, true);
    const FittedGlm g = fit_glm(f.X, f.y, Family::BinomialLogit);
    CHECK((g.coefficients - newton_logit(f.X, f.y)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("probit IRLS matches a reference fit") {
  const Fixture ref = reference_logit_data();
  const FittedGlm fit = fit_glm(ref.X, ref.y, Family::BinomialProbit);
  CHECK(fit.converged);
  CHECK(fit.coefficients(0) == doctest::Approx(0.35456722062047985).epsilon(1e-5));
  CHECK(fit.coefficients(1) == doctest::Approx(1.0984990840394422).epsilon(1e-5));
  const ScoreInformation si = score_and_information(fit, ref.X, ref.y);
  CHECK(si.score.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("intercept-only fits") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(10, 1);
  Eigen::VectorXd y(10);
  y << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0;
  const FittedGlm lg = fit_glm(X, y, Family::BinomialLogit);
  CHECK(std::abs(lg.coefficients(0) - logit(0.3)) < 1e-12);

  Eigen::VectorXd half(10);
  half << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const FittedGlm pb = fit_glm(X, half, Family::BinomialProbit);
  CHECK(std::abs(pb.coefficients(0)) < 1e-12);
}

TEST_CASE("score is zero at the MLE and rows sum to the score") {
  const Fixture f = random_regression(300, 3, 4, true);
  const FittedGlm fit = fit_glm(f.X, f.y, Family::BinomialLogit);
  const ScoreInformation si = score_and_information(fit, f.X, f.y);
  CHECK(si.score.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((si.row_scores.colwise().sum().transpose() - si.score).norm() < 1e-12);
  CHECK(si.information.rows() == 3);
  CHECK(si.information.llt().info() == Eigen::Success);
}

TEST_CASE("fit errors") {
  Eigen::MatrixXd X(6, 3);
  X << 1, 0, 0, 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
  Eigen::VectorXd y(6);
  y << 1, 2, 3, 4, 5, 7;
  CHECK_THROWS_AS(fit_ols(X, y), FitError);

  Eigen::MatrixXd Xs(6, 2);
  Xs << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd sep(6);
  sep << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(fit_glm(Xs, sep, Family::BinomialLogit), FitError);

  Eigen::VectorXd notbin(6);
  notbin << 0, 1.5, 0, 1, 1, 1;
  CHECK_THROWS_AS(fit_glm(Xs, notbin, Family::BinomialLogit), FitError);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
  w(2) = -1.0;
  CHECK_THROWS(fit_ols(Xs, y, w));
}

TEST_CASE("family names") {
  CHECK(parse_family("logit") == Family::BinomialLogit);
  CHECK(parse_family("probit") == Family::BinomialProbit);
  CHECK(parse_family("gaussian") == Family::GaussianIdentity);
  CHECK_THROWS_AS(parse_family("poisson"), ConfigError);
  CHECK(to_string(Family::BinomialProbit) == "probit");
  CHECK(inverse_link(Family::BinomialProbit, 0.9) == doctest::Approx(0.8159398746532405).epsilon(1e-13));
}

TEST_CASE("information matches direct and finite-difference oracles") {
  const Fixture g = random_regression(120, 3, 2, false);
  const FittedGlm ols = fit_ols(g.X, g.y);
  const ScoreInformation gi = score_and_information(ols, g.X, g.y);
  CHECK((gi.information - g.X.transpose() * g.X / ols.sigma2).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit_glm(g.X, g.y, Family::GaussianIdentity).coefficients - ols.coefficients).norm() < 1e-12);

  const Fixture f = random_regression(400, 3, 3, true);
  const FittedGlm fit = fit_glm(f.X, f.y, Family::BinomialLogit);
  const ScoreInformation si = score_and_information(fit, f.X, f.y);
  // Central differences of the log-likelihood gradient X'(y - p), coded here independently.
  auto gradient = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd p(f.X.rows());
    for (Eigen::Index i = 0; i < f.X.rows(); ++i) p(i) = 1.0 / (1.0 + std::exp(-f.X.row(i).dot(beta)));
    return Eigen::VectorXd(f.X.transpose() * (f.y - p));
  };
  const double h = 1e-5;
  Eigen::MatrixXd hess(3, 3);
  for (int b = 0; b < 3; ++b) {
    Eigen::VectorXd up = fit.coefficients, down = fit.coefficients;
    up(b) += h;
    down(b) -= h;
    hess.col(b) = (gradient(up) - gradient(down)) / (2 * h);
  }
  CHECK(((-hess) - si.information).cwiseAbs().maxCoeff() / si.information.cwiseAbs().maxCoeff() < 1e-5);

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(400);
  CHECK((fit_glm(f.X, f.y, Family::BinomialLogit, ones).coefficients - fit.coefficients).norm() < 1e-12);
}
