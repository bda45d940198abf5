#include "pathfx/glm.hpp"

#include "pathfx/special.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pathfx {

std::string to_string(Family f) {
  switch (f) {
    case Family::GaussianIdentity:
      return "gaussian";
    case Family::BinomialLogit:
      return "logit";
    case Family::BinomialProbit:
      return "probit";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "gaussian" || name == "gaussian-identity" || name == "linear") return Family::GaussianIdentity;
  if (name == "logit" || name == "binomial-logit" || name == "logistic") return Family::BinomialLogit;
  if (name == "probit" || name == "binomial-probit") return Family::BinomialProbit;
  throw ConfigError("unknown family '" + name + "' (gaussian, logit, probit)");
}

namespace {

void check_dims(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::optional<Eigen::VectorXd>& w) {
  if (X.rows() != y.size())
    throw FitError("dimension mismatch: X has " + std::to_string(X.rows()) + " rows, y has " +
                   std::to_string(y.size()));
  if (w && w->size() != y.size()) throw FitError("dimension mismatch: weights length differs from y");
  if (X.rows() < X.cols())
    throw FitError("fewer rows (" + std::to_string(X.rows()) + ") than columns (" +
                   std::to_string(X.cols()) + ")");
  if (w && (w->array() < 0.0).any()) throw FitError("negative weights");
}

// Weighted least squares of y on X with non-negative weights; throws on rank deficiency.
Eigen::VectorXd wls_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* w,
                          double rank_tol) {
  Eigen::MatrixXd A = X;
  Eigen::VectorXd b = y;
  if (w) {
    const Eigen::VectorXd s = w->array().sqrt();
    A = s.asDiagonal() * X;
    b = s.cwiseProduct(y);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(rank_tol);
  if (qr.rank() < X.cols()) {
    const auto bad = qr.colsPermutation().indices()(qr.rank());
    throw FitError("rank deficient design: column " + std::to_string(bad) + " is (nearly) collinear, rank " +
                   std::to_string(qr.rank()) + " of " + std::to_string(X.cols()));
  }
  return qr.solve(b);
}

struct LinkParts {
  double mu;
  double dmu;  // d mu / d eta
  double var;  // mu (1 - mu)
};

LinkParts binomial_parts(Family f, double eta) {
  if (f == Family::BinomialLogit) {
    const double mu = expit(eta);
    const double one_minus = expit(-eta);
    return {mu, mu * one_minus, mu * one_minus};
  }
  const double mu = normal_cdf(eta);
  const double one_minus = normal_cdf(-eta);
  return {mu, normal_pdf(eta), mu * one_minus};
}

double log_cdf(Family f, double eta) {
  if (f == Family::BinomialLogit) return eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
  const double c = normal_cdf(eta);
  return c > 0.0 ? std::log(c) : -0.5 * eta * eta - std::log(-eta) - 0.5 * std::log(2.0 * M_PI);
}

double binomial_loglik(Family f, const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd* w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double wi = w ? (*w)(i) : 1.0;
    if (wi == 0.0) continue;
    double term = 0.0;
    if (y(i) != 0.0) term += y(i) * log_cdf(f, eta(i));
    if (y(i) != 1.0) term += (1.0 - y(i)) * log_cdf(f, -eta(i));
    ll += wi * term;
  }
  return ll;
}

}  // namespace

FittedGlm fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::optional<Eigen::VectorXd>& w,
                  double rank_tol) {
  check_dims(X, y, w);
  FittedGlm fit;
  fit.family = Family::GaussianIdentity;
  fit.coefficients = wls_solve(X, y, w ? &*w : nullptr, rank_tol);
  fit.converged = true;
  fit.iterations = 1;
  const Eigen::VectorXd r = y - X * fit.coefficients;
  if (w) {
    const double sw = w->sum();
    fit.sigma2 = sw > 0 ? w->dot(r.cwiseAbs2()) / sw : 0.0;
  } else {
    fit.sigma2 = r.squaredNorm() / static_cast<double>(y.size());
  }
  fit.weights_used = w;
  return fit;
}

FittedGlm fit_glm_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                       const std::optional<Eigen::VectorXd>& w, const IrlsOptions& opts) {
  if (!is_binomial(family)) return fit_ols(X, y, w, opts.rank_tol);
  check_dims(X, y, w);
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
    throw FitError("binomial family requires responses in [0,1]");
  const Eigen::VectorXd* wp = w ? &*w : nullptr;
  const double total_weight = w ? w->sum() : static_cast<double>(y.size());
  // The score is a sum over rows, so its rounding floor grows with the total weight.
  const double score_tol = opts.tol * std::max(1.0, total_weight);

  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = binomial_loglik(family, eta, y, wp);
  Eigen::VectorXd working_w(n), z(n), score_w(n);
  int iter = 0;
  bool converged = false;
  double score_norm = 0.0;
  for (; iter <= opts.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto parts = binomial_parts(family, eta(i));
      const double wi = wp ? (*wp)(i) : 1.0;
      if (parts.var <= 0.0 || parts.dmu <= 0.0) {
        working_w(i) = 0.0;
        z(i) = eta(i);
        score_w(i) = 0.0;
        continue;
      }
      working_w(i) = wi * parts.dmu * parts.dmu / parts.var;
      z(i) = eta(i) + (y(i) - parts.mu) / parts.dmu;
      score_w(i) = wi * (y(i) - parts.mu) * parts.dmu / parts.var;
    }
    score_norm = (X.transpose() * score_w).cwiseAbs().maxCoeff();
    if (score_norm < score_tol) {
      converged = true;
      break;
    }
    if (iter == opts.max_iter) break;

    Eigen::VectorXd proposal;
    try {
      proposal = wls_solve(X, z, &working_w, opts.rank_tol);
    } catch (const FitError& err) {
      if (iter == 0) throw;
      std::ostringstream msg;
      msg << "IRLS breakdown after " << iter << " iterations (" << err.what()
          << "); score norm " << score_norm << ", coefficient norm " << beta.norm()
          << "; likely separation";
      throw FitError(msg.str());
    }
    Eigen::VectorXd eta_new = X * proposal;
    double ll_new = binomial_loglik(family, eta_new, y, wp);
    for (int halving = 0; halving < 40 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++halving) {
      proposal = 0.5 * (proposal + beta);
      eta_new = X * proposal;
      ll_new = binomial_loglik(family, eta_new, y, wp);
    }
    beta = std::move(proposal);
    eta = std::move(eta_new);
    ll = ll_new;
  }
  if (converged) {
    // Under separation the score vanishes only because fitted probabilities saturate, and
    // the next Newton step stays O(1). At a genuine optimum that step is negligible, and
    // taking it polishes the estimate to rounding level.
    Eigen::Index saturated = -1;
    for (Eigen::Index i = 0; i < n && saturated < 0; ++i) {
      if (wp && !((*wp)(i) > 0.0)) continue;
      const double mu = inverse_link(family, eta(i));
      if (std::min(mu, 1.0 - mu) < 1e-9) saturated = i;
    }
    std::optional<Eigen::VectorXd> polished;
    double step = std::numeric_limits<double>::infinity();
    try {
      polished = wls_solve(X, z, &working_w, opts.rank_tol);
      step = (*polished - beta).cwiseAbs().maxCoeff();
    } catch (const FitError&) {
    }
    if (saturated >= 0 && !(step < 1e-4 * std::max(1.0, beta.cwiseAbs().maxCoeff()))) {
      std::ostringstream msg;
      msg << to_string(family) << " fit diverges: fitted probabilities numerically 0 or 1 (row " << saturated
          << ", linear predictor " << eta(saturated) << "), next Newton step " << step
          << ", coefficient norm = " << beta.norm() << "; separation, the MLE does not exist";
      throw FitError(msg.str());
    }
    if (polished) {
      Eigen::VectorXd eta_new = X * *polished;
      const double ll_new = binomial_loglik(family, eta_new, y, wp);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) {
        beta = std::move(*polished);
        eta = std::move(eta_new);
      }
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << to_string(family) << " fit did not converge in " << opts.max_iter
        << " iterations: max |score| = " << score_norm << ", coefficient norm = " << beta.norm()
        << " (large norms suggest separation)";
    throw FitError(msg.str());
  }
  FittedGlm fit;
  fit.family = family;
  fit.coefficients = std::move(beta);
  fit.converged = true;
  fit.iterations = iter;
  fit.weights_used = w;
  return fit;
}

FittedGlm fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                  const std::optional<Eigen::VectorXd>& w, const IrlsOptions& opts) {
  if (family == Family::GaussianIdentity) return fit_ols(X, y, w, opts.rank_tol);
  return fit_glm_irls(X, y, family, w, opts);
}

double inverse_link(Family f, double eta) {
  switch (f) {
    case Family::GaussianIdentity:
      return eta;
    case Family::BinomialLogit:
      return expit(eta);
    case Family::BinomialProbit:
      return normal_cdf(eta);
  }
  return eta;
}

double predict_row_mean(const FittedGlm& fit, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != fit.coefficients.size())
    throw FitError("design row has " + std::to_string(row.size()) + " entries, model has " +
                   std::to_string(fit.coefficients.size()) + " coefficients");
  return inverse_link(fit.family, row.dot(fit.coefficients));
}

Eigen::VectorXd predict_mean(const FittedGlm& fit, const Eigen::MatrixXd& X) {
  if (X.cols() != fit.coefficients.size())
    throw FitError("design has " + std::to_string(X.cols()) + " columns, model has " +
                   std::to_string(fit.coefficients.size()) + " coefficients");
  Eigen::VectorXd eta = X * fit.coefficients;
  if (fit.family == Family::GaussianIdentity) return eta;
  return eta.unaryExpr([f = fit.family](double v) { return inverse_link(f, v); });
}

double log_likelihood(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta, const std::optional<Eigen::VectorXd>& w) {
  const Eigen::VectorXd eta = X * beta;
  const Eigen::VectorXd* wp = w ? &*w : nullptr;
  if (is_binomial(family)) return binomial_loglik(family, eta, y, wp);
  const Eigen::VectorXd r = y - eta;
  const double sw = w ? w->sum() : static_cast<double>(y.size());
  const double rss = w ? w->dot(r.cwiseAbs2()) : r.squaredNorm();
  const double s2 = rss / sw;
  return -0.5 * sw * (std::log(2.0 * M_PI * s2) + 1.0);
}

ScoreInformation score_and_information(const FittedGlm& fit, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const std::optional<Eigen::VectorXd>& w) {
  if (X.cols() != fit.coefficients.size() || X.rows() != y.size())
    throw FitError("score_and_information: dimension mismatch");
  if (w && w->size() != y.size()) throw FitError("score_and_information: weights length mismatch");
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd eta = X * fit.coefficients;
  Eigen::VectorXd u(n), info_w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w ? (*w)(i) : 1.0;
    if (fit.family == Family::GaussianIdentity) {
      u(i) = wi * (y(i) - eta(i)) / fit.sigma2;
      info_w(i) = wi / fit.sigma2;
    } else {
      const auto parts = binomial_parts(fit.family, eta(i));
      u(i) = parts.var > 0 ? wi * (y(i) - parts.mu) * parts.dmu / parts.var : 0.0;
      info_w(i) = parts.var > 0 ? wi * parts.dmu * parts.dmu / parts.var : 0.0;
    }
  }
  ScoreInformation out;
  out.row_scores = u.asDiagonal() * X;
  out.score = out.row_scores.colwise().sum().transpose();
  out.information = X.transpose() * info_w.asDiagonal() * X;
  return out;
}

Eigen::VectorXd solve_weighted_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                const Eigen::VectorXd& w, double rank_tol) {
  if (X.rows() != y.size() || w.size() != y.size()) throw FitError("weighted normal equations: dimension mismatch");
  if ((w.array() >= 0.0).all()) return wls_solve(X, y, &w, rank_tol);
  const Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
  const Eigen::VectorXd b = X.transpose() * w.asDiagonal() * y;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(rank_tol);
  if (qr.rank() < A.cols()) throw FitError("weighted normal equations are singular");
  return qr.solve(b);
}

}  // namespace pathfx
