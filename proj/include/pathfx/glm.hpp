#ifndef PATHFX_GLM_HPP
#define PATHFX_GLM_HPP

#include "pathfx/core.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace pathfx {

enum class Family { GaussianIdentity, BinomialLogit, BinomialProbit };

std::string to_string(Family f);
Family parse_family(const std::string& name);
inline bool is_binomial(Family f) { return f != Family::GaussianIdentity; }

/// Fitted regression. `design` is informational (set by callers that build X from a
/// DesignSpec); prediction only needs the coefficients.
struct FittedGlm {
  Family family = Family::GaussianIdentity;
  DesignSpec design;
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double sigma2 = 1.0;  // ML residual variance, gaussian only
  std::optional<Eigen::VectorXd> weights_used;
};

struct IrlsOptions {
  int max_iter = 100;
  double tol = 1e-10;  // on max |score|
  double rank_tol = 1e-10;
};

/// Weighted least squares by column-pivoted QR of sqrt(w) X.
FittedGlm fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::optional<Eigen::VectorXd>& w = std::nullopt, double rank_tol = 1e-10);

/// Binary regression by IRLS / Fisher scoring with step-halving on the log-likelihood.
/// Throws FitError on rank deficiency or when the score does not reach `tol`.
FittedGlm fit_glm_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                       const std::optional<Eigen::VectorXd>& w = std::nullopt,
                       const IrlsOptions& opts = {});

/// Dispatches on family.
FittedGlm fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                  const std::optional<Eigen::VectorXd>& w = std::nullopt,
                  const IrlsOptions& opts = {});

double inverse_link(Family f, double eta);

double predict_row_mean(const FittedGlm& fit, const Eigen::Ref<const Eigen::VectorXd>& row);
Eigen::VectorXd predict_mean(const FittedGlm& fit, const Eigen::MatrixXd& X);

/// Weighted log-likelihood (gaussian: profile form at sigma2 = RSS_w / sum w).
double log_likelihood(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta, const std::optional<Eigen::VectorXd>& w = std::nullopt);

struct ScoreInformation {
  Eigen::VectorXd score;        // sum of per-row scores
  Eigen::MatrixXd information;  // expected (Fisher) information, summed over rows
  Eigen::MatrixXd row_scores;   // n x p
};

/// Score and expected information at the fitted coefficients. For the gaussian family
/// sigma2 is the fit's ML estimate.
ScoreInformation score_and_information(const FittedGlm& fit, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const std::optional<Eigen::VectorXd>& w = std::nullopt);

/// Solves X' diag(w) (y - X b) = 0 for arbitrary-sign weights (linear estimating equation).
Eigen::VectorXd solve_weighted_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                const Eigen::VectorXd& w, double rank_tol = 1e-10);

}  // namespace pathfx

#endif  // PATHFX_GLM_HPP
