#ifndef PATHFX_ESTIMATORS_HPP
#define PATHFX_ESTIMATORS_HPP

#include "pathfx/core.hpp"
#include "pathfx/nuisance.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pathfx {

enum class BetaKind { Mle, A, B, Mr, MrSequential };
enum class DeltaKind { GFormula, Ipw, Aipw };
enum class EffectScale { MeanDifference, LogRiskRatio };

std::string to_string(BetaKind k);
std::string to_string(DeltaKind k);
std::string to_string(EffectScale s);
BetaKind parse_beta_kind(const std::string& name);  // mle, a, b, mr, mr_seq
DeltaKind parse_delta_kind(const std::string& name);  // gformula, ipw, aipw
EffectScale parse_scale(const std::string& name);     // diff, logrr

/// mr, mr_seq and b pair with aipw, a with ipw, mle with the g-formula.
DeltaKind default_delta(BetaKind k);

struct EstimatorKind {
  BetaKind beta = BetaKind::Mr;
  DeltaKind delta = DeltaKind::Aipw;
};

/// Pn[x] with optional row weights: sum(w x) / sum(w).
double empirical_mean(const Eigen::VectorXd& x, const std::optional<Eigen::VectorXd>& w = std::nullopt);

// Beta estimators over a nuisance evaluation. `w` are row weights (wild bootstrap).
double beta_mle(const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w = std::nullopt);
double beta_a(const Dataset& data, const NuisanceEvaluation& ev,
              const std::optional<Eigen::VectorXd>& w = std::nullopt);
double beta_b(const Dataset& data, const NuisanceEvaluation& ev,
              const std::optional<Eigen::VectorXd>& w = std::nullopt);
double beta_mr(const Dataset& data, const NuisanceEvaluation& ev,
               const std::optional<Eigen::VectorXd>& w = std::nullopt);

/// The four-term summand of the multiply robust estimator for every record.
Eigen::VectorXd beta_mr_summands(const Dataset& data, const NuisanceEvaluation& ev);

/// The three weighted residual terms of the multiply robust estimator, per record:
/// columns are w0 Mratio (Y - B), w1 / C1ratio (B - B'), w0 (B' - B'').
Eigen::MatrixXd beta_mr_weighted_terms(const Dataset& data, const NuisanceEvaluation& ev);

/// Efficient influence function V(beta) for every record; Pn V(beta) = beta_mr - beta.
Eigen::VectorXd influence_function_values(const Dataset& data, const NuisanceEvaluation& ev, double beta);

/// Single record, from the fits directly (clipped, unstabilized propensities).
double influence_function_value(const Record& record, const NuisanceFits& fits, double beta);

double delta_gformula(const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w = std::nullopt);
double delta_ipw(const Dataset& data, const NuisanceEvaluation& ev,
                 const std::optional<Eigen::VectorXd>& w = std::nullopt);
/// Augmented IPW with the evaluation's marginal outcome regression, or with `q` when given.
double delta_aipw(const Dataset& data, const NuisanceEvaluation& ev,
                  const std::optional<Eigen::VectorXd>& w = std::nullopt,
                  const std::optional<Eigen::VectorXd>& q = std::nullopt);

/// Per-row factors for the sequential estimator: term1 multiplies the baseline-arm outcome
/// refit, term2 the comparison-arm mediator refit, term3 the baseline-arm C1 refits.
/// With slope_weighting the factors are multiplied by the slope of B in M (term2) and of B'
/// in each C1 component (term3), which is what zeroes the weighted terms.
struct SequentialFactors {
  Eigen::VectorXd term1, term2, term3;
  bool slope_weighting = true;
};

struct SequentialResult {
  double beta = 0.0;
  Eigen::Vector3d terms = Eigen::Vector3d::Zero();  // Pn of the three weighted terms after refitting
  NuisanceFits fits;
};

/// Sequentially refits the outcome, mediator and C1 models by weighted least squares so the
/// weighted terms of the multiply robust estimator vanish; beta = Pn[B''].
SequentialResult beta_mr_sequential(const Dataset& data, const TreatmentPair& pair, const WorkingModelSet& models,
                                    const std::optional<Eigen::VectorXd>& w = std::nullopt,
                                    const NuisanceOptions& options = {});

/// The refitting steps for given factors, starting from `fits` (outcome, mediator, C1 means).
SequentialResult beta_mr_sequential_with(const Dataset& data, NuisanceFits fits, const SequentialFactors& factors,
                                         const std::optional<Eigen::VectorXd>& w = std::nullopt);

/// mean_difference: beta - delta; log_risk_ratio: log(beta / delta).
double combine_effect(double beta_hat, double delta_hat, EffectScale scale);

struct EstimateResult {
  double beta_hat = 0.0;
  double delta_hat = 0.0;
  double effect = 0.0;
  EffectScale scale = EffectScale::MeanDifference;
  TreatmentPair pair;
  EstimatorKind kind;
  Eigen::Index n_used = 0;
  std::map<std::string, double> diagnostics;
};

/// Max weight, Kish effective sample size (sum w)^2 / sum w^2 and clip count.
std::map<std::string, double> weight_diagnostics(const Dataset& data, const NuisanceEvaluation& ev);

/// Working models a set of estimators needs (the rest of `all` is dropped).
WorkingModelSet models_needed(const WorkingModelSet& all, const std::vector<EstimatorKind>& kinds);

struct EstimationConfig {
  std::vector<EstimatorKind> kinds{{BetaKind::Mr, DeltaKind::Aipw}};
  EffectScale scale = EffectScale::MeanDifference;
  WorkingModelSet models;
  NuisanceOptions nuisance{};
};

/// Fits the needed nuisances once and evaluates every requested estimator on the 0/1-coded
/// data. With row weights every fit and every empirical mean is weighted.
std::vector<EstimateResult> estimate(const Dataset& data, const TreatmentPair& pair, const EstimationConfig& config,
                                     const std::optional<Eigen::VectorXd>& w = std::nullopt);

}  // namespace pathfx

#endif  // PATHFX_ESTIMATORS_HPP
