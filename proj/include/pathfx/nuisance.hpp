#ifndef PATHFX_NUISANCE_HPP
#define PATHFX_NUISANCE_HPP

#include "pathfx/core.hpp"
#include "pathfx/glm.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pathfx {

enum class RoleKind {
  OutcomeB,         // E[Y | M, C1, E, C0]
  OutcomeMarginal,  // E[Y | E, C0], for the delta estimators
  MediatorMean,     // E[M | C1, E, C0]
  C1Mean,           // E[C1_j | E, C0]
  PropensityC0,     // Pr(E = 1 | C0)
  PropensityC1C0,   // Pr(E = 1 | C1, C0)
  PropensityMC1C0,  // Pr(E = 1 | M, C1, C0)
  // Optional overrides for the factors that appear inside the density ratios.
  // When absent they fall back to PropensityC0 and PropensityC1C0 respectively.
  PropensityC0InC1Ratio,
  PropensityC1C0InMRatio,
};

struct ModelRole {
  RoleKind kind = RoleKind::OutcomeB;
  int j = 0;  // zero-based component for C1Mean

  static ModelRole c1_mean(int j) { return {RoleKind::C1Mean, j}; }
  auto operator<=>(const ModelRole&) const = default;
};

std::string to_string(const ModelRole& role);
/// Accepts the names produced by to_string; c1 means are `c1_mean_1`, `c1_mean_2`, ...
ModelRole parse_role(const std::string& name);

bool is_propensity(RoleKind k);

enum class Pathway { Linear, Discrete };
std::string to_string(Pathway p);
Pathway parse_pathway(const std::string& name);

struct WorkingModel {
  DesignSpec design;
  Family family = Family::GaussianIdentity;
};

/// Role -> working model. Roles an estimator does not need may be left out.
using WorkingModelSet = std::map<ModelRole, WorkingModel>;

/// Per-role switch for the logit-shift stabilization. The override roles follow the
/// switch of the role they stand in for.
struct StabilizationFlags {
  bool propensity_c0 = true;
  bool propensity_c1c0 = true;
  bool propensity_mc1c0 = true;

  static StabilizationFlags none() { return {false, false, false}; }
};

struct NuisanceOptions {
  Pathway pathway = Pathway::Linear;
  StabilizationFlags stabilization{};
  double clip = 1e-6;
  IrlsOptions irls{};
};

struct NuisanceFits {
  std::map<ModelRole, FittedGlm> fits;
  TreatmentPair pair;  // 0/1-coded evaluation pair
  int d1 = 0;
  NuisanceOptions options;

  bool has(const ModelRole& role) const;
  /// Resolves the override roles to their defaults. Throws EstimationError when missing.
  const FittedGlm& get(const ModelRole& role) const;
  FittedGlm& get_mut(const ModelRole& role);
};

/// Checks families, response leaks (a model using its own response or a later variable
/// where that is impossible) and, for the linear pathway, that B is linear in M and C1
/// and the mediator mean is linear in C1.
void validate_working_models(const WorkingModelSet& models, int d0, int d1, Pathway pathway);

/// Fits every role in `models` on the 0/1-coded dataset. Outcome, mediator and C1 models use
/// all rows with E as a regressor; propensity responses are 1{E = 1}.
NuisanceFits fit_nuisances(const Dataset& data, const TreatmentPair& pair, const WorkingModelSet& models,
                           const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                           const NuisanceOptions& options = {});

/// Pr(E = 1 | X) for every record.
Eigen::VectorXd predict_propensity(const FittedGlm& fit, const Dataset& data);

/// Logit-shift stabilization at level L. `f_level` holds f(L | X_i) and `at_level` the
/// indicators 1{E_i = L}. Returns f-dagger(L | X_i), which satisfies
/// Pn[1_L f-dagger(not L)/f-dagger(L)] = 1 - Pn[1_L]. Empirical means use `weights` when given.
Eigen::VectorXd stabilize_propensity(const Eigen::VectorXd& f_level, const Eigen::VectorXd& at_level,
                                     const std::optional<Eigen::VectorXd>& weights = std::nullopt);

/// Same, driven by a fitted model; `level` is on the 0/1 scale.
Eigen::VectorXd stabilize_propensity(const FittedGlm& fit, const Dataset& data, int level,
                                     const std::optional<Eigen::VectorXd>& weights = std::nullopt);

/// Density ratios of a single record from the (unstabilized, clipped) propensity models.
double m_ratio(const NuisanceFits& fits, const Record& record);
double c1_ratio(const NuisanceFits& fits, const Record& record);

double nested_mean_B(const NuisanceFits& fits, const Record& record);
double nested_mean_Bprime(const NuisanceFits& fits, const Record& record);
double nested_mean_Bdoubleprime(const NuisanceFits& fits, const Record& record);

/// Per-record nuisance quantities on a dataset. Entries for roles that were not fitted are
/// left empty.
struct NuisanceEvaluation {
  TreatmentPair pair;
  Eigen::VectorXd b, b_prime, b_doubleprime;
  Eigen::VectorXd q;                // E-hat[Y | e', C0]
  Eigen::VectorXd f_c0_baseline;    // f(e' | C0), stabilized at e'
  Eigen::VectorXd f_c0_comparison;  // f(e | C0), stabilized at e
  Eigen::VectorXd m_ratio, c1_ratio;
  int clipped = 0;
};

NuisanceEvaluation evaluate_nuisances(const Dataset& data, const NuisanceFits& fits,
                                      const std::optional<Eigen::VectorXd>& weights = std::nullopt);

/// B-double-prime for every record; the workhorse of the MLE and its sandwich variance.
Eigen::VectorXd nested_means_Bdoubleprime(const Dataset& data, const NuisanceFits& fits);

}  // namespace pathfx

#endif  // PATHFX_NUISANCE_HPP
