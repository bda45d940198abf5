#ifndef PATHFX_SIMULATION_HPP
#define PATHFX_SIMULATION_HPP

#include "pathfx/core.hpp"
#include "pathfx/inference.hpp"
#include "pathfx/nuisance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pathfx {

// Structural equations of the simulation study (d0 = 1, d1 = 3):
//   C0 ~ U(0,2),  E | C0 ~ Bernoulli(expit(0.9 + 0.3 C0))
//   C1 = a + b C0 + c E + d C0 E + N(0, I3)
//   M  = -0.5 - 0.2 C0 + 0.3 E + g.C1 + 0.4 E C1_1 + N(0,1)
//   Y  = 0.2 + 0.2 C0 + 0.6 E + h.C1 - 0.9 M - 0.8 E M + N(0,1)
namespace sem {
inline constexpr int kD0 = 1;
inline constexpr int kD1 = 3;
double propensity(double c0);  // Pr(E = 1 | C0)
Eigen::Vector3d c1_mean(double e, double c0);
double m_mean(double e, const Eigen::Vector3d& c1, double c0);
double y_mean(double e, const Eigen::Vector3d& c1, double m, double c0);
double logit_e_given_c1c0(const Eigen::Vector3d& c1, double c0);
double logit_e_given_mc1c0(double m, const Eigen::Vector3d& c1, double c0);
}  // namespace sem

/// n records from replicate `rep` of `seed`. Each variable draws from its own stream.
Dataset draw_dataset(Eigen::Index n, std::uint64_t seed, std::uint64_t rep = 0);

enum class Regime { Int, A, B, C };
std::string to_string(Regime r);
Regime parse_regime(const std::string& name);  // int, a, b, c

/// Correctly specified working model for a role of the simulation law.
WorkingModel correct_model(const ModelRole& role);

/// Regime's working models. Int: all correct. A: outcome and C1 means wrong, as is
/// Pr(E | C1, C0) in the C1 ratio. B: mediator mean and Pr(E | M, C1, C0) wrong. C: the
/// standalone Pr(E | C0) is a probit; the one inside the C1 ratio stays logistic.
WorkingModelSet working_models_for(Regime regime);

/// Whether `model` is the correct specification for `role`.
bool is_correct(const ModelRole& role, const WorkingModel& model);

/// Every correct working model with its coefficients set to the true values, for the pair
/// (comparison 1, baseline 0), no stabilization.
NuisanceFits true_nuisance_fits();

/// Correct roles of the regime at their true values; incorrect roles fitted on a fresh
/// draw of `n_fit` rows (their probability limits for large n_fit).
NuisanceFits limit_nuisance_fits(Regime regime, Eigen::Index n_fit, std::uint64_t seed);

struct SimulationSpec {
  Regime regime = Regime::Int;
  Eigen::Index n = 1000;
  int replications = 200;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  double hypothesis = 2.678;
  bool include_sequential = false;
  bool stabilize = false;
  int threads = 0;
};

struct EstimatorSummary {
  std::string estimator;
  TTestResult test;
  double bias = 0.0;
  int failures = 0;
};

struct RegimeReport {
  SimulationSpec spec;
  std::vector<std::string> estimators;  // mle, a, b, mr[, mr_seq]
  Eigen::MatrixXd values;               // replications x estimators, NaN for failures
  std::vector<EstimatorSummary> summaries;
  int failed_replicates = 0;
};

/// Draws, fits and estimates every replicate and t-tests each estimator against the
/// hypothesis. More than 1% failed replicates aborts with an EstimationError.
RegimeReport run_monte_carlo(const SimulationSpec& spec);

void write_replicates_csv(std::ostream& out, const RegimeReport& report);
void write_summary_csv(std::ostream& out, const RegimeReport& report);

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
};

/// Mean of Y(M(e_m, C1(e_c1)), C1(e_c1), e_y) by direct counterfactual simulation.
OracleValue oracle_counterfactual_mc(std::int64_t n_draws, std::uint64_t seed, int e_c1, int e_m, int e_y,
                                     int threads = 0);
OracleValue oracle_beta0_mc(std::int64_t n_draws, std::uint64_t seed, int threads = 0);
OracleValue oracle_delta0_mc(std::int64_t n_draws, std::uint64_t seed, int threads = 0);

struct OracleSummary {
  OracleValue beta0, delta0, effect;
};
/// beta0, delta0 and their difference from shared draws.
OracleSummary oracle_effect_mc(std::int64_t n_draws, std::uint64_t seed, int threads = 0);

/// Closed forms from composing the linear equations: E[B''(0, 1, C0) | C0] and
/// E[Y(0) | C0] are linear in C0; (intercept, slope) pairs.
Eigen::Vector2d closed_form_bdoubleprime();
Eigen::Vector2d closed_form_delta_mean();
double closed_form_beta0();   // at E[C0] = 1
double closed_form_delta0();

}  // namespace pathfx

#endif  // PATHFX_SIMULATION_HPP
