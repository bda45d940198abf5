#ifndef PATHFX_INFERENCE_HPP
#define PATHFX_INFERENCE_HPP

#include "pathfx/core.hpp"
#include "pathfx/nuisance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pathfx {

/// Worker count: `requested` when positive, else $PATHFX_THREADS, else the hardware count.
int resolve_threads(int requested = 0);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must be written
/// by index; the first exception thrown by any body is rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

enum class BootstrapKind { Nonparametric, WildExp1 };
std::string to_string(BootstrapKind k);
BootstrapKind parse_bootstrap_kind(const std::string& name);  // nonparametric, wild

struct BootstrapSpec {
  BootstrapKind kind = BootstrapKind::Nonparametric;
  int replicates = 200;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  int threads = 0;
};

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;
  Eigen::VectorXd replicate_values;
};

/// A full estimation pipeline: refits everything on `data` with optional row weights and
/// returns one or more statistics.
using Statistic = std::function<Eigen::VectorXd(const Dataset& data, const std::optional<Eigen::VectorXd>& w)>;

struct BootstrapResult {
  std::vector<IntervalEstimate> intervals;  // one per statistic component
  Eigen::MatrixXd replicates;               // replicates x components, NaN rows for failures
  int failures = 0;
};

/// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile_type7(std::vector<double> values, double p);

/// Percentile interval at `level` from replicate values (non-finite values are skipped).
std::pair<double, double> percentile_interval(const Eigen::VectorXd& values, double level);

/// Nonparametric (row resampling) or wild Exp(1) (row reweighting) bootstrap. Replicate r
/// draws from stream (seed, r) only, so results do not depend on scheduling.
/// More than 10% failed replicates aborts with an EstimationError.
BootstrapResult bootstrap(const Dataset& data, const Statistic& stat, const BootstrapSpec& spec);

/// Wild bootstrap with caller-supplied row weights for replicate r.
BootstrapResult bootstrap_with_weights(const Dataset& data, const Statistic& stat, const BootstrapSpec& spec,
                                       const std::function<Eigen::VectorXd(int)>& weights_for);

/// Plug-in sandwich variance of beta_mle: Pn[(g_i - beta + D' psi_i)^2] / n, where
/// psi_i = n J^{-1} U_i stacks the outcome, mediator and C1 mean fits and D = Pn[dg/dgamma]
/// by central differences. `fits` must have been fitted on `data` without row weights.
double mle_sandwich_variance(const Dataset& data, const NuisanceFits& fits);

struct TTestResult {
  double mean = 0.0;
  double se = 0.0;  // sd / sqrt(R)
  double t = 0.0;
  double critical = 0.0;
  double lower = 0.0, upper = 0.0;  // mean -/+ critical * se
  bool reject = false;
  bool infinite = false;  // zero spread with mean != hypothesis
};

/// One-sample t test of H0: E[estimate] = h with critical value t_{R-1, 1-alpha/2}.
TTestResult mc_t_test(const Eigen::VectorXd& values, double h, double alpha = 0.05);

}  // namespace pathfx

#endif  // PATHFX_INFERENCE_HPP
