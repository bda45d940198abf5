#include "pathfx/simulation.hpp"

#include "pathfx/csv.hpp"
#include "pathfx/estimators.hpp"
#include "pathfx/rng.hpp"
#include "pathfx/special.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace pathfx {

namespace sem {

namespace {
const Eigen::Vector3d kA(0.8, 0.6, -0.3);
const Eigen::Vector3d kB(1.0, 0.1, 0.2);
const Eigen::Vector3d kC(0.5, -0.4, 0.5);
const Eigen::Vector3d kD(-0.1, 0.8, -0.2);
const Eigen::Vector3d kG(-0.2, 0.1, 0.5);
const Eigen::Vector3d kH(1.0, 0.7, 0.3);

double log_normal_kernel(double x, double mu) { return -0.5 * (x - mu) * (x - mu); }
}  // namespace

double propensity(double c0) { return expit(0.9 + 0.3 * c0); }

Eigen::Vector3d c1_mean(double e, double c0) { return kA + kB * c0 + e * (kC + kD * c0); }

double m_mean(double e, const Eigen::Vector3d& c1, double c0) {
  return -0.5 - 0.2 * c0 + 0.3 * e + kG.dot(c1) + 0.4 * e * c1(0);
}

double y_mean(double e, const Eigen::Vector3d& c1, double m, double c0) {
  return 0.2 + 0.2 * c0 + 0.6 * e + kH.dot(c1) - 0.9 * m - 0.8 * e * m;
}

double logit_e_given_c1c0(const Eigen::Vector3d& c1, double c0) {
  double v = 0.9 + 0.3 * c0;
  const Eigen::Vector3d mu1 = c1_mean(1, c0), mu0 = c1_mean(0, c0);
  for (int j = 0; j < 3; ++j) v += log_normal_kernel(c1(j), mu1(j)) - log_normal_kernel(c1(j), mu0(j));
  return v;
}

double logit_e_given_mc1c0(double m, const Eigen::Vector3d& c1, double c0) {
  return logit_e_given_c1c0(c1, c0) + log_normal_kernel(m, m_mean(1, c1, c0)) -
         log_normal_kernel(m, m_mean(0, c1, c0));
}

}  // namespace sem

namespace {

enum Block : std::uint64_t { kBlockC0 = 0, kBlockE, kBlockC1, kBlockM, kBlockY, kBlockOracle = 0x80 };

DesignSpec design(const char* text) { return parse_design(text, sem::kD0, sem::kD1); }

// Linear predictor of the true law for a role, at a record.
double true_linear_predictor(const ModelRole& role, const Record& r) {
  const double c0 = r.c0(0);
  const Eigen::Vector3d c1 = r.c1;
  const double e = r.e;
  switch (role.kind) {
    case RoleKind::OutcomeB:
      return sem::y_mean(e, c1, r.m, c0);
    case RoleKind::OutcomeMarginal: {
      const Eigen::Vector3d mc1 = sem::c1_mean(e, c0);
      return sem::y_mean(e, mc1, sem::m_mean(e, mc1, c0), c0);
    }
    case RoleKind::MediatorMean:
      return sem::m_mean(e, c1, c0);
    case RoleKind::C1Mean:
      return sem::c1_mean(e, c0)(role.j);
    case RoleKind::PropensityC0:
    case RoleKind::PropensityC0InC1Ratio:
      return logit(sem::propensity(c0));
    case RoleKind::PropensityC1C0:
    case RoleKind::PropensityC1C0InMRatio:
      return sem::logit_e_given_c1c0(c1, c0);
    case RoleKind::PropensityMC1C0:
      return sem::logit_e_given_mc1c0(r.m, c1, c0);
  }
  return 0.0;
}

// The correct designs span the true linear predictors exactly, so least squares on
// scattered points recovers the true coefficients.
FittedGlm true_fit(const ModelRole& role) {
  const WorkingModel model = correct_model(role);
  constexpr int kPoints = 400;
  StreamRng rng(20240601, 0);
  Eigen::MatrixXd X(kPoints, model.design.size());
  Eigen::VectorXd y(kPoints);
  Record r;
  r.c0.resize(1);
  r.c1.resize(3);
  for (int i = 0; i < kPoints; ++i) {
    r.c0(0) = rng.uniform(0.0, 2.0);
    r.e = rng.bernoulli(0.5) ? 1 : 0;
    for (int j = 0; j < 3; ++j) r.c1(j) = 2.0 * rng.normal();
    r.m = 2.0 * rng.normal();
    X.row(i) = build_design_row(r, model.design).transpose();
    y(i) = true_linear_predictor(role, r);
  }
  FittedGlm fit = fit_ols(X, y);
  const double resid = (y - X * fit.coefficients).cwiseAbs().maxCoeff();
  if (resid > 1e-8)
    throw EstimationError("true law of " + to_string(role) + " is not spanned by its correct design");
  fit.family = model.family;
  fit.design = model.design;
  fit.sigma2 = 1.0;
  fit.converged = true;
  fit.weights_used.reset();
  return fit;
}

std::vector<ModelRole> all_roles() {
  std::vector<ModelRole> roles{{RoleKind::OutcomeB, 0},       {RoleKind::OutcomeMarginal, 0},
                               {RoleKind::MediatorMean, 0},   {RoleKind::PropensityC0, 0},
                               {RoleKind::PropensityC1C0, 0}, {RoleKind::PropensityMC1C0, 0}};
  for (int j = 0; j < sem::kD1; ++j) roles.push_back(ModelRole::c1_mean(j));
  return roles;
}

}  // namespace

Dataset draw_dataset(Eigen::Index n, std::uint64_t seed, std::uint64_t rep) {
  if (n < 1) throw ConfigError("draw_dataset needs n >= 1");
  StreamRng rc0(seed, stream_id(rep, kBlockC0)), re(seed, stream_id(rep, kBlockE)),
      rc1(seed, stream_id(rep, kBlockC1)), rm(seed, stream_id(rep, kBlockM)), ry(seed, stream_id(rep, kBlockY));
  Eigen::MatrixXd c0(n, 1), c1(n, 3);
  Eigen::VectorXi e(n);
  Eigen::VectorXd m(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x0 = rc0.uniform(0.0, 2.0);
    const int ei = re.bernoulli(sem::propensity(x0)) ? 1 : 0;
    Eigen::Vector3d x1 = sem::c1_mean(ei, x0);
    for (int j = 0; j < 3; ++j) x1(j) += rc1.normal();
    const double mi = sem::m_mean(ei, x1, x0) + rm.normal();
    const double yi = sem::y_mean(ei, x1, mi, x0) + ry.normal();
    c0(i, 0) = x0;
    e(i) = ei;
    c1.row(i) = x1.transpose();
    m(i) = mi;
    y(i) = yi;
  }
  return Dataset(std::move(c0), std::move(e), std::move(c1), std::move(m), std::move(y));
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Int:
      return "int";
    case Regime::A:
      return "a";
    case Regime::B:
      return "b";
    case Regime::C:
      return "c";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : {Regime::Int, Regime::A, Regime::B, Regime::C})
    if (name == to_string(r)) return r;
  throw ConfigError("unknown regime '" + name + "' (int, a, b, c)");
}

WorkingModel correct_model(const ModelRole& role) {
  switch (role.kind) {
    case RoleKind::OutcomeB:
      return {design("1, c0, e, c1, m, e*m"), Family::GaussianIdentity};
    case RoleKind::OutcomeMarginal:
      return {design("1, c0, e, c0*e"), Family::GaussianIdentity};
    case RoleKind::MediatorMean:
      return {design("1, c0, e, c1, e*c1_1"), Family::GaussianIdentity};
    case RoleKind::C1Mean:
      return {design("1, c0, e, c0*e"), Family::GaussianIdentity};
    case RoleKind::PropensityC0:
    case RoleKind::PropensityC0InC1Ratio:
      return {design("1, c0"), Family::BinomialLogit};
    case RoleKind::PropensityC1C0:
    case RoleKind::PropensityC1C0InMRatio:
      return {design("1, c0, c0^2, c1, c0*c1"), Family::BinomialLogit};
    case RoleKind::PropensityMC1C0:
      return {design("1, c0, c0^2, c1, c0*c1, c1_1*c1, m, c1_1*m"), Family::BinomialLogit};
  }
  throw ConfigError("no correct model for role");
}

bool is_correct(const ModelRole& role, const WorkingModel& model) {
  const WorkingModel ref = correct_model(role);
  return ref.family == model.family && ref.design.terms() == model.design.terms();
}

WorkingModelSet working_models_for(Regime regime) {
  WorkingModelSet set;
  for (const auto& role : all_roles()) set[role] = correct_model(role);
  switch (regime) {
    case Regime::Int:
      break;
    case Regime::A:
      set[{RoleKind::OutcomeB, 0}] = {design("1, c0, e, c1, m"), Family::GaussianIdentity};
      for (int j = 0; j < sem::kD1; ++j) set[ModelRole::c1_mean(j)] = {design("1, c0, e"), Family::GaussianIdentity};
      set[{RoleKind::PropensityC1C0, 0}] = {design("1, c0, c1"), Family::BinomialLogit};
      set[{RoleKind::PropensityC1C0InMRatio, 0}] = correct_model({RoleKind::PropensityC1C0InMRatio, 0});
      break;
    case Regime::B:
      set[{RoleKind::MediatorMean, 0}] = {design("1, c0, e, c1"), Family::GaussianIdentity};
      set[{RoleKind::PropensityMC1C0, 0}] = {design("1, c0, c1, m"), Family::BinomialLogit};
      break;
    case Regime::C:
      set[{RoleKind::PropensityC0, 0}] = {design("1, c0"), Family::BinomialProbit};
      set[{RoleKind::PropensityC0InC1Ratio, 0}] = correct_model({RoleKind::PropensityC0InC1Ratio, 0});
      break;
  }
  return set;
}

NuisanceFits true_nuisance_fits() {
  NuisanceFits fits;
  fits.pair = {1, 0};
  fits.d1 = sem::kD1;
  fits.options.stabilization = StabilizationFlags::none();
  for (const auto& role : all_roles()) fits.fits.emplace(role, true_fit(role));
  return fits;
}

NuisanceFits limit_nuisance_fits(Regime regime, Eigen::Index n_fit, std::uint64_t seed) {
  const WorkingModelSet models = working_models_for(regime);
  const Dataset data = draw_dataset(n_fit, seed, 0);
  NuisanceOptions options;
  options.stabilization = StabilizationFlags::none();
  WorkingModelSet to_fit;
  for (const auto& [role, model] : models)
    if (!is_correct(role, model)) to_fit.emplace(role, model);
  NuisanceFits fits = fit_nuisances(data, {1, 0}, to_fit, std::nullopt, options);
  for (const auto& [role, model] : models)
    if (is_correct(role, model)) fits.fits.emplace(role, true_fit(role));
  fits.d1 = sem::kD1;
  return fits;
}

RegimeReport run_monte_carlo(const SimulationSpec& spec) {
  if (spec.replications < 2) throw ConfigError("need at least 2 replications");
  if (spec.n < 10) throw ConfigError("n too small for the working models");
  RegimeReport report;
  report.spec = spec;
  report.estimators = {"mle", "a", "b", "mr"};
  if (spec.include_sequential) report.estimators.push_back("mr_seq");
  const auto k = static_cast<Eigen::Index>(report.estimators.size());
  report.values = Eigen::MatrixXd::Constant(spec.replications, k, std::numeric_limits<double>::quiet_NaN());

  const WorkingModelSet all = working_models_for(spec.regime);
  const WorkingModelSet models = models_needed(all, {{BetaKind::Mr, DeltaKind::Ipw}});
  NuisanceOptions options;
  if (!spec.stabilize) options.stabilization = StabilizationFlags::none();
  const TreatmentPair pair{1, 0};

  std::vector<std::string> errors(static_cast<std::size_t>(spec.replications));
  parallel_for(static_cast<std::size_t>(spec.replications), resolve_threads(spec.threads), [&](std::size_t r) {
    try {
      const Dataset data = draw_dataset(spec.n, spec.seed, r);
      const NuisanceFits fits = fit_nuisances(data, pair, models, std::nullopt, options);
      const NuisanceEvaluation ev = evaluate_nuisances(data, fits);
      Eigen::VectorXd row(k);
      row(0) = beta_mle(ev);
      row(1) = beta_a(data, ev);
      row(2) = beta_b(data, ev);
      row(3) = beta_mr(data, ev);
      if (spec.include_sequential) row(4) = beta_mr_sequential(data, pair, models, std::nullopt, options).beta;
      report.values.row(static_cast<Eigen::Index>(r)) = row.transpose();
    } catch (const std::exception& err) {
      errors[r] = err.what();
    }
  });
  std::string first;
  for (const auto& e : errors)
    if (!e.empty()) {
      ++report.failed_replicates;
      if (first.empty()) first = e;
    }
  if (report.failed_replicates * 100 > spec.replications)
    throw EstimationError("simulation aborted: " + std::to_string(report.failed_replicates) + " of " +
                          std::to_string(spec.replications) + " replicates failed (first: " + first + ")");

  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> ok;
    for (Eigen::Index r = 0; r < report.values.rows(); ++r)
      if (std::isfinite(report.values(r, c))) ok.push_back(report.values(r, c));
    EstimatorSummary s;
    s.estimator = report.estimators[static_cast<std::size_t>(c)];
    s.failures = static_cast<int>(report.values.rows()) - static_cast<int>(ok.size());
    s.test = mc_t_test(Eigen::Map<const Eigen::VectorXd>(ok.data(), static_cast<Eigen::Index>(ok.size())),
                       spec.hypothesis, spec.alpha);
    s.bias = s.test.mean - spec.hypothesis;
    report.summaries.push_back(s);
  }
  return report;
}

void write_replicates_csv(std::ostream& out, const RegimeReport& report) {
  out << "regime,rep,estimator,value\n";
  for (Eigen::Index r = 0; r < report.values.rows(); ++r)
    for (Eigen::Index c = 0; c < report.values.cols(); ++c)
      out << to_string(report.spec.regime) << ',' << r << ',' << report.estimators[static_cast<std::size_t>(c)] << ','
          << format_double(report.values(r, c)) << '\n';
}

void write_summary_csv(std::ostream& out, const RegimeReport& report) {
  out << "regime,estimator,n,replications,mean,mc_se,ci_lower,ci_upper,bias,t,critical,reject,failures\n";
  for (const auto& s : report.summaries)
    out << to_string(report.spec.regime) << ',' << s.estimator << ',' << report.spec.n << ','
        << report.spec.replications << ',' << format_double(s.test.mean) << ',' << format_double(s.test.se) << ','
        << format_double(s.test.lower) << ',' << format_double(s.test.upper) << ',' << format_double(s.bias) << ','
        << format_double(s.test.t) << ',' << format_double(s.test.critical) << ',' << (s.test.reject ? 1 : 0) << ','
        << s.failures << '\n';
}

namespace {

constexpr std::int64_t kOracleChunk = 1 << 16;

struct OracleSums {
  double beta = 0, beta2 = 0, delta = 0, delta2 = 0, diff = 0, diff2 = 0;
};

// Each chunk has its own stream, so the result does not depend on the thread count.
OracleSums oracle_chunk(std::uint64_t seed, std::uint64_t chunk, std::int64_t count, int e_c1, int e_m, int e_y,
                        int e_m_alt) {
  StreamRng rng(seed, stream_id(chunk, kBlockOracle));
  OracleSums s;
  for (std::int64_t i = 0; i < count; ++i) {
    const double c0 = rng.uniform(0.0, 2.0);
    Eigen::Vector3d c1 = sem::c1_mean(e_c1, c0);
    for (int j = 0; j < 3; ++j) c1(j) += rng.normal();
    const double um = rng.normal(), uy = rng.normal();
    const double m = sem::m_mean(e_m, c1, c0) + um;
    const double y = sem::y_mean(e_y, c1, m, c0) + uy;
    const double m_alt = sem::m_mean(e_m_alt, c1, c0) + um;
    const double y_alt = sem::y_mean(e_y, c1, m_alt, c0) + uy;
    s.beta += y;
    s.beta2 += y * y;
    s.delta += y_alt;
    s.delta2 += y_alt * y_alt;
    s.diff += y - y_alt;
    s.diff2 += (y - y_alt) * (y - y_alt);
  }
  return s;
}

OracleSums oracle_sums(std::int64_t n_draws, std::uint64_t seed, int e_c1, int e_m, int e_y, int e_m_alt,
                       int threads) {
  if (n_draws < 100000) throw ConfigError("oracle needs at least 100000 draws");
  const std::int64_t chunks = (n_draws + kOracleChunk - 1) / kOracleChunk;
  std::vector<OracleSums> parts(static_cast<std::size_t>(chunks));
  parallel_for(static_cast<std::size_t>(chunks), resolve_threads(threads), [&](std::size_t c) {
    const std::int64_t begin = static_cast<std::int64_t>(c) * kOracleChunk;
    const std::int64_t count = std::min(kOracleChunk, n_draws - begin);
    parts[c] = oracle_chunk(seed, c, count, e_c1, e_m, e_y, e_m_alt);
  });
  OracleSums total;
  for (const auto& p : parts) {
    total.beta += p.beta;
    total.beta2 += p.beta2;
    total.delta += p.delta;
    total.delta2 += p.delta2;
    total.diff += p.diff;
    total.diff2 += p.diff2;
  }
  return total;
}

OracleValue mean_se(double sum, double sum2, std::int64_t n) {
  const double dn = static_cast<double>(n);
  const double mean = sum / dn;
  const double var = std::max(0.0, (sum2 - dn * mean * mean) / (dn - 1.0));
  return {mean, std::sqrt(var / dn)};
}

}  // namespace

OracleValue oracle_counterfactual_mc(std::int64_t n_draws, std::uint64_t seed, int e_c1, int e_m, int e_y,
                                     int threads) {
  const OracleSums s = oracle_sums(n_draws, seed, e_c1, e_m, e_y, e_m, threads);
  return mean_se(s.beta, s.beta2, n_draws);
}

OracleValue oracle_beta0_mc(std::int64_t n_draws, std::uint64_t seed, int threads) {
  return oracle_counterfactual_mc(n_draws, seed, 0, 1, 0, threads);
}

OracleValue oracle_delta0_mc(std::int64_t n_draws, std::uint64_t seed, int threads) {
  return oracle_counterfactual_mc(n_draws, seed, 0, 0, 0, threads);
}

OracleSummary oracle_effect_mc(std::int64_t n_draws, std::uint64_t seed, int threads) {
  const OracleSums s = oracle_sums(n_draws, seed, 0, 1, 0, 0, threads);
  return {mean_se(s.beta, s.beta2, n_draws), mean_se(s.delta, s.delta2, n_draws),
          mean_se(s.diff, s.diff2, n_draws)};
}

Eigen::Vector2d closed_form_bdoubleprime() {
  auto at = [](double c0) {
    const Eigen::Vector3d c1 = sem::c1_mean(0, c0);
    return sem::y_mean(0, c1, sem::m_mean(1, c1, c0), c0);
  };
  return {at(0.0), at(1.0) - at(0.0)};
}

Eigen::Vector2d closed_form_delta_mean() {
  auto at = [](double c0) {
    const Eigen::Vector3d c1 = sem::c1_mean(0, c0);
    return sem::y_mean(0, c1, sem::m_mean(0, c1, c0), c0);
  };
  return {at(0.0), at(1.0) - at(0.0)};
}

double closed_form_beta0() { return closed_form_bdoubleprime().sum(); }
double closed_form_delta0() { return closed_form_delta_mean().sum(); }

}  // namespace pathfx
