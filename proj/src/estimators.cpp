#include "pathfx/estimators.hpp"

#include <cmath>
#include <set>

namespace pathfx {

namespace {

void need(const Eigen::VectorXd& v, Eigen::Index n, const char* what, const char* estimator) {
  if (v.size() != n)
    throw EstimationError(std::string(estimator) + " needs " + what + " (fit the corresponding working model)");
}

Eigen::ArrayXd arm(const Dataset& data, int level) { return (data.e().array() == level).cast<double>(); }

double clip_level(double p1, int level, double bound) {
  const double p = std::min(std::max(p1, bound), 1.0 - bound);
  return level == 1 ? p : 1.0 - p;
}

}  // namespace

std::string to_string(BetaKind k) {
  switch (k) {
    case BetaKind::Mle:
      return "mle";
    case BetaKind::A:
      return "a";
    case BetaKind::B:
      return "b";
    case BetaKind::Mr:
      return "mr";
    case BetaKind::MrSequential:
      return "mr_seq";
  }
  return "?";
}

std::string to_string(DeltaKind k) {
  switch (k) {
    case DeltaKind::GFormula:
      return "gformula";
    case DeltaKind::Ipw:
      return "ipw";
    case DeltaKind::Aipw:
      return "aipw";
  }
  return "?";
}

std::string to_string(EffectScale s) { return s == EffectScale::MeanDifference ? "diff" : "logrr"; }

BetaKind parse_beta_kind(const std::string& name) {
  for (BetaKind k : {BetaKind::Mle, BetaKind::A, BetaKind::B, BetaKind::Mr, BetaKind::MrSequential})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown estimator '" + name + "' (mle, a, b, mr, mr_seq)");
}

DeltaKind parse_delta_kind(const std::string& name) {
  for (DeltaKind k : {DeltaKind::GFormula, DeltaKind::Ipw, DeltaKind::Aipw})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown delta estimator '" + name + "' (gformula, ipw, aipw)");
}

EffectScale parse_scale(const std::string& name) {
  if (name == "diff" || name == "mean_difference") return EffectScale::MeanDifference;
  if (name == "logrr" || name == "log_risk_ratio") return EffectScale::LogRiskRatio;
  throw ConfigError("unknown scale '" + name + "' (diff, logrr)");
}

DeltaKind default_delta(BetaKind k) {
  switch (k) {
    case BetaKind::Mle:
      return DeltaKind::GFormula;
    case BetaKind::A:
      return DeltaKind::Ipw;
    default:
      return DeltaKind::Aipw;
  }
}

double empirical_mean(const Eigen::VectorXd& x, const std::optional<Eigen::VectorXd>& w) {
  if (x.size() == 0) throw EstimationError("empirical mean of an empty vector");
  if (!w) return x.mean();
  if (w->size() != x.size()) throw EstimationError("row weights length mismatch");
  return w->dot(x) / w->sum();
}

double beta_mle(const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  if (ev.b_doubleprime.size() == 0)
    throw EstimationError("beta_mle needs the outcome, mediator and C1 mean models");
  return empirical_mean(ev.b_doubleprime, w);
}

double beta_a(const Dataset& data, const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  const Eigen::Index n = data.size();
  need(ev.f_c0_baseline, n, "propensity_e_given_c0", "beta_a");
  need(ev.m_ratio, n, "the M ratio propensity models", "beta_a");
  const Eigen::VectorXd s =
      (arm(data, ev.pair.baseline) / ev.f_c0_baseline.array() * ev.m_ratio.array() * data.y().array()).matrix();
  return empirical_mean(s, w);
}

double beta_b(const Dataset& data, const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  const Eigen::Index n = data.size();
  need(ev.f_c0_comparison, n, "propensity_e_given_c0", "beta_b");
  need(ev.c1_ratio, n, "the C1 ratio propensity models", "beta_b");
  need(ev.b, n, "outcome_B", "beta_b");
  const Eigen::VectorXd s =
      (arm(data, ev.pair.comparison) / (ev.f_c0_comparison.array() * ev.c1_ratio.array()) * ev.b.array()).matrix();
  return empirical_mean(s, w);
}

Eigen::MatrixXd beta_mr_weighted_terms(const Dataset& data, const NuisanceEvaluation& ev) {
  const Eigen::Index n = data.size();
  need(ev.f_c0_baseline, n, "propensity_e_given_c0", "beta_mr");
  need(ev.m_ratio, n, "the M ratio propensity models", "beta_mr");
  need(ev.c1_ratio, n, "the C1 ratio propensity models", "beta_mr");
  need(ev.b_doubleprime, n, "the outcome, mediator and C1 mean models", "beta_mr");
  const Eigen::ArrayXd w0 = arm(data, ev.pair.baseline) / ev.f_c0_baseline.array();
  const Eigen::ArrayXd w1 = arm(data, ev.pair.comparison) / ev.f_c0_comparison.array();
  Eigen::MatrixXd t(n, 3);
  t.col(0) = (w0 * ev.m_ratio.array() * (data.y() - ev.b).array()).matrix();
  t.col(1) = (w1 / ev.c1_ratio.array() * (ev.b - ev.b_prime).array()).matrix();
  t.col(2) = (w0 * (ev.b_prime - ev.b_doubleprime).array()).matrix();
  return t;
}

Eigen::VectorXd beta_mr_summands(const Dataset& data, const NuisanceEvaluation& ev) {
  const Eigen::MatrixXd t = beta_mr_weighted_terms(data, ev);
  return t.rowwise().sum() + ev.b_doubleprime;
}

double beta_mr(const Dataset& data, const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  return empirical_mean(beta_mr_summands(data, ev), w);
}

Eigen::VectorXd influence_function_values(const Dataset& data, const NuisanceEvaluation& ev, double beta) {
  return beta_mr_summands(data, ev).array() - beta;
}

double influence_function_value(const Record& record, const NuisanceFits& fits, double beta) {
  const int e = fits.pair.comparison, ep = fits.pair.baseline;
  const double bound = fits.options.clip;
  const double p1 =
      predict_row_mean(fits.get({RoleKind::PropensityC0, 0}), build_design_row(record, fits.get({RoleKind::PropensityC0, 0}).design));
  const double w0 = record.e == ep ? 1.0 / clip_level(p1, ep, bound) : 0.0;
  const double w1 = record.e == e ? 1.0 / clip_level(p1, e, bound) : 0.0;
  const double b = nested_mean_B(fits, record);
  const double bp = nested_mean_Bprime(fits, record);
  const double bpp = nested_mean_Bdoubleprime(fits, record);
  double v = bpp - beta;
  if (w0 != 0.0) v += w0 * m_ratio(fits, record) * (record.y - b) + w0 * (bp - bpp);
  if (w1 != 0.0) v += w1 / c1_ratio(fits, record) * (b - bp);
  return v;
}

double delta_gformula(const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  if (ev.q.size() == 0) throw EstimationError("delta_gformula needs outcome_marginal");
  return empirical_mean(ev.q, w);
}

double delta_ipw(const Dataset& data, const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w) {
  need(ev.f_c0_baseline, data.size(), "propensity_e_given_c0", "delta_ipw");
  const Eigen::VectorXd s = (arm(data, ev.pair.baseline) / ev.f_c0_baseline.array() * data.y().array()).matrix();
  return empirical_mean(s, w);
}

double delta_aipw(const Dataset& data, const NuisanceEvaluation& ev, const std::optional<Eigen::VectorXd>& w,
                  const std::optional<Eigen::VectorXd>& q) {
  const Eigen::Index n = data.size();
  need(ev.f_c0_baseline, n, "propensity_e_given_c0", "delta_aipw");
  const Eigen::VectorXd& qq = q ? *q : ev.q;
  need(qq, n, "outcome_marginal", "delta_aipw");
  const Eigen::ArrayXd w0 = arm(data, ev.pair.baseline) / ev.f_c0_baseline.array();
  const Eigen::VectorXd s = (w0 * (data.y() - qq).array() + qq.array()).matrix();
  return empirical_mean(s, w);
}

SequentialResult beta_mr_sequential_with(const Dataset& data, NuisanceFits fits, const SequentialFactors& factors,
                                         const std::optional<Eigen::VectorXd>& w) {
  const Eigen::Index n = data.size();
  const int e = fits.pair.comparison, ep = fits.pair.baseline;
  if (e == ep) throw EstimationError("beta_mr_sequential needs distinct comparison and baseline levels");
  if (fits.options.pathway != Pathway::Linear)
    throw EstimationError("beta_mr_sequential is restricted to continuous M and C1 (linear pathway)");
  if (factors.term1.size() != n || factors.term2.size() != n || factors.term3.size() != n)
    throw EstimationError("beta_mr_sequential: factor length mismatch");
  const Eigen::VectorXd rw = w ? *w : Eigen::VectorXd::Ones(n);
  const Eigen::ArrayXd at_base = arm(data, ep), at_comp = arm(data, e);

  auto check_design = [](const FittedGlm& fit, const std::string& name) {
    if (fit.family != Family::GaussianIdentity) throw EstimationError(name + " must be gaussian for beta_mr_sequential");
    if (!fit.design.has_intercept() || !fit.design.has_term(Term::covariate({Column::E, 0})))
      throw EstimationError(name + " needs an intercept and an E term for beta_mr_sequential");
  };
  auto refit = [&](FittedGlm& fit, const Eigen::VectorXd& y, const Eigen::VectorXd& omega, const std::string& name) {
    try {
      fit.coefficients = solve_weighted_normal_equations(design_matrix(data, fit.design), y, omega);
    } catch (const FitError& err) {
      throw FitError(name + " (sequential refit): " + err.what());
    }
  };

  // Step 1: outcome, so that Pn[1_e' term1 (Y - B)] = 0.
  FittedGlm& outcome = fits.get_mut({RoleKind::OutcomeB, 0});
  check_design(outcome, "outcome_B");
  {
    const Eigen::VectorXd omega = (rw.array() * (at_base * factors.term1.array() + (1.0 - at_base))).matrix();
    refit(outcome, data.y(), omega, "outcome_B");
  }

  // Step 2: mediator, weighted by the slope of B in M on the comparison arm.
  FittedGlm& mediator = fits.get_mut({RoleKind::MediatorMean, 0});
  check_design(mediator, "mediator_mean");
  {
    Eigen::VectorXd slope = Eigen::VectorXd::Ones(n);
    if (factors.slope_weighting) {
      for (Eigen::Index i = 0; i < n; ++i) {
        Record r = data.record(i);
        r.m = 1.0;
        const double b1 = nested_mean_B(fits, r);
        r.m = 0.0;
        slope(i) = b1 - nested_mean_B(fits, r);
      }
    }
    const Eigen::VectorXd omega =
        (rw.array() * (at_comp * factors.term2.array() * slope.array() + (1.0 - at_comp))).matrix();
    refit(mediator, data.m(), omega, "mediator_mean");
  }

  // Step 3: each C1 component, weighted by the slope of B' in that component on the baseline arm.
  const int d1 = data.d1();
  Eigen::MatrixXd slopes = Eigen::MatrixXd::Ones(n, d1);
  if (factors.slope_weighting) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Record r = data.record(i);
      const double base = nested_mean_Bprime(fits, r);
      for (int j = 0; j < d1; ++j) {
        r.c1(j) += 1.0;
        slopes(i, j) = nested_mean_Bprime(fits, r) - base;
        r.c1(j) -= 1.0;
      }
    }
  }
  for (int j = 0; j < d1; ++j) {
    FittedGlm& c1 = fits.get_mut(ModelRole::c1_mean(j));
    const std::string name = to_string(ModelRole::c1_mean(j));
    check_design(c1, name);
    const Eigen::ArrayXd t = slopes.col(j).array();
    const double scale = (at_base * t.abs()).maxCoeff();
    if (scale <= 1e-12) {
      refit(c1, data.c1().col(j), rw, name);  // B' does not move with this component
      continue;
    }
    const Eigen::VectorXd omega = (rw.array() * (at_base * factors.term3.array() * t + (1.0 - at_base))).matrix();
    refit(c1, data.c1().col(j), omega, name);
  }

  SequentialResult out;
  Eigen::VectorXd b(n), bp(n), bpp(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Record r = data.record(i);
    b(i) = nested_mean_B(fits, r);
    bp(i) = nested_mean_Bprime(fits, r);
    bpp(i) = nested_mean_Bdoubleprime(fits, r);
  }
  const std::optional<Eigen::VectorXd> wopt = rw;
  out.terms(0) = empirical_mean((at_base * factors.term1.array() * (data.y() - b).array()).matrix(), wopt);
  out.terms(1) = empirical_mean((at_comp * factors.term2.array() * (b - bp).array()).matrix(), wopt);
  out.terms(2) = empirical_mean((at_base * factors.term3.array() * (bp - bpp).array()).matrix(), wopt);
  out.beta = empirical_mean(bpp, wopt);
  out.fits = std::move(fits);
  return out;
}

SequentialResult beta_mr_sequential(const Dataset& data, const TreatmentPair& pair, const WorkingModelSet& models,
                                    const std::optional<Eigen::VectorXd>& w, const NuisanceOptions& options) {
  const WorkingModelSet needed = models_needed(models, {{BetaKind::MrSequential, DeltaKind::Aipw}});
  NuisanceFits fits = fit_nuisances(data, pair, needed, w, options);
  const NuisanceEvaluation ev = evaluate_nuisances(data, fits, w);
  const Eigen::Index n = data.size();
  need(ev.f_c0_baseline, n, "propensity_e_given_c0", "beta_mr_sequential");
  need(ev.m_ratio, n, "the M ratio propensity models", "beta_mr_sequential");
  need(ev.c1_ratio, n, "the C1 ratio propensity models", "beta_mr_sequential");
  SequentialFactors f;
  f.term1 = (ev.m_ratio.array() / ev.f_c0_baseline.array()).matrix();
  f.term2 = (1.0 / (ev.f_c0_comparison.array() * ev.c1_ratio.array())).matrix();
  f.term3 = (1.0 / ev.f_c0_baseline.array()).matrix();
  return beta_mr_sequential_with(data, std::move(fits), f, w);
}

double combine_effect(double beta_hat, double delta_hat, EffectScale scale) {
  if (scale == EffectScale::MeanDifference) return beta_hat - delta_hat;
  if (!(beta_hat > 0.0) || !(delta_hat > 0.0))
    throw EstimationError("log risk ratio needs positive beta and delta (got " + std::to_string(beta_hat) + ", " +
                          std::to_string(delta_hat) + ")");
  return std::log(beta_hat / delta_hat);
}

std::map<std::string, double> weight_diagnostics(const Dataset& data, const NuisanceEvaluation& ev) {
  std::map<std::string, double> out;
  const Eigen::Index n = data.size();
  auto summarize = [&](const std::string& tag, const Eigen::ArrayXd& wts) {
    const double sum = wts.sum(), sum2 = wts.square().sum();
    out["max_weight_" + tag] = wts.maxCoeff();
    out["ess_" + tag] = sum2 > 0 ? sum * sum / sum2 : 0.0;
  };
  if (ev.f_c0_baseline.size() == n) summarize("ipw", arm(data, ev.pair.baseline) / ev.f_c0_baseline.array());
  if (ev.f_c0_baseline.size() == n && ev.m_ratio.size() == n)
    summarize("a", arm(data, ev.pair.baseline) * ev.m_ratio.array() / ev.f_c0_baseline.array());
  if (ev.f_c0_comparison.size() == n && ev.c1_ratio.size() == n)
    summarize("b", arm(data, ev.pair.comparison) / (ev.f_c0_comparison.array() * ev.c1_ratio.array()));
  out["clipped"] = ev.clipped;
  return out;
}

WorkingModelSet models_needed(const WorkingModelSet& all, const std::vector<EstimatorKind>& kinds) {
  std::set<RoleKind> roles;
  auto add = [&](std::initializer_list<RoleKind> ks) { roles.insert(ks); };
  const bool m_override = all.count({RoleKind::PropensityC1C0InMRatio, 0}) > 0;
  for (const auto& k : kinds) {
    switch (k.beta) {
      case BetaKind::Mle:
        add({RoleKind::OutcomeB, RoleKind::MediatorMean, RoleKind::C1Mean});
        break;
      case BetaKind::A:
        add({RoleKind::PropensityC0, RoleKind::PropensityMC1C0, RoleKind::PropensityC1C0InMRatio});
        if (!m_override) add({RoleKind::PropensityC1C0});
        break;
      case BetaKind::B:
        add({RoleKind::OutcomeB, RoleKind::PropensityC0, RoleKind::PropensityC1C0, RoleKind::PropensityC0InC1Ratio});
        break;
      case BetaKind::Mr:
      case BetaKind::MrSequential:
        add({RoleKind::OutcomeB, RoleKind::MediatorMean, RoleKind::C1Mean, RoleKind::PropensityC0,
             RoleKind::PropensityC1C0, RoleKind::PropensityMC1C0, RoleKind::PropensityC0InC1Ratio,
             RoleKind::PropensityC1C0InMRatio});
        break;
    }
    switch (k.delta) {
      case DeltaKind::GFormula:
        add({RoleKind::OutcomeMarginal});
        break;
      case DeltaKind::Ipw:
        add({RoleKind::PropensityC0});
        break;
      case DeltaKind::Aipw:
        add({RoleKind::PropensityC0, RoleKind::OutcomeMarginal});
        break;
    }
  }
  WorkingModelSet out;
  for (const auto& [role, model] : all)
    if (roles.count(role.kind)) out.emplace(role, model);
  return out;
}

std::vector<EstimateResult> estimate(const Dataset& data, const TreatmentPair& pair, const EstimationConfig& config,
                                     const std::optional<Eigen::VectorXd>& w) {
  if (config.kinds.empty()) throw ConfigError("no estimators requested");
  const WorkingModelSet needed = models_needed(config.models, config.kinds);
  const NuisanceFits fits = fit_nuisances(data, pair, needed, w, config.nuisance);
  const NuisanceEvaluation ev = evaluate_nuisances(data, fits, w);
  const auto diagnostics = weight_diagnostics(data, ev);

  std::optional<double> sequential;
  std::vector<EstimateResult> out;
  for (const auto& kind : config.kinds) {
    EstimateResult r;
    r.kind = kind;
    r.pair = pair;
    r.scale = config.scale;
    r.n_used = data.size();
    r.diagnostics = diagnostics;
    switch (kind.beta) {
      case BetaKind::Mle:
        r.beta_hat = beta_mle(ev, w);
        break;
      case BetaKind::A:
        r.beta_hat = beta_a(data, ev, w);
        break;
      case BetaKind::B:
        r.beta_hat = beta_b(data, ev, w);
        break;
      case BetaKind::Mr:
        r.beta_hat = beta_mr(data, ev, w);
        break;
      case BetaKind::MrSequential:
        if (!sequential) sequential = beta_mr_sequential(data, pair, config.models, w, config.nuisance).beta;
        r.beta_hat = *sequential;
        break;
    }
    switch (kind.delta) {
      case DeltaKind::GFormula:
        r.delta_hat = delta_gformula(ev, w);
        break;
      case DeltaKind::Ipw:
        r.delta_hat = delta_ipw(data, ev, w);
        break;
      case DeltaKind::Aipw:
        r.delta_hat = delta_aipw(data, ev, w);
        break;
    }
    r.effect = combine_effect(r.beta_hat, r.delta_hat, config.scale);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pathfx
