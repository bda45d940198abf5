#include "pathfx/nuisance.hpp"

#include "pathfx/special.hpp"

#include <algorithm>
#include <cmath>

namespace pathfx {

namespace {

const char* role_name(RoleKind k) {
  switch (k) {
    case RoleKind::OutcomeB:
      return "outcome_B";
    case RoleKind::OutcomeMarginal:
      return "outcome_marginal";
    case RoleKind::MediatorMean:
      return "mediator_mean";
    case RoleKind::C1Mean:
      return "c1_mean";
    case RoleKind::PropensityC0:
      return "propensity_e_given_c0";
    case RoleKind::PropensityC1C0:
      return "propensity_e_given_c1c0";
    case RoleKind::PropensityMC1C0:
      return "propensity_e_given_mc1c0";
    case RoleKind::PropensityC0InC1Ratio:
      return "propensity_e_given_c0_in_c1_ratio";
    case RoleKind::PropensityC1C0InMRatio:
      return "propensity_e_given_c1c0_in_m_ratio";
  }
  return "?";
}

double prob_of(double p1, int level) { return level == 1 ? p1 : 1.0 - p1; }

double clip_prob(double p, double bound, int* count = nullptr) {
  if (!std::isfinite(p)) throw EstimationError("non-finite fitted probability");
  if (p < bound) {
    if (count) ++*count;
    return bound;
  }
  if (p > 1.0 - bound) {
    if (count) ++*count;
    return 1.0 - bound;
  }
  return p;
}

double predict_at(const FittedGlm& fit, const Record& r, const Overrides& o = {}) {
  return predict_row_mean(fit, build_design_row(r, fit.design, o));
}

bool is_m_c1_product(const Term& t) {
  if (t.kind == Term::Kind::Square) return t.a.column == Column::M || t.a.column == Column::C1;
  if (t.kind != Term::Kind::Product) return false;
  const auto nonlinear = [](Column c) { return c == Column::M || c == Column::C1; };
  return nonlinear(t.a.column) && nonlinear(t.b.column);
}

bool is_c1_c1_product(const Term& t) {
  if (t.kind == Term::Kind::Square) return t.a.column == Column::C1;
  return t.kind == Term::Kind::Product && t.a.column == Column::C1 && t.b.column == Column::C1;
}

bool uses_only(const DesignSpec& spec, std::initializer_list<Column> allowed) {
  for (const auto& t : spec.terms()) {
    for (Column c : {Column::C0, Column::E, Column::C1, Column::M}) {
      if (!t.involves(c)) continue;
      bool ok = false;
      for (Column a : allowed) ok = ok || a == c;
      if (!ok) return false;
    }
  }
  return true;
}

Eigen::VectorXd indicator(const Dataset& data, int level) {
  return (data.e().array() == level).cast<double>().matrix();
}

// Pr(E = 1 | X) after clipping and, when requested, stabilization at `level`.
Eigen::VectorXd adjusted_p1(const FittedGlm& fit, const Dataset& data, int level, bool stabilize, double bound,
                            const std::optional<Eigen::VectorXd>& weights, int& clipped) {
  Eigen::VectorXd p1 = predict_propensity(fit, data);
  for (Eigen::Index i = 0; i < p1.size(); ++i) p1(i) = clip_prob(p1(i), bound, &clipped);
  if (!stabilize) return p1;
  Eigen::VectorXd f = level == 1 ? p1 : Eigen::VectorXd((1.0 - p1.array()).matrix());
  f = stabilize_propensity(f, indicator(data, level), weights);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = clip_prob(f(i), bound, &clipped);
  return level == 1 ? f : Eigen::VectorXd((1.0 - f.array()).matrix());
}

}  // namespace

std::string to_string(const ModelRole& role) {
  if (role.kind == RoleKind::C1Mean) return "c1_mean_" + std::to_string(role.j + 1);
  return role_name(role.kind);
}

ModelRole parse_role(const std::string& name) {
  const std::string prefix = "c1_mean_";
  if (name.rfind(prefix, 0) == 0) {
    const std::string idx = name.substr(prefix.size());
    int j = 0;
    try {
      std::size_t used = 0;
      j = std::stoi(idx, &used);
      if (used != idx.size()) throw std::invalid_argument(idx);
    } catch (const std::exception&) {
      throw ConfigError("bad role '" + name + "'");
    }
    if (j < 1) throw ConfigError("bad role '" + name + "': components are numbered from 1");
    return ModelRole::c1_mean(j - 1);
  }
  for (RoleKind k : {RoleKind::OutcomeB, RoleKind::OutcomeMarginal, RoleKind::MediatorMean, RoleKind::PropensityC0,
                     RoleKind::PropensityC1C0, RoleKind::PropensityMC1C0, RoleKind::PropensityC0InC1Ratio,
                     RoleKind::PropensityC1C0InMRatio})
    if (name == role_name(k)) return {k, 0};
  throw ConfigError("unknown model role '" + name + "'");
}

bool is_propensity(RoleKind k) {
  return k == RoleKind::PropensityC0 || k == RoleKind::PropensityC1C0 || k == RoleKind::PropensityMC1C0 ||
         k == RoleKind::PropensityC0InC1Ratio || k == RoleKind::PropensityC1C0InMRatio;
}

std::string to_string(Pathway p) { return p == Pathway::Linear ? "linear" : "discrete"; }

Pathway parse_pathway(const std::string& name) {
  if (name == "linear") return Pathway::Linear;
  if (name == "discrete") return Pathway::Discrete;
  throw ConfigError("unknown pathway '" + name + "' (linear, discrete)");
}

bool NuisanceFits::has(const ModelRole& role) const {
  if (fits.count(role)) return true;
  if (role.kind == RoleKind::PropensityC0InC1Ratio) return fits.count({RoleKind::PropensityC0, 0}) > 0;
  if (role.kind == RoleKind::PropensityC1C0InMRatio) return fits.count({RoleKind::PropensityC1C0, 0}) > 0;
  return false;
}

const FittedGlm& NuisanceFits::get(const ModelRole& role) const {
  auto it = fits.find(role);
  if (it != fits.end()) return it->second;
  if (role.kind == RoleKind::PropensityC0InC1Ratio) return get({RoleKind::PropensityC0, 0});
  if (role.kind == RoleKind::PropensityC1C0InMRatio) return get({RoleKind::PropensityC1C0, 0});
  throw EstimationError("working model '" + to_string(role) + "' was not fitted");
}

FittedGlm& NuisanceFits::get_mut(const ModelRole& role) {
  auto it = fits.find(role);
  if (it == fits.end()) throw EstimationError("working model '" + to_string(role) + "' was not fitted");
  return it->second;
}

void validate_working_models(const WorkingModelSet& models, int d0, int d1, Pathway pathway) {
  int c1_roles = 0;
  for (const auto& [role, model] : models) {
    const std::string name = to_string(role);
    if (model.design.empty()) throw ConfigError(name + ": empty design");
    try {
      model.design.check_dimensions(d0, d1);
    } catch (const ConfigError& err) {
      throw ConfigError(name + ": " + err.what());
    }
    const DesignSpec& spec = model.design;
    switch (role.kind) {
      case RoleKind::OutcomeB:
        if (pathway == Pathway::Linear) {
          if (model.family != Family::GaussianIdentity)
            throw ConfigError(name + ": linear pathway needs a gaussian outcome model");
          for (const auto& t : spec.terms())
            if (is_m_c1_product(t))
              throw ConfigError(name + ": linear pathway needs the outcome mean linear in M and C1, found " +
                                to_string(t));
        }
        break;
      case RoleKind::OutcomeMarginal:
        if (!uses_only(spec, {Column::C0, Column::E})) throw ConfigError(name + ": may only use C0 and E");
        break;
      case RoleKind::MediatorMean:
        if (spec.terms().end() != std::find_if(spec.terms().begin(), spec.terms().end(),
                                               [](const Term& t) { return t.involves(Column::M); }))
          throw ConfigError(name + ": M cannot appear in its own mean model");
        if (pathway == Pathway::Linear) {
          if (model.family != Family::GaussianIdentity)
            throw ConfigError(name + ": linear pathway needs a gaussian mediator model");
          for (const auto& t : spec.terms())
            if (is_c1_c1_product(t))
              throw ConfigError(name + ": linear pathway needs the mediator mean linear in C1, found " +
                                to_string(t));
        } else if (!is_binomial(model.family)) {
          throw ConfigError(name + ": discrete pathway needs a binomial mediator model");
        }
        break;
      case RoleKind::C1Mean:
        ++c1_roles;
        if (role.j < 0 || role.j >= d1) throw ConfigError(name + ": no such C1 component");
        if (!uses_only(spec, {Column::C0, Column::E})) throw ConfigError(name + ": may only use C0 and E");
        if (pathway == Pathway::Linear && model.family != Family::GaussianIdentity)
          throw ConfigError(name + ": linear pathway needs gaussian C1 mean models");
        if (pathway == Pathway::Discrete && !is_binomial(model.family))
          throw ConfigError(name + ": discrete pathway needs binomial C1 models");
        break;
      case RoleKind::PropensityC0:
      case RoleKind::PropensityC0InC1Ratio:
        if (!is_binomial(model.family)) throw ConfigError(name + ": propensity models must be binomial");
        if (!uses_only(spec, {Column::C0})) throw ConfigError(name + ": may only use C0");
        break;
      case RoleKind::PropensityC1C0:
      case RoleKind::PropensityC1C0InMRatio:
        if (!is_binomial(model.family)) throw ConfigError(name + ": propensity models must be binomial");
        if (!uses_only(spec, {Column::C0, Column::C1})) throw ConfigError(name + ": may only use C0 and C1");
        break;
      case RoleKind::PropensityMC1C0:
        if (!is_binomial(model.family)) throw ConfigError(name + ": propensity models must be binomial");
        if (!uses_only(spec, {Column::C0, Column::C1, Column::M}))
          throw ConfigError(name + ": may only use C0, C1 and M");
        break;
    }
  }
  if (c1_roles != 0 && c1_roles != d1)
    throw ConfigError("c1_mean roles must cover every C1 component (" + std::to_string(d1) + "), got " +
                      std::to_string(c1_roles));
}

NuisanceFits fit_nuisances(const Dataset& data, const TreatmentPair& pair, const WorkingModelSet& models,
                           const std::optional<Eigen::VectorXd>& weights, const NuisanceOptions& options) {
  auto coded = [](int v) { return v == 0 || v == 1; };
  if (!coded(pair.comparison) || !coded(pair.baseline))
    throw EstimationError("fit_nuisances expects a 0/1-coded pair");
  validate_working_models(models, data.d0(), data.d1(), options.pathway);
  if (options.pathway == Pathway::Discrete) {
    auto binary = [](double v) { return v == 0.0 || v == 1.0; };
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      if (models.count({RoleKind::MediatorMean, 0}) && !binary(data.m()(i)))
        throw DataError("row " + std::to_string(i) + ": discrete pathway needs binary m");
      if (models.count(ModelRole::c1_mean(0)))
        for (int j = 0; j < data.d1(); ++j)
          if (!binary(data.c1()(i, j)))
            throw DataError("row " + std::to_string(i) + ": discrete pathway needs binary c1_" +
                            std::to_string(j + 1));
    }
  }

  NuisanceFits out;
  out.pair = pair;
  out.d1 = data.d1();
  out.options = options;
  const Eigen::VectorXd treated = indicator(data, 1);
  for (const auto& [role, model] : models) {
    Eigen::VectorXd y;
    switch (role.kind) {
      case RoleKind::OutcomeB:
      case RoleKind::OutcomeMarginal:
        y = data.y();
        break;
      case RoleKind::MediatorMean:
        y = data.m();
        break;
      case RoleKind::C1Mean:
        y = data.c1().col(role.j);
        break;
      default:
        y = treated;
        break;
    }
    try {
      FittedGlm fit = fit_glm(design_matrix(data, model.design), y, model.family, weights, options.irls);
      fit.design = model.design;
      out.fits.emplace(role, std::move(fit));
    } catch (const FitError& err) {
      throw FitError(to_string(role) + ": " + err.what());
    }
  }
  return out;
}

Eigen::VectorXd predict_propensity(const FittedGlm& fit, const Dataset& data) {
  return predict_mean(fit, design_matrix(data, fit.design));
}

Eigen::VectorXd stabilize_propensity(const Eigen::VectorXd& f_level, const Eigen::VectorXd& at_level,
                                     const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::Index n = f_level.size();
  if (at_level.size() != n || (weights && weights->size() != n))
    throw EstimationError("stabilize_propensity: length mismatch");
  if (((f_level.array() <= 0.0) || (f_level.array() >= 1.0)).any())
    throw EstimationError("stabilize_propensity: fitted probabilities must lie in (0,1)");
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  const double total = w.sum();
  const double share = w.dot(at_level) / total;
  if (!(share > 0.0 && share < 1.0))
    throw EstimationError("stabilize_propensity: degenerate exposure share " + std::to_string(share));
  const Eigen::ArrayXd odds_other = (1.0 - f_level.array()) / f_level.array();
  const double mean_odds = (w.array() * at_level.array() * odds_other).sum() / total;
  const double shift = -std::log1p(-share) + std::log(mean_odds);
  return f_level.unaryExpr([shift](double p) { return expit(logit(p) + shift); });
}

Eigen::VectorXd stabilize_propensity(const FittedGlm& fit, const Dataset& data, int level,
                                     const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::VectorXd p1 = predict_propensity(fit, data);
  const Eigen::VectorXd f = level == 1 ? p1 : Eigen::VectorXd((1.0 - p1.array()).matrix());
  return stabilize_propensity(f, indicator(data, level), weights);
}

double m_ratio(const NuisanceFits& fits, const Record& record) {
  const int e = fits.pair.comparison, ep = fits.pair.baseline;
  const double bound = fits.options.clip;
  const double p = clip_prob(predict_at(fits.get({RoleKind::PropensityMC1C0, 0}), record), bound);
  const double q = clip_prob(predict_at(fits.get({RoleKind::PropensityC1C0InMRatio, 0}), record), bound);
  return prob_of(p, e) / prob_of(p, ep) * (prob_of(q, ep) / prob_of(q, e));
}

double c1_ratio(const NuisanceFits& fits, const Record& record) {
  const int e = fits.pair.comparison, ep = fits.pair.baseline;
  const double bound = fits.options.clip;
  const double p = clip_prob(predict_at(fits.get({RoleKind::PropensityC1C0, 0}), record), bound);
  const double q = clip_prob(predict_at(fits.get({RoleKind::PropensityC0InC1Ratio, 0}), record), bound);
  return prob_of(p, e) / prob_of(p, ep) * (prob_of(q, ep) / prob_of(q, e));
}

double nested_mean_B(const NuisanceFits& fits, const Record& record) {
  Overrides o;
  o.e = fits.pair.baseline;
  return predict_at(fits.get({RoleKind::OutcomeB, 0}), record, o);
}

double nested_mean_Bprime(const NuisanceFits& fits, const Record& record) {
  const FittedGlm& outcome = fits.get({RoleKind::OutcomeB, 0});
  Overrides at_comparison;
  at_comparison.e = fits.pair.comparison;
  const double m_hat = predict_at(fits.get({RoleKind::MediatorMean, 0}), record, at_comparison);
  Overrides o;
  o.e = fits.pair.baseline;
  if (fits.options.pathway == Pathway::Linear) {
    o.m = m_hat;
    return predict_at(outcome, record, o);
  }
  o.m = 0.0;
  const double b0 = predict_at(outcome, record, o);
  o.m = 1.0;
  const double b1 = predict_at(outcome, record, o);
  return b0 * (1.0 - m_hat) + b1 * m_hat;
}

double nested_mean_Bdoubleprime(const NuisanceFits& fits, const Record& record) {
  const int d1 = fits.d1;
  Overrides at_baseline;
  at_baseline.e = fits.pair.baseline;
  Eigen::VectorXd c1_hat(d1);
  for (int j = 0; j < d1; ++j) c1_hat(j) = predict_at(fits.get(ModelRole::c1_mean(j)), record, at_baseline);
  Record r = record;
  if (fits.options.pathway == Pathway::Linear) {
    r.c1 = c1_hat;
    return nested_mean_Bprime(fits, r);
  }
  if (d1 > 20) throw EstimationError("discrete pathway supports at most 20 C1 components");
  double total = 0.0;
  for (unsigned long mask = 0; mask < (1ul << d1); ++mask) {
    double weight = 1.0;
    for (int j = 0; j < d1; ++j) {
      const bool one = (mask >> j) & 1ul;
      r.c1(j) = one ? 1.0 : 0.0;
      weight *= one ? c1_hat(j) : 1.0 - c1_hat(j);
    }
    if (weight != 0.0) total += weight * nested_mean_Bprime(fits, r);
  }
  return total;
}

Eigen::VectorXd nested_means_Bdoubleprime(const Dataset& data, const NuisanceFits& fits) {
  Eigen::VectorXd out(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) out(i) = nested_mean_Bdoubleprime(fits, data.record(i));
  return out;
}

NuisanceEvaluation evaluate_nuisances(const Dataset& data, const NuisanceFits& fits,
                                      const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::Index n = data.size();
  const int e = fits.pair.comparison, ep = fits.pair.baseline;
  const auto& opt = fits.options;
  NuisanceEvaluation ev;
  ev.pair = fits.pair;

  const bool have_b = fits.has({RoleKind::OutcomeB, 0});
  const bool have_bp = have_b && fits.has({RoleKind::MediatorMean, 0});
  bool have_bpp = have_bp && fits.d1 > 0;
  for (int j = 0; j < fits.d1 && have_bpp; ++j) have_bpp = fits.has(ModelRole::c1_mean(j));
  const bool have_q = fits.has({RoleKind::OutcomeMarginal, 0});
  if (have_b) ev.b.resize(n);
  if (have_bp) ev.b_prime.resize(n);
  if (have_bpp) ev.b_doubleprime.resize(n);
  if (have_q) ev.q.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Record r = data.record(i);
    if (have_b) ev.b(i) = nested_mean_B(fits, r);
    if (have_bp) ev.b_prime(i) = nested_mean_Bprime(fits, r);
    if (have_bpp) ev.b_doubleprime(i) = nested_mean_Bdoubleprime(fits, r);
    if (have_q) {
      Overrides o;
      o.e = ep;
      ev.q(i) = predict_at(fits.get({RoleKind::OutcomeMarginal, 0}), r, o);
    }
  }

  auto level_prob = [](const Eigen::VectorXd& p1, int level) -> Eigen::VectorXd {
    return p1.unaryExpr([level](double p) { return prob_of(p, level); });
  };
  if (fits.has({RoleKind::PropensityC0, 0})) {
    const auto& fit = fits.get({RoleKind::PropensityC0, 0});
    ev.f_c0_baseline =
        level_prob(adjusted_p1(fit, data, ep, opt.stabilization.propensity_c0, opt.clip, weights, ev.clipped), ep);
    ev.f_c0_comparison =
        level_prob(adjusted_p1(fit, data, e, opt.stabilization.propensity_c0, opt.clip, weights, ev.clipped), e);
  }
  if (fits.has({RoleKind::PropensityMC1C0, 0}) && fits.has({RoleKind::PropensityC1C0InMRatio, 0})) {
    const Eigen::VectorXd p = adjusted_p1(fits.get({RoleKind::PropensityMC1C0, 0}), data, ep,
                                          opt.stabilization.propensity_mc1c0, opt.clip, weights, ev.clipped);
    const Eigen::VectorXd q = adjusted_p1(fits.get({RoleKind::PropensityC1C0InMRatio, 0}), data, e,
                                          opt.stabilization.propensity_c1c0, opt.clip, weights, ev.clipped);
    ev.m_ratio = (level_prob(p, e).array() / level_prob(p, ep).array() *
                  (level_prob(q, ep).array() / level_prob(q, e).array()))
                     .matrix();
  }
  if (fits.has({RoleKind::PropensityC1C0, 0}) && fits.has({RoleKind::PropensityC0InC1Ratio, 0})) {
    const Eigen::VectorXd p = adjusted_p1(fits.get({RoleKind::PropensityC1C0, 0}), data, e,
                                          opt.stabilization.propensity_c1c0, opt.clip, weights, ev.clipped);
    const Eigen::VectorXd q = adjusted_p1(fits.get({RoleKind::PropensityC0InC1Ratio, 0}), data, e,
                                          opt.stabilization.propensity_c0, opt.clip, weights, ev.clipped);
    ev.c1_ratio = (level_prob(p, e).array() / level_prob(p, ep).array() *
                   (level_prob(q, ep).array() / level_prob(q, e).array()))
                      .matrix();
  }
  return ev;
}

}  // namespace pathfx
