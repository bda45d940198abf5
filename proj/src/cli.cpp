#include "pathfx/cli.hpp"

#include "pathfx/csv.hpp"
#include "pathfx/estimators.hpp"
#include "pathfx/inference.hpp"
#include "pathfx/simulation.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace pathfx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f.precision(17);
  return f;
}

// Prints rows as a left-aligned table.
void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << r[c];
      if (c + 1 < r.size()) out << std::string(width[c] - r[c].size() + 2, ' ');
    }
    out << '\n';
  }
}

StabilizationFlags parse_stabilize(const std::string& text) {
  if (text == "all") return {};
  if (text == "none") return StabilizationFlags::none();
  StabilizationFlags f = StabilizationFlags::none();
  for (const auto& item : split_list(text)) {
    if (item == "c0")
      f.propensity_c0 = true;
    else if (item == "c1c0")
      f.propensity_c1c0 = true;
    else if (item == "mc1c0")
      f.propensity_mc1c0 = true;
    else
      throw ConfigError("unknown stabilization role '" + item + "' (c0, c1c0, mc1c0, all, none)");
  }
  return f;
}

// Inserts [run] values from --config ahead of the user's flags so that flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  const ConfigFile cfg = parse_config_file(path);
  std::vector<std::string> out{args[0], args[1]};
  for (const auto& [key, value] : cfg.run) out.push_back("--" + key + "=" + value);
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

struct EstimateArgs {
  std::string data, config, out = ".", scale = "diff", bootstrap = "none", pathway = "linear", stabilize = "all";
  std::string estimators = "mr", delta;
  int comparison = 1, baseline = 0, reps = 200, threads = 0;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  bool identity = false, ignore_extra = false, print_models = false;
};

struct SimulateArgs {
  std::string regime = "int", out = ".";
  int n = 1000, reps = 200, threads = 0;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  bool paper_scale = false, sequential = false, stabilize = false;
};

struct OracleArgs {
  std::int64_t draws = 10000000;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
};

WorkingModelSet resolve_models(const EstimateArgs& a, const ConfigFile& cfg, int d0, int d1, Pathway pathway) {
  WorkingModelSet models = default_working_models(d0, d1, pathway);
  for (const auto& [name, m] : cfg.models) {
    const ModelRole role = parse_role(name);
    WorkingModel wm = models.count(role) ? models[role] : WorkingModel{};
    if (!m.family.empty()) wm.family = parse_family(m.family);
    if (!m.terms.empty()) wm.design = parse_design(m.terms, d0, d1);
    if (wm.design.empty()) throw ConfigError("model " + name + " has no terms");
    if (is_propensity(role.kind) && !m.family.empty() && !is_binomial(wm.family))
      throw ConfigError("model " + name + " must be logit or probit");
    models[role] = wm;
  }
  (void)a;
  return models;
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
  const ConfigFile cfg = a.config.empty() ? ConfigFile{} : parse_config_file(a.config);
  CsvOptions csv;
  csv.ignore_extra = a.ignore_extra;
  const Dataset raw = read_csv_file(a.data, csv);
  const TreatmentPair pair{a.comparison, a.baseline};
  const CodedData coded = code_exposure(raw, pair, a.identity);

  EstimationConfig config;
  config.nuisance.pathway = parse_pathway(a.pathway);
  config.nuisance.stabilization = parse_stabilize(a.stabilize);
  config.scale = parse_scale(a.scale);
  config.models = resolve_models(a, cfg, raw.d0(), raw.d1(), config.nuisance.pathway);
  config.kinds.clear();
  std::vector<std::string> names = split_list(a.estimators);
  if (names.size() == 1 && names[0] == "all") names = {"mle", "a", "b", "mr"};
  if (names.empty()) throw ConfigError("no estimators requested");
  for (const auto& name : names) {
    const BetaKind b = parse_beta_kind(name);
    config.kinds.push_back({b, a.delta.empty() ? default_delta(b) : parse_delta_kind(a.delta)});
  }
  if (a.print_models) {
    const WorkingModelSet used = models_needed(config.models, config.kinds);
    for (const auto& [role, m] : used)
      out << to_string(role) << ": " << to_string(m.family) << " [" << to_string(m.design) << "]\n";
  }
  validate_working_models(config.models, raw.d0(), raw.d1(), config.nuisance.pathway);

  const auto results = estimate(coded.data, coded.pair, config);

  std::optional<BootstrapResult> boot;
  BootstrapSpec bspec;
  if (a.bootstrap != "none") {
    bspec.kind = parse_bootstrap_kind(a.bootstrap);
    bspec.replicates = a.reps;
    bspec.seed = a.seed;
    bspec.ci_level = a.ci_level;
    bspec.threads = a.threads;
    const Statistic stat = [&](const Dataset& d, const std::optional<Eigen::VectorXd>& w) {
      const auto rs = estimate(d, coded.pair, config, w);
      Eigen::VectorXd v(static_cast<Eigen::Index>(rs.size()));
      for (std::size_t k = 0; k < rs.size(); ++k) v(static_cast<Eigen::Index>(k)) = rs[k].effect;
      return v;
    };
    boot = bootstrap(coded.data, stat, bspec);
  }

  std::vector<std::vector<std::string>> table{{"estimator", "delta", "scale", "n", "beta", "delta_hat", "effect"}};
  if (boot) {
    table[0].insert(table[0].end(), {"se", "ci_lower", "ci_upper"});
  }
  auto est_csv = open_out(a.out, "estimates.csv");
  est_csv << "estimator,delta_estimator,scale,comparison,baseline,n,beta,delta,effect,se,ci_lower,ci_upper,ci_level,"
             "bootstrap,replicates,failures\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    std::vector<std::string> row{to_string(r.kind.beta), to_string(r.kind.delta), to_string(r.scale),
                                 std::to_string(r.n_used), format_double(r.beta_hat), format_double(r.delta_hat),
                                 format_double(r.effect)};
    std::string se = "", lo = "", hi = "";
    if (boot) {
      const auto& iv = boot->intervals[k];
      se = format_double(iv.se);
      lo = format_double(iv.lower);
      hi = format_double(iv.upper);
      row.insert(row.end(), {se, lo, hi});
    }
    table.push_back(row);
    est_csv << to_string(r.kind.beta) << ',' << to_string(r.kind.delta) << ',' << to_string(r.scale) << ','
            << a.comparison << ',' << a.baseline << ',' << r.n_used << ',' << format_double(r.beta_hat) << ','
            << format_double(r.delta_hat) << ',' << format_double(r.effect) << ',' << se << ',' << lo << ',' << hi
            << ',' << (boot ? format_double(a.ci_level) : "") << ',' << a.bootstrap << ','
            << (boot ? std::to_string(a.reps) : "0") << ',' << (boot ? std::to_string(boot->failures) : "0") << '\n';
  }
  out << "pair: comparison " << a.comparison << " vs baseline " << a.baseline << ", n = " << coded.data.size()
      << "\n";
  print_table(out, table);
  auto diag_csv = open_out(a.out, "diagnostics.csv");
  diag_csv << "key,value\n";
  out << "diagnostics:";
  for (const auto& [key, value] : results.front().diagnostics) {
    diag_csv << key << ',' << format_double(value) << '\n';
    out << ' ' << key << '=' << format_double(value);
  }
  out << '\n';
  if (results.front().diagnostics.count("clipped") && results.front().diagnostics.at("clipped") > 0)
    out << "warning: " << results.front().diagnostics.at("clipped") << " fitted probabilities were clipped\n";
  return kExitOk;
}

int cmd_simulate(const SimulateArgs& a, bool reps_given, std::ostream& out) {
  std::vector<Regime> regimes;
  if (a.regime == "all")
    regimes = {Regime::Int, Regime::A, Regime::B, Regime::C};
  else
    regimes = {parse_regime(a.regime)};
  SimulationSpec spec;
  spec.n = a.n;
  spec.replications = (a.paper_scale && !reps_given) ? 1000 : a.reps;
  spec.seed = a.seed;
  spec.alpha = a.alpha;
  spec.threads = a.threads;
  spec.include_sequential = a.sequential;
  spec.stabilize = a.stabilize;
  for (Regime regime : regimes) {
    spec.regime = regime;
    const RegimeReport report = run_monte_carlo(spec);
    {
      auto f = open_out(a.out, "replicates_" + to_string(regime) + ".csv");
      write_replicates_csv(f, report);
    }
    {
      auto f = open_out(a.out, "summary_" + to_string(regime) + ".csv");
      write_summary_csv(f, report);
    }
    out << "regime " << to_string(regime) << ": n = " << spec.n << ", replications = " << spec.replications
        << ", H0: beta = " << spec.hypothesis << '\n';
    std::vector<std::vector<std::string>> table{{"estimator", "mean", "mc_se", "ci_lower", "ci_upper", "t", "reject"}};
    for (const auto& s : report.summaries) {
      std::ostringstream m, se, lo, hi, t;
      m << std::fixed << std::setprecision(4) << s.test.mean;
      se << std::fixed << std::setprecision(4) << s.test.se;
      lo << std::fixed << std::setprecision(4) << s.test.lower;
      hi << std::fixed << std::setprecision(4) << s.test.upper;
      t << std::fixed << std::setprecision(2) << s.test.t;
      table.push_back({s.estimator, m.str(), se.str(), lo.str(), hi.str(), t.str(), s.test.reject ? "yes" : "no"});
    }
    print_table(out, table);
    if (report.failed_replicates > 0) out << "failed replicates: " << report.failed_replicates << '\n';
  }
  return kExitOk;
}

int cmd_oracle(const OracleArgs& a, std::ostream& out) {
  if (a.draws < 100000) throw ConfigError("--draws must be at least 100000");
  const OracleSummary s = oracle_effect_mc(a.draws, a.seed, a.threads);
  const Eigen::Vector2d bpp = closed_form_bdoubleprime(), dm = closed_form_delta_mean();
  auto fmt = [](double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
  };
  print_table(out, {{"quantity", "value", "mc_se", "closed_form"},
                    {"beta0", fmt(s.beta0.value, 5), fmt(s.beta0.se, 5), fmt(closed_form_beta0(), 5)},
                    {"delta0", fmt(s.delta0.value, 5), fmt(s.delta0.se, 5), fmt(closed_form_delta0(), 5)},
                    {"effect", fmt(s.effect.value, 5), fmt(s.effect.se, 5),
                     fmt(closed_form_beta0() - closed_form_delta0(), 5)}});
  out << "E[B''(0,1,C0) | C0] = " << fmt(bpp(0), 4) << " + " << fmt(bpp(1), 4) << " C0\n";
  out << "E[Y(0) | C0]        = " << fmt(dm(0), 4) << " + " << fmt(dm(1), 4) << " C0\n";
  if (!a.out.empty()) {
    auto f = open_out(a.out, "oracle.csv");
    f << "quantity,value,mc_se,draws,seed\n";
    f << "beta0," << format_double(s.beta0.value) << ',' << format_double(s.beta0.se) << ',' << a.draws << ','
      << a.seed << '\n';
    f << "delta0," << format_double(s.delta0.value) << ',' << format_double(s.delta0.se) << ',' << a.draws << ','
      << a.seed << '\n';
    f << "effect," << format_double(s.effect.value) << ',' << format_double(s.effect.se) << ',' << a.draws << ','
      << a.seed << '\n';
  }
  return kExitOk;
}

}  // namespace

ConfigFile parse_config(std::istream& in) {
  ConfigFile cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section.rfind("model ", 0) != 0)
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      if (section != "run") {
        const std::string role = trim(section.substr(6));
        parse_role(role);
        cfg.models[role];
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    if (section == "run") {
      if (key == "config") throw ConfigError("config files cannot include other config files");
      cfg.run[key] = value;
      continue;
    }
    auto& model = cfg.models[trim(section.substr(6))];
    if (key == "family")
      model.family = value;
    else if (key == "terms")
      model.terms = value;
    else
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown model key '" + key + "'");
  }
  return cfg;
}

ConfigFile parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config(f);
}

WorkingModelSet default_working_models(int d0, int d1, Pathway pathway) {
  const Family mean_family = pathway == Pathway::Linear ? Family::GaussianIdentity : Family::BinomialLogit;
  auto spec = [&](const std::string& t) { return parse_design(t, d0, d1); };
  const std::string c0 = d0 > 0 ? ", c0" : "", c1 = d1 > 0 ? ", c1" : "";
  WorkingModelSet set;
  set[{RoleKind::OutcomeB, 0}] = {spec("1" + c0 + ", e" + c1 + ", m, e*m"), Family::GaussianIdentity};
  set[{RoleKind::OutcomeMarginal, 0}] = {spec("1" + c0 + ", e"), Family::GaussianIdentity};
  set[{RoleKind::MediatorMean, 0}] = {spec("1" + c0 + ", e" + c1), mean_family};
  for (int j = 0; j < d1; ++j) set[ModelRole::c1_mean(j)] = {spec("1" + c0 + ", e"), mean_family};
  set[{RoleKind::PropensityC0, 0}] = {spec("1" + c0), Family::BinomialLogit};
  set[{RoleKind::PropensityC1C0, 0}] = {spec("1" + c0 + c1), Family::BinomialLogit};
  set[{RoleKind::PropensityMC1C0, 0}] = {spec("1" + c0 + c1 + ", m"), Family::BinomialLogit};
  return set;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Path-specific effect estimation through a mediator with exposure-induced confounding", "pathfx"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study under a misspecification regime");
  simulate->add_option("--regime", sim.regime, "int, a, b, c or all")->capture_default_str();
  simulate->add_option("--n", sim.n, "records per dataset")->capture_default_str()->check(CLI::PositiveNumber);
  auto* sim_reps =
      simulate->add_option("--reps", sim.reps, "replications")->capture_default_str()->check(CLI::Range(2, 1000000));
  simulate->add_flag("--paper-scale", sim.paper_scale, "1000 replications");
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--alpha", sim.alpha)->capture_default_str()->check(CLI::Range(1e-6, 0.5));
  simulate->add_option("--out", sim.out, "directory for CSV output")->capture_default_str();
  simulate->add_option("--threads", sim.threads, "worker threads (default $PATHFX_THREADS or all cores)");
  simulate->add_flag("--sequential", sim.sequential, "also run the sequentially refitted estimator");
  simulate->add_flag("--stabilize", sim.stabilize, "logit-shift stabilized propensities");
  simulate->add_option("--config", "config file ([run] keys mirror these flags)");

  EstimateArgs est;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate the effect from a CSV file");
  estimate_cmd->add_option("--data", est.data, "input CSV")->required();
  estimate_cmd->add_option("--config", est.config, "config file");
  estimate_cmd->add_option("--estimator", est.estimators, "mle, a, b, mr, mr_seq (comma list) or all")
      ->capture_default_str();
  estimate_cmd->add_option("--delta", est.delta, "gformula, ipw or aipw (default pairs with the estimator)");
  estimate_cmd->add_option("--comparison", est.comparison)->capture_default_str();
  estimate_cmd->add_option("--baseline", est.baseline)->capture_default_str();
  estimate_cmd->add_flag("--identity-check", est.identity, "allow comparison == baseline");
  estimate_cmd->add_option("--scale", est.scale, "diff or logrr")->capture_default_str();
  estimate_cmd->add_option("--bootstrap", est.bootstrap, "none, nonparametric or wild")->capture_default_str();
  estimate_cmd->add_option("--reps", est.reps, "bootstrap replicates")->capture_default_str()->check(CLI::Range(2, 1000000));
  estimate_cmd->add_option("--ci-level", est.ci_level)->capture_default_str()->check(CLI::Range(0.5, 0.9999));
  estimate_cmd->add_option("--seed", est.seed)->capture_default_str();
  estimate_cmd->add_option("--pathway", est.pathway, "linear or discrete")->capture_default_str();
  estimate_cmd->add_option("--stabilize", est.stabilize, "all, none or a list of c0, c1c0, mc1c0")
      ->capture_default_str();
  estimate_cmd->add_flag("--ignore-extra", est.ignore_extra, "ignore unknown CSV columns");
  estimate_cmd->add_flag("--print-models", est.print_models, "print the resolved working models");
  estimate_cmd->add_option("--out", est.out, "directory for CSV output")->capture_default_str();
  estimate_cmd->add_option("--threads", est.threads);

  OracleArgs orc;
  auto* oracle = app.add_subcommand("oracle", "Counterfactual Monte Carlo of the true values");
  oracle->add_option("--draws", orc.draws)->capture_default_str();
  oracle->add_option("--seed", orc.seed)->capture_default_str();
  oracle->add_option("--threads", orc.threads);
  oracle->add_option("--out", orc.out, "directory for oracle.csv");
  oracle->add_option("--config", "config file");

  try {
    std::vector<std::string> expanded = expand_config(args);
    std::vector<std::string> rest(expanded.rbegin(), expanded.rend() - 1);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim, sim_reps->count() > 0, out);
    if (*estimate_cmd) return cmd_estimate(est, out);
    if (*oracle) return cmd_oracle(orc, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FitError& e) {
    err << "estimation error: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const EstimationError& e) {
    err << "estimation error: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace pathfx
