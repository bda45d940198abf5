#include "pathfx/inference.hpp"

#include "pathfx/glm.hpp"
#include "pathfx/rng.hpp"
#include "pathfx/special.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace pathfx {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PATHFX_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1, threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex guard;
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!first) first = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

std::string to_string(BootstrapKind k) { return k == BootstrapKind::Nonparametric ? "nonparametric" : "wild"; }

BootstrapKind parse_bootstrap_kind(const std::string& name) {
  if (name == "nonparametric" || name == "np") return BootstrapKind::Nonparametric;
  if (name == "wild" || name == "wild_exp1") return BootstrapKind::WildExp1;
  throw ConfigError("unknown bootstrap '" + name + "' (nonparametric, wild)");
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw EstimationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

std::pair<double, double> percentile_interval(const Eigen::VectorXd& values, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
  std::vector<double> v;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::isfinite(values(i))) v.push_back(values(i));
  const double a = (1.0 - level) / 2.0;
  return {quantile_type7(v, a), quantile_type7(v, 1.0 - a)};
}

namespace {

constexpr std::uint64_t kBootstrapBlock = 0x40;

BootstrapResult run_replicates(const Dataset& data, const Statistic& stat, const BootstrapSpec& spec,
                               const std::function<Eigen::VectorXd(const Dataset&, int, Dataset&)>& draw) {
  if (spec.replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
  const Eigen::VectorXd point = stat(data, std::nullopt);
  const Eigen::Index k = point.size();
  BootstrapResult out;
  out.replicates = Eigen::MatrixXd::Constant(spec.replicates, k, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(static_cast<std::size_t>(spec.replicates));
  parallel_for(static_cast<std::size_t>(spec.replicates), resolve_threads(spec.threads), [&](std::size_t r) {
    try {
      Dataset resampled;
      const Eigen::VectorXd w = draw(data, static_cast<int>(r), resampled);
      const Eigen::VectorXd v = w.size() ? stat(data, w) : stat(resampled, std::nullopt);
      if (v.size() != k) throw EstimationError("statistic changed length");
      out.replicates.row(static_cast<Eigen::Index>(r)) = v.transpose();
    } catch (const std::exception& err) {
      errors[r] = err.what();
      if (errors[r].empty()) errors[r] = "unknown failure";
    }
  });
  for (const auto& e : errors) out.failures += !e.empty();
  if (out.failures * 10 > spec.replicates) {
    std::ostringstream msg;
    msg << "bootstrap aborted: " << out.failures << " of " << spec.replicates << " replicates failed";
    for (const auto& e : errors)
      if (!e.empty()) {
        msg << " (first: " << e << ")";
        break;
      }
    throw EstimationError(msg.str());
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    IntervalEstimate iv;
    iv.point = point(c);
    iv.replicate_values = out.replicates.col(c);
    std::tie(iv.lower, iv.upper) = percentile_interval(iv.replicate_values, spec.ci_level);
    double sum = 0.0, sum2 = 0.0;
    int used = 0;
    for (Eigen::Index r = 0; r < iv.replicate_values.size(); ++r) {
      const double v = iv.replicate_values(r);
      if (!std::isfinite(v)) continue;
      sum += v;
      ++used;
    }
    const double mean = sum / used;
    for (Eigen::Index r = 0; r < iv.replicate_values.size(); ++r) {
      const double v = iv.replicate_values(r);
      if (std::isfinite(v)) sum2 += (v - mean) * (v - mean);
    }
    iv.se = used > 1 ? std::sqrt(sum2 / (used - 1)) : 0.0;
    out.intervals.push_back(std::move(iv));
  }
  return out;
}

}  // namespace

BootstrapResult bootstrap_with_weights(const Dataset& data, const Statistic& stat, const BootstrapSpec& spec,
                                       const std::function<Eigen::VectorXd(int)>& weights_for) {
  return run_replicates(data, stat, spec, [&](const Dataset& d, int r, Dataset&) {
    Eigen::VectorXd w = weights_for(r);
    if (w.size() != d.size()) throw EstimationError("bootstrap weights length mismatch");
    return w;
  });
}

BootstrapResult bootstrap(const Dataset& data, const Statistic& stat, const BootstrapSpec& spec) {
  const std::uint64_t seed = spec.seed;
  if (spec.kind == BootstrapKind::WildExp1) {
    return bootstrap_with_weights(data, stat, spec, [&](int r) {
      StreamRng rng(seed, stream_id(static_cast<std::uint64_t>(r), kBootstrapBlock));
      Eigen::VectorXd w(data.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.exponential();
      return w;
    });
  }
  return run_replicates(data, stat, spec, [&](const Dataset& d, int r, Dataset& resampled) {
    StreamRng rng(seed, stream_id(static_cast<std::uint64_t>(r), kBootstrapBlock));
    const auto n = static_cast<std::uint64_t>(d.size());
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (auto& row : rows) row = static_cast<Eigen::Index>(std::min<std::uint64_t>(n - 1, rng.uniform() * n));
    resampled = d.select(rows);
    return Eigen::VectorXd();
  });
}

double mle_sandwich_variance(const Dataset& data, const NuisanceFits& fits) {
  const Eigen::Index n = data.size();
  std::vector<ModelRole> roles{{RoleKind::OutcomeB, 0}, {RoleKind::MediatorMean, 0}};
  for (int j = 0; j < fits.d1; ++j) roles.push_back(ModelRole::c1_mean(j));

  // Per-record influence of every coefficient block.
  std::vector<Eigen::MatrixXd> psi;  // n x p_block
  for (const auto& role : roles) {
    FittedGlm fit = fits.get(role);
    if (fit.family == Family::GaussianIdentity && !(fit.sigma2 > 0.0)) fit.sigma2 = 1.0;
    Eigen::VectorXd y;
    if (role.kind == RoleKind::OutcomeB)
      y = data.y();
    else if (role.kind == RoleKind::MediatorMean)
      y = data.m();
    else
      y = data.c1().col(role.j);
    const auto si = score_and_information(fit, design_matrix(data, fit.design), y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(si.information);
    qr.setThreshold(1e-10);
    if (qr.rank() < si.information.cols())
      throw EstimationError("singular information for " + to_string(role) + " in the sandwich variance");
    psi.push_back(static_cast<double>(n) * qr.solve(si.row_scores.transpose()).transpose());
  }

  const Eigen::VectorXd g = nested_means_Bdoubleprime(data, fits);
  const double beta = g.mean();
  Eigen::VectorXd phi = g.array() - beta;
  NuisanceFits shifted = fits;
  for (std::size_t b = 0; b < roles.size(); ++b) {
    FittedGlm& fit = shifted.get_mut(roles[b]);
    for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
      const double orig = fit.coefficients(k);
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      fit.coefficients(k) = orig + h;
      const double up = nested_means_Bdoubleprime(data, shifted).mean();
      fit.coefficients(k) = orig - h;
      const double down = nested_means_Bdoubleprime(data, shifted).mean();
      fit.coefficients(k) = orig;
      const double d = (up - down) / (2.0 * h);
      phi += d * psi[b].col(k);
    }
  }
  return phi.squaredNorm() / static_cast<double>(n) / static_cast<double>(n);
}

TTestResult mc_t_test(const Eigen::VectorXd& values, double h, double alpha) {
  const Eigen::Index R = values.size();
  if (R < 2) throw EstimationError("t test needs at least 2 replicate estimates");
  TTestResult out;
  out.mean = values.mean();
  const double sd = std::sqrt((values.array() - out.mean).square().sum() / static_cast<double>(R - 1));
  out.se = sd / std::sqrt(static_cast<double>(R));
  out.critical = student_t_quantile(1.0 - alpha / 2.0, static_cast<double>(R - 1));
  out.lower = out.mean - out.critical * out.se;
  out.upper = out.mean + out.critical * out.se;
  if (out.se == 0.0) {
    if (out.mean == h) return out;
    out.t = out.mean > h ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.infinite = true;
    out.reject = true;
    return out;
  }
  out.t = (out.mean - h) / out.se;
  out.reject = std::abs(out.t) > out.critical;
  return out;
}

}  // namespace pathfx
