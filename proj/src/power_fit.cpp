#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include <boost/math/tools/minima.hpp>

#include "bubbleview/analysis.hpp"
#include "bubbleview/error.hpp"
#include "bubbleview/random.hpp"

namespace bubbleview {

namespace {

struct Design {
  std::vector<double> log_n;
  std::vector<double> y;
};

LinearPart solve_linear(const Design& d, double b) {
  const std::size_t m = d.y.size();
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = b == 0.0 ? 1.0 : std::exp(b * d.log_n[i]);

  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    xm += x[i];
    ym += d.y[i];
  }
  xm /= static_cast<double>(m);
  ym /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (d.y[i] - ym);
  }

  LinearPart lp;
  if (sxx > 0.0) {
    lp.a = sxy / sxx;
    lp.c = ym - lp.a * xm;
  } else {
    lp.c = ym;  // b == 0: n^b is constant and folds into c
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double r = d.y[i] - (lp.a * x[i] + lp.c);
    lp.rss += r * r;
  }
  return lp;
}

struct Solution {
  double b = 0.0;
  LinearPart lp;
};

Solution solve(const Design& d, double b_min, int grid_points) {
  const int g = std::max(grid_points, 3);
  const double step = -b_min / (g - 1);
  int best = 0;
  LinearPart best_lp = solve_linear(d, b_min);
  for (int k = 1; k < g; ++k) {
    const double b = k == g - 1 ? 0.0 : b_min + k * step;
    const auto lp = solve_linear(d, b);
    if (lp.rss < best_lp.rss) {
      best = k;
      best_lp = lp;
    }
  }
  Solution sol{best == g - 1 ? 0.0 : b_min + best * step, best_lp};

  const double lo = b_min + std::max(best - 1, 0) * step;
  const double hi = best + 1 >= g - 1 ? 0.0 : b_min + (best + 1) * step;
  auto objective = [&](double b) { return solve_linear(d, b).rss; };
  std::uintmax_t iters = 200;
  const auto [b_ref, rss_ref] = boost::math::tools::brent_find_minima(
      objective, lo, hi, std::numeric_limits<double>::digits / 2, iters);
  if (rss_ref <= sol.lp.rss) sol = {b_ref, solve_linear(d, b_ref)};
  return sol;
}

Design make_design(std::span<const FitSample> samples) {
  Design d;
  std::set<double> distinct;
  for (const auto& s : samples) {
    if (!(s.n > 0.0) || !std::isfinite(s.n)) throw ValidationError({"fit_power: n must be positive"});
    if (!std::isfinite(s.score)) throw ValidationError({"fit_power: scores must be finite"});
    distinct.insert(s.n);
    d.log_n.push_back(std::log(s.n));
    d.y.push_back(s.score);
  }
  if (distinct.size() < 4)
    throw ValidationError({"fit_power needs at least 4 distinct n values, got " +
                           std::to_string(distinct.size())});
  return d;
}

double quantile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

}  // namespace

LinearPart fit_linear_part(std::span<const FitSample> samples, double b) {
  Design d;
  for (const auto& s : samples) {
    d.log_n.push_back(std::log(s.n));
    d.y.push_back(s.score);
  }
  return solve_linear(d, b);
}

PowerFit fit_power(std::span<const FitSample> samples, const FitOptions& opts) {
  if (!(opts.b_min < 0.0)) throw ValidationError({"fit_power: b_min must be negative"});
  const Design d = make_design(samples);
  const Solution sol = solve(d, opts.b_min, opts.grid_points);

  PowerFit fit;
  fit.a = sol.lp.a;
  fit.b = sol.b;
  fit.c = sol.lp.c;
  fit.rss = sol.lp.rss;
  fit.seed = opts.seed;
  fit.resamples = std::max(opts.bootstrap_resamples, 0);
  fit.c_ci95 = {fit.c, fit.c};
  if (fit.resamples == 0) return fit;

  const std::size_t m = d.y.size();
  std::vector<double> fitted(m), resid(m);
  for (std::size_t i = 0; i < m; ++i) {
    fitted[i] = fit.a * (fit.b == 0.0 ? 1.0 : std::exp(fit.b * d.log_n[i])) + fit.c;
    resid[i] = d.y[i] - fitted[i];
  }

  std::vector<double> cs;
  cs.reserve(static_cast<std::size_t>(fit.resamples));
  Design boot{d.log_n, std::vector<double>(m)};
  for (int r = 0; r < fit.resamples; ++r) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < m; ++i) boot.y[i] = fitted[i] + resid[uniform_index(rng, m)];
    cs.push_back(solve(boot, opts.b_min, opts.grid_points).lp.c);
  }
  const double lo = quantile(cs, 0.025);
  const double hi = quantile(cs, 0.975);
  fit.c_ci95 = {std::min(lo, fit.c), std::max(hi, fit.c)};
  return fit;
}

std::string format_limit(const PowerFit& fit) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f in the limit (95%% C.I. [%.3f, %.3f])", fit.c,
                fit.c_ci95.first, fit.c_ci95.second);
  return buf;
}

void write_fit_csv(std::ostream& out, const PowerFit& fit) {
  char buf[256];
  out << "a,b,c,rss,c_ci95_lo,c_ci95_hi,resamples,seed\n";
  std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,", fit.a, fit.b, fit.c,
                fit.rss, fit.c_ci95.first, fit.c_ci95.second, fit.resamples);
  out << buf << fit.seed << '\n';
}

}  // namespace bubbleview
