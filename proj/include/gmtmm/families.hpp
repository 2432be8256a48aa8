#pragma once

// Response families: log-densities, gradients with respect to the
// measurement block, conditional moments, and random draws. The block
// pointer follows the natural-parameter layout of ParameterLayout:
//   gaussian / censored_gaussian : [tau, lambda, gamma, sigma]
//   multinomial(n)               : [tau_k, lambda_k, gamma_k] for k = 1..n-1
//   cumulative_probit(n)         : [thr_1 .. thr_{n-1}, lambda, gamma]

#include <optional>
#include <random>

#include "gmtmm/design.hpp"
#include "gmtmm/math.hpp"
#include "gmtmm/parameters.hpp"

namespace gmtmm {

// P(a < Z < b) for standard normal, stable in both tails.
inline double norm_interval_prob(double a, double b) {
  double p;
  if (a + b > 0.0)
    p = norm_cdf(-a) - norm_cdf(-b);
  else
    p = norm_cdf(b) - norm_cdf(a);
  return p;
}

namespace fam {

inline double predictor(const double* block, double u, double v) {
  return block[0] + block[1] * u + block[2] * v;
}

inline double logdensity(const VariableSpec& var, const double* block, double u, double v,
                         double y) {
  switch (var.family) {
    case Family::gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3];
      const double z = (y - nu) / sigma;
      return norm_logpdf(z) - std::log(sigma);
    }
    case Family::censored_gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3];
      if (y <= var.censor_bound) return norm_logcdf((var.censor_bound - nu) / sigma);
      const double z = (y - nu) / sigma;
      return norm_logpdf(z) - std::log(sigma);
    }
    case Family::multinomial: {
      const int n = var.n_categories, k = int(y);
      double mx = 0.0;  // predictor of reference category 0
      double nu_y = 0.0;
      for (int c = 1; c < n; ++c) {
        const double nc = predictor(block + 3 * (c - 1), u, v);
        if (c == k) nu_y = nc;
        if (nc > mx) mx = nc;
      }
      double denom = std::exp(-mx);
      for (int c = 1; c < n; ++c)
        denom += std::exp(predictor(block + 3 * (c - 1), u, v) - mx);
      return nu_y - mx - std::log(denom);
    }
    case Family::cumulative_probit: {
      const int n = var.n_categories, k = int(y);
      const double shift = block[n - 1] * u + block[n] * v;
      const double hi = (k == n - 1) ? std::numeric_limits<double>::infinity() : block[k] - shift;
      const double lo = (k == 0) ? -std::numeric_limits<double>::infinity() : block[k - 1] - shift;
      if (k == 0) return norm_logcdf(hi);
      if (k == n - 1) return norm_logcdf(-lo);
      return std::log(std::max(norm_interval_prob(lo, hi), 1e-300));
    }
  }
  return kNegInf;
}

// Accumulates weight * d log f / d block into gblock.
inline void grad(const VariableSpec& var, const double* block, double u, double v, double y,
                 double weight, double* gblock) {
  switch (var.family) {
    case Family::gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3];
      const double z = (y - nu) / sigma;
      const double dnu = weight * z / sigma;
      gblock[0] += dnu;
      gblock[1] += dnu * u;
      gblock[2] += dnu * v;
      gblock[3] += weight * (z * z - 1.0) / sigma;
      break;
    }
    case Family::censored_gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3];
      if (y <= var.censor_bound) {
        const double zc = (var.censor_bound - nu) / sigma;
        const double h = norm_hazard(zc);
        const double dnu = -weight * h / sigma;
        gblock[0] += dnu;
        gblock[1] += dnu * u;
        gblock[2] += dnu * v;
        gblock[3] += -weight * h * zc / sigma;
      } else {
        const double z = (y - nu) / sigma;
        const double dnu = weight * z / sigma;
        gblock[0] += dnu;
        gblock[1] += dnu * u;
        gblock[2] += dnu * v;
        gblock[3] += weight * (z * z - 1.0) / sigma;
      }
      break;
    }
    case Family::multinomial: {
      const int n = var.n_categories, k = int(y);
      double mx = 0.0;
      for (int c = 1; c < n; ++c) mx = std::max(mx, predictor(block + 3 * (c - 1), u, v));
      double denom = std::exp(-mx);
      for (int c = 1; c < n; ++c)
        denom += std::exp(predictor(block + 3 * (c - 1), u, v) - mx);
      for (int c = 1; c < n; ++c) {
        const double pc = std::exp(predictor(block + 3 * (c - 1), u, v) - mx) / denom;
        const double d = weight * ((c == k ? 1.0 : 0.0) - pc);
        gblock[3 * (c - 1) + 0] += d;
        gblock[3 * (c - 1) + 1] += d * u;
        gblock[3 * (c - 1) + 2] += d * v;
      }
      break;
    }
    case Family::cumulative_probit: {
      const int n = var.n_categories, k = int(y);
      const double shift = block[n - 1] * u + block[n] * v;
      const double ahi = (k == n - 1) ? 40.0 : block[k] - shift;
      const double alo = (k == 0) ? -40.0 : block[k - 1] - shift;
      const double P = std::max(norm_interval_prob(alo, ahi), 1e-300);
      const double A = (k == n - 1) ? 0.0 : norm_pdf(ahi);
      const double B = (k == 0) ? 0.0 : norm_pdf(alo);
      const double dshift = weight * (B - A) / P;
      gblock[n - 1] += dshift * u;
      gblock[n] += dshift * v;
      if (k < n - 1) gblock[k] += weight * A / P;
      if (k > 0) gblock[k - 1] += -weight * B / P;
      break;
    }
  }
}

// First and second conditional moments of the observed response.
inline void moments(const VariableSpec& var, const double* block, double u, double v, double& m1,
                    double& m2) {
  switch (var.family) {
    case Family::gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3];
      m1 = nu;
      m2 = nu * nu + sigma * sigma;
      break;
    }
    case Family::censored_gaussian: {
      const double nu = predictor(block, u, v), sigma = block[3], c0 = var.censor_bound;
      const double a = (c0 - nu) / sigma;
      const double Fa = norm_cdf(a), fa = norm_pdf(a);
      m1 = c0 * Fa + nu * (1.0 - Fa) + sigma * fa;
      m2 = c0 * c0 * Fa + (nu * nu + sigma * sigma) * (1.0 - Fa) + sigma * (nu + c0) * fa;
      break;
    }
    case Family::multinomial:
    case Family::cumulative_probit: {
      m1 = m2 = 0.0;
      const int n = var.n_categories;
      for (int c = 0; c < n; ++c) {
        const double pc = std::exp(logdensity(var, block, u, v, double(c)));
        m1 += c * pc;
        m2 += double(c) * c * pc;
      }
      break;
    }
  }
}

inline double draw(const VariableSpec& var, const double* block, double u, double v,
                   std::mt19937_64& rng) {
  switch (var.family) {
    case Family::gaussian: {
      std::normal_distribution<double> z;
      return predictor(block, u, v) + block[3] * z(rng);
    }
    case Family::censored_gaussian: {
      std::normal_distribution<double> z;
      const double ystar = predictor(block, u, v) + block[3] * z(rng);
      return std::max(var.censor_bound, ystar);
    }
    case Family::multinomial: {
      const int n = var.n_categories;
      std::uniform_real_distribution<double> u01;
      double total = 1.0;  // exp(0) for the reference category
      for (int c = 1; c < n; ++c) total += std::exp(predictor(block + 3 * (c - 1), u, v));
      double target = u01(rng) * total, acc = 1.0;
      for (int c = 1; c < n; ++c) {
        if (target <= acc) return double(c - 1);
        acc += std::exp(predictor(block + 3 * (c - 1), u, v));
      }
      return double(n - 1);
    }
    case Family::cumulative_probit: {
      const int n = var.n_categories;
      std::normal_distribution<double> z;
      const double ystar = block[n - 1] * u + block[n] * v + z(rng);
      int k = 0;
      while (k < n - 1 && ystar >= block[k]) ++k;
      return double(k);
    }
  }
  return 0.0;
}

}  // namespace fam

// Linear predictor nu_{tm} for a realized latent cell; `category` is required
// for multinomial variables (0 is the reference, predictor 0) and ignored
// otherwise. For cumulative_probit the shift lambda*u + gamma*v is returned.
inline double linear_predictor(const ParameterSet& params, const LatentCell& cell, int t, int m,
                               std::optional<int> category = std::nullopt) {
  const ParameterLayout& L = params.layout();
  const MtmmDesign& d = L.design();
  if (t < 0 || t >= d.n_traits || m < 0 || m >= d.n_methods)
    throw ConfigError("linear_predictor: variable index out of range");
  const int j = d.var_index(t, m);
  const VariableSpec& var = d.variables[j];
  const double* block = params.values().data() + L.block_start(j, cell.component);
  const double u = cell.trait_scores[t], v = cell.method_scores[m];
  switch (var.family) {
    case Family::gaussian:
    case Family::censored_gaussian:
      return fam::predictor(block, u, v);
    case Family::multinomial: {
      if (!category) throw ConfigError("linear_predictor: multinomial variable needs a category");
      const int k = *category;
      if (k < 0 || k >= var.n_categories) throw ConfigError("linear_predictor: category out of range");
      return k == 0 ? 0.0 : fam::predictor(block + 3 * (k - 1), u, v);
    }
    case Family::cumulative_probit: {
      const int n = var.n_categories;
      return block[n - 1] * u + block[n] * v;
    }
  }
  return 0.0;
}

// log f_y(y | nu, sigma) for a standalone (family, predictor, scale) triple.
inline double response_logdensity(Family family, double nu, double sigma, double y,
                                  double censor_bound = 0.0) {
  if (family_has_scale(family) && sigma <= 0.0) throw NumericalError("response scale must be > 0");
  switch (family) {
    case Family::gaussian:
      return norm_logpdf((y - nu) / sigma) - std::log(sigma);
    case Family::censored_gaussian:
      if (y < censor_bound) throw DataError("censored observation below the bound");
      if (y <= censor_bound) return norm_logcdf((censor_bound - nu) / sigma);
      return norm_logpdf((y - nu) / sigma) - std::log(sigma);
    default:
      throw ConfigError("response_logdensity overload applies to scale families only");
  }
}

// log P(y = k) under a softmax over explicit category predictors.
inline double multinomial_logdensity(std::span<const double> category_predictors, int y) {
  if (y < 0 || y >= int(category_predictors.size()))
    throw DataError("multinomial category outside support");
  const double lse = log_sum_exp(category_predictors);
  return category_predictors[y] - lse;
}

// log P(y = k) = log[Phi(thr_k - nu) - Phi(thr_{k-1} - nu)] with strictly
// increasing thresholds; y ranges over 0..|thresholds|.
inline double cumulative_probit_logdensity(std::span<const double> thresholds, double nu, int y) {
  const int n = int(thresholds.size()) + 1;
  if (y < 0 || y >= n) throw DataError("ordinal category outside support");
  for (size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw NumericalError("cumulative-probit thresholds must be strictly increasing");
  if (y == 0) return norm_logcdf(thresholds[0] - nu);
  if (y == n - 1) return norm_logcdf(nu - thresholds[n - 2]);
  return std::log(std::max(norm_interval_prob(thresholds[y - 1] - nu, thresholds[y] - nu), 1e-300));
}

}  // namespace gmtmm
