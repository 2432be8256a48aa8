#pragma once

// Numeric building blocks: stable normal distribution functions, log-sum-exp,
// and a deterministic chunked parallel loop.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace gmtmm {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kInvSqrtTwoPi = 0.3989422804014326779;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double norm_logpdf(double z) { return -0.5 * z * z - 0.5 * kLogTwoPi; }
inline double norm_pdf(double z) { return kInvSqrtTwoPi * std::exp(-0.5 * z * z); }

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// log Phi(z), accurate into the deep lower tail.
inline double norm_logcdf(double z) {
  if (z > -20.0) {
    double c = 0.5 * std::erfc(-z * M_SQRT1_2);
    if (c > 0.0) return std::log(c);
  }
  // Asymptotic expansion for the lower tail.
  const double z2 = z * z;
  const double corr = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return norm_logpdf(z) - std::log(-z) + std::log(corr);
}

// Hazard (inverse Mills) ratio phi(z)/Phi(z), stable for z << 0.
inline double norm_hazard(double z) {
  if (z < -20.0) {
    const double z2 = z * z;
    return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
  }
  return std::exp(norm_logpdf(z) - norm_logcdf(z));
}

// Inverse standard normal CDF (Acklam's rational approximation plus one
// Halley polish step; relative error below 1e-14 on (0,1)).
inline double norm_icdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("norm_icdf: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step on Phi(x) - p = 0.
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v)
    if (x > mx) mx = x;
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries do
// not depend on the thread count, so per-chunk partial results can be reduced
// in index order for bit-reproducible totals.
template <class Fn>
void for_each_chunk(std::int64_t n, std::int64_t chunk_size, int n_threads, Fn&& fn) {
  const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  if (n_threads <= 1 || n_chunks <= 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    }
  };
  std::vector<std::thread> pool;
  const int use = std::min<std::int64_t>(n_threads, n_chunks);
  pool.reserve(use - 1);
  for (int t = 1; t < use; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

// SplitMix64; used to derive independent per-replicate seeds from a master seed.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace gmtmm
