#include "slash/params.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "slash/errors.hpp"

namespace slash {

namespace {

void check_probabilities(double p1, double p2) {
  if (!(p1 > 0.0 && p1 < 1.0) || !(p2 > 0.0 && p2 < 1.0)) {
    throw DomainError("collision probabilities must lie in (0, 1); got p1=" + std::to_string(p1) +
                      ", p2=" + std::to_string(p2));
  }
  if (!(p1 > p2)) throw DomainError("p1 must exceed p2; got p1=" + std::to_string(p1) + ", p2=" + std::to_string(p2));
}

// Absorbs rounding noise at exact integer boundaries.
constexpr double kSlack = 1e-9;

}  // namespace

void LshSensitivity::validate() const {
  check_probabilities(p1, p2);
  if (!(r >= 0.0)) throw DomainError("r must be >= 0");
  if (!(c >= 1.0)) throw DomainError("c must be >= 1");
}

double compute_rho(double p1, double p2) {
  check_probabilities(p1, p2);
  const double a = std::log(1.0 / p1);
  const double b = std::log(1.0 / p2);
  return a / (b - a);
}

double log_ratio(double p1, double p2) {
  check_probabilities(p1, p2);
  return std::log(p1) / std::log(p2);
}

bool strong_lsh(double p1, double p2) { return log_ratio(p1, p2) < 0.5; }

bool strong_lsh_c2(double p1, double p2, double C2) { return log_ratio(p1, p2) < 1.0 / (2.0 * C2 + 1.0); }

BoundCheck check_bounds(const LshSensitivity& sens, double n, double C1, double C2, std::uint32_t K,
                        std::uint64_t L) {
  sens.validate();
  BoundCheck b;
  b.K_lower = C2 * std::log(n) / std::log(sens.p1 / sens.p2);
  b.K_upper = std::log(std::sqrt(static_cast<double>(L)) / C1) / std::log(1.0 / sens.p1);
  b.lower_ok = static_cast<double>(K) >= b.K_lower - kSlack;
  b.upper_ok = static_cast<double>(K) <= b.K_upper + kSlack;
  return b;
}

double min_feasible_L(const LshSensitivity& sens, double n, double C1, double C2) {
  const double rho = compute_rho(sens.p1, sens.p2);
  return C1 * C1 * std::pow(n, 2.0 * C2 * rho);
}

bool bounds_consistent(const LshSensitivity& sens, double n, double C1, double C2, double L) {
  sens.validate();
  const double lower = C2 * std::log(n) / std::log(sens.p1 / sens.p2);
  const double upper = std::log(std::sqrt(L) / C1) / std::log(1.0 / sens.p1);
  return lower <= upper;
}

TheoremParams recommend_params(const LshSensitivity& sens, double n, double C1, double C2, std::uint32_t k_bound) {
  sens.validate();
  if (!(n >= 2.0)) throw DomainError("n must be >= 2");
  if (!(C1 > 1.0) || !(C2 > 1.0)) throw DomainError("C1 and C2 must exceed 1");
  if (k_bound == 0) throw DomainError("k_bound must be >= 1");

  TheoremParams p;
  p.n = n;
  p.C1 = C1;
  p.C2 = C2;
  p.k_bound = k_bound;
  p.rho = compute_rho(sens.p1, sens.p2);
  p.log_ratio = log_ratio(sens.p1, sens.p2);
  p.strong_lsh = p.log_ratio < 0.5;
  p.strong_lsh_c2 = strong_lsh_c2(sens.p1, sens.p2, C2);
  p.K_theorem = std::log(n) / std::log(sens.p1 / sens.p2);
  p.L_theorem = std::pow(n, p.rho);
  p.L_min_feasible = min_feasible_L(sens, n, C1, C2);
  p.sketch_rows = 4;
  p.sketch_cols = 4 * k_bound;

  std::ostringstream why;
  why << std::setprecision(6);
  if (p.rho >= 1.0) {
    why << "sub-linearity condition fails: rho = " << p.rho << " >= 1 (ln p1 / ln p2 = " << p.log_ratio
        << ", need < 0.5)";
    throw InfeasibleParams(why.str());
  }
  if (!p.strong_lsh_c2) {
    why << "strong LSH condition fails for C2 = " << C2 << ": ln p1 / ln p2 = " << p.log_ratio
        << ", need < 1/(2 C2 + 1) = " << 1.0 / (2.0 * C2 + 1.0) << "; L would grow as n^" << 2.0 * C2 * p.rho;
    throw InfeasibleParams(why.str());
  }

  const double K_lower = C2 * std::log(n) / std::log(sens.p1 / sens.p2);
  const double K_real = std::ceil(K_lower - kSlack);
  if (K_real > std::numeric_limits<std::uint32_t>::max()) throw InfeasibleParams("K does not fit in 32 bits");
  p.K_rec = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(K_real));
  const double L_noise = std::ceil(C1 * C1 * std::pow(sens.p1, -2.0 * p.K_rec) - kSlack);
  const double L_real = std::max(std::ceil(p.L_theorem - kSlack), L_noise);
  if (!(L_real < 1e18)) throw InfeasibleParams("recommended L overflows");
  p.L_rec = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(L_real));

  p.bounds = check_bounds(sens, n, C1, C2, p.K_rec, p.L_rec);
  if (!p.bounds.ok()) {
    why << "rounded parameters violate a bound: K=" << p.K_rec << ", L=" << p.L_rec << ", need K >= "
        << p.bounds.K_lower << " and K <= " << p.bounds.K_upper;
    throw InfeasibleParams(why.str());
  }
  return p;
}

void print_params(std::ostream& out, const TheoremParams& p) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(6);
  out << "parameter            value\n";
  out << "rho                  " << p.rho << '\n';
  out << "ln p1 / ln p2        " << p.log_ratio << '\n';
  out << "strong (< 0.5)       " << (p.strong_lsh ? "yes" : "no") << '\n';
  out << "strong (C2 form)     " << (p.strong_lsh_c2 ? "yes" : "no") << '\n';
  out << "K (theorem)          " << p.K_theorem << '\n';
  out << "L = n^rho            " << p.L_theorem << '\n';
  out << "K recommended        " << p.K_rec << '\n';
  out << "L recommended        " << p.L_rec << '\n';
  out << "K lower bound        " << p.bounds.K_lower << '\n';
  out << "K upper bound        " << p.bounds.K_upper << '\n';
  out << "L minimum feasible   " << p.L_min_feasible << '\n';
  out << "sketch W x B         " << p.sketch_rows << " x " << p.sketch_cols << '\n';
  out << "feasible             " << (p.bounds.ok() ? "yes" : "no") << '\n';
  out << '\n';
  out << "rho=" << p.rho << '\n';
  out << "log_ratio=" << p.log_ratio << '\n';
  out << "strong_lsh=" << (p.strong_lsh ? 1 : 0) << '\n';
  out << "strong_lsh_c2=" << (p.strong_lsh_c2 ? 1 : 0) << '\n';
  out << "K_theorem=" << p.K_theorem << '\n';
  out << "L_theorem=" << p.L_theorem << '\n';
  out << "K=" << p.K_rec << '\n';
  out << "L=" << p.L_rec << '\n';
  out << "K_lower=" << p.bounds.K_lower << '\n';
  out << "K_upper=" << p.bounds.K_upper << '\n';
  out << "L_min_feasible=" << p.L_min_feasible << '\n';
  out << "sketch_w=" << p.sketch_rows << '\n';
  out << "sketch_b=" << p.sketch_cols << '\n';
  out << "feasible=" << (p.bounds.ok() ? 1 : 0) << '\n';
  out.flags(flags);
  out.precision(prec);
}

SnrReport snr_simulation(const LshSensitivity& sens, std::uint64_t n, std::uint32_t K, std::uint64_t L,
                         std::uint64_t trials, std::uint32_t planted, std::uint64_t seed) {
  if (!(sens.p1 > 0.0 && sens.p1 <= 1.0) || !(sens.p2 >= 0.0 && sens.p2 < sens.p1)) {
    throw DomainError("snr_simulation needs 0 <= p2 < p1 <= 1");
  }
  if (K == 0 || L == 0) throw DomainError("K and L must be >= 1");

  SnrReport rep;
  rep.trials = trials;
  rep.planted = planted;
  rep.L = L;
  rep.signal_histogram.assign(L + 1, 0);
  rep.noise_histogram.assign(L + 1, 0);
  rep.margins.reserve(trials);

  const double ps = std::pow(sens.p1, static_cast<double>(K));
  const double pn = std::pow(sens.p2, static_cast<double>(K));
  rep.expected_signal_mean = static_cast<double>(L) * ps;

  // P(f >= 1) and the zero-truncated binomial for background items.
  const double p_any = pn > 0.0 ? -std::expm1(static_cast<double>(L) * std::log1p(-pn)) : 0.0;
  std::vector<double> truncated(L, 0.0);
  if (pn > 0.0) {
    for (std::uint64_t j = 1; j <= L; ++j) {
      const double lg = std::lgamma(static_cast<double>(L) + 1) - std::lgamma(static_cast<double>(j) + 1) -
                        std::lgamma(static_cast<double>(L - j) + 1) + static_cast<double>(j) * std::log(pn) +
                        static_cast<double>(L - j) * std::log1p(-pn);
      truncated[j - 1] = std::exp(lg);
    }
  } else {
    truncated[0] = 1.0;  // never sampled
  }

  std::mt19937_64 rng(seed);
  std::binomial_distribution<std::uint64_t> signal_draw(L, ps);
  std::binomial_distribution<std::uint64_t> nonzero_count(n, p_any);
  std::discrete_distribution<std::uint64_t> nonzero_value(truncated.begin(), truncated.end());

  double sum = 0.0;
  double sum_sq = 0.0;
  double noise_sum = 0.0;
  std::uint64_t separated = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint64_t min_signal = L + 1;
    for (std::uint32_t i = 0; i < planted; ++i) {
      const std::uint64_t f = signal_draw(rng);
      ++rep.signal_histogram[f];
      sum += static_cast<double>(f);
      sum_sq += static_cast<double>(f) * static_cast<double>(f);
      min_signal = std::min(min_signal, f);
    }
    const std::uint64_t m = p_any > 0.0 ? nonzero_count(rng) : 0;
    std::uint64_t max_noise = 0;
    for (std::uint64_t i = 0; i < m; ++i) {
      const std::uint64_t f = nonzero_value(rng) + 1;
      ++rep.noise_histogram[f];
      noise_sum += static_cast<double>(f);
      max_noise = std::max(max_noise, f);
    }
    rep.noise_histogram[0] += n - m;
    if (planted == 0) min_signal = 0;
    rep.margins.push_back(static_cast<std::int64_t>(min_signal) - static_cast<std::int64_t>(max_noise));
    if (planted > 0 && min_signal > max_noise) ++separated;
  }

  const double count = static_cast<double>(trials) * planted;
  if (count > 0) {
    rep.signal_mean = sum / count;
    const double var = count > 1 ? (sum_sq - count * rep.signal_mean * rep.signal_mean) / (count - 1) : 0.0;
    rep.signal_stderr = std::sqrt(std::max(0.0, var) / count);
  }
  if (trials > 0 && n > 0) rep.noise_mean = noise_sum / (static_cast<double>(trials) * static_cast<double>(n));
  rep.separation_fraction = trials > 0 ? static_cast<double>(separated) / static_cast<double>(trials) : 0.0;
  return rep;
}

}  // namespace slash
