#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slash/errors.hpp"
#include "slash/params.hpp"

using namespace slash;
using Big = boost::multiprecision::cpp_dec_float_50;

namespace {

Big big_rho(const Big& p1, const Big& p2) {
  using boost::multiprecision::log;
  return log(1 / p1) / (log(1 / p2) - log(1 / p1));
}

LshSensitivity sens(double p1, double p2) { return LshSensitivity{0.0, 1.0, p1, p2}; }

}  // namespace

TEST(Rho, MatchesHighPrecisionOracle) {
  for (auto [p1, p2] : {std::pair{0.9, 0.4}, std::pair{0.95, 0.3}, std::pair{0.6, 0.1}, std::pair{0.99, 0.5}}) {
    const double want = static_cast<double>(big_rho(Big(p1), Big(p2)));
    EXPECT_NEAR(compute_rho(p1, p2), want, 1e-12 * want) << p1 << "," << p2;
  }
}

TEST(Rho, VanishesAsP1ApproachesOne) {
  double prev = compute_rho(0.9, 0.3);
  for (double p1 : {0.99, 0.999, 0.9999, 0.99999}) {
    const double r = compute_rho(p1, 0.3);
    EXPECT_LT(r, prev);
    prev = r;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(Rho, ReachesOneAtSquareRootBoundary) {
  const double p2 = 0.36, p1 = std::sqrt(p2);
  EXPECT_NEAR(compute_rho(p1, p2), 1.0, 1e-12);
  EXPECT_NEAR(log_ratio(p1, p2), 0.5, 1e-12);
  EXPECT_FALSE(strong_lsh(p1 - 1e-6, p2));
  EXPECT_TRUE(strong_lsh(p1 + 1e-6, p2));
}

TEST(Rho, MonotoneInBothArguments) {
  for (double p2 = 0.05; p2 < 0.5; p2 += 0.05) {
    for (double p1 = 0.75; p1 < 0.99; p1 += 0.02) {
      EXPECT_LT(compute_rho(p1 + 0.01, p2), compute_rho(p1, p2));
      EXPECT_GT(compute_rho(p1, p2 + 0.01), compute_rho(p1, p2));
    }
  }
}

TEST(Rho, RejectsOutOfDomain) {
  EXPECT_THROW(compute_rho(0.5, 0.5), DomainError);
  EXPECT_THROW(compute_rho(0.3, 0.5), DomainError);
  EXPECT_THROW(compute_rho(1.0, 0.5), DomainError);
  EXPECT_THROW(compute_rho(0.5, 0.0), DomainError);
  EXPECT_THROW(sens(0.9, 0.95).validate(), DomainError);
}

TEST(StrongLshC2, ThresholdIsOneOverTwoC2PlusOne) {
  // log_ratio = 1/4 exactly at p1 = p2^(1/4).
  const double p2 = 0.2, p1 = std::pow(p2, 0.25);
  EXPECT_TRUE(strong_lsh_c2(p1 + 1e-6, p2, 1.5));
  EXPECT_FALSE(strong_lsh_c2(p1 - 1e-6, p2, 1.5));
  EXPECT_TRUE(strong_lsh_c2(p1 - 1e-6, p2, 1.0));  // threshold 1/3
}

TEST(Recommend, CanonicalExample) {
  const auto p = recommend_params(sens(0.95, 0.3), 1e4);
  EXPECT_EQ(p.K_rec, 12u);
  EXPECT_EQ(p.L_rec, 14u);
  EXPECT_TRUE(p.bounds.ok());
  EXPECT_TRUE(p.strong_lsh);
  EXPECT_TRUE(p.strong_lsh_c2);
  EXPECT_NEAR(p.K_theorem, 7.99037, 1e-5);
  EXPECT_NEAR(p.bounds.K_lower, 11.9856, 1e-4);
  EXPECT_NEAR(p.bounds.K_upper, 12.2118, 1e-4);
  EXPECT_NEAR(p.L_min_feasible, 13.6789, 1e-4);
  EXPECT_EQ(p.sketch_rows, 4u);
  EXPECT_EQ(p.sketch_cols, 32u);
}

TEST(Recommend, LTheoremToSixSignificantDigits) {
  for (auto [p1, p2, n] : {std::tuple{0.95, 0.3, 1e4}, std::tuple{0.9, 0.4, 1e6}, std::tuple{0.8, 0.1, 5e5}}) {
    using boost::multiprecision::pow;
    const Big want = pow(Big(n), big_rho(Big(p1), Big(p2)));
    const double got = compute_rho(p1, p2);
    EXPECT_NEAR(std::pow(n, got), static_cast<double>(want), 1e-6 * static_cast<double>(want));
    if (strong_lsh_c2(p1, p2, kDefaultC2)) {
      const auto p = recommend_params(sens(p1, p2), n);
      EXPECT_NEAR(p.L_theorem, static_cast<double>(want), 1e-6 * static_cast<double>(want));
    }
  }
}

TEST(Recommend, RecipeFormulas) {
  // Independent recomputation of the documented recipe.
  for (auto [p1, p2, n] : {std::tuple{0.95, 0.3, 1e4}, std::tuple{0.97, 0.2, 1e6}, std::tuple{0.9, 0.1, 1e5}}) {
    const auto p = recommend_params(sens(p1, p2), n);
    const double rho = std::log(1 / p1) / (std::log(1 / p2) - std::log(1 / p1));
    const auto K = static_cast<std::uint32_t>(std::ceil(1.5 * std::log(n) / std::log(p1 / p2)));
    const double L = std::max(std::ceil(std::pow(n, rho)), std::ceil(4.0 * std::pow(p1, -2.0 * K)));
    EXPECT_EQ(p.K_rec, K);
    EXPECT_EQ(static_cast<double>(p.L_rec), L);
    EXPECT_TRUE(p.bounds.ok());
  }
}

TEST(Recommend, InfeasibleWhenRhoAtLeastOne) {
  EXPECT_THROW(recommend_params(sens(0.6, 0.5), 1e4), InfeasibleParams);
  EXPECT_THROW(recommend_params(sens(0.6, 0.36), 1e4), InfeasibleParams);
}

TEST(Recommend, InfeasibleWhenC2ConditionFails) {
  // log_ratio ~ 0.3: sub-linear but above 1/(2*1.5+1).
  const double p2 = 0.3, p1 = std::pow(p2, 0.3);
  EXPECT_LT(compute_rho(p1, p2), 1.0);
  try {
    recommend_params(sens(p1, p2), 1e4);
    FAIL() << "expected InfeasibleParams";
  } catch (const InfeasibleParams& e) {
    EXPECT_NE(std::string(e.what()).find("C2 = 1.5"), std::string::npos);
  }
}

TEST(Recommend, RejectsBadInputs) {
  EXPECT_THROW(recommend_params(sens(0.95, 0.3), 1.0), DomainError);
  EXPECT_THROW(recommend_params(sens(0.95, 0.3), 1e4, 0.0), DomainError);
  EXPECT_THROW(recommend_params(sens(0.95, 0.3), 1e4, 2.0, -1.0), DomainError);
}

TEST(Bounds, FeasibilityMatchesDirectScan) {
  // At a given L the bounds admit a real K iff K_lower <= K_upper.
  for (double p1 : {0.9, 0.95, 0.98}) {
    for (double p2 : {0.1, 0.2, 0.3}) {
      const auto s = sens(p1, p2);
      const double n = 1e5;
      const double Lmin = min_feasible_L(s, n, 2.0, 1.5);
      for (double L : {Lmin * 0.9, Lmin * 0.999, Lmin * 1.001, Lmin * 2, Lmin * 100}) {
        const double Klo = 1.5 * std::log(n) / std::log(p1 / p2);
        const double Khi = std::log(std::sqrt(L) / 2.0) / std::log(1 / p1);
        EXPECT_EQ(bounds_consistent(s, n, 2.0, 1.5, L), Klo <= Khi) << p1 << " " << p2 << " " << L;
      }
    }
  }
}

TEST(Bounds, CheckAgainstDefinition) {
  const auto s = sens(0.95, 0.3);
  const auto b = check_bounds(s, 1e4, 2.0, 1.5, 12, 14);
  EXPECT_TRUE(b.ok());
  EXPECT_GE(std::pow(0.95, 12) * 14, 2.0 * std::sqrt(14.0));
  EXPECT_FALSE(check_bounds(s, 1e4, 2.0, 1.5, 11, 14).lower_ok);
  EXPECT_FALSE(check_bounds(s, 1e4, 2.0, 1.5, 12, 13).upper_ok);
}

TEST(Print, KeyValueLines) {
  std::ostringstream out;
  print_params(out, recommend_params(sens(0.95, 0.3), 1e4));
  const std::string s = out.str();
  for (const char* key : {"\nrho=", "\nK=12\n", "\nL=14\n", "\nK_lower=", "\nK_upper=", "\nstrong_lsh=",
                          "\nfeasible=1"}) {
    EXPECT_NE(s.find(key), std::string::npos) << key;
  }
}

TEST(Snr, SignalMeanWithinThreeStandardErrors) {
  const auto r = snr_simulation(sens(0.95, 0.3), 10000, 12, 14, 2000, 8, 3);
  EXPECT_NEAR(r.expected_signal_mean, 14 * std::pow(0.95, 12), 1e-12);
  EXPECT_LE(std::abs(r.signal_mean - r.expected_signal_mean), 3 * r.signal_stderr);
}

TEST(Snr, HistogramsAccountForEveryItem) {
  const std::uint64_t n = 5000, trials = 300;
  const auto r = snr_simulation(sens(0.9, 0.4), n, 6, 10, trials, 5, 4);
  ASSERT_EQ(r.signal_histogram.size(), 11u);
  ASSERT_EQ(r.noise_histogram.size(), 11u);
  EXPECT_EQ(std::accumulate(r.signal_histogram.begin(), r.signal_histogram.end(), std::uint64_t{0}), trials * 5);
  EXPECT_EQ(std::accumulate(r.noise_histogram.begin(), r.noise_histogram.end(), std::uint64_t{0}), trials * n);
  EXPECT_EQ(r.margins.size(), trials);
  // Mean background frequency is L p2^K.
  const double want = 10 * std::pow(0.4, 6);
  EXPECT_NEAR(r.noise_mean, want, 0.05 * want);
}

TEST(Snr, ZeroBackgroundProbability) {
  const auto r = snr_simulation(LshSensitivity{0, 1, 0.95, 0.0}, 1000, 4, 8, 200, 4, 5);
  EXPECT_EQ(r.noise_histogram[0], 200u * 1000u);
  EXPECT_DOUBLE_EQ(r.noise_mean, 0.0);
}

TEST(Snr, RecommendedParamsSeparate) {
  const auto p = recommend_params(sens(0.95, 0.2), 1e5);
  const auto r = snr_simulation(sens(0.95, 0.2), 100000, p.K_rec, p.L_rec, 1000, 8, 6);
  EXPECT_GE(r.separation_fraction, 0.9);
}

TEST(Snr, Deterministic) {
  const auto a = snr_simulation(sens(0.9, 0.3), 1000, 5, 8, 50, 3, 9);
  const auto b = snr_simulation(sens(0.9, 0.3), 1000, 5, 8, 50, 3, 9);
  EXPECT_EQ(a.margins, b.margins);
  EXPECT_EQ(a.noise_histogram, b.noise_histogram);
}
