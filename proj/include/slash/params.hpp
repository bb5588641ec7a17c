#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace slash {

/// (r, cr, p1, p2)-sensitive family: points within distance r collide with
/// probability at least p1, points beyond cr with probability at most p2.
struct LshSensitivity {
  double r = 0.0;
  double c = 1.0;
  double p1 = 0.0;
  double p2 = 0.0;

  /// Throws DomainError unless 0 < p2 < p1 < 1, r >= 0 and c >= 1.
  void validate() const;
};

/// rho = ln(1/p1) / (ln(1/p2) - ln(1/p1)). Throws DomainError.
double compute_rho(double p1, double p2);

/// ln(p1) / ln(p2), the quantity both strong-LSH conditions bound.
double log_ratio(double p1, double p2);

/// log_ratio < 0.5.
bool strong_lsh(double p1, double p2);

/// log_ratio < 1 / (2*C2 + 1), i.e. 2*C2*rho < 1: the table count needed by
/// both bounds stays sub-linear in n.
bool strong_lsh_c2(double p1, double p2, double C2);

struct BoundCheck {
  double K_lower = 0;  // C2 ln n / ln(p1/p2)
  double K_upper = 0;  // ln(sqrt(L)/C1) / ln(1/p1)
  bool lower_ok = false;
  bool upper_ok = false;

  bool ok() const { return lower_ok && upper_ok; }
};

/// Evaluate both bounds for concrete (K, L). Upper: p1^K L >= C1 sqrt(L).
/// Lower: K >= C2 ln n / ln(p1/p2).
BoundCheck check_bounds(const LshSensitivity& sens, double n, double C1, double C2, std::uint32_t K,
                        std::uint64_t L);

/// Smallest L (real) for which some real K satisfies both bounds: C1^2 n^(2 C2 rho).
double min_feasible_L(const LshSensitivity& sens, double n, double C1, double C2);

/// Both bounds admit a common real K at this L.
bool bounds_consistent(const LshSensitivity& sens, double n, double C1, double C2, double L);

struct TheoremParams {
  double rho = 0;
  double log_ratio = 0;
  bool strong_lsh = false;     // log_ratio < 0.5
  bool strong_lsh_c2 = false;  // log_ratio < 1/(2 C2 + 1)
  double K_theorem = 0;        // ln n / ln(p1/p2)
  double L_theorem = 0;        // n^rho
  std::uint32_t K_rec = 0;
  std::uint64_t L_rec = 0;
  double n = 0;
  double C1 = 0;
  double C2 = 0;
  std::uint32_t k_bound = 0;
  BoundCheck bounds;
  double L_min_feasible = 0;
  std::uint32_t sketch_rows = 0;
  std::uint32_t sketch_cols = 0;  // O(k_bound)
};

inline constexpr double kDefaultC1 = 2.0;
inline constexpr double kDefaultC2 = 1.5;

/// K = ceil(C2 ln n / ln(p1/p2)); L = max(ceil(n^rho), ceil(C1^2 p1^(-2K))).
/// Throws InfeasibleParams when rho >= 1, when 2*C2*rho >= 1, or if the rounded
/// pair violates either bound; the message carries both bound values.
TheoremParams recommend_params(const LshSensitivity& sens, double n, double C1 = kDefaultC1,
                               double C2 = kDefaultC2, std::uint32_t k_bound = 8);

/// Human-readable table followed by key=value lines.
void print_params(std::ostream& out, const TheoremParams& p);

struct SnrReport {
  std::uint64_t trials = 0;
  std::uint32_t planted = 0;
  std::uint64_t L = 0;
  double expected_signal_mean = 0;  // L p1^K
  double signal_mean = 0;
  double signal_stderr = 0;
  double noise_mean = 0;
  /// Count of items with each frequency 0..L, summed over trials.
  std::vector<std::uint64_t> signal_histogram;
  std::vector<std::uint64_t> noise_histogram;
  /// Per-trial min(signal) - max(noise).
  std::vector<std::int64_t> margins;
  /// Trials where every planted item strictly outranks every background item.
  double separation_fraction = 0;
};

/// Monte-Carlo frequencies f_x over L tables: each planted neighbor collides
/// in a table with probability p1^K, each of the n background items with
/// p2^K. Background items are drawn exactly but in aggregate: the number with
/// f >= 1 first, then each such frequency from the zero-truncated binomial.
/// Accepts p2 = 0.
SnrReport snr_simulation(const LshSensitivity& sens, std::uint64_t n, std::uint32_t K, std::uint64_t L,
                         std::uint64_t trials, std::uint32_t planted, std::uint64_t seed = 1);

}  // namespace slash
