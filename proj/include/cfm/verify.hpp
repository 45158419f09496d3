#pragma once

// Property checks run by `cfm verify`: transport-function assumptions,
// consistency limit, semigroup law, target-formula residuals, derivative
// estimator agreement and sampler schedule invariance.

#include "cfm/formulation.hpp"
#include "cfm/oracle.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfm {

struct VerifyRow {
  std::string check_id;
  std::string formulation;
  // Worst observed residual; pass means max_residual <= tolerance. The
  // f_nondegenerate row is a lower bound instead: it holds the smallest
  // observed |d/df4 dF/df1| and passes when that exceeds the tolerance.
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  std::optional<Kind> only;
  std::map<std::string, double> tolerance;  // check_id -> override
  // Flips the sign of P when recovering cumulative fields from flow maps.
  bool negative_control = false;
  int oracle_steps = kOracleSteps;
  std::uint64_t seed = 0;
  // Restrict to these check ids (empty: all).
  std::vector<std::string> checks;
};

// Identity, affine residual and min of |d/df4 dF/df1|, |d/df3 dF/df1| over
// random interior points. Values are residuals as described on VerifyRow.
struct FAssumptionStats {
  double identity = 0.0;
  double affine = 0.0;
  double mixed_partial_min = 0.0;
};
FAssumptionStats f_assumption_stats(const Formulation& form, int points, std::uint64_t seed);

// Fitted log-log slope of max_x |m_{t->r} - m_t| against |r - t| for
// r = t + 2^-k span, k = k_lo..k_hi.
double consistency_slope(const Formulation& form, const AnalyticTarget& target, int k_lo = 3, int k_hi = 10,
                         int n_steps = kOracleSteps);

// max |psi_{s->r}(psi_{t->s}(x)) - psi_{t->r}(x)| over a 5x5x5 grid.
double semigroup_error(const Formulation& form, const AnalyticTarget& target, int n_steps = kOracleSteps);

// max |m_t + c(t, r) dcomb - m_{t->r}| / max(1, |m_{t->r}|) over a (t, r, x)
// grid, all terms from the oracle. `sign` multiplies P in the inversion.
double instantiation_residual(const Formulation& form, const AnalyticTarget& target, int n_steps = kOracleSteps,
                              double sign = 1.0);

// Relative disagreement |fd - jvp| / |jvp| (Frobenius over all points) on a
// randomly initialized network.
double derivative_mode_disagreement(const Formulation& form, std::uint64_t seed, int points = 256);

// max over n in {2, 4, 8} of |sample_n - sample_1| with the oracle field.
double sampler_schedule_spread(const Formulation& form, const AnalyticTarget& target, int n_steps = kOracleSteps);

std::vector<VerifyRow> run_verify(const VerifyOptions& options);
std::vector<std::string> verify_check_ids();
std::string format_verify_csv(const std::vector<VerifyRow>& rows);

}  // namespace cfm
