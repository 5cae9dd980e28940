#pragma once

// Randomized self-check suites. Each compares an implementation against an
// independent route (batch posterior, central differences, closed forms)
// and reports the worst case it saw.

#include "hlps/gp_statespace.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hlps::selftest {

struct CheckResult {
    std::string name;
    bool pass = false;
    double worst = 0.0;      // the quantity compared against the tolerance
    double tolerance = 0.0;
    long failing_case = -1;  // first case that breached, -1 if none
    double seconds = 0.0;
    std::string detail;
};

struct Options {
    int cases = 1000;       // equivalence, PSD and loss-identity suites
    int grad_cases = 100;   // each gradient suite
    std::uint64_t seed = 1;
    gp::StationaryForm form = gp::StationaryForm::Derived;
};

struct EquivalenceStats {
    std::vector<double> errors;  // max abs error per case
    double max_error = 0.0;
    long worst_case = -1;
    double seconds = 0.0;
    /// Fraction of cases with error above the threshold.
    double fraction_above(double threshold) const;
};

/// Random chains (N <= 50, positive increments, random F, hyperparameters
/// log-uniform in [0.1, 10]): filtered mean after every state vs the batch
/// posterior over that prefix.
EquivalenceStats equivalence_stats(int cases, std::uint64_t seed, gp::StationaryForm form);

CheckResult check_equivalence(const Options& o);
/// The printed stationary covariance must break the same suite.
CheckResult check_printed_form_breaks(const Options& o);
/// C + 1e-8 I positive semidefinite on random sets.
CheckResult check_kernel_psd(const Options& o);
/// N = 1 mean f gamma2 / (gamma2 + sigma2) and 0 <= var <= gamma2.
CheckResult check_posterior_bounds(const Options& o);
/// Representation loss gradients (encoder and GP hyperparameters).
CheckResult check_loss_gradients(const Options& o);
/// SAC critic, actor and temperature gradients on width-4 networks.
CheckResult check_sac_gradients(const Options& o);
/// Equal latent gaps give ratio * log 2, loss >= 0, monotone in the gaps.
CheckResult check_loss_identities(const Options& o);

/// Every tolerance suite above except the printed-form demonstration.
std::vector<CheckResult> run_all(const Options& o);

std::string format_result(const CheckResult& r);

}  // namespace hlps::selftest
