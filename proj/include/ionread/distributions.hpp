#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ionread {

/// Truncated probability mass function over photon counts 0..n_max.
///
/// Values are stored in linear space; log-domain handling is the
/// responsibility of the likelihood code. Counts beyond n_max are not
/// impossible, just rare: prob()/log_prob() extend the support with the
/// Poisson closed form when the PMF has a Poisson component, and with a
/// floor of 1e-300 otherwise, so that legal tail data never produces a
/// -inf log-likelihood.
struct CountPmf {
    std::vector<double> probs;
    double poisson_tail_mean = 0.0;  // > 0: out-of-support counts follow Poisson(poisson_tail_mean)

    int n_max() const { return static_cast<int>(probs.size()) - 1; }
    double mean() const;
    double variance() const;

    double prob(int n) const;
    double log_prob(int n) const;

    /// P(X <= n); n < 0 gives 0, n >= n_max gives the full (truncated) mass.
    double cdf(int n) const;
    /// Smallest n with cdf(n) >= q.
    int quantile(double q) const;

    /// Throws InvalidParameter unless entries are non-negative and the total
    /// mass is 1 within tol.
    void validate(double tol = 1e-9) const;
};

/// Physical rates and timing defining one readout configuration.
struct ReadoutParams {
    double bright_rate = 0.0;      // R_B, counts/s while the ion fluoresces
    double dark_rate = 0.0;        // R_D, counts/s of background (includes detector dark counts)
    double shelf_lifetime = 1.0;   // tau, s
    double sub_bin_duration = 0.0; // t_s, s
    int sub_bin_count = 1;         // N sub-bins per detection bin
    std::optional<CountPmf> dark_count_pmf;  // empirical per-sub-bin detector counts

    double bin_time() const { return sub_bin_duration * sub_bin_count; }

    /// Throws InvalidParameter on hard violations; returns human-readable
    /// warnings (e.g. bin time within a decade of the shelf lifetime).
    std::vector<std::string> validate() const;
};

/// Poisson PMF with the stated mean. The support is at least
/// max(50, ceil(mean + 10*sqrt(mean))); a larger n_max extends it.
CountPmf poisson_pmf(double mean, int n_max = 0);

/// Minimum truncation support for a PMF with the given mean.
int pmf_support_rule(double mean);

/// Discrete convolution, truncated at a.n_max + b.n_max.
CountPmf convolve(const CountPmf& a, const CountPmf& b);

/// N-fold convolution power (identity for n = 0).
CountPmf convolve_power(const CountPmf& pmf, int n);

/// Normalized PMF from one non-negative integer count per line.
/// Blank lines are skipped and '#' starts a comment.
CountPmf load_empirical_pmf(std::istream& in);
CountPmf load_empirical_pmf(const std::string& path);

/// Per-sub-bin count models (B, D) for bright and dark ions. When an
/// empirical detector PMF is present both models are convolved with it, and
/// the Poisson rate used for D excludes the detector mean so detector counts
/// are not double counted.
std::pair<CountPmf, CountPmf> sub_bin_models(const ReadoutParams& params);

/// Distribution of the summed counts over the first N sub-bins for a bright ion.
CountPmf bright_sum_pmf(const ReadoutParams& params, int N);

/// Distribution of the summed counts over the first N sub-bins for an ion
/// prepared dark, marginalized over the shelf decay time: with weight
/// (1 - t_b/tau) the ion survives the bin, and decays in [0, t_b] contribute
/// Poisson(R_D*t_d + R_B*(t_b - t_d)) integrated with density 1/tau by
/// composite midpoint quadrature (>= nodes_per_sub_bin nodes per sub-bin).
CountPmf dark_sum_pmf_with_decay(const ReadoutParams& params, int N, int nodes_per_sub_bin = 10);

}  // namespace ionread
