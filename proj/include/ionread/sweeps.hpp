#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ionread/distributions.hpp"
#include "ionread/tracesim.hpp"

namespace ionread {

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const WilsonInterval&) const = default;
};

/// Wilson score interval for a binomial proportion; well behaved at zero
/// observed errors, which is routine at these error rates.
WilsonInterval wilson_interval(uint64_t errors, uint64_t trials, double z);

/// Point estimates and intervals for one campaign.
struct ErrorStats {
    uint64_t trials_bright = 0;
    uint64_t trials_dark = 0;
    uint64_t errors_bright = 0;
    uint64_t errors_dark = 0;

    double eps_bright = 0.0;
    double eps_dark = 0.0;
    double eps = 0.0;  // (eps_bright + eps_dark) / 2

    WilsonInterval eps_bright_68, eps_bright_95;
    WilsonInterval eps_dark_68, eps_dark_95;
    WilsonInterval eps_68, eps_95;

    double mean_ta_bright = 0.0;  // s
    double mean_ta_dark = 0.0;
    double mean_ta = 0.0;
    double sd_ta_bright = 0.0;
    double sd_ta_dark = 0.0;
    double sd_ta = 0.0;

    bool operator==(const ErrorStats&) const = default;
};

ErrorStats error_stats(const TrialOutcomeTally& tally);

/// One point of a sweep: independent variable, method, stats, and the
/// efficiency-sweep scalars where applicable.
struct SweepRecord {
    std::string x_name;  // "t_b", "e_c", "eta", "t_T"
    double x_value = 0.0;
    std::string method;
    ErrorStats stats;
    std::optional<double> eps_infinity;
    std::optional<double> t_one_one;  // s
};

struct ThresholdOptimum {
    double n_c = 0.5;
    int sub_bins = 1;
    double eps = 1.0;
    double eps_bright = 1.0;
    double eps_dark = 1.0;
};

/// Best half-integer threshold for one fixed N, from the analytic sum PMFs.
ThresholdOptimum best_threshold_for_n(const ReadoutParams& params, int N);

/// Global (n_c, N) optimizer over N in [n_min, n_max]; ties break toward
/// smaller N, then smaller n_c.
ThresholdOptimum optimize_threshold(const ReadoutParams& params, int n_min, int n_max);

enum class SweepMethod { Threshold, MaxLikelihood };

struct SweepOptions {
    int threads = 0;
    bool include_decay = true;           // ml likelihood model
    bool threshold_monte_carlo = false;  // threshold path: analytic by default
    DecayMode decay_mode = DecayMode::ExactTime;
};

/// Error versus bin time for the threshold or maximum-likelihood method,
/// with n_c re-optimized analytically at each N. Threshold records from the
/// analytic path carry zero trials and degenerate intervals.
std::vector<SweepRecord> sweep_bin_time(const ReadoutParams& params, SweepMethod method,
                                        const std::vector<int>& n_list, uint64_t n_trials,
                                        uint64_t master_seed, const SweepOptions& options = {});

struct AdaptiveSweepOptions {
    int threads = 0;
    bool include_decay = false;
    DecayMode decay_mode = DecayMode::ExactTime;
};

/// Error versus mean readout time tradeoff over a grid of posterior cutoffs.
std::vector<SweepRecord> sweep_adaptive(const ReadoutParams& params,
                                        const std::vector<double>& e_c_list, double t_c,
                                        uint64_t n_trials, uint64_t master_seed,
                                        const AdaptiveSweepOptions& options = {});

struct EfficiencySweepOptions {
    int threads = 0;
    bool include_decay = true;
    double base_efficiency = 0.19e-2;   // net collection efficiency of the base params
    double detector_dark_rate = 8.2;    // counts/s that do not scale with efficiency
    int grid_points = 11;
    int max_extensions = 4;
    std::vector<SweepRecord>* curves = nullptr;  // optional per-(eta, t_b) detail
};

/// Readout performance versus photon collection efficiency. R_B and the
/// scattered-light part of R_D scale with eta; the detector dark rate does
/// not. Each returned record carries the ML plateau error eps_infinity and
/// the time t_one_one to reach 1.1x the plateau (also mirrored into
/// mean_ta_s in the CSV schema).
std::vector<SweepRecord> sweep_efficiency(const ReadoutParams& params_base,
                                          const std::vector<double>& eta_list, uint64_t n_trials,
                                          uint64_t master_seed,
                                          const EfficiencySweepOptions& options = {});

}  // namespace ionread
