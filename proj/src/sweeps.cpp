#include "ionread/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ionread/errors.hpp"

namespace ionread {

WilsonInterval wilson_interval(uint64_t errors, uint64_t trials, double z) {
    if (trials == 0) throw InvalidParameter("wilson_interval: no trials");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace {

struct TaMoments {
    double mean = 0.0;
    double sd = 0.0;
};

TaMoments ta_moments(uint64_t n, uint64_t sum, uint64_t sum_sq, double t_s) {
    TaMoments m;
    if (n == 0) return m;
    const double mean_bins = static_cast<double>(sum) / static_cast<double>(n);
    const double mean_sq = static_cast<double>(sum_sq) / static_cast<double>(n);
    m.mean = mean_bins * t_s;
    m.sd = std::sqrt(std::max(0.0, mean_sq - mean_bins * mean_bins)) * t_s;
    return m;
}

WilsonInterval combined_eps_interval(const TrialOutcomeTally& t, double z, double eps,
                                     const WilsonInterval& b, const WilsonInterval& d,
                                     double eps_b, double eps_d) {
    if (t.bright.trials == t.dark.trials) {
        // equal-trial campaigns: eps is exactly the pooled proportion
        return wilson_interval(t.bright.misclassified + t.dark.misclassified,
                               t.bright.trials + t.dark.trials, z);
    }
    const double lo_half = std::hypot((eps_b - b.lo) / 2.0, (eps_d - d.lo) / 2.0);
    const double hi_half = std::hypot((b.hi - eps_b) / 2.0, (d.hi - eps_d) / 2.0);
    return {std::max(0.0, eps - lo_half), std::min(1.0, eps + hi_half)};
}

}  // namespace

ErrorStats error_stats(const TrialOutcomeTally& tally) {
    if (tally.bright.trials == 0 || tally.dark.trials == 0)
        throw InvalidParameter("error_stats: need at least one trial per label");

    ErrorStats s;
    s.trials_bright = tally.bright.trials;
    s.trials_dark = tally.dark.trials;
    s.errors_bright = tally.bright.misclassified;
    s.errors_dark = tally.dark.misclassified;
    s.eps_bright = static_cast<double>(s.errors_bright) / static_cast<double>(s.trials_bright);
    s.eps_dark = static_cast<double>(s.errors_dark) / static_cast<double>(s.trials_dark);
    s.eps = (s.eps_bright + s.eps_dark) / 2.0;

    constexpr double z68 = 1.0;
    constexpr double z95 = 1.959963984540054;
    s.eps_bright_68 = wilson_interval(s.errors_bright, s.trials_bright, z68);
    s.eps_bright_95 = wilson_interval(s.errors_bright, s.trials_bright, z95);
    s.eps_dark_68 = wilson_interval(s.errors_dark, s.trials_dark, z68);
    s.eps_dark_95 = wilson_interval(s.errors_dark, s.trials_dark, z95);
    s.eps_68 = combined_eps_interval(tally, z68, s.eps, s.eps_bright_68, s.eps_dark_68,
                                     s.eps_bright, s.eps_dark);
    s.eps_95 = combined_eps_interval(tally, z95, s.eps, s.eps_bright_95, s.eps_dark_95,
                                     s.eps_bright, s.eps_dark);

    const double t_s = tally.sub_bin_duration;
    const auto mb = ta_moments(tally.bright.trials, tally.bright.sum_sub_bins,
                               tally.bright.sum_sq_sub_bins, t_s);
    const auto md =
        ta_moments(tally.dark.trials, tally.dark.sum_sub_bins, tally.dark.sum_sq_sub_bins, t_s);
    const auto ma = ta_moments(tally.bright.trials + tally.dark.trials,
                               tally.bright.sum_sub_bins + tally.dark.sum_sub_bins,
                               tally.bright.sum_sq_sub_bins + tally.dark.sum_sq_sub_bins, t_s);
    s.mean_ta_bright = mb.mean;
    s.sd_ta_bright = mb.sd;
    s.mean_ta_dark = md.mean;
    s.sd_ta_dark = md.sd;
    s.mean_ta = ma.mean;
    s.sd_ta = ma.sd;
    return s;
}

ThresholdOptimum best_threshold_for_n(const ReadoutParams& params, int N) {
    const CountPmf bright = bright_sum_pmf(params, N);
    const CountPmf dark = dark_sum_pmf_with_decay(params, N);

    const int k_top = bright.quantile(1.0 - 1e-12);
    ThresholdOptimum best;
    best.sub_bins = N;
    double cdf_b = 0.0;
    double cdf_d = 0.0;
    bool first = true;
    for (int k = 0; k <= k_top; ++k) {
        cdf_b += bright.probs[k];
        cdf_d += k <= dark.n_max() ? dark.probs[k] : 0.0;
        const double eps_b = cdf_b;             // bright sum <= k = n_c - 1/2
        const double eps_d = 1.0 - cdf_d;       // dark sum > n_c
        const double eps = 0.5 * (eps_b + eps_d);
        if (first || eps < best.eps) {
            first = false;
            best.n_c = k + 0.5;
            best.eps = eps;
            best.eps_bright = eps_b;
            best.eps_dark = eps_d;
        }
    }
    return best;
}

ThresholdOptimum optimize_threshold(const ReadoutParams& params, int n_min, int n_max) {
    params.validate();
    if (n_min < 1 || n_max < n_min || n_max > params.sub_bin_count)
        throw InvalidParameter("optimize_threshold: empty or out-of-range N range");
    ThresholdOptimum best;
    bool first = true;
    for (int N = n_min; N <= n_max; ++N) {
        const ThresholdOptimum cand = best_threshold_for_n(params, N);
        if (first || cand.eps < best.eps) {
            first = false;
            best = cand;
        }
    }
    return best;
}

namespace {

ErrorStats analytic_threshold_stats(const ThresholdOptimum& opt, double t_b) {
    ErrorStats s;
    s.eps_bright = opt.eps_bright;
    s.eps_dark = opt.eps_dark;
    s.eps = opt.eps;
    s.eps_bright_68 = s.eps_bright_95 = {opt.eps_bright, opt.eps_bright};
    s.eps_dark_68 = s.eps_dark_95 = {opt.eps_dark, opt.eps_dark};
    s.eps_68 = s.eps_95 = {opt.eps, opt.eps};
    s.mean_ta_bright = s.mean_ta_dark = s.mean_ta = t_b;
    return s;
}

}  // namespace

std::vector<SweepRecord> sweep_bin_time(const ReadoutParams& params, SweepMethod method,
                                        const std::vector<int>& n_list, uint64_t n_trials,
                                        uint64_t master_seed, const SweepOptions& options) {
    params.validate();
    if (n_list.empty()) throw InvalidParameter("sweep_bin_time: empty N list");
    std::vector<int> grid = n_list;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    RunOptions run_opts;
    run_opts.threads = options.threads;
    run_opts.decay_mode = options.decay_mode;

    std::vector<SweepRecord> records;
    records.reserve(grid.size());
    for (int N : grid) {
        SweepRecord rec;
        rec.x_name = "t_b";
        rec.x_value = N * params.sub_bin_duration;
        if (method == SweepMethod::Threshold) {
            rec.method = "threshold";
            const ThresholdOptimum opt = best_threshold_for_n(params, N);
            if (options.threshold_monte_carlo) {
                ClassifierSpec spec;
                spec.method = ClassifierSpec::Method::Threshold;
                spec.sub_bins = N;
                spec.threshold = opt.n_c;
                rec.stats = error_stats(run_trials(params, n_trials, spec, master_seed, run_opts));
            } else {
                rec.stats = analytic_threshold_stats(opt, rec.x_value);
            }
        } else {
            rec.method = "ml";
            ClassifierSpec spec;
            spec.method = ClassifierSpec::Method::MaxLikelihood;
            spec.sub_bins = N;
            spec.include_decay = options.include_decay;
            rec.stats = error_stats(run_trials(params, n_trials, spec, master_seed, run_opts));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<SweepRecord> sweep_adaptive(const ReadoutParams& params,
                                        const std::vector<double>& e_c_list, double t_c,
                                        uint64_t n_trials, uint64_t master_seed,
                                        const AdaptiveSweepOptions& options) {
    params.validate();
    if (e_c_list.empty()) throw InvalidParameter("sweep_adaptive: empty e_c list");
    std::vector<double> grid = e_c_list;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    RunOptions run_opts;
    run_opts.threads = options.threads;
    run_opts.decay_mode = options.decay_mode;

    std::vector<SweepRecord> records;
    records.reserve(grid.size());
    for (double e_c : grid) {
        ClassifierSpec spec;
        spec.method = ClassifierSpec::Method::Adaptive;
        spec.error_cutoff = e_c;
        spec.time_cutoff = t_c;
        spec.include_decay = options.include_decay;
        SweepRecord rec;
        rec.x_name = "e_c";
        rec.x_value = e_c;
        rec.method = "adaptive";
        rec.stats = error_stats(run_trials(params, n_trials, spec, master_seed, run_opts));
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

std::vector<int> log_spaced_sub_bins(int n_hi, int points) {
    std::vector<int> grid;
    grid.reserve(points);
    const double lo = 0.0;
    const double hi = std::log(static_cast<double>(std::max(2, n_hi)));
    for (int i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * i / (points - 1);
        int n = static_cast<int>(std::lround(std::exp(x)));
        n = std::max(1, n);
        if (grid.empty() || n > grid.back()) grid.push_back(n);
    }
    return grid;
}

}  // namespace

std::vector<SweepRecord> sweep_efficiency(const ReadoutParams& params_base,
                                          const std::vector<double>& eta_list, uint64_t n_trials,
                                          uint64_t master_seed,
                                          const EfficiencySweepOptions& options) {
    params_base.validate();
    if (eta_list.empty()) throw InvalidParameter("sweep_efficiency: empty efficiency list");
    if (!(options.base_efficiency > 0.0))
        throw InvalidParameter("sweep_efficiency: base efficiency must be > 0");

    std::vector<SweepRecord> out;
    for (double eta : eta_list) {
        if (!(eta > 0.0)) throw InvalidParameter("sweep_efficiency: efficiency must be > 0");
        const double scale = eta / options.base_efficiency;
        ReadoutParams params = params_base;
        params.bright_rate = params_base.bright_rate * scale;
        const double scatter = std::max(0.0, params_base.dark_rate - options.detector_dark_rate);
        params.dark_rate = scatter * scale + options.detector_dark_rate;

        SweepOptions ml_opts;
        ml_opts.threads = options.threads;
        ml_opts.include_decay = options.include_decay;

        // grid long enough to resolve the plateau; extend until it spans
        // at least twice the observed knee
        int n_hi = std::max(4, static_cast<int>(std::lround(60.0 / scale)));
        std::vector<SweepRecord> curve;
        double eps_inf = 0.0;
        double t11 = 0.0;
        for (int round = 0;; ++round) {
            params.sub_bin_count = std::max(params.sub_bin_count, n_hi);
            const std::vector<int> grid = log_spaced_sub_bins(n_hi, options.grid_points);
            curve = sweep_bin_time(params, SweepMethod::MaxLikelihood, grid, n_trials,
                                   master_seed, ml_opts);
            const size_t tail_from = curve.size() - std::max<size_t>(2, curve.size() / 5);
            double acc = 0.0;
            for (size_t i = tail_from; i < curve.size(); ++i) acc += curve[i].stats.eps;
            eps_inf = acc / static_cast<double>(curve.size() - tail_from);
            t11 = curve.back().x_value;
            for (const SweepRecord& r : curve) {
                if (r.stats.eps <= 1.1 * eps_inf) {
                    t11 = r.x_value;
                    break;
                }
            }
            const double t_hi = curve.back().x_value;
            if (t_hi >= 2.0 * t11 || round >= options.max_extensions) break;
            n_hi *= 2;
        }

        SweepRecord rec;
        rec.x_name = "eta";
        rec.x_value = eta;
        rec.method = "ml";
        rec.eps_infinity = eps_inf;
        rec.t_one_one = t11;

        // plateau stats pooled over the final fifth of the grid
        TrialOutcomeTally pooled;
        pooled.sub_bin_duration = params.sub_bin_duration;
        const size_t tail_from = curve.size() - std::max<size_t>(2, curve.size() / 5);
        for (size_t i = tail_from; i < curve.size(); ++i) {
            TrialOutcomeTally t;
            t.sub_bin_duration = params.sub_bin_duration;
            t.bright.trials = curve[i].stats.trials_bright;
            t.bright.misclassified = curve[i].stats.errors_bright;
            t.dark.trials = curve[i].stats.trials_dark;
            t.dark.misclassified = curve[i].stats.errors_dark;
            pooled.merge(t);
        }
        rec.stats = error_stats(pooled);
        rec.stats.mean_ta = t11;  // CSV mirrors t_one_one here
        rec.stats.mean_ta_bright = 0.0;
        rec.stats.mean_ta_dark = 0.0;

        if (options.curves) {
            char tag[48];
            std::snprintf(tag, sizeof(tag), "ml:eta=%.6g", eta);
            for (SweepRecord& r : curve) {
                r.method = tag;
                options.curves->push_back(r);
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace ionread
