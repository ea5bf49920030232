#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ionread/distributions.hpp"
#include "ionread/trace.hpp"

namespace ionread {

/// Classifier output for one trace.
struct Verdict {
    Label label = Label::Bright;
    std::optional<double> log_pB;           // natural log; absent for the threshold method
    std::optional<double> log_pD;
    std::optional<double> posterior_error;  // P(verdict wrong | data), in [0, 0.5]
    int sub_bins_used = 0;
    double readout_time = 0.0;              // t_a = sub_bins_used * t_s, s
};

/// Estimated probability that the likelihood verdict is wrong:
/// min(p_B, p_D) / (p_B + p_D), evaluated from the log likelihoods without
/// overflow for |log_pB - log_pD| up to 1e4 and beyond.
double bayes_error(double log_pB, double log_pD);

/// Photon-count thresholding over the first N sub-bins. Bright iff the
/// summed count exceeds n_c; n_c must be half-integer (k + 1/2, k >= 0) so
/// integer sums can never sit on the boundary.
Verdict threshold_classify(const CountTrace& trace, int N, double n_c);

/// Shared per-campaign likelihood tables for one (B, D) model pair.
/// Probability lookups fall back to the PMFs' support-extension rule beyond
/// the table, and linear values are floored at 1e-300 so the decay recursion
/// never multiplies in a hard zero.
class LikelihoodModel {
  public:
    LikelihoodModel(CountPmf bright, CountPmf dark, double sub_bin_duration,
                    double shelf_lifetime);

    double bright_lin(int n) const {
        return n >= 0 && n < static_cast<int>(b_lin_.size()) ? b_lin_[n] : lin_fallback(bright_, n);
    }
    double dark_lin(int n) const {
        return n >= 0 && n < static_cast<int>(d_lin_.size()) ? d_lin_[n] : lin_fallback(dark_, n);
    }
    double bright_log(int n) const {
        return n >= 0 && n < static_cast<int>(b_log_.size()) ? b_log_[n] : bright_.log_prob(n);
    }
    double dark_log(int n) const {
        return n >= 0 && n < static_cast<int>(d_log_.size()) ? d_log_[n] : dark_.log_prob(n);
    }

    double sub_bin_duration() const { return t_s_; }
    double shelf_lifetime() const { return tau_; }
    const CountPmf& bright() const { return bright_; }
    const CountPmf& dark() const { return dark_; }

  private:
    static double lin_fallback(const CountPmf& pmf, int n);

    CountPmf bright_, dark_;
    std::vector<double> b_lin_, d_lin_, b_log_, d_log_;
    double t_s_, tau_;
};

/// Incremental likelihood state over a growing trace. O(1) work per sub-bin:
/// log p_B is a running sum, and p_D uses the decay-marginalizing recursion
///   M_0 = 1,  M_k = M_{k-1} D(n_k)
///   S_0 = 0,  S_k = (S_{k-1} + M_{k-1}) B(n_k)
///   p_D = (1 - t_b/tau) M_N + (t_s/tau) S_N
/// with both running products rescaled in lockstep so intermediates stay
/// representable out to N of 1e4 and beyond.
class LikelihoodTracker {
  public:
    explicit LikelihoodTracker(const LikelihoodModel& model) : model_(&model) {}

    void reset();
    void push(int count);

    int sub_bins() const { return n_; }
    double log_bright() const { return log_pb_; }
    double log_dark(bool include_decay) const;
    double posterior(bool include_decay) const;

  private:
    const LikelihoodModel* model_;
    int n_ = 0;
    double log_pb_ = 0.0;
    double log_pd_plain_ = 0.0;
    double m_ = 1.0;          // running product of D(n_k), times exp(log_scale_)
    double s_ = 0.0;          // decay-position sum, same scale
    double log_scale_ = 0.0;
};

/// Log likelihoods (log p_B, log p_D) of a full trace. With include_decay the
/// dark likelihood marginalizes over the decay time via the recursion above;
/// without it, log p_D is the plain sum of log D(n_i).
std::pair<double, double> log_likelihoods(const CountTrace& trace, const CountPmf& bright,
                                          const CountPmf& dark, double shelf_lifetime,
                                          bool include_decay);

/// Maximum-likelihood verdict over the full trace. Ties (p_B = p_D) resolve
/// to Bright.
Verdict ml_classify(const CountTrace& trace, const CountPmf& bright, const CountPmf& dark,
                    double shelf_lifetime, bool include_decay);
Verdict ml_classify(std::span<const int> counts, const LikelihoodModel& model, bool include_decay);

/// Adaptive early-stopping verdict: consumes sub-bins until the posterior
/// error drops below e_c or the cut-off time t_c (a positive multiple of t_s)
/// is reached, whichever comes first. The posterior at stopping is reported
/// either way. Throws if the trace runs out before t_c without an early stop.
Verdict adaptive_classify(const CountTrace& trace, const CountPmf& bright, const CountPmf& dark,
                          double shelf_lifetime, double error_cutoff, double time_cutoff,
                          bool include_decay = false);

/// Streaming core for the adaptive method; `next` yields one sub-bin count
/// per call and is invoked at most t_c / t_s times.
template <typename NextCount>
Verdict adaptive_classify_stream(NextCount&& next, const LikelihoodModel& model,
                                 double error_cutoff, double time_cutoff, bool include_decay);

/// Validates (e_c, t_c) against t_s and returns t_c / t_s.
int adaptive_max_sub_bins(double error_cutoff, double time_cutoff, double sub_bin_duration);
Verdict finish_likelihood_verdict(const LikelihoodTracker& tracker, double sub_bin_duration,
                                  bool include_decay);
/// Stopping boundary on |log_pB - log_pD| equivalent to posterior < e_c.
double log_ratio_cutoff(double error_cutoff);

/// CLI/config-facing description of one classifier.
struct ClassifierSpec {
    enum class Method { Threshold, MaxLikelihood, Adaptive, ConstantBright };
    Method method = Method::MaxLikelihood;
    int sub_bins = 0;            // N, threshold and ml
    double threshold = 0.5;      // n_c, threshold only
    bool include_decay = true;   // ml (default true) and adaptive (default false)
    double error_cutoff = 1e-4;  // e_c, adaptive only
    double time_cutoff = 0.0;    // t_c in s, adaptive only
};

template <typename NextCount>
Verdict adaptive_classify_stream(NextCount&& next, const LikelihoodModel& model,
                                 double error_cutoff, double time_cutoff, bool include_decay) {
    const int max_bins = adaptive_max_sub_bins(error_cutoff, time_cutoff, model.sub_bin_duration());
    const double cutoff = log_ratio_cutoff(error_cutoff);
    LikelihoodTracker tracker(model);
    for (int k = 0; k < max_bins; ++k) {
        tracker.push(next());
        const double delta = tracker.log_bright() - tracker.log_dark(include_decay);
        if (std::abs(delta) > cutoff) break;
    }
    return finish_likelihood_verdict(tracker, model.sub_bin_duration(), include_decay);
}

}  // namespace ionread
