#include "ionread/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ionread/errors.hpp"

namespace ionread {

namespace {
constexpr double kLinFloor = 1e-300;
constexpr double kRescaleBelow = 1e-8;
}  // namespace

void CountTrace::validate() const {
    if (counts.empty()) throw InvalidParameter("CountTrace: needs at least one sub-bin");
    if (!(sub_bin_duration > 0.0)) throw InvalidParameter("CountTrace: sub_bin_duration must be > 0");
    for (int c : counts)
        if (c < 0) throw InvalidParameter("CountTrace: negative count");
    if (truth && truth->label == Label::Bright && truth->decay_time)
        throw InvalidParameter("CountTrace: bright truth cannot carry a decay time");
}

double bayes_error(double log_pB, double log_pD) {
    const double delta = std::fabs(log_pB - log_pD);
    const double w = std::exp(-delta);  // underflows gracefully to 0 for large delta
    return w / (1.0 + w);
}

double log_ratio_cutoff(double error_cutoff) {
    if (error_cutoff <= 0.0) return std::numeric_limits<double>::infinity();
    return std::log((1.0 - error_cutoff) / error_cutoff);
}

Verdict threshold_classify(const CountTrace& trace, int N, double n_c) {
    trace.validate();
    if (N < 1 || N > static_cast<int>(trace.counts.size()))
        throw InvalidParameter("threshold_classify: N exceeds the trace length");
    const double doubled = 2.0 * n_c;
    if (n_c < 0.5 || std::fabs(doubled - std::round(doubled)) > 1e-9 ||
        static_cast<long long>(std::llround(doubled)) % 2 == 0)
        throw InvalidParameter("threshold_classify: n_c must be half-integer (k + 1/2, k >= 0)");

    long long sum = 0;
    for (int i = 0; i < N; ++i) sum += trace.counts[i];

    Verdict v;
    v.label = sum > n_c ? Label::Bright : Label::Dark;
    v.sub_bins_used = N;
    v.readout_time = N * trace.sub_bin_duration;
    return v;
}

LikelihoodModel::LikelihoodModel(CountPmf bright, CountPmf dark, double sub_bin_duration,
                                 double shelf_lifetime)
    : bright_(std::move(bright)), dark_(std::move(dark)), t_s_(sub_bin_duration),
      tau_(shelf_lifetime) {
    if (!(t_s_ > 0.0)) throw InvalidParameter("LikelihoodModel: sub_bin_duration must be > 0");
    if (!(tau_ > 0.0)) throw InvalidParameter("LikelihoodModel: shelf_lifetime must be > 0");
    bright_.validate(1e-6);
    dark_.validate(1e-6);
    const auto fill = [](const CountPmf& pmf, std::vector<double>& lin, std::vector<double>& log) {
        lin.resize(pmf.probs.size());
        log.resize(pmf.probs.size());
        for (int n = 0; n <= pmf.n_max(); ++n) {
            lin[n] = std::max(pmf.probs[n], kLinFloor);
            log[n] = pmf.log_prob(n);
        }
    };
    fill(bright_, b_lin_, b_log_);
    fill(dark_, d_lin_, d_log_);
}

double LikelihoodModel::lin_fallback(const CountPmf& pmf, int n) {
    return std::max(pmf.prob(n), kLinFloor);
}

void LikelihoodTracker::reset() {
    n_ = 0;
    log_pb_ = 0.0;
    log_pd_plain_ = 0.0;
    m_ = 1.0;
    s_ = 0.0;
    log_scale_ = 0.0;
}

void LikelihoodTracker::push(int count) {
    const LikelihoodModel& m = *model_;
    log_pb_ += m.bright_log(count);
    log_pd_plain_ += m.dark_log(count);

    const double b = m.bright_lin(count);
    const double d = m.dark_lin(count);
    s_ = (s_ + m_) * b;
    m_ *= d;
    const double big = std::max(m_, s_);
    if (big < kRescaleBelow) {
        // joint rescale keeps the pair in normal range; a single sub-bin can
        // shrink it by at most ~1e-300, so rescaling from 1e-8 never hits zero
        m_ /= big;
        s_ /= big;
        log_scale_ += std::log(big);
    }
    ++n_;
}

double LikelihoodTracker::log_dark(bool include_decay) const {
    if (!include_decay) return log_pd_plain_;
    if (n_ == 0) return 0.0;
    const double t_s = model_->sub_bin_duration();
    const double tau = model_->shelf_lifetime();
    const double live_weight = 1.0 - (n_ * t_s) / tau;
    const double value = live_weight * m_ + (t_s / tau) * s_;
    return std::log(value) + log_scale_;
}

double LikelihoodTracker::posterior(bool include_decay) const {
    return bayes_error(log_pb_, log_dark(include_decay));
}

Verdict finish_likelihood_verdict(const LikelihoodTracker& tracker, double sub_bin_duration,
                                  bool include_decay) {
    Verdict v;
    v.log_pB = tracker.log_bright();
    v.log_pD = tracker.log_dark(include_decay);
    v.label = *v.log_pB >= *v.log_pD ? Label::Bright : Label::Dark;
    v.posterior_error = bayes_error(*v.log_pB, *v.log_pD);
    v.sub_bins_used = tracker.sub_bins();
    v.readout_time = tracker.sub_bins() * sub_bin_duration;
    return v;
}

std::pair<double, double> log_likelihoods(const CountTrace& trace, const CountPmf& bright,
                                          const CountPmf& dark, double shelf_lifetime,
                                          bool include_decay) {
    trace.validate();
    const double t_b = trace.counts.size() * trace.sub_bin_duration;
    if (include_decay && !(t_b < shelf_lifetime))
        throw InvalidParameter("log_likelihoods: bin time must be below the shelf lifetime");
    LikelihoodModel model(bright, dark, trace.sub_bin_duration, shelf_lifetime);
    LikelihoodTracker tracker(model);
    for (int c : trace.counts) tracker.push(c);
    return {tracker.log_bright(), tracker.log_dark(include_decay)};
}

Verdict ml_classify(std::span<const int> counts, const LikelihoodModel& model,
                    bool include_decay) {
    LikelihoodTracker tracker(model);
    for (int c : counts) tracker.push(c);
    return finish_likelihood_verdict(tracker, model.sub_bin_duration(), include_decay);
}

Verdict ml_classify(const CountTrace& trace, const CountPmf& bright, const CountPmf& dark,
                    double shelf_lifetime, bool include_decay) {
    trace.validate();
    const double t_b = trace.counts.size() * trace.sub_bin_duration;
    if (include_decay && !(t_b < shelf_lifetime))
        throw InvalidParameter("ml_classify: bin time must be below the shelf lifetime");
    LikelihoodModel model(bright, dark, trace.sub_bin_duration, shelf_lifetime);
    return ml_classify(std::span<const int>(trace.counts), model, include_decay);
}

int adaptive_max_sub_bins(double error_cutoff, double time_cutoff, double sub_bin_duration) {
    if (!(error_cutoff >= 0.0) || error_cutoff >= 0.5)
        throw InvalidParameter("adaptive: error cutoff must lie in [0, 0.5)");
    if (!(time_cutoff > 0.0)) throw InvalidParameter("adaptive: time cutoff must be > 0");
    const double ratio = time_cutoff / sub_bin_duration;
    const int bins = static_cast<int>(std::llround(ratio));
    if (bins < 1 || std::fabs(ratio - bins) > 1e-6 * std::max(1.0, ratio))
        throw InvalidParameter("adaptive: time cutoff must be a positive multiple of t_s");
    return bins;
}

Verdict adaptive_classify(const CountTrace& trace, const CountPmf& bright, const CountPmf& dark,
                          double shelf_lifetime, double error_cutoff, double time_cutoff,
                          bool include_decay) {
    trace.validate();
    if (include_decay && !(time_cutoff < shelf_lifetime))
        throw InvalidParameter("adaptive_classify: time cutoff must be below the shelf lifetime");
    LikelihoodModel model(bright, dark, trace.sub_bin_duration, shelf_lifetime);
    const int max_bins =
        adaptive_max_sub_bins(error_cutoff, time_cutoff, trace.sub_bin_duration);
    const double cutoff = log_ratio_cutoff(error_cutoff);
    LikelihoodTracker tracker(model);
    for (int c : trace.counts) {
        tracker.push(c);
        const double delta = tracker.log_bright() - tracker.log_dark(include_decay);
        if (std::fabs(delta) > cutoff || tracker.sub_bins() >= max_bins)
            return finish_likelihood_verdict(tracker, trace.sub_bin_duration, include_decay);
    }
    throw InvalidParameter("adaptive_classify: trace ended after " +
                           std::to_string(trace.counts.size()) +
                           " sub-bins before reaching the cut-off time; more sub-bins required");
}

}  // namespace ionread
