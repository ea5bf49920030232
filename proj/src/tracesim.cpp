#include "ionread/tracesim.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "ionread/errors.hpp"

namespace ionread {

TraceGenerator::TraceGenerator(const ReadoutParams& params, DecayMode mode)
    : t_s_(params.sub_bin_duration), tau_(params.shelf_lifetime), mode_(mode) {
    params.validate();
    double detector_mean = 0.0;
    if (params.dark_count_pmf) {
        const CountPmf& pmf = *params.dark_count_pmf;
        detector_cdf_.resize(pmf.probs.size());
        double c = 0.0;
        for (size_t n = 0; n < pmf.probs.size(); ++n) {
            c += pmf.probs[n];
            detector_cdf_[n] = c;
        }
        detector_mean = pmf.mean();
    }
    mean_bright_ = params.bright_rate * t_s_;
    mean_dark_ = std::max(0.0, params.dark_rate * t_s_ - detector_mean);
}

TraceGenerator::Stream::Stream(const TraceGenerator& gen, Label label, uint64_t master_seed,
                               uint64_t stream_id)
    : gen_(&gen), rng_(master_seed, stream_id), label_(label) {
    if (label_ == Label::Dark) decay_time_ = rng_.exponential(gen_->tau_);
}

int TraceGenerator::Stream::next() {
    const TraceGenerator& g = *gen_;
    double mean = mean_signal();
    int count = static_cast<int>(rng_.poisson(mean));
    if (!g.detector_cdf_.empty()) {
        const double u = rng_.uniform();
        size_t n = 0;
        while (n + 1 < g.detector_cdf_.size() && u >= g.detector_cdf_[n]) ++n;
        count += static_cast<int>(n);
    }
    ++index_;
    return count;
}

double TraceGenerator::Stream::mean_signal() const {
    const TraceGenerator& g = *gen_;
    if (label_ == Label::Bright) return g.mean_bright_;
    const double start = index_ * g.t_s_;
    const double end = start + g.t_s_;
    const double t_d = *decay_time_;
    if (t_d >= end) return g.mean_dark_;
    if (g.mode_ == DecayMode::SubBinSwitch) {
        // rate flips to bright at the start of the sub-bin containing t_d
        return g.mean_bright_;
    }
    if (t_d <= start) return g.mean_bright_;
    const double frac_dark = (t_d - start) / g.t_s_;
    return g.mean_dark_ * frac_dark + g.mean_bright_ * (1.0 - frac_dark);
}

CountTrace simulate_trace(const ReadoutParams& params, Label label, uint64_t stream_id,
                          uint64_t seed, DecayMode decay_mode) {
    TraceGenerator gen(params, decay_mode);
    auto stream = gen.stream(label, seed, stream_id);
    CountTrace trace;
    trace.sub_bin_duration = params.sub_bin_duration;
    trace.counts.reserve(params.sub_bin_count);
    for (int i = 0; i < params.sub_bin_count; ++i) trace.counts.push_back(stream.next());
    TraceTruth truth;
    truth.label = label;
    if (label == Label::Dark) truth.decay_time = stream.decay_time();
    trace.truth = truth;
    return trace;
}

void TrialOutcomeTally::merge(const TrialOutcomeTally& other) {
    for (Label label : {Label::Bright, Label::Dark}) {
        PerLabel& mine = for_label(label);
        const PerLabel& theirs = other.for_label(label);
        mine.trials += theirs.trials;
        mine.misclassified += theirs.misclassified;
        mine.sum_sub_bins += theirs.sum_sub_bins;
        mine.sum_sq_sub_bins += theirs.sum_sq_sub_bins;
    }
}

namespace {

bool threshold_is_half_integer(double n_c) {
    const double doubled = 2.0 * n_c;
    return n_c >= 0.5 && std::fabs(doubled - std::round(doubled)) <= 1e-9 &&
           static_cast<long long>(std::llround(doubled)) % 2 != 0;
}

struct CampaignContext {
    const ClassifierSpec* spec;
    const TraceGenerator* generator;
    const LikelihoodModel* model;  // null for threshold/constant
    int fixed_sub_bins = 0;        // threshold/ml
    int adaptive_max_bins = 0;
    double adaptive_cutoff = 0.0;  // |log ratio| stopping boundary
    double t_s = 0.0;
};

TrialRecord classify_one(const CampaignContext& ctx, Label label, uint64_t master_seed,
                         uint64_t stream_id) {
    const ClassifierSpec& spec = *ctx.spec;
    auto stream = ctx.generator->stream(label, master_seed, stream_id);
    TrialRecord rec;
    rec.truth = label;
    rec.stream_id = stream_id;

    switch (spec.method) {
        case ClassifierSpec::Method::ConstantBright: {
            rec.verdict = Label::Bright;
            rec.sub_bins_used = 0;
            break;
        }
        case ClassifierSpec::Method::Threshold: {
            long long sum = 0;
            for (int i = 0; i < ctx.fixed_sub_bins; ++i) sum += stream.next();
            rec.sum_counts = sum;
            rec.verdict = sum > spec.threshold ? Label::Bright : Label::Dark;
            rec.sub_bins_used = ctx.fixed_sub_bins;
            break;
        }
        case ClassifierSpec::Method::MaxLikelihood: {
            LikelihoodTracker tracker(*ctx.model);
            long long sum = 0;
            for (int i = 0; i < ctx.fixed_sub_bins; ++i) {
                const int c = stream.next();
                sum += c;
                tracker.push(c);
            }
            const Verdict v = finish_likelihood_verdict(tracker, ctx.t_s, spec.include_decay);
            rec.sum_counts = sum;
            rec.verdict = v.label;
            rec.sub_bins_used = v.sub_bins_used;
            rec.log_pB = v.log_pB;
            rec.log_pD = v.log_pD;
            rec.posterior_error = v.posterior_error;
            break;
        }
        case ClassifierSpec::Method::Adaptive: {
            LikelihoodTracker tracker(*ctx.model);
            long long sum = 0;
            for (int k = 0; k < ctx.adaptive_max_bins; ++k) {
                const int c = stream.next();
                sum += c;
                tracker.push(c);
                const double delta =
                    tracker.log_bright() - tracker.log_dark(spec.include_decay);
                if (std::fabs(delta) > ctx.adaptive_cutoff) break;
            }
            const Verdict v = finish_likelihood_verdict(tracker, ctx.t_s, spec.include_decay);
            rec.sum_counts = sum;
            rec.verdict = v.label;
            rec.sub_bins_used = v.sub_bins_used;
            rec.log_pB = v.log_pB;
            rec.log_pD = v.log_pD;
            rec.posterior_error = v.posterior_error;
            break;
        }
    }
    return rec;
}

}  // namespace

TrialOutcomeTally run_trials(const ReadoutParams& params, uint64_t n_trials_per_label,
                             const ClassifierSpec& spec, uint64_t master_seed,
                             const RunOptions& options) {
    params.validate();
    if (n_trials_per_label < 1) throw InvalidParameter("run_trials: need at least one trial");

    TraceGenerator generator(params, options.decay_mode);
    std::optional<LikelihoodModel> model;

    CampaignContext ctx;
    ctx.spec = &spec;
    ctx.generator = &generator;
    ctx.t_s = params.sub_bin_duration;

    switch (spec.method) {
        case ClassifierSpec::Method::ConstantBright:
            break;
        case ClassifierSpec::Method::Threshold:
            if (spec.sub_bins < 1 || spec.sub_bins > params.sub_bin_count)
                throw InvalidParameter("run_trials: threshold N out of range");
            if (!threshold_is_half_integer(spec.threshold))
                throw InvalidParameter("run_trials: n_c must be half-integer (k + 1/2, k >= 0)");
            ctx.fixed_sub_bins = spec.sub_bins;
            break;
        case ClassifierSpec::Method::MaxLikelihood: {
            if (spec.sub_bins < 1 || spec.sub_bins > params.sub_bin_count)
                throw InvalidParameter("run_trials: ml N out of range");
            auto [bright, dark] = sub_bin_models(params);
            model.emplace(std::move(bright), std::move(dark), params.sub_bin_duration,
                          params.shelf_lifetime);
            ctx.model = &*model;
            ctx.fixed_sub_bins = spec.sub_bins;
            break;
        }
        case ClassifierSpec::Method::Adaptive: {
            ctx.adaptive_max_bins = adaptive_max_sub_bins(spec.error_cutoff, spec.time_cutoff,
                                                          params.sub_bin_duration);
            if (spec.include_decay && !(spec.time_cutoff < params.shelf_lifetime))
                throw InvalidParameter("run_trials: adaptive t_c must be below the shelf lifetime");
            ctx.adaptive_cutoff = log_ratio_cutoff(spec.error_cutoff);
            auto [bright, dark] = sub_bin_models(params);
            model.emplace(std::move(bright), std::move(dark), params.sub_bin_duration,
                          params.shelf_lifetime);
            ctx.model = &*model;
            break;
        }
    }

    if (options.trial_dump) options.trial_dump->assign(2 * n_trials_per_label, TrialRecord{});

    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    const unsigned n_threads = options.threads > 0 ? static_cast<unsigned>(options.threads)
                                                   : std::min<unsigned>(hw, 16);
    const uint64_t n = n_trials_per_label;
    const unsigned workers = static_cast<unsigned>(std::min<uint64_t>(n_threads, n));

    std::vector<TrialOutcomeTally> partial(workers);
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::string error_message;

    auto work = [&](unsigned w) {
        const uint64_t begin = n * w / workers;
        const uint64_t end = n * (w + 1) / workers;
        TrialOutcomeTally& tally = partial[w];
        tally.sub_bin_duration = params.sub_bin_duration;
        uint64_t sid = 0;
        try {
            for (uint64_t i = begin; i < end && !failed.load(std::memory_order_relaxed); ++i) {
                for (Label label : {Label::Bright, Label::Dark}) {
                    sid = trial_stream_id(label, i);
                    const TrialRecord rec = classify_one(ctx, label, master_seed, sid);
                    auto& bucket = tally.for_label(label);
                    ++bucket.trials;
                    if (rec.verdict != label) ++bucket.misclassified;
                    const uint64_t used = static_cast<uint64_t>(rec.sub_bins_used);
                    bucket.sum_sub_bins += used;
                    bucket.sum_sq_sub_bins += used * used;
                    if (options.trial_dump) (*options.trial_dump)[sid] = rec;
                }
            }
        } catch (const std::exception& e) {
            std::scoped_lock lock(error_mutex);
            if (!failed.exchange(true))
                error_message = "campaign aborted at stream " + std::to_string(sid) + ": " +
                                std::string(e.what());
        }
    };

    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }

    if (failed.load()) throw std::runtime_error(error_message);

    TrialOutcomeTally total;
    total.sub_bin_duration = params.sub_bin_duration;
    for (const auto& p : partial) total.merge(p);
    return total;
}

}  // namespace ionread
