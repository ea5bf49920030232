#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ionread/classifiers.hpp"
#include "ionread/distributions.hpp"
#include "ionread/rng.hpp"
#include "ionread/trace.hpp"

namespace ionread {

/// How a dark trace handles the sub-bin in which the shelf decays.
/// SubBinSwitch is the likelihood model's approximation (the rate flips to
/// R_B at the start of that sub-bin); ExactTime splits the sub-bin at the
/// decay instant. ExactTime is the simulation default, so campaigns also
/// probe the robustness of the sub-bin-switch analysis.
enum class DecayMode { SubBinSwitch, ExactTime };

/// Injective stream id for trial `index` of a given preparation.
inline uint64_t trial_stream_id(Label label, uint64_t index) {
    return (index << 1) | (label == Label::Dark ? 1u : 0u);
}

/// Immutable per-campaign sampling tables plus the per-trial count stream.
/// A stream is a pure function of (params, label, master seed, stream id,
/// decay mode); sub-bin counts come out one at a time so adaptive readers
/// only consume what they inspect.
class TraceGenerator {
  public:
    TraceGenerator(const ReadoutParams& params, DecayMode mode);

    class Stream {
      public:
        Stream(const TraceGenerator& gen, Label label, uint64_t master_seed, uint64_t stream_id);
        int next();
        Label label() const { return label_; }
        const std::optional<double>& decay_time() const { return decay_time_; }

      private:
        double mean_signal() const;

        const TraceGenerator* gen_;
        Rng rng_;
        Label label_;
        std::optional<double> decay_time_;
        int index_ = 0;
    };

    Stream stream(Label label, uint64_t master_seed, uint64_t stream_id) const {
        return Stream(*this, label, master_seed, stream_id);
    }

    double sub_bin_duration() const { return t_s_; }

  private:
    friend class Stream;
    double mean_bright_ = 0.0;  // Poisson signal mean per sub-bin, bright ion
    double mean_dark_ = 0.0;    // Poisson signal mean per sub-bin, dark ion (detector part excluded)
    double t_s_ = 0.0;
    double tau_ = 0.0;
    DecayMode mode_;
    std::vector<double> detector_cdf_;  // empirical detector PMF, cumulative; empty if none
};

/// One full trace of params.sub_bin_count sub-bins, with ground truth attached.
CountTrace simulate_trace(const ReadoutParams& params, Label label, uint64_t stream_id,
                          uint64_t seed, DecayMode decay_mode = DecayMode::ExactTime);

/// Campaign outcome counts per true label. Readout durations are accumulated
/// in integer sub-bin units, which keeps merges exact and the final tally
/// bit-identical under any work partition.
struct TrialOutcomeTally {
    struct PerLabel {
        uint64_t trials = 0;
        uint64_t misclassified = 0;
        uint64_t sum_sub_bins = 0;
        uint64_t sum_sq_sub_bins = 0;
    };
    PerLabel bright;
    PerLabel dark;
    double sub_bin_duration = 0.0;

    PerLabel& for_label(Label label) { return label == Label::Bright ? bright : dark; }
    const PerLabel& for_label(Label label) const {
        return label == Label::Bright ? bright : dark;
    }
    void merge(const TrialOutcomeTally& other);
    bool operator==(const TrialOutcomeTally&) const = default;
};

/// One row of the optional per-trial dump.
struct TrialRecord {
    Label truth = Label::Bright;
    uint64_t stream_id = 0;
    int sub_bins_used = 0;
    long long sum_counts = 0;
    Label verdict = Label::Bright;
    std::optional<double> log_pB;
    std::optional<double> log_pD;
    std::optional<double> posterior_error;
};

struct RunOptions {
    int threads = 0;  // 0 = hardware concurrency
    DecayMode decay_mode = DecayMode::ExactTime;
    std::vector<TrialRecord>* trial_dump = nullptr;  // filled with 2 * n records when set
};

/// Runs n bright and n dark trials of the given classifier. Trial i of each
/// label owns RNG stream trial_stream_id(label, i); the result is bit-exact
/// for a fixed master seed regardless of thread count.
TrialOutcomeTally run_trials(const ReadoutParams& params, uint64_t n_trials_per_label,
                             const ClassifierSpec& spec, uint64_t master_seed,
                             const RunOptions& options = {});

}  // namespace ionread
