#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace ionread {

enum class Label { Bright, Dark };

inline std::string_view to_string(Label label) {
    return label == Label::Bright ? "bright" : "dark";
}

struct TraceTruth {
    Label label = Label::Bright;
    std::optional<double> decay_time;  // s from the start of the bin; dark traces only
};

/// Ordered per-sub-bin photon counts for one trial.
struct CountTrace {
    std::vector<int> counts;
    double sub_bin_duration = 0.0;  // t_s, s
    std::optional<TraceTruth> truth;

    void validate() const;
};

}  // namespace ionread
