#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ionread/sweeps.hpp"

namespace ionread {

enum class StateRole { QubitUp, QubitDown, Excited, Shelf, RepumpReservoir, Leak };

enum class DriveChannel { Drive393, Drive850Sigma, Drive850Pi, Spontaneous };

StateRole parse_state_role(const std::string& text);
DriveChannel parse_drive_channel(const std::string& text);
std::string to_string(StateRole role);
std::string to_string(DriveChannel channel);

/// Directed transition: rate = base_rate * control multiplier for the
/// channel (spontaneous multiplier is 1), further scaled by the detuning
/// suppression factor when off_resonant is set.
struct Transition {
    int from = 0;
    int to = 0;
    double base_rate = 0.0;  // s^-1 at unit control
    DriveChannel channel = DriveChannel::Spontaneous;
    bool off_resonant = false;
};

/// Laser intensity presets, in units of the scheme's calibration intensity.
/// The continuous method drives all channels at once with a fixed 850
/// polarization mix; the pulsed method uses one channel per segment.
struct DrivePresets {
    double continuous_sigma = 1.0;
    double continuous_pi = 0.05;
    double pulsed_sigma = 1.0;
    double pulsed_pi = 1.0;
};

/// Reduced level scheme for the hyperfine-to-optical shelving transfer.
/// States and transition rates are data so the scheme can be refined from a
/// file without touching code.
struct LevelScheme {
    std::vector<std::string> labels;
    std::vector<StateRole> roles;
    std::vector<Transition> transitions;

    double shelf_lifetime = 1.168;     // s
    double linewidth = 1.45e8;         // radiative decay rate of the excited states, s^-1
    double offres_detuning_hz = 3.1e9; // qubit-up excitation detuning
    double branch_shelf = 0.053;       // P -> D5/2 branching fraction
    double branch_repump = 0.0063;     // P -> D3/2 branching fraction
    DrivePresets drive;

    int state_count() const { return static_cast<int>(labels.size()); }
    int index_of(StateRole role) const;  // unique roles only (up/down/shelf)

    /// Suppression of the off-resonant excitation rate relative to the
    /// resonant one: 1 / (1 + (2 * 2*pi*detuning / linewidth)^2).
    double offres_suppression() const;

    void validate() const;
};

/// The 8-state default: both qubit states, the cycling and off-resonant
/// excited states, the aggregated shelf, sigma- and pi-reachable repump
/// reservoirs, and an absorbing leak state.
LevelScheme default_scheme();

LevelScheme parse_scheme(std::istream& in);
LevelScheme load_scheme(const std::string& path);

struct Controls {
    double drive393 = 0.0;
    double drive850_sigma = 0.0;
    double drive850_pi = 0.0;
};

struct PulseSegment {
    double duration = 0.0;  // s
    Controls controls;
};

struct PulseSchedule {
    std::vector<PulseSegment> segments;
    double total_duration() const;
    void validate() const;  // all durations > 0
};

PulseSchedule parse_schedule(std::istream& in);
PulseSchedule load_schedule(const std::string& path);

/// Column-stochastic generator (dp/dt = G p), dense row-major.
struct GeneratorMatrix {
    int n = 0;
    std::vector<double> values;  // n * n, values[row * n + col]

    double at(int row, int col) const { return values[row * n + col]; }
    double& at(int row, int col) { return values[row * n + col]; }
};

/// Rate-equation generator for one control setting. Off-diagonals are
/// non-negative and each diagonal carries minus its column's off-diagonal
/// sum, so populations are conserved.
GeneratorMatrix build_generator(const LevelScheme& scheme, const Controls& controls);

/// p(duration) = exp(G * duration) p(0), through a scaling-and-squaring
/// matrix exponential that tolerates the >8 decades of rate spread between
/// excited-state decay and shelf decay. Output is clamped non-negative and
/// renormalized.
std::vector<double> propagate(const std::vector<double>& populations, const GeneratorMatrix& g,
                              double duration);

struct ShelvingError {
    double eps_total = 0.0;  // (eps_up + eps_down) / 2
    double eps_up = 0.0;     // population in the shelf after an |up> start
    double eps_down = 0.0;   // population not in the shelf after a |down> start
};

/// Average transfer error of a schedule: shelf decay during the schedule
/// included, both qubit initializations propagated.
ShelvingError shelving_error(const LevelScheme& scheme, const PulseSchedule& schedule);

enum class ShelvingMode { Continuous, Pulsed };

struct ShelvingOptimum {
    PulseSchedule schedule;
    ShelvingError error;
    double drive393 = 0.0;   // optimized 393 intensity
    int cycles = 1;          // pulsed repetitions
    bool converged = true;
};

struct ShelvingOptimizeOptions {
    int coarse_points = 33;      // continuous: log-spaced bracket scan
    int max_iterations = 400;    // simplex budget per start
    int restarts = 3;            // pulsed: deterministic perturbed starts
    double tolerance = 1e-3;     // relative simplex / bracket size
};

/// Optimizes the drive for one total transfer time. Continuous mode does a
/// golden-section search of the 393 intensity over a log bracket with the
/// 850 mix fixed at the scheme presets; pulsed mode runs a derivative-free
/// simplex over the three pulse durations and the 393 intensity, repeating
/// the (393, 850 sigma, 850 pi) unit as many times as fits in t_T.
ShelvingOptimum optimize_shelving(const LevelScheme& scheme, double total_time, ShelvingMode mode,
                                  const ShelvingOptimizeOptions& options = {});

/// Optimized transfer error over a grid of total times, one record per
/// (t_T, mode). Records carry eps_up in the eps_B slot and eps_down in the
/// eps_D slot; intervals are degenerate (the evaluation is deterministic).
std::vector<SweepRecord> sweep_shelving(const LevelScheme& scheme,
                                        const std::vector<double>& total_times,
                                        const std::vector<ShelvingMode>& modes,
                                        const ShelvingOptimizeOptions& options = {});

}  // namespace ionread
