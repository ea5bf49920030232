#include "ionread/shelving.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ionread/errors.hpp"

namespace ionread {

StateRole parse_state_role(const std::string& text) {
    if (text == "qubit_up") return StateRole::QubitUp;
    if (text == "qubit_down") return StateRole::QubitDown;
    if (text == "excited") return StateRole::Excited;
    if (text == "shelf") return StateRole::Shelf;
    if (text == "repump_reservoir") return StateRole::RepumpReservoir;
    if (text == "leak") return StateRole::Leak;
    throw ParseError("unknown state role '" + text + "'");
}

DriveChannel parse_drive_channel(const std::string& text) {
    if (text == "drive393") return DriveChannel::Drive393;
    if (text == "drive850_sigma") return DriveChannel::Drive850Sigma;
    if (text == "drive850_pi") return DriveChannel::Drive850Pi;
    if (text == "spontaneous") return DriveChannel::Spontaneous;
    throw ParseError("unknown drive channel '" + text + "'");
}

std::string to_string(StateRole role) {
    switch (role) {
        case StateRole::QubitUp: return "qubit_up";
        case StateRole::QubitDown: return "qubit_down";
        case StateRole::Excited: return "excited";
        case StateRole::Shelf: return "shelf";
        case StateRole::RepumpReservoir: return "repump_reservoir";
        case StateRole::Leak: return "leak";
    }
    return "?";
}

std::string to_string(DriveChannel channel) {
    switch (channel) {
        case DriveChannel::Drive393: return "drive393";
        case DriveChannel::Drive850Sigma: return "drive850_sigma";
        case DriveChannel::Drive850Pi: return "drive850_pi";
        case DriveChannel::Spontaneous: return "spontaneous";
    }
    return "?";
}

int LevelScheme::index_of(StateRole role) const {
    int found = -1;
    for (int i = 0; i < state_count(); ++i) {
        if (roles[i] == role) {
            if (found >= 0)
                throw InvalidParameter("LevelScheme: role " + to_string(role) + " is not unique");
            found = i;
        }
    }
    if (found < 0) throw InvalidParameter("LevelScheme: missing role " + to_string(role));
    return found;
}

double LevelScheme::offres_suppression() const {
    const double delta = 2.0 * std::numbers::pi * offres_detuning_hz;
    const double x = 2.0 * delta / linewidth;
    return 1.0 / (1.0 + x * x);
}

void LevelScheme::validate() const {
    if (labels.empty()) throw InvalidParameter("LevelScheme: no states");
    if (labels.size() != roles.size())
        throw InvalidParameter("LevelScheme: labels/roles size mismatch");
    if (!(shelf_lifetime > 0.0)) throw InvalidParameter("LevelScheme: shelf lifetime must be > 0");
    if (!(linewidth > 0.0)) throw InvalidParameter("LevelScheme: linewidth must be > 0");
    index_of(StateRole::QubitUp);
    index_of(StateRole::QubitDown);
    index_of(StateRole::Shelf);
    for (const Transition& t : transitions) {
        if (t.from < 0 || t.from >= state_count() || t.to < 0 || t.to >= state_count())
            throw InvalidParameter("LevelScheme: transition endpoint out of range");
        if (t.from == t.to) throw InvalidParameter("LevelScheme: self-transition");
        if (!(t.base_rate >= 0.0)) throw InvalidParameter("LevelScheme: negative base rate");
    }
}

LevelScheme default_scheme() {
    LevelScheme s;
    s.labels = {"up", "down", "p_cycle", "p_offres", "shelf", "d_sigma", "d_pi", "leak"};
    s.roles = {StateRole::QubitUp,         StateRole::QubitDown, StateRole::Excited,
               StateRole::Excited,         StateRole::Shelf,     StateRole::RepumpReservoir,
               StateRole::RepumpReservoir, StateRole::Leak};
    enum { kUp = 0, kDown, kPCycle, kPOffres, kShelf, kDSigma, kDPi, kLeak };

    const double gamma = s.linewidth;
    const double branch_s = 1.0 - s.branch_shelf - s.branch_repump;
    // 393 absorption rate per unit intensity; calibrated so the |down> ->
    // shelf transfer time constant is 12 us at unit drive
    const double a393 = 1.37e6;
    // 850 repump absorption rate per unit intensity
    const double b850 = 1.0e6;
    const double repump_sigma_share = 0.75;  // D3/2 decays reachable with sigma light
    // pi light also couples the sigma-reachable reservoir to the detuned
    // excited state; this is what penalizes a strong continuous pi component
    const double pi_cross_coupling = 0.25 * b850;
    // S-manifold landing fractions out of the detuned excited state
    const double g_up = 0.35, g_down = 0.32, g_leak = 0.33;

    auto add = [&s](int from, int to, double rate, DriveChannel ch, bool offres = false) {
        s.transitions.push_back({from, to, rate, ch, offres});
    };

    add(kDown, kPCycle, a393, DriveChannel::Drive393);
    add(kPCycle, kDown, a393, DriveChannel::Drive393);  // stimulated
    add(kUp, kPOffres, a393, DriveChannel::Drive393, true);
    add(kPOffres, kUp, a393, DriveChannel::Drive393, true);

    add(kPCycle, kDown, gamma * branch_s, DriveChannel::Spontaneous);
    add(kPCycle, kShelf, gamma * s.branch_shelf, DriveChannel::Spontaneous);
    add(kPCycle, kDSigma, gamma * s.branch_repump * repump_sigma_share, DriveChannel::Spontaneous);
    add(kPCycle, kDPi, gamma * s.branch_repump * (1.0 - repump_sigma_share),
        DriveChannel::Spontaneous);

    add(kPOffres, kUp, gamma * branch_s * g_up, DriveChannel::Spontaneous);
    add(kPOffres, kDown, gamma * branch_s * g_down, DriveChannel::Spontaneous);
    add(kPOffres, kLeak, gamma * branch_s * g_leak, DriveChannel::Spontaneous);
    add(kPOffres, kShelf, gamma * s.branch_shelf, DriveChannel::Spontaneous);
    add(kPOffres, kDSigma, gamma * s.branch_repump, DriveChannel::Spontaneous);

    add(kDSigma, kPCycle, b850, DriveChannel::Drive850Sigma);
    add(kPCycle, kDSigma, b850, DriveChannel::Drive850Sigma);  // stimulated
    add(kDPi, kPCycle, b850, DriveChannel::Drive850Pi);
    add(kPCycle, kDPi, b850, DriveChannel::Drive850Pi);  // stimulated
    add(kDSigma, kPOffres, pi_cross_coupling, DriveChannel::Drive850Pi);
    add(kPOffres, kDSigma, pi_cross_coupling, DriveChannel::Drive850Pi);  // stimulated

    add(kShelf, kDown, 1.0 / s.shelf_lifetime, DriveChannel::Spontaneous);
    return s;
}

double PulseSchedule::total_duration() const {
    double t = 0.0;
    for (const PulseSegment& seg : segments) t += seg.duration;
    return t;
}

void PulseSchedule::validate() const {
    for (const PulseSegment& seg : segments) {
        if (!(seg.duration > 0.0)) throw InvalidParameter("PulseSchedule: duration must be > 0");
        if (seg.controls.drive393 < 0.0 || seg.controls.drive850_sigma < 0.0 ||
            seg.controls.drive850_pi < 0.0)
            throw InvalidParameter("PulseSchedule: negative control intensity");
    }
}

namespace {

// strips comments/blank lines, returns trimmed payload
bool next_payload(std::istream& in, std::string& out, long& line_no) {
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        out = line.substr(begin, end - begin + 1);
        return true;
    }
    return false;
}

double parse_double(const std::string& token, long line_no) {
    try {
        size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + token + "'", line_no);
    }
}

}  // namespace

LevelScheme parse_scheme(std::istream& in) {
    LevelScheme s;
    s.labels.clear();
    s.roles.clear();
    s.transitions.clear();

    std::string section;
    std::string payload;
    long line_no = 0;
    std::vector<std::array<std::string, 5>> transition_rows;

    while (next_payload(in, payload, line_no)) {
        if (payload.front() == '[') {
            if (payload.back() != ']') throw ParseError("malformed section header", line_no);
            section = payload.substr(1, payload.size() - 2);
            continue;
        }
        std::istringstream row(payload);
        if (section == "constants" || section == "drive") {
            std::string key, eq, value;
            row >> key >> eq >> value;
            if (eq != "=" || value.empty())
                throw ParseError("expected 'key = value' in [" + section + "]", line_no);
            const double v = parse_double(value, line_no);
            if (key == "shelf_lifetime_s") s.shelf_lifetime = v;
            else if (key == "linewidth_per_s") s.linewidth = v;
            else if (key == "offres_detuning_hz") s.offres_detuning_hz = v;
            else if (key == "branch_shelf") s.branch_shelf = v;
            else if (key == "branch_repump") s.branch_repump = v;
            else if (key == "continuous_sigma") s.drive.continuous_sigma = v;
            else if (key == "continuous_pi") s.drive.continuous_pi = v;
            else if (key == "pulsed_sigma") s.drive.pulsed_sigma = v;
            else if (key == "pulsed_pi") s.drive.pulsed_pi = v;
            else throw ParseError("unknown key '" + key + "' in [" + section + "]", line_no);
        } else if (section == "states") {
            std::string label, role;
            row >> label >> role;
            if (label.empty() || role.empty())
                throw ParseError("expected 'label role' in [states]", line_no);
            s.labels.push_back(label);
            s.roles.push_back(parse_state_role(role));
        } else if (section == "transitions") {
            std::array<std::string, 5> cols;
            row >> cols[0] >> cols[1] >> cols[2] >> cols[3];
            row >> cols[4];  // optional 'offres'
            if (cols[3].empty())
                throw ParseError("expected 'from to rate channel [offres]' in [transitions]",
                                 line_no);
            if (!cols[4].empty() && cols[4] != "offres")
                throw ParseError("unexpected trailing token '" + cols[4] + "'", line_no);
            transition_rows.push_back(cols);
        } else {
            throw ParseError("content outside a known section", line_no);
        }
    }

    auto state_index = [&s](const std::string& label) {
        for (int i = 0; i < s.state_count(); ++i)
            if (s.labels[i] == label) return i;
        throw ParseError("unknown state label '" + label + "'");
    };
    for (const auto& cols : transition_rows) {
        Transition t;
        t.from = state_index(cols[0]);
        t.to = state_index(cols[1]);
        t.base_rate = parse_double(cols[2], -1);
        t.channel = parse_drive_channel(cols[3]);
        t.off_resonant = cols[4] == "offres";
        s.transitions.push_back(t);
    }
    s.validate();
    return s;
}

LevelScheme load_scheme(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scheme file '" + path + "'");
    return parse_scheme(in);
}

PulseSchedule parse_schedule(std::istream& in) {
    PulseSchedule schedule;
    std::string payload;
    long line_no = 0;
    while (next_payload(in, payload, line_no)) {
        std::istringstream row(payload);
        std::string d, u, vs, vp;
        row >> d >> u >> vs >> vp;
        if (vp.empty())
            throw ParseError("expected 'duration_s drive393 drive850_sigma drive850_pi'", line_no);
        PulseSegment seg;
        seg.duration = parse_double(d, line_no);
        seg.controls.drive393 = parse_double(u, line_no);
        seg.controls.drive850_sigma = parse_double(vs, line_no);
        seg.controls.drive850_pi = parse_double(vp, line_no);
        schedule.segments.push_back(seg);
    }
    if (schedule.segments.empty()) throw ParseError("schedule file has no segments");
    schedule.validate();
    return schedule;
}

PulseSchedule load_schedule(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open schedule file '" + path + "'");
    return parse_schedule(in);
}

GeneratorMatrix build_generator(const LevelScheme& scheme, const Controls& controls) {
    scheme.validate();
    if (controls.drive393 < 0.0 || controls.drive850_sigma < 0.0 || controls.drive850_pi < 0.0)
        throw InvalidParameter("build_generator: negative control intensity");

    const double suppression = scheme.offres_suppression();
    const int n = scheme.state_count();
    GeneratorMatrix g;
    g.n = n;
    g.values.assign(static_cast<size_t>(n) * n, 0.0);

    for (const Transition& t : scheme.transitions) {
        double mult = 1.0;
        switch (t.channel) {
            case DriveChannel::Drive393: mult = controls.drive393; break;
            case DriveChannel::Drive850Sigma: mult = controls.drive850_sigma; break;
            case DriveChannel::Drive850Pi: mult = controls.drive850_pi; break;
            case DriveChannel::Spontaneous: mult = 1.0; break;
        }
        if (t.off_resonant) mult *= suppression;
        const double rate = t.base_rate * mult;
        if (rate == 0.0) continue;
        g.at(t.to, t.from) += rate;
    }
    for (int col = 0; col < n; ++col) {
        double out_flow = 0.0;
        for (int row = 0; row < n; ++row)
            if (row != col) out_flow += g.at(row, col);
        g.at(col, col) = -out_flow;
    }
    return g;
}

namespace {

Eigen::MatrixXd to_eigen(const GeneratorMatrix& g) {
    Eigen::MatrixXd m(g.n, g.n);
    for (int r = 0; r < g.n; ++r)
        for (int c = 0; c < g.n; ++c) m(r, c) = g.at(r, c);
    return m;
}

void check_stochastic(const GeneratorMatrix& g) {
    if (g.n < 1 || g.values.size() != static_cast<size_t>(g.n) * g.n)
        throw InvalidParameter("propagate: malformed generator");
    for (int col = 0; col < g.n; ++col) {
        double sum = 0.0;
        double scale = 0.0;
        for (int row = 0; row < g.n; ++row) {
            const double v = g.at(row, col);
            if (row != col && v < 0.0)
                throw InvalidParameter("propagate: negative off-diagonal generator entry");
            sum += v;
            scale = std::max(scale, std::fabs(v));
        }
        if (std::fabs(sum) > 1e-9 * std::max(1.0, scale))
            throw InvalidParameter("propagate: generator column sums must vanish");
    }
}

std::vector<double> finalize_populations(Eigen::VectorXd p) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] < -1e-6) throw InvalidParameter("propagate: population went negative");
        if (p[i] < 0.0) p[i] = 0.0;
        sum += p[i];
    }
    if (!(sum > 0.0)) throw InvalidParameter("propagate: population vanished");
    std::vector<double> out(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = p[i] / sum;
    return out;
}

}  // namespace

std::vector<double> propagate(const std::vector<double>& populations, const GeneratorMatrix& g,
                              double duration) {
    check_stochastic(g);
    if (static_cast<int>(populations.size()) != g.n)
        throw InvalidParameter("propagate: population size does not match the generator");
    if (!(duration >= 0.0)) throw InvalidParameter("propagate: negative duration");
    double sum = 0.0;
    for (double p : populations) {
        if (p < 0.0) throw InvalidParameter("propagate: negative input population");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw InvalidParameter("propagate: input populations must sum to 1");
    if (duration == 0.0) return populations;

    Eigen::VectorXd p(g.n);
    for (int i = 0; i < g.n; ++i) p[i] = populations[i];
    const Eigen::MatrixXd propagator = (to_eigen(g) * duration).exp();
    return finalize_populations(propagator * p);
}

ShelvingError shelving_error(const LevelScheme& scheme, const PulseSchedule& schedule) {
    scheme.validate();
    schedule.validate();
    const int n = scheme.state_count();
    const int up = scheme.index_of(StateRole::QubitUp);
    const int down = scheme.index_of(StateRole::QubitDown);
    const int shelf = scheme.index_of(StateRole::Shelf);

    std::vector<double> p_down(n, 0.0), p_up(n, 0.0);
    p_down[down] = 1.0;
    p_up[up] = 1.0;
    for (const PulseSegment& seg : schedule.segments) {
        const GeneratorMatrix g = build_generator(scheme, seg.controls);
        p_down = propagate(p_down, g, seg.duration);
        p_up = propagate(p_up, g, seg.duration);
    }

    ShelvingError err;
    err.eps_down = 1.0 - p_down[shelf];
    err.eps_up = p_up[shelf];
    err.eps_total = 0.5 * (err.eps_up + err.eps_down);
    return err;
}

namespace {

struct PulsedLayout {
    double d393 = 0.0, d_sigma = 0.0, d_pi = 0.0, drive393 = 0.0;
    int cycles = 1;
};

// Repeated (393, 850 sigma, 850 pi) unit scaled so an integer number of
// cycles exactly fills t_T.
PulsedLayout pulsed_layout(double d1, double d2, double d3, double u, double total_time) {
    PulsedLayout lay;
    const double unit = d1 + d2 + d3;
    lay.cycles = std::max(1, static_cast<int>(std::floor(total_time / unit)));
    const double scale = total_time / (lay.cycles * unit);
    lay.d393 = d1 * scale;
    lay.d_sigma = d2 * scale;
    lay.d_pi = d3 * scale;
    lay.drive393 = u;
    return lay;
}

PulseSchedule pulsed_schedule(const LevelScheme& scheme, const PulsedLayout& lay) {
    PulseSchedule schedule;
    schedule.segments.reserve(3 * lay.cycles);
    PulseSegment seg393{lay.d393, {lay.drive393, 0.0, 0.0}};
    PulseSegment seg_sigma{lay.d_sigma, {0.0, scheme.drive.pulsed_sigma, 0.0}};
    PulseSegment seg_pi{lay.d_pi, {0.0, 0.0, scheme.drive.pulsed_pi}};
    for (int c = 0; c < lay.cycles; ++c) {
        schedule.segments.push_back(seg393);
        schedule.segments.push_back(seg_sigma);
        schedule.segments.push_back(seg_pi);
    }
    return schedule;
}

class PulsedObjective {
  public:
    PulsedObjective(const LevelScheme& scheme, double total_time)
        : scheme_(&scheme), total_time_(total_time), n_(scheme.state_count()),
          up_(scheme.index_of(StateRole::QubitUp)),
          down_(scheme.index_of(StateRole::QubitDown)),
          shelf_(scheme.index_of(StateRole::Shelf)) {
        g_sigma_ = to_eigen(build_generator(scheme, {0.0, scheme.drive.pulsed_sigma, 0.0}));
        g_pi_ = to_eigen(build_generator(scheme, {0.0, 0.0, scheme.drive.pulsed_pi}));
    }

    // x = (ln d1, ln d2, ln d3, ln u)
    double operator()(const std::vector<double>& x) const {
        return error(layout(x)).eps_total;
    }

    PulsedLayout layout(const std::vector<double>& x) const {
        return pulsed_layout(std::exp(x[0]), std::exp(x[1]), std::exp(x[2]), std::exp(x[3]),
                             total_time_);
    }

    ShelvingError error(const PulsedLayout& lay) const {
        const Eigen::MatrixXd g393 =
            to_eigen(build_generator(*scheme_, {lay.drive393, 0.0, 0.0}));
        Eigen::MatrixXd cycle = (g_pi_ * lay.d_pi).exp() * (g_sigma_ * lay.d_sigma).exp() *
                                (g393 * lay.d393).exp();
        // cycle^cycles by binary powering
        Eigen::MatrixXd full = Eigen::MatrixXd::Identity(n_, n_);
        Eigen::MatrixXd base = std::move(cycle);
        int k = lay.cycles;
        while (k > 0) {
            if (k & 1) full = full * base;
            k >>= 1;
            if (k > 0) base = base * base;
        }
        const auto p_down = finalize_populations(full.col(down_));
        const auto p_up = finalize_populations(full.col(up_));
        ShelvingError err;
        err.eps_down = 1.0 - p_down[shelf_];
        err.eps_up = p_up[shelf_];
        err.eps_total = 0.5 * (err.eps_up + err.eps_down);
        return err;
    }

  private:
    const LevelScheme* scheme_;
    double total_time_;
    int n_, up_, down_, shelf_;
    Eigen::MatrixXd g_sigma_, g_pi_;
};

struct GoldenResult {
    double x = 0.0;
    double f = 0.0;
    bool converged = false;
};

GoldenResult golden_section(const std::function<double(double)>& f, double lo, double hi,
                            double tol, int max_iterations) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    GoldenResult result;
    int it = 0;
    for (; it < max_iterations && (b - a) > tol; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    result.converged = (b - a) <= tol;
    if (f1 <= f2) {
        result.x = x1;
        result.f = f1;
    } else {
        result.x = x2;
        result.f = f2;
    }
    return result;
}

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
};

// Nelder-Mead with standard coefficients; deterministic.
SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                          const std::vector<double>& start, double step, double tol,
                          int max_iterations) {
    const size_t dim = start.size();
    std::vector<std::vector<double>> xs(dim + 1, start);
    for (size_t i = 0; i < dim; ++i) xs[i + 1][i] += step;
    std::vector<double> fs(dim + 1);
    for (size_t i = 0; i <= dim; ++i) fs[i] = f(xs[i]);

    auto order = [&] {
        std::vector<size_t> idx(dim + 1);
        for (size_t i = 0; i <= dim; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return fs[a] < fs[b]; });
        std::vector<std::vector<double>> nxs(dim + 1);
        std::vector<double> nfs(dim + 1);
        for (size_t i = 0; i <= dim; ++i) {
            nxs[i] = xs[idx[i]];
            nfs[i] = fs[idx[i]];
        }
        xs = std::move(nxs);
        fs = std::move(nfs);
    };

    SimplexResult result;
    int it = 0;
    for (; it < max_iterations; ++it) {
        order();
        double spread = 0.0;
        for (size_t i = 0; i < dim; ++i)
            spread = std::max(spread, std::fabs(xs[dim][i] - xs[0][i]));
        if (spread < tol) {
            result.converged = true;
            break;
        }
        std::vector<double> centroid(dim, 0.0);
        for (size_t i = 0; i < dim; ++i) {
            for (size_t k = 0; k < dim; ++k) centroid[k] += xs[i][k];
        }
        for (size_t k = 0; k < dim; ++k) centroid[k] /= static_cast<double>(dim);

        auto blend = [&](double coeff) {
            std::vector<double> x(dim);
            for (size_t k = 0; k < dim; ++k)
                x[k] = centroid[k] + coeff * (xs[dim][k] - centroid[k]);
            return x;
        };

        const std::vector<double> xr = blend(-1.0);
        const double fr = f(xr);
        if (fr < fs[0]) {
            const std::vector<double> xe = blend(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                xs[dim] = xe;
                fs[dim] = fe;
            } else {
                xs[dim] = xr;
                fs[dim] = fr;
            }
        } else if (fr < fs[dim - 1]) {
            xs[dim] = xr;
            fs[dim] = fr;
        } else {
            const bool outside = fr < fs[dim];
            const std::vector<double> xc = blend(outside ? -0.5 : 0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fs[dim])) {
                xs[dim] = xc;
                fs[dim] = fc;
            } else {
                for (size_t i = 1; i <= dim; ++i) {
                    for (size_t k = 0; k < dim; ++k) xs[i][k] = 0.5 * (xs[i][k] + xs[0][k]);
                    fs[i] = f(xs[i]);
                }
            }
        }
    }
    order();
    result.x = xs[0];
    result.f = fs[0];
    return result;
}

}  // namespace

ShelvingOptimum optimize_shelving(const LevelScheme& scheme, double total_time, ShelvingMode mode,
                                  const ShelvingOptimizeOptions& options) {
    scheme.validate();
    if (!(total_time > 0.0)) throw InvalidParameter("optimize_shelving: total time must be > 0");

    ShelvingOptimum best;
    if (mode == ShelvingMode::Continuous) {
        auto objective = [&](double log_u) {
            PulseSchedule sched;
            sched.segments.push_back(
                {total_time,
                 {std::exp(log_u), scheme.drive.continuous_sigma, scheme.drive.continuous_pi}});
            return shelving_error(scheme, sched).eps_total;
        };
        const double lo = std::log(1e-4), hi = std::log(1e5);
        double best_x = lo;
        double best_f = objective(lo);
        const int points = std::max(5, options.coarse_points);
        for (int i = 1; i < points; ++i) {
            const double x = lo + (hi - lo) * i / (points - 1);
            const double fx = objective(x);
            if (fx < best_f) {
                best_f = fx;
                best_x = x;
            }
        }
        const double span = (hi - lo) / (points - 1);
        const GoldenResult refined =
            golden_section(objective, best_x - span, best_x + span, options.tolerance,
                           options.max_iterations);
        const double u = std::exp(refined.f <= best_f ? refined.x : best_x);
        best.drive393 = u;
        best.schedule.segments.push_back(
            {total_time, {u, scheme.drive.continuous_sigma, scheme.drive.continuous_pi}});
        best.error = shelving_error(scheme, best.schedule);
        best.converged = refined.converged;
        best.cycles = 1;
        return best;
    }

    // pulsed: simplex over (ln d1, ln d2, ln d3, ln u), deterministic restarts
    const PulsedObjective objective(scheme, total_time);
    SimplexResult winner;
    bool have = false;
    const std::vector<std::vector<double>> starts = [&] {
        std::vector<std::vector<double>> out;
        const double base1 = std::log(total_time / 8.0);
        const double base2 = std::log(total_time / 40.0);
        out.push_back({base1, base2, base2, 0.0});
        out.push_back({base1 - 1.5, base2 + 1.0, base2 + 1.0, 1.5});
        out.push_back({base1 + 1.0, base2 - 1.0, base2 - 1.0, -1.5});
        out.resize(std::min<size_t>(out.size(), std::max(1, options.restarts)));
        return out;
    }();
    for (const auto& start : starts) {
        SimplexResult r = nelder_mead(objective, start, 0.8, options.tolerance,
                                      options.max_iterations);
        if (!have || r.f < winner.f) {
            winner = std::move(r);
            have = true;
        }
    }
    // golden-section fallback along each coordinate if the simplex stalled
    if (!winner.converged) {
        for (size_t k = 0; k < winner.x.size(); ++k) {
            std::vector<double> x = winner.x;
            const GoldenResult g = golden_section(
                [&](double v) {
                    x[k] = v;
                    return objective(x);
                },
                winner.x[k] - 1.0, winner.x[k] + 1.0, options.tolerance, options.max_iterations);
            if (g.f < winner.f) {
                winner.x[k] = g.x;
                winner.f = g.f;
            }
        }
    }

    const PulsedLayout lay = objective.layout(winner.x);
    best.schedule = pulsed_schedule(scheme, lay);
    best.error = shelving_error(scheme, best.schedule);
    best.drive393 = lay.drive393;
    best.cycles = lay.cycles;
    best.converged = winner.converged;
    return best;
}

std::vector<SweepRecord> sweep_shelving(const LevelScheme& scheme,
                                        const std::vector<double>& total_times,
                                        const std::vector<ShelvingMode>& modes,
                                        const ShelvingOptimizeOptions& options) {
    if (total_times.empty() || modes.empty())
        throw InvalidParameter("sweep_shelving: empty grid");
    std::vector<double> grid = total_times;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<SweepRecord> records;
    records.reserve(grid.size() * modes.size());
    for (ShelvingMode mode : modes) {
        for (double t_T : grid) {
            const ShelvingOptimum opt = optimize_shelving(scheme, t_T, mode, options);
            SweepRecord rec;
            rec.x_name = "t_T";
            rec.x_value = t_T;
            rec.method = mode == ShelvingMode::Continuous ? "continuous" : "pulsed";
            ErrorStats& s = rec.stats;
            s.eps = opt.error.eps_total;
            s.eps_bright = opt.error.eps_up;
            s.eps_dark = opt.error.eps_down;
            s.eps_68 = s.eps_95 = {s.eps, s.eps};
            s.eps_bright_68 = s.eps_bright_95 = {s.eps_bright, s.eps_bright};
            s.eps_dark_68 = s.eps_dark_95 = {s.eps_dark, s.eps_dark};
            s.mean_ta = s.mean_ta_bright = s.mean_ta_dark = t_T;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace ionread
