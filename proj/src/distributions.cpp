#include "ionread/distributions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ionread/errors.hpp"

namespace ionread {

namespace {

constexpr double kEmpiricalTailFloor = 1e-300;

double poisson_log_prob(double mean, int n) {
    if (mean <= 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return n * std::log(mean) - mean - std::lgamma(n + 1.0);
}

}  // namespace

double CountPmf::mean() const {
    double m = 0.0;
    for (size_t n = 1; n < probs.size(); ++n) m += n * probs[n];
    return m;
}

double CountPmf::variance() const {
    const double m = mean();
    double v = 0.0;
    for (size_t n = 0; n < probs.size(); ++n) {
        const double d = n - m;
        v += d * d * probs[n];
    }
    return v;
}

double CountPmf::prob(int n) const {
    if (n < 0) return 0.0;
    if (n <= n_max()) return probs[n];
    if (poisson_tail_mean > 0.0) return std::exp(poisson_log_prob(poisson_tail_mean, n));
    return kEmpiricalTailFloor;
}

double CountPmf::log_prob(int n) const {
    if (n < 0) return -std::numeric_limits<double>::infinity();
    if (n <= n_max()) {
        const double p = probs[n];
        if (p > 0.0) return std::log(p);
        // in-support zero: fall through to the same extension rule
    }
    if (poisson_tail_mean > 0.0) return poisson_log_prob(poisson_tail_mean, n);
    return std::log(kEmpiricalTailFloor);
}

double CountPmf::cdf(int n) const {
    if (n < 0) return 0.0;
    double c = 0.0;
    const int top = std::min(n, n_max());
    for (int k = 0; k <= top; ++k) c += probs[k];
    return c;
}

int CountPmf::quantile(double q) const {
    double c = 0.0;
    for (int k = 0; k <= n_max(); ++k) {
        c += probs[k];
        if (c >= q) return k;
    }
    return n_max();
}

void CountPmf::validate(double tol) const {
    if (probs.empty()) throw InvalidParameter("CountPmf: empty support");
    double sum = 0.0;
    for (size_t n = 0; n < probs.size(); ++n) {
        if (!(probs[n] >= 0.0))
            throw InvalidParameter("CountPmf: negative entry at count " + std::to_string(n));
        sum += probs[n];
    }
    if (std::fabs(sum - 1.0) > tol)
        throw InvalidParameter("CountPmf: mass " + std::to_string(sum) + " not 1 within tolerance");
}

std::vector<std::string> ReadoutParams::validate() const {
    if (!(bright_rate > dark_rate))
        throw InvalidParameter("ReadoutParams: bright_rate must exceed dark_rate");
    if (!(dark_rate >= 0.0)) throw InvalidParameter("ReadoutParams: dark_rate must be >= 0");
    if (!(shelf_lifetime > 0.0)) throw InvalidParameter("ReadoutParams: shelf_lifetime must be > 0");
    if (!(sub_bin_duration > 0.0))
        throw InvalidParameter("ReadoutParams: sub_bin_duration must be > 0");
    if (sub_bin_count < 1) throw InvalidParameter("ReadoutParams: sub_bin_count must be >= 1");
    if (dark_count_pmf) dark_count_pmf->validate();
    const double t_b = bin_time();
    if (!(t_b < shelf_lifetime))
        throw InvalidParameter("ReadoutParams: bin time must be below the shelf lifetime");
    std::vector<std::string> warnings;
    if (t_b > shelf_lifetime / 10.0) {
        std::ostringstream os;
        os << "bin time " << t_b << " s is above tau/10 = " << shelf_lifetime / 10.0
           << " s; the decay-linearized likelihood degrades here";
        warnings.push_back(os.str());
    }
    return warnings;
}

int pmf_support_rule(double mean) {
    const double top = mean + 10.0 * std::sqrt(mean);
    return std::max(50, static_cast<int>(std::ceil(top)));
}

CountPmf poisson_pmf(double mean, int n_max) {
    if (!(mean >= 0.0)) throw InvalidParameter("poisson_pmf: mean must be >= 0");
    if (n_max < 0) throw InvalidParameter("poisson_pmf: n_max must be >= 1 when given");
    const int top = std::max(n_max, pmf_support_rule(mean));

    CountPmf pmf;
    pmf.probs.assign(top + 1, 0.0);
    pmf.poisson_tail_mean = mean;
    if (mean == 0.0) {
        pmf.probs[0] = 1.0;
        return pmf;
    }
    if (mean < 600.0) {
        // recurrence from p0; exact to double rounding for means that keep
        // exp(-mean) in normal range
        double p = std::exp(-mean);
        pmf.probs[0] = p;
        for (int k = 1; k <= top; ++k) {
            p *= mean / k;
            pmf.probs[k] = p;
        }
    } else {
        for (int k = 0; k <= top; ++k) pmf.probs[k] = std::exp(poisson_log_prob(mean, k));
    }
    return pmf;
}

CountPmf convolve(const CountPmf& a, const CountPmf& b) {
    a.validate(1e-6);
    b.validate(1e-6);
    CountPmf out;
    out.probs.assign(a.probs.size() + b.probs.size() - 1, 0.0);
    // iterate the shorter operand on the outside
    const CountPmf& u = a.probs.size() <= b.probs.size() ? a : b;
    const CountPmf& v = a.probs.size() <= b.probs.size() ? b : a;
    for (size_t i = 0; i < u.probs.size(); ++i) {
        const double ui = u.probs[i];
        if (ui == 0.0) continue;
        for (size_t j = 0; j < v.probs.size(); ++j) out.probs[i + j] += ui * v.probs[j];
    }
    out.poisson_tail_mean = a.poisson_tail_mean + b.poisson_tail_mean;
    return out;
}

CountPmf convolve_power(const CountPmf& pmf, int n) {
    if (n < 0) throw InvalidParameter("convolve_power: negative power");
    CountPmf unit;
    unit.probs = {1.0};
    if (n == 0) return unit;
    CountPmf base = pmf;
    CountPmf acc = unit;
    bool acc_set = false;
    int k = n;
    while (k > 0) {
        if (k & 1) {
            acc = acc_set ? convolve(acc, base) : base;
            acc_set = true;
        }
        k >>= 1;
        if (k > 0) base = convolve(base, base);
    }
    return acc;
}

CountPmf load_empirical_pmf(std::istream& in) {
    std::vector<uint64_t> hist;
    uint64_t total = 0;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        size_t end = line.find_last_not_of(" \t\r");
        const std::string token = line.substr(begin, end - begin + 1);
        if (token.find_first_not_of("0123456789") != std::string::npos) {
            if (token[0] == '-') throw ParseError("negative count '" + token + "'", line_no);
            throw ParseError("expected a non-negative integer, got '" + token + "'", line_no);
        }
        unsigned long long value = 0;
        try {
            value = std::stoull(token);
        } catch (const std::exception&) {
            throw ParseError("count '" + token + "' out of range", line_no);
        }
        if (value >= hist.size()) hist.resize(value + 1, 0);
        ++hist[value];
        ++total;
    }
    if (total == 0) throw ParseError("no count records found");

    CountPmf pmf;
    pmf.probs.assign(hist.size(), 0.0);
    for (size_t n = 0; n < hist.size(); ++n)
        pmf.probs[n] = static_cast<double>(hist[n]) / static_cast<double>(total);
    const int top = pmf_support_rule(pmf.mean());
    if (pmf.n_max() < top) pmf.probs.resize(top + 1, 0.0);
    return pmf;
}

CountPmf load_empirical_pmf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open histogram file '" + path + "'");
    return load_empirical_pmf(in);
}

namespace {

// Poisson rate attributed to the ion + scattered light in the dark state.
// With an empirical detector PMF in play, its mean is already part of R_D
// and has to come out of the Poisson component.
double dark_poisson_rate(const ReadoutParams& params) {
    if (!params.dark_count_pmf) return params.dark_rate;
    const double detector_rate = params.dark_count_pmf->mean() / params.sub_bin_duration;
    return std::max(0.0, params.dark_rate - detector_rate);
}

}  // namespace

std::pair<CountPmf, CountPmf> sub_bin_models(const ReadoutParams& params) {
    params.validate();
    CountPmf bright = poisson_pmf(params.bright_rate * params.sub_bin_duration);
    CountPmf dark = poisson_pmf(dark_poisson_rate(params) * params.sub_bin_duration);
    if (params.dark_count_pmf) {
        bright = convolve(bright, *params.dark_count_pmf);
        dark = convolve(dark, *params.dark_count_pmf);
    }
    return {std::move(bright), std::move(dark)};
}

CountPmf bright_sum_pmf(const ReadoutParams& params, int N) {
    params.validate();
    if (N < 1 || N > params.sub_bin_count)
        throw InvalidParameter("bright_sum_pmf: N out of range");
    CountPmf sum = poisson_pmf(N * params.bright_rate * params.sub_bin_duration);
    if (params.dark_count_pmf) sum = convolve(sum, convolve_power(*params.dark_count_pmf, N));
    return sum;
}

CountPmf dark_sum_pmf_with_decay(const ReadoutParams& params, int N, int nodes_per_sub_bin) {
    params.validate();
    if (N < 1 || N > params.sub_bin_count)
        throw InvalidParameter("dark_sum_pmf_with_decay: N out of range");
    if (nodes_per_sub_bin < 1)
        throw InvalidParameter("dark_sum_pmf_with_decay: need at least one node per sub-bin");

    const double t_s = params.sub_bin_duration;
    const double t_b = N * t_s;
    const double tau = params.shelf_lifetime;
    const double rate_d = dark_poisson_rate(params);
    const double rate_b = params.bright_rate;

    const double max_mean = std::max(rate_b * t_b, rate_d * t_b);
    const int top = pmf_support_rule(max_mean);

    CountPmf mix;
    mix.probs.assign(top + 1, 0.0);
    mix.poisson_tail_mean = rate_b * t_b;  // tail dominated by early decays

    // survives the whole bin
    {
        const CountPmf survive = poisson_pmf(rate_d * t_b, top);
        const double w = 1.0 - t_b / tau;
        for (int k = 0; k <= top; ++k) mix.probs[k] += w * survive.probs[k];
    }

    // decays at t_d in (0, t_b): composite midpoint over decay time
    const int nodes = nodes_per_sub_bin * N;
    const double dt = t_b / nodes;
    for (int i = 0; i < nodes; ++i) {
        const double t_d = (i + 0.5) * dt;
        const double lam = rate_d * t_d + rate_b * (t_b - t_d);
        const CountPmf comp = poisson_pmf(lam, top);
        const double w = dt / tau;
        for (int k = 0; k <= top; ++k) mix.probs[k] += w * comp.probs[k];
    }

    if (params.dark_count_pmf) {
        mix = convolve(mix, convolve_power(*params.dark_count_pmf, N));
        mix.poisson_tail_mean = rate_b * t_b;
    }
    return mix;
}

}  // namespace ionread
