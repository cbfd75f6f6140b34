#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddrmpc/common.hpp"
#include "ddrmpc/random.hpp"

namespace ddrmpc {

/// Indicator sequence: 1 = attacked (packet lost), 0 = delivered.
using Indicators = std::vector<std::uint8_t>;

/// Slack for comparing integer counts against real-valued bounds.
inline constexpr double kCountTol = 1e-9;

struct AttackParams {
    double kappa_f = 0.0; ///< chatter bound, frequency
    double nu_f = 2.0;    ///< average dwell time
    double kappa_d = 0.0; ///< chatter bound, duration
    double nu_d = 1.0;    ///< average duration ratio

    double resilience_margin() const { return 1.0 / nu_f + 1.0 / nu_d; }

    void validate() const
    {
        if (!(kappa_f >= 0.0) || !std::isfinite(kappa_f)) throw PreconditionError("AttackParams: kappa_f must be >= 0");
        if (!(kappa_d >= 0.0) || !std::isfinite(kappa_d)) throw PreconditionError("AttackParams: kappa_d must be >= 0");
        if (!(nu_f >= 2.0)) throw PreconditionError("AttackParams: nu_f must be >= 2");
        if (!(nu_d >= 1.0)) throw PreconditionError("AttackParams: nu_d must be >= 1");
    }

    /// Parameters with 1/nu_f + 1/nu_d = ratio, nu_f = 4 and kappa_f = 1.
    static AttackParams from_ratio(double ratio, double kappa_d = 3.0)
    {
        if (!(ratio > 0.25 && ratio <= 1.25))
            throw PreconditionError("AttackParams::from_ratio: ratio must lie in (0.25, 1.25]");
        AttackParams p;
        p.kappa_f = 1.0;
        p.nu_f = 4.0;
        p.kappa_d = kappa_d;
        p.nu_d = 1.0 / (ratio - 0.25);
        p.validate();
        return p;
    }
};

struct DosSchedule {
    Indicators indicators;
    AttackParams params;
    std::optional<std::uint64_t> seed; ///< empty for the adversarial generator

    std::size_t size() const { return indicators.size(); }
    bool attacked(std::size_t t) const { return indicators.at(t) != 0; }

    double attack_ratio() const
    {
        if (indicators.empty()) return 0.0;
        std::size_t n = 0;
        for (auto l : indicators) n += l;
        return static_cast<double>(n) / static_cast<double>(indicators.size());
    }
};

namespace detail {

inline void check_range(const Indicators& ind, long t1, long t2, const char* who)
{
    if (t1 < 0 || t1 > t2 || t2 > static_cast<long>(ind.size()))
        throw PreconditionError(std::string(who) + ": interval [" + std::to_string(t1) + ", " + std::to_string(t2) +
                                ") outside [0, " + std::to_string(ind.size()) + "]");
}

inline bool onset(const Indicators& ind, std::size_t i)
{
    return ind[i] != 0 && (i == 0 || ind[i - 1] == 0);
}

} // namespace detail

/// Number of attacked steps in [t1, t2).
inline long duration_count(const Indicators& ind, long t1, long t2)
{
    detail::check_range(ind, t1, t2, "duration_count");
    long n = 0;
    for (long i = t1; i < t2; ++i) n += ind[static_cast<std::size_t>(i)] != 0;
    return n;
}

/// Number of off-to-on transitions in [t1, t2); the step before t = 0 counts as not attacked.
inline long frequency_count(const Indicators& ind, long t1, long t2)
{
    detail::check_range(ind, t1, t2, "frequency_count");
    long n = 0;
    for (long i = t1; i < t2; ++i) n += detail::onset(ind, static_cast<std::size_t>(i));
    return n;
}

inline long duration_count(const DosSchedule& s, long t1, long t2) { return duration_count(s.indicators, t1, t2); }
inline long frequency_count(const DosSchedule& s, long t1, long t2) { return frequency_count(s.indicators, t1, t2); }

struct ScheduleCheck {
    bool passed = true;
    long t1 = 0, t2 = 0;   ///< tightest violating interval (valid when !passed)
    std::string bound;     ///< "frequency" or "duration"
    double excess = 0.0;   ///< count minus bound on that interval

    explicit operator bool() const { return passed; }
};

namespace detail {

/// Prefix sums of onsets and attacked steps.
struct Counts {
    std::vector<long> onsets{0}, attacked{0};

    explicit Counts(const Indicators& ind)
    {
        for (std::size_t i = 0; i < ind.size(); ++i) push(ind, i);
    }

    void push(const Indicators& ind, std::size_t i)
    {
        onsets.push_back(onsets.back() + onset(ind, i));
        attacked.push_back(attacked.back() + (ind[i] != 0));
    }

    void pop()
    {
        onsets.pop_back();
        attacked.pop_back();
    }
};

/// Checks every interval [t1, t2) with t1 < t2, updating the worst violation.
inline void check_intervals_ending(const Counts& c, const AttackParams& p, long t2, ScheduleCheck& worst)
{
    for (long t1 = 0; t1 < t2; ++t1) {
        const double len = static_cast<double>(t2 - t1);
        const double ef = static_cast<double>(c.onsets[t2] - c.onsets[t1]) - (p.kappa_f + len / p.nu_f);
        const double ed = static_cast<double>(c.attacked[t2] - c.attacked[t1]) - (p.kappa_d + len / p.nu_d);
        if (ef > kCountTol && (worst.passed || ef > worst.excess)) worst = {false, t1, t2, "frequency", ef};
        if (ed > kCountTol && (worst.passed || ed > worst.excess)) worst = {false, t1, t2, "duration", ed};
    }
}

inline bool extension_valid(const Counts& c, const AttackParams& p, long t2)
{
    ScheduleCheck r;
    check_intervals_ending(c, p, t2, r);
    return r.passed;
}

} // namespace detail

/// Brute force over all intervals of the frequency and duration constraints.
inline ScheduleCheck validate_schedule(const Indicators& ind, const AttackParams& params)
{
    const detail::Counts c(ind);
    ScheduleCheck worst;
    for (long t2 = 1; t2 <= static_cast<long>(ind.size()); ++t2) detail::check_intervals_ending(c, params, t2, worst);
    return worst;
}

inline ScheduleCheck validate_schedule(const DosSchedule& s) { return validate_schedule(s.indicators, s.params); }

/// Guaranteed spacing between successful transmissions.
inline double inter_success_bound(const AttackParams& p)
{
    p.validate();
    const double slack = 1.0 - 1.0 / p.nu_d - 1.0 / p.nu_f;
    if (!(slack > 0.0))
        throw ResilienceError("inter_success_bound: 1/nu_f + 1/nu_d = " + std::to_string(p.resilience_margin()) +
                              " >= 1");
    return (p.kappa_d + p.kappa_f) / slack + 1.0;
}

/// Steps with l_t = 0.
inline std::vector<long> success_instants(const Indicators& ind)
{
    std::vector<long> s;
    for (std::size_t t = 0; t < ind.size(); ++t)
        if (ind[t] == 0) s.push_back(static_cast<long>(t));
    return s;
}

/// Largest spacing between consecutive successes, with a virtual success at t = -1 and
/// the end of the horizon closing the last gap.
inline long max_success_gap(const Indicators& ind)
{
    long last = -1, gap = 0;
    for (long t = 0; t < static_cast<long>(ind.size()); ++t)
        if (ind[static_cast<std::size_t>(t)] == 0) {
            gap = std::max(gap, t - last);
            last = t;
        }
    if (last < static_cast<long>(ind.size()) - 1) gap = std::max(gap, static_cast<long>(ind.size()) - last);
    return gap;
}

struct RandomAttackSettings {
    double onset_probability = 0.5; ///< chance of proposing a burst at an idle step
    double mean_burst = 0.0;        ///< mean proposed burst length; 0 picks kappa_d / (1 - 1/nu_d)
};

/// Random bursts, each step kept only while every interval ending there stays admissible.
inline DosSchedule generate_random(const AttackParams& params, long T_sim, std::uint64_t seed,
                                   const RandomAttackSettings& settings = {})
{
    params.validate();
    if (T_sim < 0) throw PreconditionError("generate_random: T_sim must be >= 0");
    double mean = settings.mean_burst;
    if (!(mean > 0.0)) mean = 1.0 / params.nu_d < 1.0 ? params.kappa_d / (1.0 - 1.0 / params.nu_d) : params.kappa_d;
    mean = std::max(mean, 1.0);

    Rng rng(seed);
    DosSchedule s;
    s.params = params;
    s.seed = seed;
    detail::Counts c(s.indicators);
    int burst_left = 0;
    for (long t = 0; t < T_sim; ++t) {
        if (burst_left == 0 && rng.bernoulli(settings.onset_probability)) burst_left = rng.geometric(1.0 / mean);
        std::uint8_t l = 0;
        if (burst_left > 0) {
            s.indicators.push_back(1);
            c.push(s.indicators, static_cast<std::size_t>(t));
            if (detail::extension_valid(c, params, t + 1)) {
                l = 1;
                --burst_left;
            } else {
                burst_left = 0;
            }
            c.pop();
            s.indicators.pop_back();
        }
        s.indicators.push_back(l);
        c.push(s.indicators, static_cast<std::size_t>(t));
    }
    return s;
}

/// Attacks at every step whose inclusion keeps the schedule admissible.
inline DosSchedule generate_worst_case(const AttackParams& params, long T_sim)
{
    params.validate();
    if (T_sim < 0) throw PreconditionError("generate_worst_case: T_sim must be >= 0");
    DosSchedule s;
    s.params = params;
    detail::Counts c(s.indicators);
    for (long t = 0; t < T_sim; ++t) {
        s.indicators.push_back(1);
        c.push(s.indicators, static_cast<std::size_t>(t));
        if (!detail::extension_valid(c, params, t + 1)) {
            c.pop();
            s.indicators.back() = 0;
            c.push(s.indicators, static_cast<std::size_t>(t));
        }
    }
    return s;
}

inline DosSchedule no_attacks(long T_sim, const AttackParams& params = {})
{
    DosSchedule s;
    s.indicators.assign(static_cast<std::size_t>(std::max(T_sim, 0L)), 0);
    s.params = params;
    return s;
}

/// Compact text form, one character per step.
inline std::string to_text(const Indicators& ind)
{
    std::string out;
    out.reserve(ind.size());
    for (auto l : ind) out.push_back(l ? '1' : '0');
    return out;
}

inline Indicators from_text(const std::string& text)
{
    Indicators ind;
    for (char ch : text) {
        if (ch == '0' || ch == '1') ind.push_back(static_cast<std::uint8_t>(ch - '0'));
        else if (ch != '\n' && ch != '\r' && ch != ' ')
            throw ConfigError(std::string("schedule text: unexpected character '") + ch + "'");
    }
    return ind;
}

} // namespace ddrmpc
