// Step observers implementing the analysis bookkeeping: the spread
// classifier f(m) = max(6m/n, 1/w(n)) with its good/intermediate/bad
// partition, the red level process with its threshold stack, the stopping
// time tau, the four-part decomposition of the extinction time, and the
// conditional-transition bias audit.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arw/process.hpp"

namespace arw {

// ---------------------------------------------------------------------------
// Spread classifier

struct WFunction {
    double exponent = 1.0 / 3.0;  // admissible range (0, 1/2)

    double value(std::int64_t n) const {
        return std::pow(std::log(static_cast<double>(n)), exponent);
    }
};

inline double spread_threshold(std::int64_t m, std::int64_t n, const WFunction& w) {
    if (m < 1 || m > n) throw std::invalid_argument("spread_threshold: need 1 <= m <= n");
    return std::max(6.0 * static_cast<double>(m) / static_cast<double>(n), 1.0 / w.value(n));
}

enum class GoodnessState : std::uint8_t { Good, Intermediate, Bad };

inline const char* to_string(GoodnessState s) {
    switch (s) {
        case GoodnessState::Good: return "good";
        case GoodnessState::Intermediate: return "intermediate";
        default: return "bad";
    }
}

// Precomputed per-run context so the per-step classification is a pair of
// integer comparisons plus one float comparison. The 6m/n branch of f is
// rational, so its thresholds are evaluated exactly in 64-bit integers.
class GoodnessContext {
public:
    GoodnessContext() = default;
    GoodnessContext(std::int64_t n, WFunction w)
        : n_(n), inv_w_(1.0 / w.value(n)), w_(w) {}

    std::int64_t n() const { return n_; }
    const WFunction& w() const { return w_; }

    GoodnessState classify(std::int64_t count, std::int64_t m) const {
        if (m < 1) throw std::invalid_argument("classify: need M >= 1");
        if (count < 0 || count > m) throw std::invalid_argument("classify: need 0 <= count <= M");
        if (count == 0) return GoodnessState::Bad;
        // good  <=>  count * (1 + f(m)) >= m,  f(m) = max(6m/n, 1/w)
        if (count * (n_ + 6 * m) >= m * n_) return GoodnessState::Good;
        if (static_cast<double>(count) * (1.0 + inv_w_) >= static_cast<double>(m))
            return GoodnessState::Good;
        // bad  <=>  count * (1 + 2 f(m)) < m
        if (count * (n_ + 12 * m) < m * n_ &&
            static_cast<double>(count) * (1.0 + 2.0 * inv_w_) < static_cast<double>(m))
            return GoodnessState::Bad;
        return GoodnessState::Intermediate;
    }

private:
    std::int64_t n_ = 1;
    double inv_w_ = 1.0;
    WFunction w_;
};

inline GoodnessState classify(std::int64_t count, std::int64_t m, std::int64_t n,
                              const WFunction& w) {
    return GoodnessContext(n, w).classify(count, m);
}

// ---------------------------------------------------------------------------
// Red level process

class LevelTracker {
public:
    void start(std::int64_t r0, std::int64_t n, bool red_good) {
        thresholds_.clear();
        genesis_time_ = -1;
        last_post_good_ = red_good;
        if (red_good) return;
        // Start at level n - R_0 with threshold n - i for level i.
        const std::int64_t start_level = n - r0;
        thresholds_.reserve(static_cast<std::size_t>(start_level));
        for (std::int64_t i = 0; i < start_level; ++i) thresholds_.push_back(n - i);
    }

    // Applies one resolved step. Level increments exactly when a collision
    // dropped the red site count while red was not good at the pre-step
    // state; the pre-step R becomes the return threshold. Reaching the top
    // threshold pops (a while-loop, though unit moves pop at most once).
    // Returns true when the level increased.
    bool apply(std::int64_t r_pre, std::int64_t r_post, bool collided, bool red_good_pre) {
        bool increased = false;
        if (collided && r_post < r_pre && !red_good_pre) {
            thresholds_.push_back(r_pre);
            increased = true;
        }
        while (!thresholds_.empty() && r_post >= thresholds_.back()) thresholds_.pop_back();
        return increased;
    }

    // Whenever red becomes good the level drops to 0 and the stack clears.
    void note_post_state(bool red_good_post, std::int64_t t) {
        if (red_good_post) {
            thresholds_.clear();
        } else if (last_post_good_) {
            genesis_time_ = t;
        }
        last_post_good_ = red_good_post;
    }

    std::int64_t level() const { return static_cast<std::int64_t>(thresholds_.size()); }
    const std::vector<std::int64_t>& thresholds() const { return thresholds_; }
    std::int64_t genesis_time() const { return genesis_time_; }

private:
    std::vector<std::int64_t> thresholds_;  // back() is the active return threshold
    bool last_post_good_ = true;
    std::int64_t genesis_time_ = -1;  // last time red ceased being good
};

// ---------------------------------------------------------------------------
// Stopping time and decomposition

enum class TauOutcome : std::uint8_t {
    NotReached,
    Success,          // (i)  M reached floor(ln^2 n) with no failure
    FailBlueBad,      // (ii) blue became bad after first being good
    FailRedBadAt0,    // (iii) red became bad while at level 0
    FailStepLimit,    // (iv) t reached 3 n^2
};

inline const char* to_string(TauOutcome o) {
    switch (o) {
        case TauOutcome::NotReached: return "not_reached";
        case TauOutcome::Success: return "success";
        case TauOutcome::FailBlueBad: return "failure_ii";
        case TauOutcome::FailRedBadAt0: return "failure_iii";
        default: return "failure_iv";
    }
}

inline bool is_failure(TauOutcome o) {
    return o == TauOutcome::FailBlueBad || o == TauOutcome::FailRedBadAt0 ||
           o == TauOutcome::FailStepLimit;
}

struct TimeDecomposition {
    std::int64_t t_blue = 0;  // steps before blue first becomes good
    std::int64_t t_red = 0;   // steps with red above level 0
    std::int64_t t_late = 0;  // steps at or after tau with red at level 0
    std::int64_t t_ok = 0;    // steps before tau with neither color bad
    std::int64_t tau_time = -1;
    TauOutcome tau_outcome = TauOutcome::NotReached;
    bool reliable = true;  // false on truncated traces

    std::int64_t bound() const { return t_blue + t_red + t_late + t_ok; }
};

struct SeriesPoint {
    std::int64_t t = 0, m = 0, r = 0, b = 0, level = 0;
};

struct TraceStats {
    std::int64_t extinction_time = 0;  // T
    TimeDecomposition decomposition;
    std::int64_t collisions = 0;       // C
    std::int64_t bad_moves = 0;        // Xi
    std::int64_t stacked_reds = 0;     // A = n - R_0
    std::optional<std::int64_t> reds_at_first_level_up;  // L
    bool truncated = false;
    std::int64_t level_increases = 0;
    std::int64_t red_moves = 0;
    std::vector<SeriesPoint> series;   // decimated; empty unless requested

    bool operator==(const TraceStats& other) const {
        return extinction_time == other.extinction_time &&
               decomposition.t_blue == other.decomposition.t_blue &&
               decomposition.t_red == other.decomposition.t_red &&
               decomposition.t_late == other.decomposition.t_late &&
               decomposition.t_ok == other.decomposition.t_ok &&
               decomposition.tau_time == other.decomposition.tau_time &&
               decomposition.tau_outcome == other.decomposition.tau_outcome &&
               collisions == other.collisions && bad_moves == other.bad_moves &&
               stacked_reds == other.stacked_reds &&
               reds_at_first_level_up == other.reds_at_first_level_up &&
               truncated == other.truncated && level_increases == other.level_increases &&
               red_moves == other.red_moves;
    }
};

// T <= T_blue + T_red + T_late + T_ok must hold on every completed trace.
inline bool decomposition_consistent(const TraceStats& s) {
    return s.truncated || s.extinction_time <= s.decomposition.bound();
}

inline std::int64_t success_particle_count(std::int64_t n) {
    const double ln = std::log(static_cast<double>(n));
    return static_cast<std::int64_t>(std::floor(ln * ln));
}

// ---------------------------------------------------------------------------
// The main per-trial observer

class InstrumentMonitor {
public:
    explicit InstrumentMonitor(WFunction w = {}, std::int64_t decimate = 0)
        : w_(w), decimate_(decimate) {}

    void on_start(const Configuration& cfg, const SimParams& params) {
        ctx_ = GoodnessContext(params.n, w_);
        n_ = params.n;
        target_m_ = success_particle_count(n_);
        step_limit_ = 3 * n_ * n_;
        m_ = cfg.particles_per_color();
        r_ = cfg.occupied_sites(Color::Red);
        b_ = cfg.occupied_sites(Color::Blue);
        t_ = 0;
        stats_ = TraceStats{};
        stats_.stacked_reds = cfg.initial_stacked_reds();
        red_state_ = ctx_.classify(r_, m_);
        blue_state_ = ctx_.classify(b_, m_);
        blue_first_good_ = blue_state_ == GoodnessState::Good ? 0 : -1;
        level_.start(r_, n_, red_state_ == GoodnessState::Good);
        if (level_.level() > 0) {
            stats_.reds_at_first_level_up = m_;
            stats_.level_increases += level_.level();
        }
        blue_genesis_time_ = -1;
        blue_was_good_ = blue_state_ == GoodnessState::Good;
        tau_fired_ = false;
        check_tau();
        if (decimate_ > 0) record_point();
    }

    void on_step(const StepEvent& ev, const Configuration& cfg) {
        // Bucket the step by the pre-step state.
        if (blue_first_good_ < 0) ++stats_.decomposition.t_blue;
        if (level_.level() > 0)
            ++stats_.decomposition.t_red;
        else if (tau_fired_)
            ++stats_.decomposition.t_late;
        if (!tau_fired_ && red_state_ != GoodnessState::Bad &&
            blue_state_ != GoodnessState::Bad)
            ++stats_.decomposition.t_ok;

        stats_.collisions += ev.collided ? 1 : 0;
        stats_.bad_moves += ev.bad_move ? 1 : 0;
        stats_.red_moves += ev.mover == Color::Red ? 1 : 0;

        const bool red_good_pre = red_state_ == GoodnessState::Good;
        if (level_.apply(ev.r_pre, ev.r_post, ev.collided, red_good_pre)) {
            ++stats_.level_increases;
            if (!stats_.reds_at_first_level_up)
                stats_.reds_at_first_level_up = cfg.particles_per_color();
        }

        m_ = cfg.particles_per_color();
        r_ = ev.r_post;
        b_ = ev.b_post;
        ++t_;
        if (m_ > 0) {
            red_state_ = ctx_.classify(r_, m_);
            blue_state_ = ctx_.classify(b_, m_);
            level_.note_post_state(red_state_ == GoodnessState::Good, t_);
            const bool blue_good = blue_state_ == GoodnessState::Good;
            if (blue_first_good_ < 0 && blue_good) blue_first_good_ = t_;
            if (blue_was_good_ && !blue_good) blue_genesis_time_ = t_;
            blue_was_good_ = blue_good;
        }
        check_tau();
        if (decimate_ > 0 && (t_ % decimate_ == 0 || m_ == 0)) record_point();
    }

    void on_finish(const Configuration& cfg, bool truncated) {
        stats_.extinction_time = t_;
        stats_.truncated = truncated;
        stats_.decomposition.reliable = !truncated;
        if (!truncated) {
            assert(stats_.collisions == n_);
            assert(decomposition_consistent(stats_));
        }
        (void)cfg;
    }

    const TraceStats& stats() const { return stats_; }
    std::int64_t blue_first_good_time() const { return blue_first_good_; }
    std::int64_t blue_genesis_time() const { return blue_genesis_time_; }
    const LevelTracker& level() const { return level_; }
    GoodnessState red_state() const { return red_state_; }
    GoodnessState blue_state() const { return blue_state_; }

private:
    void check_tau() {
        if (tau_fired_) return;
        const bool cond_i = m_ == target_m_;
        const bool cond_ii = m_ > 0 && blue_state_ == GoodnessState::Bad && blue_first_good_ >= 0;
        const bool cond_iii =
            m_ > 0 && red_state_ == GoodnessState::Bad && level_.level() == 0;
        const bool cond_iv = t_ == step_limit_;
        if (!(cond_i || cond_ii || cond_iii || cond_iv)) return;
        tau_fired_ = true;
        stats_.decomposition.tau_time = t_;
        if (cond_ii)
            stats_.decomposition.tau_outcome = TauOutcome::FailBlueBad;
        else if (cond_iii)
            stats_.decomposition.tau_outcome = TauOutcome::FailRedBadAt0;
        else if (cond_iv)
            stats_.decomposition.tau_outcome = TauOutcome::FailStepLimit;
        else
            stats_.decomposition.tau_outcome = TauOutcome::Success;
    }

    void record_point() {
        stats_.series.push_back({t_, m_, r_, b_, level_.level()});
    }

    WFunction w_;
    std::int64_t decimate_ = 0;
    GoodnessContext ctx_;
    std::int64_t n_ = 1, target_m_ = 0, step_limit_ = 0;
    std::int64_t m_ = 0, r_ = 0, b_ = 0, t_ = 0;
    GoodnessState red_state_ = GoodnessState::Good;
    GoodnessState blue_state_ = GoodnessState::Good;
    std::int64_t blue_first_good_ = -1;
    std::int64_t blue_genesis_time_ = -1;
    bool blue_was_good_ = false;
    LevelTracker level_;
    bool tau_fired_ = false;
    TraceStats stats_;
};

// ---------------------------------------------------------------------------
// Conditional-transition bias audit
//
// Over steps whose pre-step state falls in a stratum, compares empirical
// one-step frequencies against the state-dependent analytic bounds:
//   P(B up)   >= q (M-B)/M * (2n-B-R)/(2n)
//   P(B down) <= q B/M * (B+R)/(2n) + p B/(2n)
//   P(R* up)  >= p (M-R)/M * (2n-R)/(2n)
//   P(R* down)<= p R/M * (R-1)/(2n)
//   up/down ratio >= 2 when the color is not good, and
//   P(collision) >= M / (2n (1 + 2 f(M))) when neither color is bad.
// Each margin accumulates X = indicator - bound (or up - 2*down), whose
// per-state conditional mean is nonnegative, so mean(X) >= -3 stderr is the
// pass condition regardless of how states are visited.

struct MarginAccumulator {
    std::int64_t samples = 0;
    double sum = 0.0, sum_sq = 0.0;

    void add(double x) {
        ++samples;
        sum += x;
        sum_sq += x * x;
    }
    double mean() const { return samples > 0 ? sum / static_cast<double>(samples) : 0.0; }
    double stderr_mean() const {
        if (samples < 2) return 0.0;
        const double ns = static_cast<double>(samples);
        const double var = std::max(0.0, (sum_sq - sum * sum / ns) / (ns - 1.0));
        return std::sqrt(var / ns);
    }
    // Conclusive pass at 3 sigma; inconclusive strata are reported, never extrapolated.
    bool conclusive(std::int64_t min_samples) const { return samples >= min_samples; }
    bool passes() const { return mean() >= -3.0 * stderr_mean(); }
};

struct StratumAudit {
    std::int64_t samples = 0;
    std::int64_t b_up = 0, b_down = 0, rstar_up = 0, rstar_down = 0, collisions = 0;
    MarginAccumulator b_up_margin;       // 1{B up} - lower bound
    MarginAccumulator b_down_margin;     // upper bound - 1{B down}
    MarginAccumulator rstar_up_margin;   // 1{R* up} - lower bound
    MarginAccumulator rstar_down_margin; // upper bound - 1{R* down}
    MarginAccumulator b_ratio_margin;    // 1{B up} - 2 * 1{B down}
    MarginAccumulator rstar_ratio_margin;
    MarginAccumulator collision_margin;  // 1{collision} - M/(2n(1+2f(M)))
};

struct BiasAuditReport {
    StratumAudit blue_not_good;
    StratumAudit red_not_good;
    StratumAudit neither_bad;
    std::int64_t min_samples = 100;
};

class BiasAuditMonitor {
public:
    explicit BiasAuditMonitor(WFunction w = {}) : w_(w) {}

    void on_start(const Configuration& cfg, const SimParams& params) {
        if (params.topology != Topology::CompleteWithLoops)
            throw std::invalid_argument("bias audit: bounds assume the complete topology");
        ctx_ = GoodnessContext(params.n, w_);
        n_ = params.n;
        p_ = params.p;
        inv_w_ = 1.0 / w_.value(params.n);
        m_ = cfg.particles_per_color();
        r_ = cfg.occupied_sites(Color::Red);
        b_ = cfg.occupied_sites(Color::Blue);
    }

    void on_step(const StepEvent& ev, const Configuration& cfg) {
        const double m = static_cast<double>(m_);
        const double r = static_cast<double>(r_);
        const double b = static_cast<double>(b_);
        const double two_n = 2.0 * static_cast<double>(n_);
        const double q = 1.0 - p_;

        const GoodnessState red_state = ctx_.classify(r_, m_);
        const GoodnessState blue_state = ctx_.classify(b_, m_);

        const double b_up = ev.b_post > ev.b_pre ? 1.0 : 0.0;
        const double b_down = ev.b_post < ev.b_pre ? 1.0 : 0.0;
        const double r_up = ev.r_star > ev.r_pre ? 1.0 : 0.0;
        const double r_down = ev.r_star < ev.r_pre ? 1.0 : 0.0;

        const double b_up_bound = q * (m - b) / m * (two_n - b - r) / two_n;
        const double b_down_bound = q * b / m * (b + r) / two_n + p_ * b / two_n;
        const double r_up_bound = p_ * (m - r) / m * (two_n - r) / two_n;
        const double r_down_bound = p_ * r / m * (r - 1.0) / two_n;

        auto fill = [&](StratumAudit& s) {
            ++s.samples;
            s.b_up += ev.b_post > ev.b_pre;
            s.b_down += ev.b_post < ev.b_pre;
            s.rstar_up += ev.r_star > ev.r_pre;
            s.rstar_down += ev.r_star < ev.r_pre;
            s.collisions += ev.collided;
            s.b_up_margin.add(b_up - b_up_bound);
            s.b_down_margin.add(b_down_bound - b_down);
            s.rstar_up_margin.add(r_up - r_up_bound);
            s.rstar_down_margin.add(r_down_bound - r_down);
            s.b_ratio_margin.add(b_up - 2.0 * b_down);
            s.rstar_ratio_margin.add(r_up - 2.0 * r_down);
            const double f = std::max(6.0 * m / static_cast<double>(n_), inv_w_);
            s.collision_margin.add((ev.collided ? 1.0 : 0.0) - m / (two_n * (1.0 + 2.0 * f)));
        };

        if (blue_state != GoodnessState::Good) fill(report_.blue_not_good);
        if (red_state != GoodnessState::Good) fill(report_.red_not_good);
        if (blue_state != GoodnessState::Bad && red_state != GoodnessState::Bad)
            fill(report_.neither_bad);

        m_ = cfg.particles_per_color();
        r_ = ev.r_post;
        b_ = ev.b_post;
    }

    void on_finish(const Configuration&, bool) {}

    const BiasAuditReport& report() const { return report_; }

private:
    WFunction w_;
    GoodnessContext ctx_;
    std::int64_t n_ = 1;
    double p_ = 0.5;
    double inv_w_ = 1.0;
    std::int64_t m_ = 0, r_ = 0, b_ = 0;
    BiasAuditReport report_;
};

// ---------------------------------------------------------------------------
// Convenience wrapper: one fully instrumented trial.

inline TraceStats run_trial(const SimParams& params, std::uint64_t stream_seed,
                            RunOptions options = {}, WFunction w = {},
                            std::int64_t decimate = 0) {
    Xoshiro256pp rng(stream_seed);
    InstrumentMonitor monitor(w, decimate);
    run_to_extinction(params, rng, options, monitor);
    return monitor.stats();
}

}  // namespace arw
