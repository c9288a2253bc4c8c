// Core particle system: two equal populations of red and blue particles on
// either the complete graph K_{2n} with a loop at every vertex, or the
// complete bipartite graph K_{n,n}. One particle moves per time step; a
// red mover is selected with probability p, otherwise a blue one. Landing
// on a vertex that holds the opposite colour annihilates one such pair.
//
// Every step is O(1): dense particle->vertex arrays give uniform particle
// sampling, and per-vertex id buckets give constant-time removal of an
// annihilation victim, both with swap-remove deletion.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "arw/rng.hpp"

namespace arw {

enum class Color : std::uint8_t { Red = 0, Blue = 1 };

inline Color opposite(Color c) { return c == Color::Red ? Color::Blue : Color::Red; }

enum class Topology : std::uint8_t {
    CompleteWithLoops,  // K_{2n}, each move uniform over all 2n vertices
    Bipartite,          // K_{n,n}, each move uniform over the n opposite vertices
};

// ---------------------------------------------------------------------------
// Initial configurations

struct PaperDefaultInit {};  // one particle per vertex, colors shuffled, n of each

struct DisjointSitesInit {
    // n particles of each color; reds on n-A distinct sites (extras spread
    // uniformly at random), blues on n distinct sites, red/blue sites disjoint.
    std::int64_t stacked_reds = 0;  // A = n - R_0
};

struct ClusteredRedInit {
    // All n reds on a single vertex, blues on n distinct other vertices.
    std::optional<std::int32_t> vertex;  // fixed cluster site; random if unset
};

struct ExplicitInit {
    struct Site {
        std::int32_t vertex = 0;
        Color color = Color::Red;
        std::int32_t count = 0;
    };
    std::vector<Site> sites;
};

using InitSpec = std::variant<PaperDefaultInit, DisjointSitesInit, ClusteredRedInit, ExplicitInit>;

inline std::string init_variant_name(const InitSpec& init) {
    struct Visitor {
        std::string operator()(const PaperDefaultInit&) const { return "default"; }
        std::string operator()(const DisjointSitesInit& d) const {
            return "disjoint:" + std::to_string(d.stacked_reds);
        }
        std::string operator()(const ClusteredRedInit&) const { return "clustered"; }
        std::string operator()(const ExplicitInit&) const { return "explicit"; }
    };
    return std::visit(Visitor{}, init);
}

struct SimParams {
    std::int64_t n = 1;          // particles per color
    double p = 0.5;              // red selection probability, 0 < p <= 1/2
    Topology topology = Topology::CompleteWithLoops;
    InitSpec init = PaperDefaultInit{};
    std::uint64_t seed = 0;

    double q() const { return 1.0 - p; }

    void validate() const {
        if (n < 1) throw std::invalid_argument("SimParams: n must be >= 1");
        if (!(p > 0.0 && p <= 0.5))
            throw std::invalid_argument("SimParams: p must lie in (0, 1/2]");
    }
};

// ---------------------------------------------------------------------------
// Step events

struct StepEvent {
    std::int64_t step_index = 0;  // t before the step; the step produces state t+1
    Color mover = Color::Red;
    std::int32_t source = 0;
    std::int32_t target = 0;
    bool collided = false;
    bool bad_move = false;  // red moved onto a distinct red-occupied site
    // Occupied-site counts: before the move, after the move but before
    // collision resolution, and after resolution.
    std::int64_t r_pre = 0, r_star = 0, r_post = 0;
    std::int64_t b_pre = 0, b_star = 0, b_post = 0;
};

// ---------------------------------------------------------------------------
// Configuration

class Configuration {
public:
    Configuration(std::int64_t n, Topology topology)
        : n_(n), topology_(topology), vertex_count_(2 * n) {
        for (auto& side : colors_) {
            side.count.assign(static_cast<std::size_t>(vertex_count_), 0);
            side.bucket.assign(static_cast<std::size_t>(vertex_count_), {});
        }
    }

    std::int64_t n() const { return n_; }
    Topology topology() const { return topology_; }
    std::int64_t num_vertices() const { return vertex_count_; }
    std::int64_t particles_per_color() const { return m_; }
    std::int64_t time() const { return t_; }
    std::int64_t occupied_sites(Color c) const { return side(c).occupied; }
    std::int32_t count_at(Color c, std::int32_t v) const {
        return side(c).count[static_cast<std::size_t>(v)];
    }
    std::int64_t initial_stacked_reds() const { return stacked_reds_; }  // A = n - R_0

    // Place one particle; used by initialisation only (t must be 0).
    void add_particle(Color c, std::int32_t v) {
        auto& cs = side(c);
        auto& bucket = cs.bucket[static_cast<std::size_t>(v)];
        cs.pos.push_back(v);
        bucket.push_back(static_cast<std::int32_t>(cs.pos.size()) - 1);
        cs.slot.push_back(static_cast<std::int32_t>(bucket.size()) - 1);
        if (++cs.count[static_cast<std::size_t>(v)] == 1) ++cs.occupied;
    }

    void finish_init() {
        m_ = static_cast<std::int64_t>(side(Color::Red).pos.size());
        stacked_reds_ = n_ - occupied_sites(Color::Red);
    }

    template <class Rng>
    StepEvent step(const SimParams& params, Rng& rng) {
        if (m_ < 1) throw std::logic_error("step: process already extinct");

        StepEvent ev;
        ev.step_index = t_;
        ev.mover = rng.bernoulli(params.p) ? Color::Red : Color::Blue;
        ev.r_pre = occupied_sites(Color::Red);
        ev.b_pre = occupied_sites(Color::Blue);

        auto& cs = side(ev.mover);
        const auto particle = static_cast<std::int32_t>(
            rng.uniform_below(static_cast<std::uint64_t>(m_)));
        ev.source = cs.pos[static_cast<std::size_t>(particle)];
        ev.target = pick_target(ev.source, rng);

        if (ev.target == ev.source) {
            // Loop step: nothing changes.
            ev.r_star = ev.r_pre;
            ev.b_star = ev.b_pre;
            ev.r_post = ev.r_pre;
            ev.b_post = ev.b_pre;
            ++t_;
            return ev;
        }

        ev.bad_move = (ev.mover == Color::Red) &&
                      side(Color::Red).count[static_cast<std::size_t>(ev.target)] > 0;

        move_particle(ev.mover, particle, ev.source, ev.target);
        ev.r_star = occupied_sites(Color::Red);
        ev.b_star = occupied_sites(Color::Blue);

        const Color opp = opposite(ev.mover);
        auto& os = side(opp);
        if (os.count[static_cast<std::size_t>(ev.target)] > 0) {
            ev.collided = true;
            // Same-site opposite particles are exchangeable; remove any one.
            const std::int32_t victim = os.bucket[static_cast<std::size_t>(ev.target)].back();
            remove_particle(opp, victim);
            remove_particle(ev.mover, particle);
            --m_;
        }
        ev.r_post = occupied_sites(Color::Red);
        ev.b_post = occupied_sites(Color::Blue);
        ++t_;
        return ev;
    }

    // Full O(n + M) consistency audit; used by tests and debug runs.
    void check_consistency() const {
        for (int ci = 0; ci < 2; ++ci) {
            const auto& cs = colors_[ci];
            if (static_cast<std::int64_t>(cs.pos.size()) != m_)
                throw std::logic_error("configuration: particle array size mismatch");
            std::vector<std::int32_t> recount(static_cast<std::size_t>(vertex_count_), 0);
            for (std::size_t i = 0; i < cs.pos.size(); ++i) {
                const auto v = static_cast<std::size_t>(cs.pos[i]);
                ++recount[v];
                if (cs.bucket[v][static_cast<std::size_t>(cs.slot[i])] !=
                    static_cast<std::int32_t>(i))
                    throw std::logic_error("configuration: bucket slot mismatch");
            }
            std::int64_t occ = 0;
            for (std::int64_t v = 0; v < vertex_count_; ++v) {
                if (recount[static_cast<std::size_t>(v)] != cs.count[static_cast<std::size_t>(v)])
                    throw std::logic_error("configuration: per-vertex count mismatch");
                if (cs.count[static_cast<std::size_t>(v)] > 0) ++occ;
            }
            if (occ != cs.occupied)
                throw std::logic_error("configuration: occupied-site count mismatch");
        }
        for (std::int64_t v = 0; v < vertex_count_; ++v) {
            if (colors_[0].count[static_cast<std::size_t>(v)] > 0 &&
                colors_[1].count[static_cast<std::size_t>(v)] > 0)
                throw std::logic_error("configuration: mixed-color site");
        }
    }

private:
    struct ColorState {
        std::vector<std::int32_t> pos;                 // particle -> vertex
        std::vector<std::int32_t> slot;                // particle -> index in bucket
        std::vector<std::vector<std::int32_t>> bucket; // vertex -> particle ids
        std::vector<std::int32_t> count;               // vertex -> particle count
        std::int64_t occupied = 0;
    };

    ColorState& side(Color c) { return colors_[static_cast<int>(c)]; }
    const ColorState& side(Color c) const { return colors_[static_cast<int>(c)]; }

    template <class Rng>
    std::int32_t pick_target(std::int32_t source, Rng& rng) {
        if (topology_ == Topology::CompleteWithLoops)
            return static_cast<std::int32_t>(
                rng.uniform_below(static_cast<std::uint64_t>(vertex_count_)));
        const auto r = static_cast<std::int32_t>(
            rng.uniform_below(static_cast<std::uint64_t>(n_)));
        return source < n_ ? static_cast<std::int32_t>(n_) + r : r;
    }

    void detach_from_bucket(ColorState& cs, std::int32_t particle, std::int32_t v) {
        auto& bucket = cs.bucket[static_cast<std::size_t>(v)];
        const auto at = static_cast<std::size_t>(cs.slot[static_cast<std::size_t>(particle)]);
        const std::int32_t moved = bucket.back();
        bucket[at] = moved;
        cs.slot[static_cast<std::size_t>(moved)] = static_cast<std::int32_t>(at);
        bucket.pop_back();
        if (--cs.count[static_cast<std::size_t>(v)] == 0) --cs.occupied;
    }

    void move_particle(Color c, std::int32_t particle, std::int32_t from, std::int32_t to) {
        auto& cs = side(c);
        detach_from_bucket(cs, particle, from);
        auto& bucket = cs.bucket[static_cast<std::size_t>(to)];
        bucket.push_back(particle);
        cs.slot[static_cast<std::size_t>(particle)] = static_cast<std::int32_t>(bucket.size()) - 1;
        cs.pos[static_cast<std::size_t>(particle)] = to;
        if (++cs.count[static_cast<std::size_t>(to)] == 1) ++cs.occupied;
    }

    void remove_particle(Color c, std::int32_t particle) {
        auto& cs = side(c);
        detach_from_bucket(cs, particle, cs.pos[static_cast<std::size_t>(particle)]);
        const auto last = static_cast<std::int32_t>(cs.pos.size()) - 1;
        if (particle != last) {
            // Rename the last particle id to fill the vacated slot.
            const std::int32_t v = cs.pos[static_cast<std::size_t>(last)];
            const std::int32_t bslot = cs.slot[static_cast<std::size_t>(last)];
            cs.pos[static_cast<std::size_t>(particle)] = v;
            cs.slot[static_cast<std::size_t>(particle)] = bslot;
            cs.bucket[static_cast<std::size_t>(v)][static_cast<std::size_t>(bslot)] = particle;
        }
        cs.pos.pop_back();
        cs.slot.pop_back();
    }

    std::int64_t n_;
    Topology topology_;
    std::int64_t vertex_count_;
    std::int64_t m_ = 0;
    std::int64_t t_ = 0;
    std::int64_t stacked_reds_ = 0;
    ColorState colors_[2];
};

// ---------------------------------------------------------------------------
// Initialisation

namespace detail {

template <class Rng>
std::vector<std::int32_t> sample_distinct(std::int64_t population, std::int64_t want,
                                          const std::vector<bool>& excluded, Rng& rng) {
    std::vector<std::int32_t> pool;
    pool.reserve(static_cast<std::size_t>(population));
    for (std::int64_t v = 0; v < population; ++v)
        if (!excluded[static_cast<std::size_t>(v)]) pool.push_back(static_cast<std::int32_t>(v));
    if (static_cast<std::int64_t>(pool.size()) < want)
        throw std::invalid_argument("init: not enough free vertices");
    // Partial Fisher-Yates.
    for (std::int64_t i = 0; i < want; ++i) {
        const auto j = i + static_cast<std::int64_t>(
            rng.uniform_below(static_cast<std::uint64_t>(pool.size() - static_cast<std::size_t>(i))));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(want));
    return pool;
}

}  // namespace detail

template <class Rng>
Configuration init_configuration(const SimParams& params, Rng& rng) {
    params.validate();
    const std::int64_t n = params.n;
    const std::int64_t vertices = 2 * n;
    Configuration cfg(n, params.topology);

    struct Visitor {
        Configuration& cfg;
        const SimParams& params;
        Rng& rng;

        void operator()(const PaperDefaultInit&) {
            const std::int64_t vertices = 2 * params.n;
            std::vector<Color> colors(static_cast<std::size_t>(vertices));
            for (std::int64_t v = 0; v < vertices; ++v)
                colors[static_cast<std::size_t>(v)] = v < params.n ? Color::Red : Color::Blue;
            for (std::int64_t i = vertices - 1; i > 0; --i) {
                const auto j = static_cast<std::int64_t>(
                    rng.uniform_below(static_cast<std::uint64_t>(i + 1)));
                std::swap(colors[static_cast<std::size_t>(i)], colors[static_cast<std::size_t>(j)]);
            }
            for (std::int64_t v = 0; v < vertices; ++v)
                cfg.add_particle(colors[static_cast<std::size_t>(v)], static_cast<std::int32_t>(v));
        }

        void operator()(const DisjointSitesInit& spec) {
            const std::int64_t n = params.n;
            const std::int64_t vertices = 2 * n;
            if (spec.stacked_reds < 0 || spec.stacked_reds > n - 1)
                throw std::invalid_argument("init: stacked reds must lie in [0, n-1]");
            const std::int64_t red_sites = n - spec.stacked_reds;
            std::vector<bool> used(static_cast<std::size_t>(vertices), false);
            const auto reds = detail::sample_distinct(vertices, red_sites, used, rng);
            for (auto v : reds) used[static_cast<std::size_t>(v)] = true;
            const auto blues = detail::sample_distinct(vertices, n, used, rng);
            for (auto v : reds) cfg.add_particle(Color::Red, v);
            // Extras land uniformly on the already-chosen red sites.
            for (std::int64_t i = 0; i < spec.stacked_reds; ++i)
                cfg.add_particle(Color::Red, reds[static_cast<std::size_t>(
                    rng.uniform_below(static_cast<std::uint64_t>(reds.size())))]);
            for (auto v : blues) cfg.add_particle(Color::Blue, v);
        }

        void operator()(const ClusteredRedInit& spec) {
            const std::int64_t n = params.n;
            const std::int64_t vertices = 2 * n;
            std::int32_t hub = spec.vertex.value_or(static_cast<std::int32_t>(
                rng.uniform_below(static_cast<std::uint64_t>(vertices))));
            if (hub < 0 || hub >= vertices)
                throw std::invalid_argument("init: cluster vertex out of range");
            for (std::int64_t i = 0; i < n; ++i) cfg.add_particle(Color::Red, hub);
            std::vector<bool> used(static_cast<std::size_t>(vertices), false);
            used[static_cast<std::size_t>(hub)] = true;
            for (auto v : detail::sample_distinct(vertices, n, used, rng))
                cfg.add_particle(Color::Blue, v);
        }

        void operator()(const ExplicitInit& spec) {
            const std::int64_t vertices = 2 * params.n;
            std::vector<std::int32_t> reds(static_cast<std::size_t>(vertices), 0);
            std::vector<std::int32_t> blues(static_cast<std::size_t>(vertices), 0);
            for (const auto& site : spec.sites) {
                if (site.vertex < 0 || site.vertex >= vertices)
                    throw std::invalid_argument(
                        "init: vertex " + std::to_string(site.vertex) + " out of range");
                if (site.count < 0) throw std::invalid_argument("init: negative site count");
                (site.color == Color::Red ? reds : blues)[static_cast<std::size_t>(site.vertex)] +=
                    site.count;
            }
            std::int64_t red_total = 0, blue_total = 0;
            for (std::int64_t v = 0; v < vertices; ++v) {
                const auto idx = static_cast<std::size_t>(v);
                if (reds[idx] > 0 && blues[idx] > 0)
                    throw std::invalid_argument(
                        "init: vertex " + std::to_string(v) + " holds both colors");
                red_total += reds[idx];
                blue_total += blues[idx];
            }
            if (red_total != params.n || blue_total != params.n)
                throw std::invalid_argument("init: totals must be n particles of each color");
            for (std::int64_t v = 0; v < vertices; ++v) {
                const auto idx = static_cast<std::size_t>(v);
                for (std::int32_t i = 0; i < reds[idx]; ++i)
                    cfg.add_particle(Color::Red, static_cast<std::int32_t>(v));
                for (std::int32_t i = 0; i < blues[idx]; ++i)
                    cfg.add_particle(Color::Blue, static_cast<std::int32_t>(v));
            }
        }
    };

    (void)vertices;
    std::visit(Visitor{cfg, params, rng}, params.init);
    cfg.finish_init();
    return cfg;
}

// ---------------------------------------------------------------------------
// Driving loop

struct RunOptions {
    std::int64_t max_steps = -1;  // < 0: default hard cap of 10 n^2
};

struct RunOutcome {
    std::int64_t extinction_time = 0;  // steps executed (T when not truncated)
    bool truncated = false;
};

struct NullMonitor {
    void on_start(const Configuration&, const SimParams&) {}
    void on_step(const StepEvent&, const Configuration&) {}
    void on_finish(const Configuration&, bool) {}
};

// Runs until extinction or the step budget; every event reaches every
// monitor, in argument order, before the next step executes.
template <class Rng, class... Monitors>
RunOutcome run_to_extinction(const SimParams& params, Rng& rng, RunOptions options,
                             Monitors&... monitors) {
    Configuration cfg = init_configuration(params, rng);
    const std::int64_t cap =
        options.max_steps >= 0 ? options.max_steps : 10 * params.n * params.n;
    (monitors.on_start(cfg, params), ...);
    while (cfg.particles_per_color() > 0 && cfg.time() < cap) {
        const StepEvent ev = cfg.step(params, rng);
        (monitors.on_step(ev, cfg), ...);
    }
    RunOutcome out;
    out.extinction_time = cfg.time();
    out.truncated = cfg.particles_per_color() > 0;
    (monitors.on_finish(cfg, out.truncated), ...);
    return out;
}

}  // namespace arw
