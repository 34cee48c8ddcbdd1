#pragma once

#include <algorithm>
#include <numeric>
#include <tuple>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltd/core.hpp"
#include "ltd/probe_engine.hpp"
#include "ltd/random.hpp"

namespace ltd::netsim {

enum class limiter_mode_t { shared, per_interface };

inline std::string_view to_string(limiter_mode_t m) {
    return m == limiter_mode_t::shared ? "shared" : "per_interface";
}

inline limiter_mode_t parse_limiter_mode(std::string_view s) {
    if (s == "shared") return limiter_mode_t::shared;
    if (s == "per_interface") return limiter_mode_t::per_interface;
    throw std::invalid_argument("unknown limiter mode: " + std::string{s});
}

struct token_bucket_config_t {
    double rate = 1000.0; // tokens per second
    double depth = 1000.0;

    friend bool operator==(const token_bucket_config_t&, const token_bucket_config_t&) = default;
};

struct sim_router_t {
    std::string id;
    std::vector<address_t> interfaces;
    limiter_mode_t mode = limiter_mode_t::shared;
    token_bucket_config_t bucket;
    // Answers TTL-expired probes. A silent router shows up as a gap in route traces.
    bool responsive = true;

    friend bool operator==(const sim_router_t&, const sim_router_t&) = default;
};

struct sim_link_t {
    std::string a;
    std::string b;
    double delay_ms = 1.0;
    double loss = 0.0;

    friend bool operator==(const sim_link_t&, const sim_link_t&) = default;
};

struct sim_topology_t {
    std::vector<sim_router_t> routers;
    std::vector<sim_link_t> links;
    std::uint64_t seed = 0;
    std::string vantage = "vp";
    double jitter_ms = 1.0; // per-request queueing delay, uniform in [0, jitter_ms)

    std::vector<address_t> interfaces() const {
        std::vector<address_t> all;
        for (const auto& r : routers) {
            all.insert(all.end(), r.interfaces.begin(), r.interfaces.end());
        }
        std::sort(all.begin(), all.end());
        return all;
    }

    friend bool operator==(const sim_topology_t&, const sim_topology_t&) = default;
};

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(json& j, const sim_router_t& r) {
    j = json{{"id", r.id},
             {"interfaces", r.interfaces},
             {"mode", to_string(r.mode)},
             {"rho", r.bucket.rate},
             {"depth", r.bucket.depth}};
    if (!r.responsive) {
        j["responsive"] = false;
    }
}

inline void from_json(const json& j, sim_router_t& r) {
    r.id = j.at("id").get<std::string>();
    r.interfaces = j.at("interfaces").get<std::vector<address_t>>();
    r.mode = parse_limiter_mode(j.value("mode", std::string{"shared"}));
    r.bucket.rate = j.at("rho").get<double>();
    r.bucket.depth = j.at("depth").get<double>();
    r.responsive = j.value("responsive", true);
}

inline void to_json(json& j, const sim_link_t& l) {
    j = json{{"a", l.a}, {"b", l.b}, {"delay_ms", l.delay_ms}, {"loss", l.loss}};
}

inline void from_json(const json& j, sim_link_t& l) {
    l.a = j.at("a").get<std::string>();
    l.b = j.at("b").get<std::string>();
    l.delay_ms = j.value("delay_ms", 1.0);
    l.loss = j.value("loss", 0.0);
}

inline void to_json(json& j, const sim_topology_t& t) {
    j = json{{"routers", t.routers}, {"links", t.links}, {"seed", t.seed}, {"vantage", t.vantage}, {"jitter_ms", t.jitter_ms}};
}

inline void from_json(const json& j, sim_topology_t& t) {
    t.routers = j.at("routers").get<std::vector<sim_router_t>>();
    t.links = j.at("links").get<std::vector<sim_link_t>>();
    t.seed = j.value("seed", std::uint64_t{0});
    t.vantage = j.value("vantage", std::string{"vp"});
    t.jitter_ms = j.value("jitter_ms", 1.0);
}

// FNV-1a over the canonical JSON encoding.
inline std::uint64_t topology_hash(const sim_topology_t& t) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : json(t).dump()) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Ground truth

inline partition_t ground_truth(const sim_topology_t& t) {
    partition_t p;
    for (const auto& r : t.routers) {
        if (r.interfaces.empty()) {
            continue;
        }
        alias_set_t s;
        s.members.insert(r.interfaces.begin(), r.interfaces.end());
        s.seed = *s.members.begin();
        p.sets.push_back(std::move(s));
    }
    p.normalize();
    return p;
}

// ---------------------------------------------------------------------------
// Routing

// Node 0 is the vantage point, node i+1 is router i.
class sim_network_t {
public:
    explicit sim_network_t(const sim_topology_t& topo) : topo_(&topo) {
        if (!(topo.jitter_ms >= 0.0)) {
            throw std::invalid_argument("jitter_ms must be >= 0");
        }
        std::unordered_map<std::string, std::size_t> node_of;
        node_of[topo.vantage] = 0;
        for (std::size_t i = 0; i < topo.routers.size(); ++i) {
            const auto& r = topo.routers[i];
            if (r.interfaces.empty()) {
                throw std::invalid_argument("router " + r.id + " has no interfaces");
            }
            if (!(r.bucket.rate > 0.0) || r.bucket.depth < 1.0) {
                throw std::invalid_argument("router " + r.id + ": need rho > 0 and depth >= 1");
            }
            if (!node_of.emplace(r.id, i + 1).second) {
                throw std::invalid_argument("duplicate router id " + r.id);
            }
            for (const auto& a : r.interfaces) {
                if (!owner_.emplace(a, i).second) {
                    throw std::invalid_argument("interface " + a.str() + " appears on two routers");
                }
            }
        }
        adjacency_.resize(topo.routers.size() + 1);
        for (std::size_t li = 0; li < topo.links.size(); ++li) {
            const auto& l = topo.links[li];
            auto a = node_of.find(l.a);
            auto b = node_of.find(l.b);
            if (a == node_of.end() || b == node_of.end()) {
                throw std::invalid_argument("link references unknown node " + (a == node_of.end() ? l.a : l.b));
            }
            if (l.loss < 0.0 || l.loss >= 1.0) {
                throw std::invalid_argument("link loss must be in [0, 1)");
            }
            adjacency_[a->second].push_back({b->second, li});
            adjacency_[b->second].push_back({a->second, li});
        }
        for (auto& adj : adjacency_) {
            std::sort(adj.begin(), adj.end());
        }
        distance_.assign(adjacency_.size(), std::numeric_limits<std::size_t>::max());
        std::queue<std::size_t> q;
        distance_[0] = 0;
        q.push(0);
        while (!q.empty()) {
            auto n = q.front();
            q.pop();
            for (const auto& [m, li] : adjacency_[n]) {
                if (distance_[m] == std::numeric_limits<std::size_t>::max()) {
                    distance_[m] = distance_[n] + 1;
                    q.push(m);
                }
            }
        }
        for (std::size_t i = 0; i < topo.routers.size(); ++i) {
            if (distance_[i + 1] == std::numeric_limits<std::size_t>::max()) {
                throw std::invalid_argument("router " + topo.routers[i].id + " is unreachable from the vantage point");
            }
        }
    }

    const sim_topology_t& topology() const noexcept { return *topo_; }

    std::optional<std::size_t> router_of(const address_t& a) const {
        auto it = owner_.find(a);
        if (it == owner_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    struct path_t {
        std::vector<std::size_t> routers; // transit routers then the destination router
        std::vector<std::size_t> links;   // vantage-side first
        timestamp_t one_way_delay{0};
    };

    // Shortest path from the vantage point; equal-cost choices are fixed by the flow identifier.
    path_t path_to(std::size_t router, flow_id_t flow) const {
        path_t p;
        std::size_t node = router + 1;
        while (node != 0) {
            std::vector<std::pair<std::size_t, std::size_t>> parents;
            for (const auto& [m, li] : adjacency_[node]) {
                if (distance_[m] + 1 == distance_[node]) {
                    parents.emplace_back(m, li);
                }
            }
            const auto& pick = parents[splitmix64((std::uint64_t{flow} << 32) ^ node) % parents.size()];
            p.routers.push_back(node - 1);
            p.links.push_back(pick.second);
            node = pick.first;
        }
        std::reverse(p.routers.begin(), p.routers.end());
        std::reverse(p.links.begin(), p.links.end());
        double ms = 0.0;
        for (auto li : p.links) {
            ms += topo_->links[li].delay_ms;
        }
        p.one_way_delay = timestamp_t{static_cast<std::int64_t>(ms * 1e6 + 0.5)};
        return p;
    }

    std::size_t hop_distance(std::size_t router) const { return distance_[router + 1]; }

private:
    const sim_topology_t* topo_;
    std::map<address_t, std::size_t> owner_;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;
    std::vector<std::size_t> distance_;
};

inline void validate(const sim_topology_t& t) { sim_network_t{t}; }

// ---------------------------------------------------------------------------
// Simulator engine

// For [begin, end) in engine time, replies from `interface` draw from `router_id`'s bucket.
// Models a one-off burst of losses correlated with another router.
struct bucket_coupling_t {
    address_t interface;
    std::string router_id;
    timestamp_t begin{0};
    timestamp_t end{0};
};

struct bucket_stats_t {
    std::string owner; // router id, or interface address for per-interface buckets
    double rate = 0.0;
    double depth = 0.0;
    std::uint64_t replies = 0;
    std::uint64_t suppressed = 0;
    timestamp_t first_use{-1};
    timestamp_t last_use{0};
};

class sim_engine_t final : public probe_engine_t {
public:
    explicit sim_engine_t(sim_topology_t topology, engine_options_t options = {})
        : probe_engine_t(options), topo_(std::move(topology)), net_(topo_), rng_(topo_.seed), jitter_rng_(mix_seed(topo_.seed, 0x6a6974ULL)) {
        for (std::size_t i = 0; i < topo_.routers.size(); ++i) {
            const auto& r = topo_.routers[i];
            if (r.mode == limiter_mode_t::shared) {
                router_bucket_[r.id] = buckets_.size();
                for (const auto& a : r.interfaces) {
                    bucket_of_[a] = buckets_.size();
                }
                buckets_.push_back(make_bucket(r.id, r.bucket));
            } else {
                for (const auto& a : r.interfaces) {
                    if (!router_bucket_.contains(r.id)) {
                        router_bucket_[r.id] = buckets_.size();
                    }
                    bucket_of_[a] = buckets_.size();
                    buckets_.push_back(make_bucket(a.str(), r.bucket));
                }
            }
        }
    }

    const sim_topology_t& topology() const noexcept { return topo_; }
    const sim_network_t& network() const noexcept { return net_; }

    void add_coupling(bucket_coupling_t c) {
        if (!router_bucket_.contains(c.router_id)) {
            throw std::invalid_argument("coupling references unknown router " + c.router_id);
        }
        if (!bucket_of_.contains(c.interface)) {
            throw unknown_target(c.interface.str());
        }
        couplings_.push_back(std::move(c));
    }

    void clear_couplings() { couplings_.clear(); }

    std::vector<bucket_stats_t> bucket_stats() const {
        std::vector<bucket_stats_t> out;
        out.reserve(buckets_.size());
        for (const auto& b : buckets_) {
            out.push_back(b.stats);
        }
        return out;
    }

    route_t route_trace(const address_t& target, flow_id_t flow_id) override {
        auto r = net_.router_of(target);
        if (!r) {
            throw unknown_target(target.str());
        }
        auto path = net_.path_to(*r, flow_id);
        route_t hops;
        for (std::size_t i = 0; i + 1 < path.routers.size(); ++i) {
            const auto& hop = topo_.routers[path.routers[i]];
            if (hop.responsive) {
                hops.emplace_back(hop.interfaces.front());
            } else {
                hops.emplace_back(std::nullopt);
            }
        }
        hops.emplace_back(target);
        return hops;
    }

    timestamp_t now() override { return clock_; }

protected:
    void sleep_until(timestamp_t t) override { clock_ = std::max(clock_, t); }

    round_result_t run_round(std::span<const probe_task_t> tasks, timestamp_t start) override {
        // Deterministic processing order regardless of how the caller listed the tasks.
        std::vector<std::size_t> order(tasks.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return tasks[a].target < tasks[b].target; });

        struct task_route_t {
            std::size_t bucket;
            sim_network_t::path_t path;
        };
        std::vector<task_route_t> routes(tasks.size());
        timestamp_t longest{0};
        for (auto i : order) {
            const auto& t = tasks[i];
            auto r = net_.router_of(t.target);
            if (!r) {
                throw unknown_target(t.target.str());
            }
            routes[i] = {bucket_of_.at(t.target), net_.path_to(*r, t.flow_id.value_or(0))};
            longest = std::max(longest, t.start_at + t.duration);
        }
        timestamp_t deadline = start + longest + options_.reply_timeout;

        round_result_t result;
        struct in_flight_t {
            timestamp_t arrive;
            std::uint32_t rank; // position in `order`
            std::uint32_t seq;
        };
        std::vector<in_flight_t> arrivals;
        std::vector<std::pair<timestamp_t, std::pair<std::uint32_t, std::uint32_t>>> sends;
        for (std::uint32_t rank = 0; rank < order.size(); ++rank) {
            const auto& t = tasks[order[rank]];
            auto& trace = result[t.target];
            trace.target = t.target;
            trace.rate = t.rate;
            trace.duration = t.duration;
            auto n = probe_count(t);
            trace.probes.resize(n);
            for (std::uint32_t k = 0; k < n; ++k) {
                trace.probes[k] = probe_t{k, start + probe_offset(t, k), false};
                sends.push_back({trace.probes[k].sent_at, {rank, k}});
            }
        }
        std::sort(sends.begin(), sends.end());
        arrivals.reserve(sends.size());
        for (const auto& [ts, key] : sends) {
            const auto& t = tasks[order[key.first]];
            record({ts, t.target, key.second, emission_kind_t::send, {}});
            if (lost_on_links(routes[order[key.first]].path)) {
                record({ts, t.target, key.second, emission_kind_t::drop, "request link loss"});
                continue;
            }
            auto jitter = timestamp_t{static_cast<std::int64_t>(uniform01(jitter_rng_) * topo_.jitter_ms * 1e6)};
            arrivals.push_back({ts + routes[order[key.first]].path.one_way_delay + jitter, key.first, key.second});
        }
        std::sort(arrivals.begin(), arrivals.end(), [](const in_flight_t& a, const in_flight_t& b) {
            return std::tie(a.arrive, a.rank, a.seq) < std::tie(b.arrive, b.rank, b.seq);
        });

        for (const auto& a : arrivals) {
            const auto& t = tasks[order[a.rank]];
            const auto& route = routes[order[a.rank]];
            auto& bucket = buckets_[bucket_for(t.target, route.bucket, a.arrive)];
            if (!bucket.take(a.arrive)) {
                record({a.arrive, t.target, a.seq, emission_kind_t::drop, "rate limited: " + bucket.stats.owner});
                continue;
            }
            if (lost_on_links(route.path)) {
                record({a.arrive, t.target, a.seq, emission_kind_t::drop, "reply link loss"});
                continue;
            }
            timestamp_t back = a.arrive + route.path.one_way_delay;
            if (back <= deadline) {
                result[t.target].probes[a.seq].received = true;
                record({back, t.target, a.seq, emission_kind_t::reply, {}});
            }
        }
        clock_ = std::max(clock_, deadline);
        return result;
    }

private:
    struct bucket_t {
        double tokens = 0.0;
        timestamp_t last{0};
        bucket_stats_t stats;

        // Continuous refill, then spend one token if a whole one is available.
        bool take(timestamp_t t) {
            if (t > last) {
                tokens = std::min(stats.depth, tokens + stats.rate * to_seconds(t - last));
                last = t;
            }
            if (stats.first_use.count() < 0) {
                stats.first_use = t;
            }
            stats.last_use = t;
            if (tokens >= 1.0) {
                tokens -= 1.0;
                ++stats.replies;
                return true;
            }
            ++stats.suppressed;
            return false;
        }
    };

    static bucket_t make_bucket(const std::string& owner, const token_bucket_config_t& cfg) {
        bucket_t b;
        b.tokens = cfg.depth;
        b.stats.owner = owner;
        b.stats.rate = cfg.rate;
        b.stats.depth = cfg.depth;
        return b;
    }

    std::size_t bucket_for(const address_t& target, std::size_t own, timestamp_t t) const {
        for (const auto& c : couplings_) {
            if (c.interface == target && t >= c.begin && t < c.end) {
                return router_bucket_.at(c.router_id);
            }
        }
        return own;
    }

    bool lost_on_links(const sim_network_t::path_t& path) {
        bool lost = false;
        for (auto li : path.links) {
            // Draw on every link so the random stream does not depend on earlier outcomes.
            if (uniform01(rng_) < topo_.links[li].loss) {
                lost = true;
            }
        }
        return lost;
    }

    sim_topology_t topo_;
    sim_network_t net_;
    rng_t rng_;
    rng_t jitter_rng_;
    timestamp_t clock_{0};
    std::vector<bucket_t> buckets_;
    std::map<address_t, std::size_t> bucket_of_;
    std::map<std::string, std::size_t> router_bucket_;
    std::vector<bucket_coupling_t> couplings_;
};

// One round against a fresh simulator instance.
inline round_result_t simulate(const sim_topology_t& topology, std::span<const probe_task_t> tasks,
                               engine_options_t options = {}) {
    sim_engine_t engine(topology, options);
    safety_policy_t policy;
    policy.require_quiet_gap = false;
    return engine.execute_round(tasks, policy);
}

// ---------------------------------------------------------------------------
// Topology generation

struct topology_spec_t {
    std::size_t n_routers = 100;
    std::size_t min_interfaces = 2;
    std::size_t max_interfaces = 6;
    double rho_min = 128.0; // log-uniform
    double rho_max = 4096.0;
    double depth_min_fraction = 0.1; // bucket depth as a fraction of rho
    double depth_max_fraction = 1.0;
    double loss_min = 0.0;
    double loss_max = 0.001;
    double delay_min_ms = 1.0;
    double delay_max_ms = 20.0;
    double shared_fraction = 1.0;
    double silent_fraction = 0.0;
    address_family_t family = address_family_t::v4;
    std::uint32_t address_block = 0; // distinguishes address ranges of separately generated topologies
};

inline void to_json(json& j, const topology_spec_t& s) {
    j = json{{"n_routers", s.n_routers},
             {"min_interfaces", s.min_interfaces},
             {"max_interfaces", s.max_interfaces},
             {"rho_min", s.rho_min},
             {"rho_max", s.rho_max},
             {"depth_min_fraction", s.depth_min_fraction},
             {"depth_max_fraction", s.depth_max_fraction},
             {"loss_min", s.loss_min},
             {"loss_max", s.loss_max},
             {"delay_min_ms", s.delay_min_ms},
             {"delay_max_ms", s.delay_max_ms},
             {"shared_fraction", s.shared_fraction},
             {"silent_fraction", s.silent_fraction},
             {"family", s.family == address_family_t::v4 ? "v4" : "v6"},
             {"address_block", s.address_block}};
}

inline void from_json(const json& j, topology_spec_t& s) {
    s = topology_spec_t{};
    s.n_routers = j.value("n_routers", s.n_routers);
    s.min_interfaces = j.value("min_interfaces", s.min_interfaces);
    s.max_interfaces = j.value("max_interfaces", s.max_interfaces);
    s.rho_min = j.value("rho_min", s.rho_min);
    s.rho_max = j.value("rho_max", s.rho_max);
    s.depth_min_fraction = j.value("depth_min_fraction", s.depth_min_fraction);
    s.depth_max_fraction = j.value("depth_max_fraction", s.depth_max_fraction);
    s.loss_min = j.value("loss_min", s.loss_min);
    s.loss_max = j.value("loss_max", s.loss_max);
    s.delay_min_ms = j.value("delay_min_ms", s.delay_min_ms);
    s.delay_max_ms = j.value("delay_max_ms", s.delay_max_ms);
    s.shared_fraction = j.value("shared_fraction", s.shared_fraction);
    s.silent_fraction = j.value("silent_fraction", s.silent_fraction);
    s.family = j.value("family", std::string{"v4"}) == "v6" ? address_family_t::v6 : address_family_t::v4;
    s.address_block = j.value("address_block", s.address_block);
}

namespace detail {

inline address_t make_interface_address(const topology_spec_t& spec, std::size_t router, std::size_t iface) {
    if (spec.family == address_family_t::v4) {
        // 10.<block>.<router / 16>.<(router % 16) * 16 + iface + 1>
        std::uint32_t host = static_cast<std::uint32_t>(router * 16 + iface + 1);
        return address_t::from_v4((10u << 24) | ((spec.address_block & 0xff) << 16) | (host & 0xffff));
    }
    std::array<std::uint8_t, 16> b{0x20, 0x01, 0x0d, 0xb8};
    b[4] = static_cast<std::uint8_t>(spec.address_block >> 8);
    b[5] = static_cast<std::uint8_t>(spec.address_block);
    b[12] = static_cast<std::uint8_t>(router >> 8);
    b[13] = static_cast<std::uint8_t>(router);
    b[15] = static_cast<std::uint8_t>(iface + 1);
    return address_t::from_bytes(address_family_t::v6, b);
}

} // namespace detail

// Random recursive tree: router 0 hangs off the vantage point, every later router
// attaches to a uniformly chosen earlier one.
inline sim_topology_t generate_topology(const topology_spec_t& spec, std::uint64_t seed) {
    if (spec.n_routers == 0) {
        throw std::invalid_argument("generate_topology: n_routers must be > 0");
    }
    if (spec.min_interfaces == 0 || spec.min_interfaces > spec.max_interfaces || spec.max_interfaces > 15) {
        throw std::invalid_argument("generate_topology: interfaces range must satisfy 1 <= min <= max <= 15");
    }
    if (!(spec.rho_min > 0.0) || spec.rho_min > spec.rho_max) {
        throw std::invalid_argument("generate_topology: rho range must satisfy 0 < min <= max");
    }
    if (spec.depth_min_fraction <= 0.0 || spec.depth_min_fraction > spec.depth_max_fraction) {
        throw std::invalid_argument("generate_topology: depth fraction range is empty");
    }
    if (spec.loss_min < 0.0 || spec.loss_min > spec.loss_max || spec.loss_max >= 1.0) {
        throw std::invalid_argument("generate_topology: loss range must lie in [0, 1)");
    }
    if (spec.delay_min_ms < 0.0 || spec.delay_min_ms > spec.delay_max_ms) {
        throw std::invalid_argument("generate_topology: delay range is empty");
    }
    std::size_t max_routers = spec.family == address_family_t::v4 ? 4096 : 65536;
    if (spec.n_routers > max_routers) {
        throw std::invalid_argument("generate_topology: too many routers for the address plan");
    }

    rng_t rng(mix_seed(seed, 0x746f706fULL));
    sim_topology_t t;
    t.seed = mix_seed(seed, 0x73696dULL);
    for (std::size_t i = 0; i < spec.n_routers; ++i) {
        sim_router_t r;
        r.id = "r" + std::to_string(i);
        auto n_if = spec.min_interfaces + bounded(rng, spec.max_interfaces - spec.min_interfaces + 1);
        for (std::size_t k = 0; k < n_if; ++k) {
            r.interfaces.push_back(detail::make_interface_address(spec, i, k));
        }
        r.mode = uniform01(rng) < spec.shared_fraction ? limiter_mode_t::shared : limiter_mode_t::per_interface;
        r.bucket.rate = std::round(log_uniform(rng, spec.rho_min, spec.rho_max));
        r.bucket.depth =
            std::max(1.0, std::round(r.bucket.rate * uniform(rng, spec.depth_min_fraction, spec.depth_max_fraction)));
        r.responsive = !(uniform01(rng) < spec.silent_fraction);
        t.routers.push_back(std::move(r));

        sim_link_t l;
        l.a = i == 0 ? t.vantage : "r" + std::to_string(bounded(rng, i));
        l.b = "r" + std::to_string(i);
        l.delay_ms = std::round(uniform(rng, spec.delay_min_ms, spec.delay_max_ms) * 1000.0) / 1000.0;
        l.loss = uniform(rng, spec.loss_min, spec.loss_max);
        t.links.push_back(std::move(l));
    }
    return t;
}

} // namespace ltd::netsim
