#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ltd/core.hpp"

namespace ltd {

using flow_id_t = std::uint16_t;

struct probe_task_t {
    address_t target;
    rate_t rate = 1;
    timestamp_t duration = std::chrono::seconds{5};
    // Offset from the round start. Zero keeps every task in the same window.
    timestamp_t start_at{0};
    // Flow to hold constant (Paris style) so the probes follow a known route.
    std::optional<flow_id_t> flow_id;
};

// Number of probes a task emits: floor(rate x duration).
inline std::uint32_t probe_count(const probe_task_t& task) {
    return static_cast<std::uint32_t>((static_cast<std::int64_t>(task.rate) * task.duration.count()) / ns_per_second);
}

// Send time of probe k, relative to the round start. Integer arithmetic so that any
// half-open one-second window holds at most `rate` probes.
inline timestamp_t probe_offset(const probe_task_t& task, std::uint32_t k) {
    return task.start_at + timestamp_t{(static_cast<std::int64_t>(k) * ns_per_second) / task.rate};
}

// ---------------------------------------------------------------------------
// Safety policy

struct prefix_t {
    address_t network;
    std::uint8_t length = 0;

    // "10.0.0.0/8", "2001:db8::/32" or a bare address (host prefix).
    static prefix_t parse(std::string_view text) {
        prefix_t p;
        auto slash = text.find('/');
        p.network = address_t::parse(text.substr(0, slash));
        std::uint8_t max_len = p.network.is_v4() ? 32 : 128;
        if (slash == std::string_view::npos) {
            p.length = max_len;
        } else {
            int len = std::stoi(std::string{text.substr(slash + 1)});
            if (len < 0 || len > max_len) {
                throw std::invalid_argument("invalid prefix length in '" + std::string{text} + "'");
            }
            p.length = static_cast<std::uint8_t>(len);
        }
        return p;
    }

    bool contains(const address_t& a) const {
        if (a.family() != network.family()) {
            return false;
        }
        auto x = a.bytes();
        auto y = network.bytes();
        std::uint8_t full = length / 8;
        for (std::uint8_t i = 0; i < full; ++i) {
            if (x[i] != y[i]) {
                return false;
            }
        }
        std::uint8_t rem = length % 8;
        if (rem == 0) {
            return true;
        }
        auto mask = static_cast<std::uint8_t>(0xff << (8 - rem));
        return (x[full] & mask) == (y[full] & mask);
    }

    std::string str() const { return network.str() + "/" + std::to_string(length); }
};

struct safety_policy_t {
    rate_t max_rate_per_target = 32768;
    rate_t max_aggregate_rate = 34000;
    std::vector<prefix_t> denylist;
    bool require_quiet_gap = true;
};

inline void to_json(json& j, const safety_policy_t& p) {
    json deny = json::array();
    for (const auto& d : p.denylist) {
        deny.push_back(d.str());
    }
    j = json{{"max_rate_per_target", p.max_rate_per_target},
             {"max_aggregate_rate", p.max_aggregate_rate},
             {"denylist", std::move(deny)},
             {"require_quiet_gap", p.require_quiet_gap}};
}

inline void from_json(const json& j, safety_policy_t& p) {
    p = safety_policy_t{};
    p.max_rate_per_target = j.value("max_rate_per_target", p.max_rate_per_target);
    p.max_aggregate_rate = j.value("max_aggregate_rate", p.max_aggregate_rate);
    p.require_quiet_gap = j.value("require_quiet_gap", p.require_quiet_gap);
    if (j.contains("denylist")) {
        for (const auto& d : j.at("denylist")) {
            p.denylist.push_back(prefix_t::parse(d.get<std::string>()));
        }
    }
}

// Rejects a round before anything is sent.
inline void check_tasks(std::span<const probe_task_t> tasks, const safety_policy_t& policy) {
    std::set<address_t> targets;
    std::uint64_t aggregate = 0;
    for (const auto& t : tasks) {
        if (t.rate < 1) {
            throw std::invalid_argument("probe task for " + t.target.str() + ": rate must be >= 1");
        }
        if (t.duration.count() <= 0) {
            throw std::invalid_argument("probe task for " + t.target.str() + ": duration must be > 0");
        }
        if (t.start_at.count() < 0) {
            throw std::invalid_argument("probe task for " + t.target.str() + ": negative start offset");
        }
        if (!targets.insert(t.target).second) {
            throw std::invalid_argument("probe round: duplicate target " + t.target.str());
        }
        if (t.rate > policy.max_rate_per_target) {
            throw policy_violation("rate " + std::to_string(t.rate) + " pps for " + t.target.str() +
                                   " exceeds max_rate_per_target " + std::to_string(policy.max_rate_per_target));
        }
        for (const auto& d : policy.denylist) {
            if (d.contains(t.target)) {
                throw policy_violation("target " + t.target.str() + " is denylisted by " + d.str());
            }
        }
        aggregate += t.rate;
    }
    // Tasks overlap in time unless offsets say otherwise; the sum is the conservative bound.
    if (aggregate > policy.max_aggregate_rate) {
        throw policy_violation("aggregate rate " + std::to_string(aggregate) + " pps exceeds max_aggregate_rate " +
                               std::to_string(policy.max_aggregate_rate));
    }
}

// ---------------------------------------------------------------------------
// Emission log

enum class emission_kind_t { send, reply, drop };

inline std::string_view to_string(emission_kind_t k) {
    switch (k) {
    case emission_kind_t::send:
        return "send";
    case emission_kind_t::reply:
        return "reply";
    case emission_kind_t::drop:
        return "drop";
    }
    return "send";
}

struct emission_event_t {
    timestamp_t ts{0};
    address_t target;
    std::uint32_t seq = 0;
    emission_kind_t kind = emission_kind_t::send;
    std::string detail;
};

inline void to_json(json& j, const emission_event_t& e) {
    j = json{{"ts", to_seconds(e.ts)}, {"target", e.target}, {"seq", e.seq}, {"event", to_string(e.kind)}};
    if (!e.detail.empty()) {
        j["detail"] = e.detail;
    }
}

class emission_log_t {
public:
    void push(emission_event_t e) { events_.push_back(std::move(e)); }
    const std::vector<emission_event_t>& events() const noexcept { return events_; }
    void clear() { events_.clear(); }

    std::size_t count(emission_kind_t kind) const {
        return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(),
                                                      [kind](const emission_event_t& e) { return e.kind == kind; }));
    }

    void write_jsonl(std::ostream& os) const {
        for (const auto& e : events_) {
            os << json(e).dump() << '\n';
        }
    }

private:
    std::vector<emission_event_t> events_;
};

// ---------------------------------------------------------------------------
// Audit

struct audit_result_t {
    std::uint64_t max_per_target_window = 0;
    std::uint64_t max_aggregate_window = 0;
    address_t busiest_target;
    bool ok = true;
};

namespace detail {

// Largest number of timestamps inside any half-open window [t, t + 1 s).
inline std::uint64_t max_in_one_second(std::vector<timestamp_t>& ts) {
    std::sort(ts.begin(), ts.end());
    std::uint64_t best = 0;
    std::size_t lo = 0;
    for (std::size_t hi = 0; hi < ts.size(); ++hi) {
        while ((ts[hi] - ts[lo]).count() >= ns_per_second) {
            ++lo;
        }
        best = std::max<std::uint64_t>(best, hi - lo + 1);
    }
    return best;
}

} // namespace detail

// Checks send timestamps against the per-target and aggregate caps over every one-second window.
inline audit_result_t audit_sends(const std::map<address_t, std::vector<timestamp_t>>& sends,
                                  const safety_policy_t& policy) {
    audit_result_t r;
    std::vector<timestamp_t> all;
    for (const auto& [target, ts] : sends) {
        auto copy = ts;
        auto m = detail::max_in_one_second(copy);
        if (m > r.max_per_target_window) {
            r.max_per_target_window = m;
            r.busiest_target = target;
        }
        all.insert(all.end(), ts.begin(), ts.end());
    }
    r.max_aggregate_window = detail::max_in_one_second(all);
    r.ok = r.max_per_target_window <= policy.max_rate_per_target && r.max_aggregate_window <= policy.max_aggregate_rate;
    return r;
}

inline audit_result_t audit_emission_log(const emission_log_t& log, const safety_policy_t& policy) {
    std::map<address_t, std::vector<timestamp_t>> sends;
    for (const auto& e : log.events()) {
        if (e.kind == emission_kind_t::send) {
            sends[e.target].push_back(e.ts);
        }
    }
    return audit_sends(sends, policy);
}

// Process-wide counters of post-round audits, so a whole test run can assert it never broke a cap.
struct safety_audit_counters_t {
    std::atomic<std::uint64_t> rounds_audited{0};
    std::atomic<std::uint64_t> violations{0};
    std::atomic<std::uint64_t> max_per_target_seen{0};
    std::atomic<std::uint64_t> max_aggregate_seen{0};
};

inline safety_audit_counters_t& safety_audit_counters() {
    static safety_audit_counters_t counters;
    return counters;
}

namespace detail {
inline void atomic_max(std::atomic<std::uint64_t>& a, std::uint64_t v) {
    auto cur = a.load();
    while (v > cur && !a.compare_exchange_weak(cur, v)) {
    }
}
} // namespace detail

// ---------------------------------------------------------------------------
// Engine

using route_hop_t = std::optional<address_t>; // nullopt = non-responding hop
using route_t = std::vector<route_hop_t>;

struct engine_options_t {
    timestamp_t reply_timeout = std::chrono::seconds{2};
    bool keep_emission_log = false;
    // Also log reply/drop outcomes, not just sends.
    bool log_outcomes = false;
};

using round_result_t = std::map<address_t, loss_trace_t>;

// The contract every probing backend implements. The base class owns policy checks,
// quiet-gap enforcement, accounting and the post-round audit; backends only emit probes.
class probe_engine_t {
public:
    explicit probe_engine_t(engine_options_t options = {}) : options_(options) {}
    virtual ~probe_engine_t() = default;

    probe_engine_t(const probe_engine_t&) = delete;
    probe_engine_t& operator=(const probe_engine_t&) = delete;

    round_result_t execute_round(std::span<const probe_task_t> tasks, const safety_policy_t& policy) {
        if (busy_.exchange(true)) {
            throw engine_error("probe engine is not reentrant: a round is already running");
        }
        struct release_t {
            std::atomic<bool>& flag;
            ~release_t() { flag = false; }
        } release{busy_};

        check_tasks(tasks, policy);
        if (tasks.empty()) {
            return {};
        }
        if (policy.require_quiet_gap) {
            sleep_until(next_allowed_start_);
        }
        timestamp_t start = now();
        round_result_t result = run_round(tasks, start);

        timestamp_t longest{0};
        std::map<address_t, std::vector<timestamp_t>> sends;
        for (const auto& t : tasks) {
            longest = std::max(longest, t.start_at + t.duration);
            auto it = result.find(t.target);
            if (it == result.end()) {
                throw engine_error("backend returned no trace for " + t.target.str());
            }
            auto& ts = sends[t.target];
            ts.reserve(it->second.probes.size());
            for (const auto& p : it->second.probes) {
                ts.push_back(p.sent_at);
            }
            packets_sent_ += it->second.probes.size();
        }
        // Probing window followed by a silent period of equal length.
        next_allowed_start_ = start + 2 * longest;
        ++rounds_;

        auto audit = audit_sends(sends, policy);
        auto& counters = safety_audit_counters();
        ++counters.rounds_audited;
        detail::atomic_max(counters.max_per_target_seen, audit.max_per_target_window);
        detail::atomic_max(counters.max_aggregate_seen, audit.max_aggregate_window);
        if (!audit.ok) {
            ++counters.violations;
            throw std::logic_error("safety audit failed: " + std::to_string(audit.max_per_target_window) +
                                   " probes/s to " + audit.busiest_target.str() + ", aggregate " +
                                   std::to_string(audit.max_aggregate_window));
        }
        return result;
    }

    // Paris-style route trace toward `target`, holding the flow identifier constant.
    virtual route_t route_trace(const address_t& target, flow_id_t flow_id) = 0;

    const engine_options_t& options() const noexcept { return options_; }
    void set_reply_timeout(timestamp_t t) { options_.reply_timeout = t; }
    void keep_emission_log(bool on) { options_.keep_emission_log = on; }

    const emission_log_t& emission_log() const noexcept { return log_; }
    emission_log_t& emission_log() noexcept { return log_; }
    std::uint64_t packets_sent() const noexcept { return packets_sent_; }
    std::uint64_t rounds() const noexcept { return rounds_; }

    virtual timestamp_t now() = 0;

protected:
    virtual void sleep_until(timestamp_t t) = 0;
    // Must return one trace per task and leave now() past the reply-collection window.
    virtual round_result_t run_round(std::span<const probe_task_t> tasks, timestamp_t start) = 0;

    void record(emission_event_t e) {
        if (options_.keep_emission_log && (e.kind == emission_kind_t::send || options_.log_outcomes)) {
            log_.push(std::move(e));
        }
    }

    engine_options_t options_;

private:
    std::atomic<bool> busy_{false};
    timestamp_t next_allowed_start_{0};
    std::uint64_t packets_sent_ = 0;
    std::uint64_t rounds_ = 0;
    emission_log_t log_;
};

} // namespace ltd
