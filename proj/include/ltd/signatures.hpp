#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <vector>

#include "ltd/core.hpp"
#include "ltd/features.hpp"
#include "ltd/probe_engine.hpp"
#include "ltd/random.hpp"

namespace ltd {

struct signature_config_t {
    rate_t candidate_rate = 10;
    std::size_t batch_size = 50;
    timestamp_t round_duration = std::chrono::seconds{5};
    timestamp_t reply_timeout = std::chrono::seconds{2};
    bool keep_traces = false;
    change_point_config_t change_point;
};

inline constexpr std::uint64_t max_candidate_aggregate = 500;

inline void validate(const signature_config_t& c) {
    if (c.candidate_rate < 1 || c.batch_size < 1) {
        throw std::invalid_argument("signatures: candidate rate and batch size must be positive");
    }
    if (static_cast<std::uint64_t>(c.batch_size) * c.candidate_rate > max_candidate_aggregate) {
        throw std::invalid_argument("signatures: batch_size * candidate_rate exceeds 500 pps");
    }
    if (c.round_duration.count() <= 0 || c.reply_timeout.count() < 0) {
        throw std::invalid_argument("signatures: bad round duration or reply timeout");
    }
}

inline void to_json(json& j, const signature_config_t& c) {
    j = json{{"candidate_rate", c.candidate_rate},
             {"batch_size", c.batch_size},
             {"round_duration", to_seconds(c.round_duration)},
             {"reply_timeout", to_seconds(c.reply_timeout)},
             {"keep_traces", c.keep_traces},
             {"change_point_penalty", c.change_point.penalty_factor}};
}

inline void from_json(const json& j, signature_config_t& c) {
    c = signature_config_t{};
    c.candidate_rate = j.value("candidate_rate", c.candidate_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("round_duration")) {
        c.round_duration = from_seconds(j.at("round_duration").get<double>());
    }
    if (j.contains("reply_timeout")) {
        c.reply_timeout = from_seconds(j.at("reply_timeout").get<double>());
    }
    c.keep_traces = j.value("keep_traces", c.keep_traces);
    c.change_point.penalty_factor = j.value("change_point_penalty", c.change_point.penalty_factor);
}

// ---------------------------------------------------------------------------
// Controls

// Stable per-target flow identifier, reused for every probe toward that target.
inline flow_id_t flow_id_for(const address_t& a) {
    std::uint64_t h = 0;
    for (auto b : a.bytes()) {
        h = splitmix64(h ^ b);
    }
    return static_cast<flow_id_t>(h & 0xffff);
}

struct control_t {
    std::optional<address_t> control; // nullopt = no responsive hop before the target
    flow_id_t flow_id = 0;
};

using control_map_t = std::map<address_t, control_t>;

// Last responsive hop strictly before the target, or nothing.
inline std::optional<address_t> last_responsive_before(const route_t& route, const address_t& target) {
    std::size_t end = route.size();
    for (std::size_t i = 0; i < route.size(); ++i) {
        if (route[i] && *route[i] == target) {
            end = i;
            break;
        }
    }
    for (std::size_t i = end; i > 0; --i) {
        if (route[i - 1] && *route[i - 1] != target) {
            return route[i - 1];
        }
    }
    return std::nullopt;
}

inline control_map_t controls(const std::set<address_t>& targets, probe_engine_t& engine) {
    control_map_t k;
    for (const auto& t : targets) {
        control_t c;
        c.flow_id = flow_id_for(t);
        try {
            c.control = last_responsive_before(engine.route_trace(t, c.flow_id), t);
        } catch (const unknown_target&) {
            c.control = std::nullopt;
        }
        k[t] = c;
    }
    return k;
}

inline void to_json(json& j, const control_map_t& k) {
    j = json::object();
    for (const auto& [t, c] : k) {
        j[t.str()] = json{{"control", c.control ? json(*c.control) : json(nullptr)}, {"flow_id", c.flow_id}};
    }
}

inline void from_json(const json& j, control_map_t& k) {
    k.clear();
    for (const auto& [t, c] : j.items()) {
        control_t ct;
        if (!c.at("control").is_null()) {
            ct.control = c.at("control").get<address_t>();
        }
        ct.flow_id = c.at("flow_id").get<flow_id_t>();
        k[address_t::parse(t)] = ct;
    }
}

// ---------------------------------------------------------------------------
// Signature rounds

struct signatures_result_t {
    std::vector<signature_t> signatures;
    std::size_t batches = 0;
    std::size_t retries = 0;
    bool partial = false;              // at least one batch was abandoned
    std::vector<address_t> abandoned;  // candidates of abandoned batches
};

namespace detail {

inline flow_id_t flow_of(const control_map_t& k, const address_t& a) {
    auto it = k.find(a);
    return it == k.end() ? flow_id_for(a) : it->second.flow_id;
}

inline std::optional<address_t> control_of(const control_map_t& k, const address_t& a) {
    auto it = k.find(a);
    return it == k.end() ? std::nullopt : it->second.control;
}

} // namespace detail

// One joint round per batch: seed at r_s, each candidate and each distinct control at the
// candidate rate. A control that is itself probed in the round shares that trace.
inline signatures_result_t signatures(const address_t& seed, rate_t r_s, std::span<const address_t> candidates,
                                      const control_map_t& k, probe_engine_t& engine, const safety_policy_t& policy,
                                      const signature_config_t& config = {}) {
    validate(config);
    engine.set_reply_timeout(config.reply_timeout);
    signatures_result_t out;
    feature_config_t fcfg{config.change_point, config.keep_traces};
    auto control_s = detail::control_of(k, seed);

    for (std::size_t begin = 0; begin < candidates.size(); begin += config.batch_size) {
        auto batch = candidates.subspan(begin, std::min(config.batch_size, candidates.size() - begin));
        std::vector<probe_task_t> tasks;
        std::set<address_t> scheduled;
        auto add = [&](const address_t& a, rate_t rate, flow_id_t flow) {
            if (scheduled.insert(a).second) {
                tasks.push_back(probe_task_t{a, rate, config.round_duration, timestamp_t{0}, flow});
            }
        };
        add(seed, r_s, detail::flow_of(k, seed));
        for (const auto& c : batch) {
            if (c == seed) {
                throw std::invalid_argument("signatures: seed listed among its own candidates");
            }
            add(c, config.candidate_rate, detail::flow_of(k, c));
        }
        // Controls are reached with the flow identifier of the target whose trace found them.
        if (control_s) {
            add(*control_s, config.candidate_rate, detail::flow_of(k, seed));
        }
        for (const auto& c : batch) {
            if (auto kc = detail::control_of(k, c)) {
                add(*kc, config.candidate_rate, detail::flow_of(k, c));
            }
        }

        // Spread task start times over one candidate inter-probe gap so concurrent
        // low-rate probes do not reach a shared bucket at the same instants.
        auto gap = ns_per_second / config.candidate_rate;
        for (std::size_t i = 1; i < tasks.size(); ++i) {
            tasks[i].start_at = timestamp_t{static_cast<std::int64_t>(i) * gap / static_cast<std::int64_t>(tasks.size())};
        }

        ++out.batches;
        std::optional<round_result_t> result;
        for (int attempt = 0; attempt < 2 && !result; ++attempt) {
            try {
                result = engine.execute_round(tasks, policy);
            } catch (const engine_error&) {
                if (attempt == 0) {
                    ++out.retries;
                }
            }
        }
        if (!result) {
            out.partial = true;
            out.abandoned.insert(out.abandoned.end(), batch.begin(), batch.end());
            continue;
        }

        const auto& st = result->at(seed);
        const loss_trace_t* ks = control_s ? &result->at(*control_s) : nullptr;
        for (const auto& c : batch) {
            auto kc_addr = detail::control_of(k, c);
            const loss_trace_t* kc = kc_addr ? &result->at(*kc_addr) : nullptr;
            out.signatures.push_back(build_signature(st, result->at(c), ks, kc, fcfg));
        }
    }
    return out;
}

inline void write_signatures_jsonl(std::ostream& os, std::span<const signature_t> sigs) {
    for (const auto& s : sigs) {
        os << json(s).dump() << '\n';
    }
}

} // namespace ltd
