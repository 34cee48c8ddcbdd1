#pragma once

#include <cmath>
#include <optional>

#include "ltd/core.hpp"
#include "ltd/probe_engine.hpp"

namespace ltd {

struct rate_search_config_t {
    double loss_lo = 0.05;
    double loss_hi = 0.10;
    rate_t start_rate = 64;
    rate_t max_rate = 32768;
    timestamp_t round_duration = std::chrono::seconds{5};
    std::uint32_t max_binary_rounds = 8;
};

inline void validate(const rate_search_config_t& c) {
    if (!(0.0 < c.loss_lo && c.loss_lo < c.loss_hi && c.loss_hi < 1.0)) {
        throw std::invalid_argument("rate search: need 0 < loss_lo < loss_hi < 1");
    }
    if (c.start_rate < 1 || c.start_rate > c.max_rate) {
        throw std::invalid_argument("rate search: need 1 <= start_rate <= max_rate");
    }
    if (c.round_duration.count() <= 0) {
        throw std::invalid_argument("rate search: round duration must be positive");
    }
}

inline void to_json(json& j, const rate_search_config_t& c) {
    j = json{{"loss_lo", c.loss_lo},
             {"loss_hi", c.loss_hi},
             {"start_rate", c.start_rate},
             {"max_rate", c.max_rate},
             {"round_duration", to_seconds(c.round_duration)},
             {"max_binary_rounds", c.max_binary_rounds}};
}

inline void from_json(const json& j, rate_search_config_t& c) {
    c = rate_search_config_t{};
    c.loss_lo = j.value("loss_lo", c.loss_lo);
    c.loss_hi = j.value("loss_hi", c.loss_hi);
    c.start_rate = j.value("start_rate", c.start_rate);
    c.max_rate = j.value("max_rate", c.max_rate);
    if (j.contains("round_duration")) {
        c.round_duration = from_seconds(j.at("round_duration").get<double>());
    }
    c.max_binary_rounds = j.value("max_binary_rounds", c.max_binary_rounds);
}

// Distance from a loss value to the target range; zero inside it.
inline double distance_to_range(double loss, const rate_search_config_t& c) {
    if (loss < c.loss_lo) {
        return c.loss_lo - loss;
    }
    if (loss > c.loss_hi) {
        return loss - c.loss_hi;
    }
    return 0.0;
}

// Finds the probing rate that puts the target's reply loss in [loss_lo, loss_hi].
// Doubles from start_rate until the loss reaches loss_lo, then bisects between the last
// two rates if it overshot past loss_hi.
inline rate_limit_evidence_t find_rate(const address_t& target, probe_engine_t& engine,
                                       const safety_policy_t& policy, const rate_search_config_t& config = {},
                                       std::optional<flow_id_t> flow_id = std::nullopt) {
    validate(config);
    rate_limit_evidence_t ev;
    ev.target = target;

    auto probe = [&](rate_t rate) {
        probe_task_t task{target, rate, config.round_duration, timestamp_t{0}, flow_id};
        auto result = engine.execute_round(std::span<const probe_task_t>{&task, 1}, policy);
        double loss = loss_rate(result.at(target));
        ++ev.rounds_used;
        ev.history.push_back({rate, loss});
        return loss;
    };
    auto in_range = [&](double loss) { return loss >= config.loss_lo && loss <= config.loss_hi; };
    auto finish = [&](rate_search_status_t status, rate_t rate, double loss) {
        ev.status = status;
        ev.r_s = rate;
        ev.final_loss = loss;
        return ev;
    };

    // Phase 1: exponential ramp.
    std::optional<rate_t> previous;
    rate_t rate = config.start_rate;
    double loss = 0.0;
    while (true) {
        loss = probe(rate);
        if (ev.rounds_used == 1 && loss >= 1.0) {
            ev.zero_response = true;
            return finish(rate_search_status_t::failed, rate, loss);
        }
        if (loss >= config.loss_lo) {
            break;
        }
        if (static_cast<std::uint64_t>(rate) * 2 > config.max_rate) {
            return finish(rate_search_status_t::failed, rate, loss);
        }
        previous = rate;
        rate *= 2;
    }
    ev.trigger_rounds = ev.rounds_used;
    if (loss <= config.loss_hi) {
        return finish(rate_search_status_t::converged, rate, loss);
    }

    // Phase 2: bisection between the last rate below the range and the first above it.
    // Overshooting on the very first round bisects below start_rate.
    rate_t lo = previous.value_or(std::max<rate_t>(1, config.start_rate / 2));
    rate_t hi = rate;
    for (std::uint32_t i = 0; i < config.max_binary_rounds && hi - lo > 1; ++i) {
        rate_t mid = static_cast<rate_t>(std::lround((static_cast<double>(lo) + hi) / 2.0));
        if (mid <= lo || mid >= hi) {
            break;
        }
        double l = probe(mid);
        if (in_range(l)) {
            return finish(rate_search_status_t::converged, mid, l);
        }
        if (l < config.loss_lo) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Closest round to the range; ties go to the lower (gentler) rate.
    const rate_round_t* best = nullptr;
    for (const auto& r : ev.history) {
        if (best == nullptr) {
            best = &r;
            continue;
        }
        double d = distance_to_range(r.loss, config);
        double bd = distance_to_range(best->loss, config);
        // Distances within 1e-9 count as ties; measured losses are ratios of counts.
        if (d < bd - 1e-9 || (std::abs(d - bd) <= 1e-9 && r.rate < best->rate)) {
            best = &r;
        }
    }
    return finish(rate_search_status_t::closest_rate, best->rate, best->loss);
}

} // namespace ltd
