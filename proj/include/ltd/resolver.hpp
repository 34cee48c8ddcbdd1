#pragma once

#include <set>
#include <utility>
#include <vector>

#include "ltd/classifier.hpp"
#include "ltd/core.hpp"
#include "ltd/probe_engine.hpp"
#include "ltd/random.hpp"
#include "ltd/rate_search.hpp"
#include "ltd/signatures.hpp"

namespace ltd {

struct resolver_config_t {
    rate_search_config_t rate;
    signature_config_t signature;
    safety_policy_t policy;
    std::size_t max_refine_rounds = 10;
};

inline void to_json(json& j, const resolver_config_t& c) {
    j = json{{"rate_search", c.rate},
             {"signatures", c.signature},
             {"policy", c.policy},
             {"max_refine_rounds", c.max_refine_rounds}};
}

inline void from_json(const json& j, resolver_config_t& c) {
    c = resolver_config_t{};
    if (j.contains("rate_search")) c.rate = j.at("rate_search").get<rate_search_config_t>();
    if (j.contains("signatures")) c.signature = j.at("signatures").get<signature_config_t>();
    if (j.contains("policy")) c.policy = j.at("policy").get<safety_policy_t>();
    c.max_refine_rounds = j.value("max_refine_rounds", c.max_refine_rounds);
}

// ---------------------------------------------------------------------------
// refine

struct refine_result_t {
    alias_set_t set;
    std::size_t rounds = 0;
    bool capped = false;  // stopped by max_refine_rounds before two equal iterations
    bool partial = false; // a signature batch was abandoned along the way
    std::vector<std::set<address_t>> history;
};

// Re-probes the current members against the seed and keeps those classified as aliases,
// until two consecutive iterations give the same set. The set never grows.
inline refine_result_t refine(const alias_set_t& initial, const address_t& seed, rate_t r_s, const control_map_t& k,
                              const model_t& model, probe_engine_t& engine, const resolver_config_t& config,
                              rng_t& rng) {
    if (!initial.members.contains(seed)) {
        throw std::invalid_argument("refine: seed is not a member of the alias set");
    }
    refine_result_t out;
    std::set<address_t> current = initial.members;
    std::optional<std::set<address_t>> previous;
    while (true) {
        if (out.rounds >= std::max<std::size_t>(2, config.max_refine_rounds)) {
            out.capped = true;
            break;
        }
        ++out.rounds;
        std::vector<address_t> members;
        for (const auto& a : current) {
            if (a != seed) {
                members.push_back(a);
            }
        }
        std::set<address_t> next{seed};
        if (!members.empty()) {
            shuffle(members, rng);
            auto res = signatures(seed, r_s, members, k, engine, config.policy, config.signature);
            out.partial = out.partial || res.partial;
            for (const auto& sig : res.signatures) {
                if (classify(model, sig)) {
                    next.insert(sig.candidate);
                }
            }
        }
        out.history.push_back(next);
        bool stable = previous && *previous == next;
        previous = next;
        current = std::move(next);
        if (stable) {
            break;
        }
    }
    out.set.seed = seed;
    out.set.members = std::move(current);
    return out;
}

// ---------------------------------------------------------------------------
// resolve

struct seed_report_t {
    address_t seed;
    bool searched = false; // false when the seed was the last address left
    rate_limit_evidence_t evidence;
    std::size_t candidates = 0;
    std::size_t initial_size = 1;
    std::size_t refine_rounds = 0;
    bool refine_capped = false;
    bool partial = false;
    std::set<address_t> alias_set;
};

struct run_report_t {
    std::vector<seed_report_t> seeds;
    std::uint64_t rounds = 0;
    std::uint64_t packets_sent = 0;
    std::uint64_t rng_seed = 0;
};

inline void to_json(json& j, const seed_report_t& r) {
    j = json{{"seed", r.seed},
             {"searched", r.searched},
             {"evidence", r.evidence},
             {"candidates", r.candidates},
             {"initial_size", r.initial_size},
             {"refine_rounds", r.refine_rounds},
             {"refine_capped", r.refine_capped},
             {"partial", r.partial},
             {"alias_set", r.alias_set}};
}

inline void from_json(const json& j, seed_report_t& r) {
    r.seed = j.at("seed").get<address_t>();
    r.searched = j.value("searched", true);
    r.evidence = j.at("evidence").get<rate_limit_evidence_t>();
    r.candidates = j.value("candidates", std::size_t{0});
    r.initial_size = j.value("initial_size", std::size_t{1});
    r.refine_rounds = j.value("refine_rounds", std::size_t{0});
    r.refine_capped = j.value("refine_capped", false);
    r.partial = j.value("partial", false);
    r.alias_set = j.value("alias_set", std::set<address_t>{});
}

inline void to_json(json& j, const run_report_t& r) {
    j = json{{"seeds", r.seeds}, {"rounds", r.rounds}, {"packets_sent", r.packets_sent}, {"rng_seed", r.rng_seed}};
}

inline void from_json(const json& j, run_report_t& r) {
    r.seeds = j.at("seeds").get<std::vector<seed_report_t>>();
    r.rounds = j.value("rounds", std::uint64_t{0});
    r.packets_sent = j.value("packets_sent", std::uint64_t{0});
    r.rng_seed = j.value("rng_seed", std::uint64_t{0});
}

struct resolve_result_t {
    partition_t partition;
    run_report_t report;
};

// Carries whatever was resolved before the backend failed.
class resolve_error : public ltd_error {
public:
    resolve_error(const std::string& what, partition_t partial, run_report_t report)
        : ltd_error(what), partial_(std::move(partial)), report_(std::move(report)) {}
    const partition_t& partial() const noexcept { return partial_; }
    const run_report_t& report() const noexcept { return report_; }

private:
    partition_t partial_;
    run_report_t report_;
};

inline resolve_result_t resolve(const std::set<address_t>& targets, const model_t& model, probe_engine_t& engine,
                                const resolver_config_t& config, std::uint64_t rng_seed) {
    if (targets.empty()) {
        throw std::invalid_argument("resolve: the target set is empty");
    }
    check_schema(model);
    validate(config.rate);
    validate(config.signature);

    resolve_result_t out;
    out.report.rng_seed = rng_seed;
    rng_t rng(mix_seed(rng_seed, 0x7265736f6c7665ULL));
    auto rounds0 = engine.rounds();
    auto packets0 = engine.packets_sent();
    auto finish_report = [&] {
        out.report.rounds = engine.rounds() - rounds0;
        out.report.packets_sent = engine.packets_sent() - packets0;
    };

    try {
        control_map_t k = controls(targets, engine);
        std::set<address_t> remaining = targets;
        while (!remaining.empty()) {
            std::vector<address_t> pool(remaining.begin(), remaining.end());
            address_t s = pool[bounded(rng, pool.size())];
            std::vector<address_t> candidates;
            for (const auto& a : pool) {
                if (a != s) {
                    candidates.push_back(a);
                }
            }
            shuffle(candidates, rng);

            seed_report_t rep;
            rep.seed = s;
            rep.candidates = candidates.size();
            alias_set_t set{s, {s}};
            if (!candidates.empty()) {
                rep.searched = true;
                rep.evidence = find_rate(s, engine, config.policy, config.rate, detail::flow_of(k, s));
                if (rep.evidence.status != rate_search_status_t::failed) {
                    auto res = signatures(s, rep.evidence.r_s, candidates, k, engine, config.policy, config.signature);
                    rep.partial = res.partial;
                    for (const auto& sig : res.signatures) {
                        if (classify(model, sig)) {
                            set.members.insert(sig.candidate);
                        }
                    }
                    rep.initial_size = set.members.size();
                    auto refined = refine(set, s, rep.evidence.r_s, k, model, engine, config, rng);
                    rep.refine_rounds = refined.rounds;
                    rep.refine_capped = refined.capped;
                    rep.partial = rep.partial || refined.partial;
                    set = std::move(refined.set);
                }
            } else {
                rep.evidence.target = s;
            }
            for (const auto& m : set.members) {
                remaining.erase(m);
            }
            rep.alias_set = set.members;
            out.partition.sets.push_back(std::move(set));
            out.report.seeds.push_back(std::move(rep));
        }
    } catch (const ltd_error& e) {
        finish_report();
        throw resolve_error(e.what(), out.partition, out.report);
    }
    finish_report();
    return out;
}

} // namespace ltd
