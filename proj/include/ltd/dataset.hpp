#pragma once

#include <set>
#include <span>
#include <vector>

#include "ltd/classifier.hpp"
#include "ltd/core.hpp"
#include "ltd/netsim.hpp"
#include "ltd/random.hpp"
#include "ltd/rate_search.hpp"
#include "ltd/signatures.hpp"

namespace ltd {

struct dataset_spec_t {
    netsim::topology_spec_t topology;
    std::size_t n_topologies = 10;
    std::uint32_t first_block = 100; // topology t uses address block first_block + t
    std::size_t min_candidates = 2;
    std::size_t max_candidates = 50;
    double max_negative_ratio = 5.0;
    rate_search_config_t rate;
    signature_config_t signature;
    safety_policy_t policy;
};

inline void to_json(json& j, const dataset_spec_t& s) {
    j = json{{"topology", s.topology},
             {"n_topologies", s.n_topologies},
             {"first_block", s.first_block},
             {"min_candidates", s.min_candidates},
             {"max_candidates", s.max_candidates},
             {"max_negative_ratio", s.max_negative_ratio},
             {"rate_search", s.rate},
             {"signatures", s.signature},
             {"policy", s.policy}};
}

inline void from_json(const json& j, dataset_spec_t& s) {
    s = dataset_spec_t{};
    if (j.contains("topology")) s.topology = j.at("topology").get<netsim::topology_spec_t>();
    s.n_topologies = j.value("n_topologies", s.n_topologies);
    s.first_block = j.value("first_block", s.first_block);
    s.min_candidates = j.value("min_candidates", s.min_candidates);
    s.max_candidates = j.value("max_candidates", s.max_candidates);
    s.max_negative_ratio = j.value("max_negative_ratio", s.max_negative_ratio);
    if (j.contains("rate_search")) s.rate = j.at("rate_search").get<rate_search_config_t>();
    if (j.contains("signatures")) s.signature = j.at("signatures").get<signature_config_t>();
    if (j.contains("policy")) s.policy = j.at("policy").get<safety_policy_t>();
}

// Labels the signatures of one seed against the simulator's ground truth.
inline std::vector<labeled_pair_t> label_by_ground_truth(const netsim::sim_network_t& net,
                                                         std::span<const signature_t> sigs) {
    std::vector<labeled_pair_t> out;
    for (const auto& s : sigs) {
        auto a = net.router_of(s.seed);
        auto b = net.router_of(s.candidate);
        if (!a || !b) {
            throw unknown_target(!a ? s.seed.str() : s.candidate.str());
        }
        out.push_back({s, *a == *b, label_source_t::ground_truth});
    }
    return out;
}

// One seed per shared-bucket router with at least two interfaces; candidates are the seed's
// aliases plus random interfaces of other routers. Negatives are downsampled at the end.
inline std::vector<labeled_pair_t> generate_dataset(const dataset_spec_t& spec, std::uint64_t seed) {
    if (spec.min_candidates == 0 || spec.min_candidates > spec.max_candidates) {
        throw std::invalid_argument("generate_dataset: need 1 <= min_candidates <= max_candidates");
    }
    rng_t rng(mix_seed(seed, 0x64617461ULL));
    std::vector<labeled_pair_t> all;
    for (std::size_t t = 0; t < spec.n_topologies; ++t) {
        auto tspec = spec.topology;
        tspec.address_block = spec.first_block + static_cast<std::uint32_t>(t);
        netsim::sim_engine_t engine(netsim::generate_topology(tspec, mix_seed(seed, t)));
        const auto& topo = engine.topology();
        auto everything = topo.interfaces();
        control_map_t k = controls(std::set<address_t>(everything.begin(), everything.end()), engine);

        for (std::size_t ri = 0; ri < topo.routers.size(); ++ri) {
            const auto& r = topo.routers[ri];
            if (r.mode != netsim::limiter_mode_t::shared || r.interfaces.size() < 2) {
                continue;
            }
            address_t s = r.interfaces[bounded(rng, r.interfaces.size())];
            std::vector<address_t> aliases, others;
            for (const auto& a : everything) {
                if (a == s) continue;
                (engine.network().router_of(a) == ri ? aliases : others).push_back(a);
            }
            std::size_t lo = std::max(spec.min_candidates, aliases.size());
            std::size_t hi = std::max(lo, std::min(spec.max_candidates, aliases.size() + others.size()));
            std::size_t n_cand = lo + bounded(rng, hi - lo + 1);
            shuffle(others, rng);
            std::vector<address_t> cand = aliases;
            for (std::size_t i = 0; cand.size() < n_cand && i < others.size(); ++i) {
                cand.push_back(others[i]);
            }
            shuffle(cand, rng);

            auto ev = find_rate(s, engine, spec.policy, spec.rate, detail::flow_of(k, s));
            if (ev.status == rate_search_status_t::failed) {
                continue;
            }
            auto res = signatures(s, ev.r_s, cand, k, engine, spec.policy, spec.signature);
            auto labeled = label_by_ground_truth(engine.network(), res.signatures);
            all.insert(all.end(), labeled.begin(), labeled.end());
        }
    }

    std::vector<std::size_t> neg;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].label) ++pos;
        else neg.push_back(i);
    }
    auto keep_neg = static_cast<std::size_t>(spec.max_negative_ratio * static_cast<double>(pos));
    if (neg.size() > keep_neg) {
        shuffle(neg, rng);
        std::set<std::size_t> dropped(neg.begin() + static_cast<std::ptrdiff_t>(keep_neg), neg.end());
        std::vector<labeled_pair_t> kept;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (!dropped.contains(i)) kept.push_back(std::move(all[i]));
        }
        all = std::move(kept);
    }
    return all;
}

// ---------------------------------------------------------------------------
// Hop-distance rule for real traces: two addresses seen more than `threshold` hops
// apart on one route trace are taken to be on different routers.

inline constexpr std::size_t hop_distance_threshold = 6;

inline std::optional<std::size_t> hop_separation(const route_t& route, const address_t& a, const address_t& b) {
    std::optional<std::size_t> ia, ib;
    for (std::size_t i = 0; i < route.size(); ++i) {
        if (route[i] && *route[i] == a && !ia) ia = i;
        if (route[i] && *route[i] == b && !ib) ib = i;
    }
    if (!ia || !ib) {
        return std::nullopt;
    }
    return *ia > *ib ? *ia - *ib : *ib - *ia;
}

inline std::vector<std::pair<address_t, address_t>> hop_distance_pairs(std::span<const route_t> routes,
                                                                       std::size_t threshold = hop_distance_threshold) {
    std::set<std::pair<address_t, address_t>> out;
    for (const auto& route : routes) {
        for (std::size_t i = 0; i < route.size(); ++i) {
            for (std::size_t j = i + threshold + 1; j < route.size(); ++j) {
                if (route[i] && route[j] && *route[i] != *route[j]) {
                    out.insert(std::minmax(*route[i], *route[j]));
                }
            }
        }
    }
    return {out.begin(), out.end()};
}

inline labeled_pair_t label_by_hop_distance(const signature_t& sig) {
    return {sig, false, label_source_t::hop_distance_rule};
}

} // namespace ltd
