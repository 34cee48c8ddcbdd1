#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "ltd/core.hpp"
#include "ltd/resolver.hpp"

namespace ltd {

// ---------------------------------------------------------------------------
// Pairwise precision and recall

struct pair_metrics_t {
    std::uint64_t true_positives = 0;
    std::uint64_t false_positives = 0;
    std::uint64_t false_negatives = 0;
    std::optional<double> precision; // nullopt = no predicted alias pairs
    std::optional<double> recall;    // nullopt = no true alias pairs
    std::optional<double> f1;
};

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json("N/A"); }

inline void to_json(json& j, const pair_metrics_t& m) {
    j = json{{"precision", optional_json(m.precision)},
             {"recall", optional_json(m.recall)},
             {"f1", optional_json(m.f1)},
             {"true_positives", m.true_positives},
             {"false_positives", m.false_positives},
             {"false_negatives", m.false_negatives}};
}

struct pair_metrics_options_t {
    bool remove_unresponsive = true;
    std::set<address_t> unresponsive; // addresses that answered no probe at all
};

namespace detail {

inline std::uint64_t pairs_of(std::uint64_t n) { return n * (n - (n > 0 ? 1 : 0)) / 2; }

inline std::map<address_t, std::size_t> set_index(const partition_t& p, const std::set<address_t>& drop) {
    std::map<address_t, std::size_t> idx;
    for (std::size_t i = 0; i < p.sets.size(); ++i) {
        for (const auto& a : p.sets[i].members) {
            if (!drop.contains(a)) {
                idx[a] = i;
            }
        }
    }
    return idx;
}

} // namespace detail

// Addresses missing from `predicted` count as singletons; addresses outside the truth are an error.
inline pair_metrics_t pair_metrics(const partition_t& predicted, const partition_t& truth,
                                   const pair_metrics_options_t& options = {}) {
    validate(predicted);
    validate(truth);
    auto tu = truth.universe();
    auto pu = predicted.universe();
    std::vector<address_t> extra;
    std::set_difference(pu.begin(), pu.end(), tu.begin(), tu.end(), std::back_inserter(extra));
    if (!extra.empty()) {
        std::string msg = "pair_metrics: predicted addresses outside the truth universe:";
        for (const auto& a : extra) {
            msg += " " + a.str();
        }
        throw std::invalid_argument(msg);
    }
    static const std::set<address_t> none;
    const auto& drop = options.remove_unresponsive ? options.unresponsive : none;
    auto pi = detail::set_index(predicted, drop);
    auto ti = detail::set_index(truth, drop);

    std::map<std::size_t, std::uint64_t> psize, tsize;
    std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> both;
    for (const auto& [a, t] : ti) {
        ++tsize[t];
        auto it = pi.find(a);
        if (it != pi.end()) {
            ++psize[it->second];
            ++both[{it->second, t}];
        }
    }
    std::uint64_t pred_pairs = 0, true_pairs = 0, tp = 0;
    for (const auto& [_, n] : psize) pred_pairs += detail::pairs_of(n);
    for (const auto& [_, n] : tsize) true_pairs += detail::pairs_of(n);
    for (const auto& [_, n] : both) tp += detail::pairs_of(n);

    pair_metrics_t m;
    m.true_positives = tp;
    m.false_positives = pred_pairs - tp;
    m.false_negatives = true_pairs - tp;
    if (pred_pairs > 0) m.precision = static_cast<double>(tp) / static_cast<double>(pred_pairs);
    if (true_pairs > 0) m.recall = static_cast<double>(tp) / static_cast<double>(true_pairs);
    if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    }
    return m;
}

// Addresses whose every recorded trace came back empty.
inline std::set<address_t> unresponsive_addresses(std::span<const loss_trace_t> traces) {
    std::map<address_t, bool> answered;
    for (const auto& t : traces) {
        answered[t.target] = answered[t.target] || t.lost() < t.sent();
    }
    std::set<address_t> out;
    for (const auto& [a, ok] : answered) {
        if (!ok) out.insert(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transitive closure of several tools' outputs

inline partition_t union_closure(std::span<const partition_t> partitions) {
    std::map<address_t, std::size_t> id;
    std::vector<address_t> addr;
    for (const auto& p : partitions) {
        for (const auto& s : p.sets) {
            for (const auto& a : s.members) {
                if (id.emplace(a, addr.size()).second) {
                    addr.push_back(a);
                }
            }
        }
    }
    std::vector<std::size_t> parent(addr.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& p : partitions) {
        for (const auto& s : p.sets) {
            auto root = find(id.at(*s.members.begin()));
            for (const auto& a : s.members) {
                auto r = find(id.at(a));
                if (r != root) {
                    parent[r] = root;
                }
            }
        }
    }
    std::map<std::size_t, std::set<address_t>> groups;
    for (std::size_t i = 0; i < addr.size(); ++i) {
        groups[find(i)].insert(addr[i]);
    }
    partition_t out;
    for (auto& [_, members] : groups) {
        out.sets.push_back({*members.begin(), std::move(members)});
    }
    out.normalize();
    return out;
}

// ---------------------------------------------------------------------------
// Campaign statistics

struct ecdf_point_t {
    double value = 0.0;
    double fraction = 0.0; // P(X <= value)
};

inline std::vector<ecdf_point_t> ecdf(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<ecdf_point_t> out;
    auto n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 < values.size() && values[i + 1] == values[i]) {
            continue;
        }
        out.push_back({values[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

// P(X < x) from a table produced by ecdf().
inline double fraction_below(const std::vector<ecdf_point_t>& table, double x) {
    double f = 0.0;
    for (const auto& p : table) {
        if (p.value < x) {
            f = p.fraction;
        }
    }
    return f;
}

struct campaign_stats_t {
    std::vector<ecdf_point_t> rate;           // r_s of non-failed searches
    std::vector<ecdf_point_t> rounds;         // total rate-search rounds
    std::vector<ecdf_point_t> trigger_rounds; // rounds until loss first reached the target range
    std::vector<ecdf_point_t> refine_rounds;
    std::uint64_t packets_sent = 0;
    std::uint64_t probing_rounds = 0;
    std::size_t searches = 0;
    std::map<std::string, std::size_t> status_counts;
};

inline void to_json(json& j, const ecdf_point_t& p) { j = json::array({p.value, p.fraction}); }

inline void to_json(json& j, const campaign_stats_t& s) {
    j = json{{"cdf_rate", s.rate},
             {"cdf_rounds", s.rounds},
             {"cdf_trigger_rounds", s.trigger_rounds},
             {"cdf_refine_rounds", s.refine_rounds},
             {"packets_sent", s.packets_sent},
             {"probing_rounds", s.probing_rounds},
             {"searches", s.searches},
             {"status_counts", s.status_counts}};
}

inline campaign_stats_t campaign_stats(std::span<const run_report_t> reports) {
    if (reports.empty()) {
        throw std::invalid_argument("campaign_stats: need at least one report");
    }
    campaign_stats_t st;
    std::vector<double> rate, rounds, trigger, refine_rounds;
    for (const auto& r : reports) {
        st.packets_sent += r.packets_sent;
        st.probing_rounds += r.rounds;
        for (const auto& s : r.seeds) {
            if (!s.searched) {
                continue;
            }
            ++st.searches;
            ++st.status_counts[std::string(to_string(s.evidence.status))];
            rounds.push_back(s.evidence.rounds_used);
            if (s.evidence.trigger_rounds > 0) {
                trigger.push_back(s.evidence.trigger_rounds);
            }
            if (s.evidence.status != rate_search_status_t::failed) {
                rate.push_back(s.evidence.r_s);
                refine_rounds.push_back(static_cast<double>(s.refine_rounds));
            }
        }
    }
    st.rate = ecdf(std::move(rate));
    st.rounds = ecdf(std::move(rounds));
    st.trigger_rounds = ecdf(std::move(trigger));
    st.refine_rounds = ecdf(std::move(refine_rounds));
    return st;
}

} // namespace ltd
