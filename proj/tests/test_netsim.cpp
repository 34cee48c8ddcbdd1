#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "test_util.hpp"

using namespace ltd;
using namespace ltd::netsim;
using ltd_test::addr;
using ltd_test::chain_topology;

namespace {

sim_topology_t single_router(double rho, double depth, std::size_t ifaces = 1,
                             limiter_mode_t mode = limiter_mode_t::shared) {
    return chain_topology(1, ifaces, rho, depth, mode);
}

probe_task_t task(const address_t& a, rate_t rate, double seconds = 5.0) {
    return probe_task_t{a, rate, from_seconds(seconds), timestamp_t{0}, std::nullopt};
}

} // namespace

TEST(simulate, demand_below_refill_is_lossless) {
    auto topo = single_router(100, 100);
    std::vector<probe_task_t> ts{task(addr("192.0.2.1"), 64)};
    auto r = simulate(topo, ts);
    EXPECT_DOUBLE_EQ(loss_rate(r.at(addr("192.0.2.1"))), 0.0);
}

TEST(simulate, double_the_refill_rate_loses_half_in_steady_state) {
    auto topo = single_router(1000, 1000);
    engine_options_t o;
    o.keep_emission_log = true;
    o.log_outcomes = true;
    sim_engine_t engine(topo, o);
    std::vector<probe_task_t> ts{task(addr("192.0.2.1"), 2000)};
    auto r = engine.execute_round(ts, safety_policy_t{});
    const auto& tr = r.at(addr("192.0.2.1"));
    ASSERT_EQ(tr.sent(), 10000u);

    // The full bucket absorbs the first second; after that half the probes find no token.
    std::size_t lost = 0, n = 0;
    for (std::size_t i = 2000; i < tr.sent(); ++i, ++n) lost += tr.probes[i].received ? 0 : 1;
    EXPECT_NEAR(static_cast<double>(lost) / static_cast<double>(n), 0.5, 0.05);
    EXPECT_NEAR(loss_rate(tr), ltd_test::analytic_loss(1000, 1000, 2000), 0.01);

    std::size_t limited = 0;
    for (const auto& e : engine.emission_log().events()) {
        if (e.kind == emission_kind_t::drop && e.detail.rfind("rate limited", 0) == 0) ++limited;
    }
    EXPECT_EQ(limited, tr.lost());
    EXPECT_EQ(engine.emission_log().count(emission_kind_t::reply), tr.sent() - tr.lost());
}

// Same 99:1 split of rates as 990+10 pps, at twice the refill rate so the bucket runs dry.
TEST(simulate, shared_bucket_couples_aliases_per_interface_does_not) {
    std::vector<probe_task_t> ts{task(addr("192.0.2.1"), 1980), task(addr("192.0.2.2"), 20)};
    ts[1].start_at = timestamp_t{ns_per_second / 40};

    auto shared = simulate(single_router(1000, 1000, 2, limiter_mode_t::shared), ts);
    auto split = simulate(single_router(1000, 1000, 2, limiter_mode_t::per_interface), ts);
    EXPECT_GT(loss_rate(shared.at(addr("192.0.2.1"))), 0.3);
    EXPECT_GT(loss_rate(shared.at(addr("192.0.2.2"))), 0.2);
    EXPECT_GT(loss_rate(split.at(addr("192.0.2.1"))), 0.3);
    EXPECT_DOUBLE_EQ(loss_rate(split.at(addr("192.0.2.2"))), 0.0);

    auto corr = align_and_correlate(shared.at(addr("192.0.2.1")), shared.at(addr("192.0.2.2")));
    EXPECT_GT(corr.coefficient, 0.0);
}

TEST(simulate, replies_never_exceed_tokens) {
    ltd::rng_t rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        double rho = std::round(log_uniform(rng, 50, 5000));
        double depth = std::max(1.0, std::round(rho * uniform(rng, 0.1, 1.0)));
        auto topo = single_router(rho, depth, 3);
        sim_engine_t engine(topo);
        std::vector<probe_task_t> ts;
        for (int k = 0; k < 3; ++k) {
            ts.push_back(task(addr("192.0.2." + std::to_string(k + 1)), static_cast<rate_t>(1 + bounded(rng, 4000))));
            ts.back().start_at = timestamp_t{static_cast<std::int64_t>(bounded(rng, 1'000'000))};
        }
        auto r = engine.execute_round(ts, safety_policy_t{});
        std::uint64_t replies = 0;
        for (const auto& [a, tr] : r) replies += tr.sent() - tr.lost();
        auto stats = engine.bucket_stats();
        ASSERT_EQ(stats.size(), 1u);
        EXPECT_EQ(stats[0].replies, replies);
        double budget = depth + rho * to_seconds(stats[0].last_use - stats[0].first_use);
        EXPECT_LE(static_cast<double>(stats[0].replies), budget + 1e-6);
    }
}

TEST(simulate, identical_inputs_give_identical_traces) {
    topology_spec_t spec;
    spec.n_routers = 20;
    spec.loss_max = 0.05;
    auto topo = generate_topology(spec, 3);
    auto ifaces = topo.interfaces();
    std::vector<probe_task_t> ts;
    for (std::size_t i = 0; i < 10; ++i) ts.push_back(task(ifaces[i * 3], 300));
    auto a = simulate(topo, ts);
    auto b = simulate(topo, ts);
    EXPECT_EQ(a, b);
    std::reverse(ts.begin(), ts.end());
    EXPECT_EQ(simulate(topo, ts), a);
}

TEST(simulate, unknown_target_names_the_address) {
    auto topo = single_router(100, 100);
    std::vector<probe_task_t> ts{task(addr("203.0.113.9"), 10)};
    try {
        simulate(topo, ts);
        FAIL() << "expected unknown_target";
    } catch (const unknown_target& e) {
        EXPECT_NE(std::string(e.what()).find("203.0.113.9"), std::string::npos);
    }
}

TEST(simulate, link_loss_applies_without_limiting) {
    auto topo = single_router(1e6, 1e6);
    topo.links[0].loss = 0.2;
    std::vector<probe_task_t> ts{task(addr("192.0.2.1"), 2000)};
    auto r = simulate(topo, ts);
    // Request and reply each cross the link once.
    EXPECT_NEAR(loss_rate(r.at(addr("192.0.2.1"))), 1.0 - 0.8 * 0.8, 0.02);
}

TEST(simulate, request_jitter_stays_within_bound) {
    auto rtts = [](double jitter_ms) {
        auto topo = single_router(1e6, 1e6);
        topo.jitter_ms = jitter_ms;
        engine_options_t o;
        o.keep_emission_log = true;
        o.log_outcomes = true;
        sim_engine_t engine(topo, o);
        std::vector<probe_task_t> ts{task(addr("192.0.2.1"), 500, 1.0)};
        auto r = engine.execute_round(ts, safety_policy_t{});
        std::set<std::int64_t> out;
        for (const auto& e : engine.emission_log().events()) {
            if (e.kind == emission_kind_t::reply) {
                out.insert((e.ts - r.at(addr("192.0.2.1")).probes[e.seq].sent_at).count());
            }
        }
        return out;
    };
    auto fixed = rtts(0.0);
    ASSERT_EQ(fixed.size(), 1u);
    EXPECT_EQ(*fixed.begin(), 4'000'000); // one 2 ms link, both ways
    auto jittered = rtts(1.0);
    EXPECT_GT(jittered.size(), 100u);
    EXPECT_GE(*jittered.begin(), 4'000'000);
    EXPECT_LT(*jittered.rbegin(), 5'000'000);

    auto topo = single_router(100, 100);
    topo.jitter_ms = 0.25;
    EXPECT_EQ(json(topo).get<sim_topology_t>(), topo);
    topo.jitter_ms = -1.0;
    EXPECT_THROW(validate(topo), std::invalid_argument);
}

TEST(route_trace, three_hop_path) {
    auto topo = chain_topology(3, 2, 1000, 1000);
    sim_engine_t engine(topo);
    auto route = engine.route_trace(addr("192.0.2.34"), 0);
    ASSERT_EQ(route.size(), 3u);
    EXPECT_EQ(route[0], addr("192.0.2.1"));
    EXPECT_EQ(route[1], addr("192.0.2.17"));
    EXPECT_EQ(route[2], addr("192.0.2.34"));
}

TEST(route_trace, first_hop_target) {
    auto topo = chain_topology(3, 2, 1000, 1000);
    sim_engine_t engine(topo);
    auto route = engine.route_trace(addr("192.0.2.2"), 0);
    ASSERT_EQ(route.size(), 1u);
    EXPECT_EQ(route[0], addr("192.0.2.2"));
}

TEST(route_trace, silent_middle_hop_is_a_gap) {
    auto topo = chain_topology(3, 2, 1000, 1000);
    topo.routers[1].responsive = false;
    sim_engine_t engine(topo);
    auto route = engine.route_trace(addr("192.0.2.33"), 0);
    ASSERT_EQ(route.size(), 3u);
    EXPECT_EQ(route[0], addr("192.0.2.1"));
    EXPECT_FALSE(route[1].has_value());
    EXPECT_EQ(route[2], addr("192.0.2.33"));
}

TEST(route_trace, flow_identifier_picks_among_equal_cost_parents) {
    // r2 reachable through r0 or r1, both one hop from the vantage point.
    sim_topology_t t;
    for (int i = 0; i < 3; ++i) {
        sim_router_t r;
        r.id = "r" + std::to_string(i);
        r.interfaces = {addr("192.0.2." + std::to_string(i + 1))};
        t.routers.push_back(r);
    }
    t.links = {{"vp", "r0", 1, 0}, {"vp", "r1", 1, 0}, {"r0", "r2", 1, 0}, {"r1", "r2", 1, 0}};
    sim_engine_t engine(t);
    std::set<address_t> first_hops;
    for (flow_id_t f = 0; f < 64; ++f) {
        auto a = engine.route_trace(addr("192.0.2.3"), f);
        EXPECT_EQ(a, engine.route_trace(addr("192.0.2.3"), f));
        first_hops.insert(*a[0]);
    }
    EXPECT_EQ(first_hops.size(), 2u);
}

TEST(topology, rejects_unreachable_and_malformed) {
    auto t = chain_topology(2, 1, 100, 100);
    t.links.pop_back();
    EXPECT_THROW(validate(t), std::invalid_argument);
    t = chain_topology(2, 1, 100, 100);
    t.routers[1].interfaces = t.routers[0].interfaces;
    EXPECT_THROW(validate(t), std::invalid_argument);
    t = chain_topology(2, 1, 100, 100);
    t.links[0].loss = 1.0;
    EXPECT_THROW(validate(t), std::invalid_argument);
}

TEST(ground_truth, router_blocks) {
    auto one = chain_topology(1, 3, 100, 100);
    auto p = ground_truth(one);
    ASSERT_EQ(p.sets.size(), 1u);
    EXPECT_EQ(p.sets[0].members.size(), 3u);

    auto ten = chain_topology(10, 4, 100, 100);
    p = ground_truth(ten);
    ASSERT_EQ(p.sets.size(), 10u);
    for (const auto& s : p.sets) EXPECT_EQ(s.members.size(), 4u);
}

TEST(ground_truth, topology_loaded_from_file) {
    topology_spec_t spec;
    spec.n_routers = 12;
    auto topo = generate_topology(spec, 21);
    auto path = ::testing::TempDir() + "ltd_topology.json";
    {
        std::ofstream os(path);
        os << json(topo).dump(2);
    }
    std::ifstream is(path);
    auto j = json::parse(is);
    auto loaded = j.get<sim_topology_t>();
    EXPECT_EQ(loaded, topo);

    auto p = ground_truth(loaded);
    ASSERT_EQ(p.sets.size(), j.at("routers").size());
    std::set<std::set<std::string>> from_file, from_truth;
    for (const auto& r : j.at("routers")) {
        from_file.insert(r.at("interfaces").get<std::set<std::string>>());
    }
    for (const auto& s : p.sets) {
        std::set<std::string> m;
        for (const auto& a : s.members) m.insert(a.str());
        from_truth.insert(m);
    }
    EXPECT_EQ(from_file, from_truth);
    std::remove(path.c_str());
}

TEST(generate_topology, single_router_with_three_interfaces) {
    topology_spec_t spec;
    spec.n_routers = 1;
    spec.min_interfaces = 3;
    spec.max_interfaces = 3;
    auto t = generate_topology(spec, 1);
    ASSERT_EQ(t.routers.size(), 1u);
    EXPECT_EQ(t.routers[0].interfaces.size(), 3u);
}

TEST(generate_topology, deterministic_hash) {
    topology_spec_t spec;
    EXPECT_EQ(topology_hash(generate_topology(spec, 42)), topology_hash(generate_topology(spec, 42)));
    EXPECT_NE(topology_hash(generate_topology(spec, 42)), topology_hash(generate_topology(spec, 43)));
}

TEST(generate_topology, default_rho_median_below_2048) {
    auto t = generate_topology(topology_spec_t{}, 8);
    ASSERT_EQ(t.routers.size(), 100u);
    std::vector<double> rho;
    for (const auto& r : t.routers) {
        rho.push_back(r.bucket.rate);
        EXPECT_GE(r.bucket.depth, std::floor(r.bucket.rate * 0.1));
        EXPECT_LE(r.bucket.depth, r.bucket.rate);
    }
    std::sort(rho.begin(), rho.end());
    EXPECT_LT((rho[49] + rho[50]) / 2.0, 2048.0);
}

TEST(generate_topology, degenerate_specs_rejected) {
    topology_spec_t spec;
    spec.n_routers = 0;
    EXPECT_THROW(generate_topology(spec, 1), std::invalid_argument);
    spec = {};
    spec.min_interfaces = 4;
    spec.max_interfaces = 3;
    EXPECT_THROW(generate_topology(spec, 1), std::invalid_argument);
    spec = {};
    spec.loss_max = 1.0;
    EXPECT_THROW(generate_topology(spec, 1), std::invalid_argument);
}

TEST(generate_topology, spec_json_round_trip_and_addresses_unique) {
    topology_spec_t spec;
    spec.n_routers = 300;
    spec.family = address_family_t::v6;
    spec.address_block = 7;
    auto back = json(spec).get<topology_spec_t>();
    EXPECT_EQ(json(back).dump(), json(spec).dump());
    auto t = generate_topology(spec, 2);
    auto all = t.interfaces();
    EXPECT_EQ(std::set<address_t>(all.begin(), all.end()).size(), all.size());
    EXPECT_TRUE(all.front().is_v6());
    EXPECT_NO_THROW(validate(t));
}
