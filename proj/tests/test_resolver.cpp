#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ltd;
using ltd_test::addr;

namespace {

class resolver_test : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dataset_spec_t ds;
        ds.topology.n_routers = 10;
        ds.topology.min_interfaces = 3;
        ds.topology.max_interfaces = 6;
        ds.topology.rho_min = 256;
        ds.topology.loss_max = 0.002;
        ds.n_topologies = 4;
        auto data = generate_dataset(ds, 31);
        forest_config_t fc;
        fc.n_trees = 100;
        model_ = new model_t(train(data, 31, fc));
    }
    static void TearDownTestSuite() {
        delete model_;
        model_ = nullptr;
    }

    static netsim::sim_topology_t three_by_three(netsim::limiter_mode_t mode) {
        auto t = ltd_test::chain_topology(3, 3, 1000, 500, mode);
        t.routers[0].bucket = {600, 300};
        t.routers[2].bucket = {1500, 750};
        return t;
    }

    static std::set<address_t> all_of(const netsim::sim_topology_t& t) {
        auto v = t.interfaces();
        return {v.begin(), v.end()};
    }

    static model_t* model_;
};

model_t* resolver_test::model_ = nullptr;

// One tree: alias iff the candidate lost more than 5% of its probes.
model_t loss_threshold_model() {
    decision_tree_t t;
    tree_node_t root, no, yes;
    root.feature = static_cast<int>(loss_rate_c);
    root.threshold = 0.05;
    root.left = 1;
    root.right = 2;
    yes.positive = 1.0;
    t.nodes = {root, no, yes};
    model_t m;
    m.trees = {t};
    return m;
}

} // namespace

TEST_F(resolver_test, single_address_is_a_singleton_without_probing) {
    auto topo = ltd_test::chain_topology(1, 1, 1000, 1000);
    netsim::sim_engine_t engine(topo);
    auto r = resolve({addr("192.0.2.1")}, *model_, engine, {}, 1);
    ASSERT_EQ(r.partition.sets.size(), 1u);
    EXPECT_EQ(r.partition.sets[0].members, std::set<address_t>{addr("192.0.2.1")});
    EXPECT_EQ(engine.rounds(), 0u);
    ASSERT_EQ(r.report.seeds.size(), 1u);
    EXPECT_FALSE(r.report.seeds[0].searched);
}

TEST_F(resolver_test, three_routers_with_shared_buckets_match_ground_truth) {
    auto topo = three_by_three(netsim::limiter_mode_t::shared);
    netsim::sim_engine_t engine(topo);
    auto targets = all_of(topo);
    auto r = resolve(targets, *model_, engine, {}, 5);
    EXPECT_NO_THROW(validate(r.partition, &targets));
    EXPECT_EQ(json(r.partition).dump(), json(netsim::ground_truth(topo)).dump());
    EXPECT_LE(r.report.seeds.size(), targets.size());
    EXPECT_EQ(r.report.rounds, engine.rounds());
    EXPECT_EQ(r.report.packets_sent, engine.packets_sent());
}

TEST_F(resolver_test, per_interface_limiters_give_singletons) {
    auto topo = three_by_three(netsim::limiter_mode_t::per_interface);
    netsim::sim_engine_t engine(topo);
    auto targets = all_of(topo);
    auto r = resolve(targets, *model_, engine, {}, 5);
    EXPECT_NO_THROW(validate(r.partition, &targets));
    EXPECT_EQ(r.partition.sets.size(), targets.size());
}

TEST_F(resolver_test, identical_seeds_give_identical_output) {
    netsim::topology_spec_t spec;
    spec.n_routers = 8;
    spec.rho_min = 256;
    auto topo = netsim::generate_topology(spec, 77);
    auto targets = all_of(topo);
    netsim::sim_engine_t e1(topo), e2(topo);
    auto a = resolve(targets, *model_, e1, {}, 9);
    auto b = resolve(targets, *model_, e2, {}, 9);
    EXPECT_EQ(json(a.partition).dump(), json(b.partition).dump());
    EXPECT_EQ(json(a.report).dump(), json(b.report).dump());
    EXPECT_NO_THROW(validate(a.partition, &targets));
}

TEST_F(resolver_test, report_round_trips_through_json) {
    auto topo = three_by_three(netsim::limiter_mode_t::shared);
    netsim::sim_engine_t engine(topo);
    auto r = resolve(all_of(topo), *model_, engine, {}, 3);
    auto back = json(r.report).get<run_report_t>();
    EXPECT_EQ(json(back).dump(), json(r.report).dump());
}

TEST_F(resolver_test, rejects_empty_input) {
    auto topo = ltd_test::chain_topology(1, 1, 1000, 1000);
    netsim::sim_engine_t engine(topo);
    EXPECT_THROW(resolve({}, *model_, engine, {}, 1), std::invalid_argument);
}

TEST(resolve, engine_failure_keeps_partial_partition) {
    // Lossless targets make every rate search run its full 10-round ramp and fail.
    ltd_test::scripted_engine_t e([](const probe_task_t&, std::uint32_t) { return false; });
    for (int i = 1; i <= 3; ++i) e.routes[addr("10.0.0." + std::to_string(i))] = {addr("10.0.0." + std::to_string(i))};
    for (std::uint64_t c = 12; c < 100; ++c) e.failing_rounds.insert(c);
    std::set<address_t> targets{addr("10.0.0.1"), addr("10.0.0.2"), addr("10.0.0.3")};
    try {
        resolve(targets, loss_threshold_model(), e, {}, 4);
        FAIL() << "expected resolve_error";
    } catch (const resolve_error& err) {
        ASSERT_EQ(err.partial().sets.size(), 1u);
        EXPECT_EQ(err.partial().sets[0].members.size(), 1u);
        EXPECT_NO_THROW(validate(err.partial()));
        ASSERT_EQ(err.report().seeds.size(), 1u);
        EXPECT_EQ(err.report().seeds[0].evidence.status, rate_search_status_t::failed);
        EXPECT_EQ(err.report().rounds, 12u); // ten for the first seed, two before the failure
    }
}

TEST(refine, lone_seed_takes_two_rounds_without_probing) {
    ltd_test::scripted_engine_t e([](const probe_task_t&, std::uint32_t) { return false; });
    ltd::rng_t rng(1);
    auto s = addr("10.0.0.1");
    auto r = refine({s, {s}}, s, 512, {}, loss_threshold_model(), e, {}, rng);
    EXPECT_EQ(r.rounds, 2u);
    EXPECT_FALSE(r.capped);
    EXPECT_EQ(r.set.members, std::set<address_t>{s});
    EXPECT_EQ(e.rounds(), 0u);
}

TEST(refine, never_adds_and_stops_on_two_equal_iterations) {
    // Odd last octets keep losing; even ones never do.
    ltd_test::scripted_engine_t e([](const probe_task_t& t, std::uint32_t k) {
        return t.target.bytes()[3] % 2 == 1 && k % 5 == 0;
    });
    ltd::rng_t rng(2);
    auto s = addr("10.0.0.1");
    alias_set_t initial{s, {s, addr("10.0.0.2"), addr("10.0.0.3"), addr("10.0.0.4"), addr("10.0.0.5")}};
    auto r = refine(initial, s, 512, {}, loss_threshold_model(), e, {}, rng);
    EXPECT_EQ(r.set.members, (std::set<address_t>{s, addr("10.0.0.3"), addr("10.0.0.5")}));
    EXPECT_EQ(r.rounds, 2u);
    for (const auto& h : r.history) {
        EXPECT_TRUE(std::includes(initial.members.begin(), initial.members.end(), h.begin(), h.end()));
    }
    EXPECT_THROW(refine({addr("10.0.0.9"), {addr("10.0.0.9")}}, s, 512, {}, loss_threshold_model(), e, {}, rng),
                 std::invalid_argument);
}

TEST(refine, capped_when_the_set_keeps_shrinking) {
    // Member i stops losing from the i-th round on, so each round drops one more member.
    std::uint64_t round = 0;
    ltd_test::scripted_engine_t e([&](const probe_task_t& t, std::uint32_t k) {
        return t.target.bytes()[3] > round && k % 5 == 0;
    });
    e.during_round = [&] { ++round; };
    ltd::rng_t rng(3);
    auto s = addr("10.0.0.100");
    alias_set_t initial{s, {s}};
    for (int i = 1; i <= 12; ++i) initial.members.insert(addr("10.0.0." + std::to_string(i)));
    resolver_config_t cfg;
    auto r = refine(initial, s, 512, {}, loss_threshold_model(), e, cfg, rng);
    EXPECT_TRUE(r.capped);
    EXPECT_EQ(r.rounds, 10u);
    EXPECT_EQ(r.history.size(), 10u);
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        EXPECT_LT(r.history[i].size(), r.history[i - 1].size());
    }
}

TEST(resolver_config, json_round_trip) {
    resolver_config_t c;
    c.max_refine_rounds = 4;
    c.rate.start_rate = 128;
    c.signature.batch_size = 20;
    c.policy.max_aggregate_rate = 20000;
    auto back = json(c).get<resolver_config_t>();
    EXPECT_EQ(json(back).dump(), json(c).dump());
    EXPECT_EQ(back.max_refine_rounds, 4u);
}
