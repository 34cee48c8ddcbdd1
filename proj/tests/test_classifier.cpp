#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace ltd;
using ltd_test::addr;

namespace {

// Aliases carry candidate loss >= 0.05, non-aliases none; every other feature is noise.
std::vector<labeled_pair_t> toy_dataset(std::size_t n, std::uint64_t seed) {
    ltd::rng_t rng(seed);
    std::vector<labeled_pair_t> out;
    for (std::size_t i = 0; i < n; ++i) {
        labeled_pair_t p;
        p.signature.seed = addr("10.0.0.1");
        p.signature.candidate = address_t::from_v4(0x0b000000u + static_cast<std::uint32_t>(i));
        for (auto& f : p.signature.features) f = uniform01(rng);
        p.label = i % 3 == 0;
        p.signature.features[loss_rate_c] = p.label ? uniform(rng, 0.05, 0.3) : 0.0;
        out.push_back(p);
    }
    return out;
}

forest_config_t small_forest(std::size_t trees = 50) {
    forest_config_t c;
    c.n_trees = trees;
    return c;
}

} // namespace

TEST(train, separable_toy_dataset_is_learned_exactly) {
    auto data = toy_dataset(300, 1);
    auto m = train(data, 7, small_forest());
    auto s = score(m, data);
    EXPECT_EQ(s.accuracy(), 1.0);
    EXPECT_EQ(m.metadata.n_samples, 300u);
    EXPECT_EQ(m.metadata.n_positive, 100u);
    EXPECT_EQ(m.metadata.dataset_hash, dataset_hash(data));
    for (const auto& t : m.trees) EXPECT_LE(t.depth(), 32u);
}

TEST(train, rejects_single_class_and_duplicates) {
    auto data = toy_dataset(30, 2);
    for (auto& p : data) p.label = false;
    EXPECT_THROW(train(data, 1, small_forest()), std::invalid_argument);
    data = toy_dataset(30, 2);
    data.push_back(data.front());
    EXPECT_THROW(train(data, 1, small_forest()), std::invalid_argument);
    EXPECT_THROW(train(std::span<const labeled_pair_t>{}, 1, small_forest()), std::invalid_argument);
}

TEST(train, deterministic_bytes_for_same_dataset_and_seed) {
    auto data = toy_dataset(200, 3);
    auto threaded = small_forest(40);
    threaded.threads = 4;
    auto serial = small_forest(40);
    serial.threads = 1;
    auto a = json(train(data, 11, threaded)).dump();
    auto b = json(train(data, 11, serial)).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, json(train(data, 12, serial)).dump());
}

TEST(train, depth_cap_is_honored) {
    ltd::rng_t rng(4);
    std::vector<feature_vector_t> x(400);
    std::vector<std::uint8_t> y(400);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (auto& f : x[i]) f = uniform01(rng);
        y[i] = static_cast<std::uint8_t>(rng() & 1); // pure noise grows deep trees
    }
    auto c = small_forest(10);
    c.max_depth = 3;
    auto m = train(x, y, 1, c);
    for (const auto& t : m.trees) EXPECT_LE(t.depth(), 3u);
}

TEST(classify, tie_is_non_alias) {
    model_t m;
    decision_tree_t yes, no;
    tree_node_t leaf;
    leaf.positive = 1.0;
    yes.nodes.push_back(leaf);
    leaf.positive = 0.0;
    no.nodes.push_back(leaf);
    m.trees = {yes, no};
    EXPECT_FALSE(classify(m, feature_vector_t{}));
    m.trees.push_back(yes);
    EXPECT_TRUE(classify(m, feature_vector_t{}));
    leaf.positive = 0.5;
    decision_tree_t even;
    even.nodes.push_back(leaf);
    EXPECT_FALSE(even.vote(feature_vector_t{}));
}

TEST(classify, schema_mismatch_is_an_error) {
    auto m = train(toy_dataset(60, 5), 1, small_forest(5));
    m.schema_version = "ltd-signature-v0";
    EXPECT_THROW(classify(m, feature_vector_t{}), std::invalid_argument);
    auto j = json(train(toy_dataset(60, 5), 1, small_forest(5)));
    j["schema_version"] = "other";
    EXPECT_THROW(classify(j.get<model_t>(), feature_vector_t{}), std::invalid_argument);
}

TEST(classify, idempotent_and_lossless_is_non_alias) {
    auto m = train(toy_dataset(300, 6), 2, small_forest());
    feature_vector_t lossless{0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0};
    EXPECT_FALSE(classify(m, lossless));
    EXPECT_EQ(classify(m, lossless), classify(m, lossless));
}

TEST(classify, persistence_round_trip_on_random_signatures) {
    auto m = train(toy_dataset(300, 7), 3, small_forest());
    auto path = ::testing::TempDir() + "ltd_model.json";
    {
        std::ofstream os(path);
        os << json(m).dump();
    }
    std::ifstream is(path);
    auto loaded = json::parse(is).get<model_t>();
    EXPECT_EQ(json(loaded).dump(), json(m).dump());
    ltd::rng_t rng(8);
    for (int i = 0; i < 1000; ++i) {
        feature_vector_t x;
        for (auto& f : x) f = uniform01(rng) * (i % 2 ? 0.2 : 1.0);
        ASSERT_EQ(classify(loaded, x), classify(m, x));
    }
    std::remove(path.c_str());
}

TEST(classify, monotone_in_candidate_loss_on_toy_model) {
    auto m = train(toy_dataset(300, 9), 4, small_forest(100));
    ltd::rng_t rng(10);
    for (int i = 0; i < 50; ++i) {
        feature_vector_t x;
        for (auto& f : x) f = uniform01(rng);
        double seed_loss = uniform(rng, 0.05, 0.3);
        x[loss_rate_s] = seed_loss;
        std::size_t prev = 0;
        for (int step = 0; step <= 20; ++step) {
            x[loss_rate_c] = seed_loss * step / 20.0;
            auto v = m.alias_votes(x);
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(model_json, rejects_malformed_documents) {
    auto j = json(train(toy_dataset(60, 11), 1, small_forest(3)));
    auto bad = j;
    bad["format"] = "something";
    EXPECT_THROW(bad.get<model_t>(), std::invalid_argument);
    bad = j;
    bad["trees"][0][0][2] = 999; // child index out of range
    EXPECT_THROW(bad.get<model_t>(), std::invalid_argument);
    bad = j;
    bad["feature_names"][0] = "renamed";
    EXPECT_THROW(bad.get<model_t>(), std::invalid_argument);
}

TEST(feature_importance, sums_to_one_and_ranks_separating_feature_first) {
    auto m = train(toy_dataset(300, 12), 5, small_forest());
    auto imp = feature_importance(m);
    ASSERT_EQ(imp.size(), feature_count);
    double sum = 0.0;
    for (std::size_t i = 0; i < imp.size(); ++i) {
        sum += imp[i].importance;
        if (i > 0) {
            EXPECT_GE(imp[i - 1].importance, imp[i].importance);
        }
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_EQ(imp[0].index, static_cast<std::size_t>(loss_rate_c));
    EXPECT_EQ(imp[0].feature, "loss_rate_c");
}

TEST(evaluate_splits, reports_means_over_splits) {
    auto data = toy_dataset(300, 13);
    auto ev = evaluate_splits(data, 4, 0.5, 1, small_forest(20));
    ASSERT_EQ(ev.splits.size(), 4u);
    for (const auto& s : ev.splits) EXPECT_EQ(s.tp + s.fp + s.tn + s.fn, 150u);
    EXPECT_EQ(ev.mean_precision, 1.0);
    EXPECT_EQ(ev.mean_recall, 1.0);
    EXPECT_THROW(evaluate_splits(data, 0, 0.5, 1), std::invalid_argument);
}

TEST(binary_scores, undefined_ratios_are_empty) {
    binary_scores_t s;
    s.tn = 5;
    EXPECT_FALSE(s.precision().has_value());
    EXPECT_FALSE(s.recall().has_value());
    EXPECT_EQ(s.accuracy(), 1.0);
}

TEST(dataset, jsonl_round_trip_and_hash) {
    auto data = toy_dataset(20, 14);
    data[3].source = label_source_t::hop_distance_rule;
    std::stringstream ss;
    write_dataset_jsonl(ss, data);
    auto back = read_dataset_jsonl(ss);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back[i].signature, data[i].signature);
        EXPECT_EQ(back[i].label, data[i].label);
        EXPECT_EQ(back[i].source, data[i].source);
    }
    EXPECT_EQ(dataset_hash(back), dataset_hash(data));
    data[0].label = !data[0].label;
    EXPECT_NE(dataset_hash(back), dataset_hash(data));
}

TEST(dataset, hop_distance_rule_needs_more_than_six_hops) {
    route_t route;
    for (int i = 1; i <= 9; ++i) route.push_back(addr("10.0.0." + std::to_string(i)));
    route[4] = std::nullopt;
    std::vector<route_t> routes{route};
    auto pairs = hop_distance_pairs(routes);
    // Index gaps of 7 and 8 only: (1,8), (1,9), (2,9).
    std::set<std::pair<address_t, address_t>> expected{{addr("10.0.0.1"), addr("10.0.0.8")},
                                                       {addr("10.0.0.1"), addr("10.0.0.9")},
                                                       {addr("10.0.0.2"), addr("10.0.0.9")}};
    std::set<std::pair<address_t, address_t>> got(pairs.begin(), pairs.end());
    EXPECT_EQ(got, expected);
    for (const auto& [a, b] : pairs) EXPECT_GT(*hop_separation(route, a, b), 6u);
    EXPECT_EQ(hop_separation(route, addr("10.0.0.1"), addr("10.0.0.7")), 6u);
    auto lp = label_by_hop_distance(signature_t{});
    EXPECT_FALSE(lp.label);
    EXPECT_EQ(lp.source, label_source_t::hop_distance_rule);
}

TEST(dataset, generated_pairs_are_labeled_by_ground_truth) {
    dataset_spec_t spec;
    spec.topology.n_routers = 6;
    spec.topology.min_interfaces = 3;
    spec.topology.max_interfaces = 4;
    spec.topology.rho_min = 256;
    spec.n_topologies = 2;
    auto data = generate_dataset(spec, 5);
    ASSERT_FALSE(data.empty());
    std::size_t pos = 0;
    for (const auto& p : data) {
        pos += p.label;
        EXPECT_EQ(p.source, label_source_t::ground_truth);
        // Address plan: 10.<block>.<host>, host = router * 16 + interface + 1.
        auto router_of = [](const address_t& a) {
            auto b = a.bytes();
            return std::pair{b[1], ((b[2] << 8 | b[3]) - 1) >> 4};
        };
        bool same_router = router_of(p.signature.seed) == router_of(p.signature.candidate);
        EXPECT_EQ(p.label, same_router) << p.signature.seed.str() << " " << p.signature.candidate.str();
    }
    EXPECT_GT(pos, 0u);
    EXPECT_LE(static_cast<double>(data.size() - pos), 5.0 * static_cast<double>(pos));
    EXPECT_EQ(dataset_hash(data), dataset_hash(generate_dataset(spec, 5)));
}
