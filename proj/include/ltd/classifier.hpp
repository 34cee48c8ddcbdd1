#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ltd/core.hpp"
#include "ltd/random.hpp"

namespace ltd {

// ---------------------------------------------------------------------------
// Labeled pairs

enum class label_source_t { ground_truth, hop_distance_rule };

inline std::string_view to_string(label_source_t s) {
    return s == label_source_t::ground_truth ? "ground_truth" : "hop_distance_rule";
}

inline label_source_t parse_label_source(std::string_view s) {
    if (s == "ground_truth") return label_source_t::ground_truth;
    if (s == "hop_distance_rule") return label_source_t::hop_distance_rule;
    throw std::invalid_argument("unknown label source: " + std::string(s));
}

struct labeled_pair_t {
    signature_t signature;
    bool label = false;
    label_source_t source = label_source_t::ground_truth;

    friend bool operator==(const labeled_pair_t&, const labeled_pair_t&) = default;
};

inline void to_json(json& j, const labeled_pair_t& p) {
    j = json{{"signature", p.signature}, {"label", p.label}, {"source", to_string(p.source)}};
}

inline void from_json(const json& j, labeled_pair_t& p) {
    p.signature = j.at("signature").get<signature_t>();
    p.label = j.at("label").get<bool>();
    p.source = parse_label_source(j.value("source", std::string("ground_truth")));
}

inline void write_dataset_jsonl(std::ostream& os, std::span<const labeled_pair_t> data) {
    for (const auto& p : data) {
        os << json(p).dump() << '\n';
    }
}

inline std::vector<labeled_pair_t> read_dataset_jsonl(std::istream& is) {
    std::vector<labeled_pair_t> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        out.push_back(json::parse(line).get<labeled_pair_t>());
    }
    return out;
}

// FNV-1a over the canonical JSONL encoding.
inline std::string dataset_hash(std::span<const labeled_pair_t> data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : data) {
        auto s = json(p).dump();
        s.push_back('\n');
        for (unsigned char ch : s) {
            h = (h ^ ch) * 0x100000001b3ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Decision trees

struct tree_node_t {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double weight = 0.0;   // bootstrap-weighted sample count
    double impurity = 0.0; // Gini
    double positive = 0.0; // weighted fraction of alias samples

    bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const tree_node_t&, const tree_node_t&) = default;
};

struct decision_tree_t {
    std::vector<tree_node_t> nodes;

    const tree_node_t& leaf_for(const feature_vector_t& x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                             ? nodes[i].left
                                             : nodes[i].right);
        }
        return nodes[i];
    }

    // Leaf majority; an evenly split leaf votes non-alias.
    bool vote(const feature_vector_t& x) const { return leaf_for(x).positive > 0.5; }

    std::size_t depth() const {
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        std::size_t best = 0;
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[i].is_leaf()) {
                stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
                stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
            }
        }
        return best;
    }

    friend bool operator==(const decision_tree_t&, const decision_tree_t&) = default;
};

struct forest_config_t {
    std::size_t n_trees = 500;
    std::size_t max_features = 0; // 0 = floor(sqrt(feature_count))
    std::size_t max_depth = 32;
    std::size_t min_samples_split = 2;
    unsigned threads = 0; // 0 = hardware concurrency

    std::size_t features_per_split() const {
        if (max_features != 0) {
            return std::min(max_features, feature_count);
        }
        return static_cast<std::size_t>(std::sqrt(static_cast<double>(feature_count)));
    }
};

inline void to_json(json& j, const forest_config_t& c) {
    j = json{{"n_trees", c.n_trees},
             {"max_features", c.features_per_split()},
             {"max_depth", c.max_depth},
             {"min_samples_split", c.min_samples_split}};
}

inline void from_json(const json& j, forest_config_t& c) {
    c = forest_config_t{};
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_features = j.value("max_features", c.max_features);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
}

namespace detail {

inline double gini(double pos, double total) {
    if (total <= 0.0) {
        return 0.0;
    }
    double p = pos / total;
    return 2.0 * p * (1.0 - p);
}

class tree_builder_t {
public:
    tree_builder_t(std::span<const feature_vector_t> x, std::span<const std::uint8_t> y,
                   const forest_config_t& cfg, rng_t& rng)
        : x_(x), y_(y), cfg_(cfg), rng_(rng) {}

    decision_tree_t build(std::vector<std::pair<std::size_t, double>> samples) {
        tree_.nodes.clear();
        grow(samples, 0);
        return std::move(tree_);
    }

private:
    struct split_t {
        int feature = -1;
        double threshold = 0.0;
        double score = 0.0; // weighted child impurity, lower is better
    };

    std::int32_t grow(std::vector<std::pair<std::size_t, double>>& samples, std::size_t depth) {
        double w = 0.0, pos = 0.0;
        for (const auto& [i, wi] : samples) {
            w += wi;
            pos += y_[i] ? wi : 0.0;
        }
        auto id = static_cast<std::int32_t>(tree_.nodes.size());
        tree_node_t node;
        node.weight = w;
        node.positive = w > 0.0 ? pos / w : 0.0;
        node.impurity = gini(pos, w);
        tree_.nodes.push_back(node);

        if (node.impurity == 0.0 || depth >= cfg_.max_depth || samples.size() < cfg_.min_samples_split) {
            return id;
        }
        auto split = best_split(samples);
        if (split.feature < 0) {
            return id;
        }
        std::vector<std::pair<std::size_t, double>> left, right;
        for (const auto& s : samples) {
            (x_[s.first][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        auto l = grow(left, depth + 1);
        auto r = grow(right, depth + 1);
        auto& n = tree_.nodes[static_cast<std::size_t>(id)];
        n.feature = split.feature;
        n.threshold = split.threshold;
        n.left = l;
        n.right = r;
        return id;
    }

    // Features are visited in random order until max_features non-constant ones have been
    // evaluated, so a node is never left unsplit only because the drawn features were constant.
    split_t best_split(const std::vector<std::pair<std::size_t, double>>& samples) {
        std::vector<std::size_t> order(feature_count);
        for (std::size_t f = 0; f < feature_count; ++f) {
            order[f] = f;
        }
        shuffle(order, rng_);

        double total_w = 0.0, total_pos = 0.0;
        for (const auto& [i, w] : samples) {
            total_w += w;
            total_pos += y_[i] ? w : 0.0;
        }

        split_t best;
        std::size_t evaluated = 0;
        std::vector<std::pair<double, std::size_t>> col(samples.size());
        for (auto f : order) {
            if (evaluated >= cfg_.features_per_split()) {
                break;
            }
            for (std::size_t k = 0; k < samples.size(); ++k) {
                col[k] = {x_[samples[k].first][f], k};
            }
            std::sort(col.begin(), col.end());
            if (col.front().first == col.back().first) {
                continue;
            }
            ++evaluated;
            double lw = 0.0, lpos = 0.0;
            for (std::size_t k = 0; k + 1 < col.size(); ++k) {
                const auto& s = samples[col[k].second];
                lw += s.second;
                lpos += y_[s.first] ? s.second : 0.0;
                if (col[k].first == col[k + 1].first) {
                    continue;
                }
                double rw = total_w - lw;
                double rpos = total_pos - lpos;
                double score = lw * gini(lpos, lw) + rw * gini(rpos, rw);
                if (best.feature < 0 || score < best.score) {
                    best.feature = static_cast<int>(f);
                    best.score = score;
                    best.threshold = col[k].first + (col[k + 1].first - col[k].first) / 2.0;
                    if (!(best.threshold < col[k + 1].first)) {
                        best.threshold = col[k].first;
                    }
                }
            }
        }
        return best;
    }

    std::span<const feature_vector_t> x_;
    std::span<const std::uint8_t> y_;
    const forest_config_t& cfg_;
    rng_t& rng_;
    decision_tree_t tree_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Model

inline constexpr std::string_view model_format_version = "ltd-forest-v1";

struct model_metadata_t {
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::string split = "all";
    std::size_t n_samples = 0;
    std::size_t n_positive = 0;

    friend bool operator==(const model_metadata_t&, const model_metadata_t&) = default;
};

struct model_t {
    std::string schema_version{feature_schema_version};
    forest_config_t config;
    model_metadata_t metadata;
    std::vector<decision_tree_t> trees;

    std::size_t alias_votes(const feature_vector_t& x) const {
        std::size_t v = 0;
        for (const auto& t : trees) {
            v += t.vote(x) ? 1 : 0;
        }
        return v;
    }
};

inline void to_json(json& j, const model_metadata_t& m) {
    j = json{{"dataset_hash", m.dataset_hash},
             {"seed", m.seed},
             {"split", m.split},
             {"n_samples", m.n_samples},
             {"n_positive", m.n_positive}};
}

inline void from_json(const json& j, model_metadata_t& m) {
    m.dataset_hash = j.value("dataset_hash", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.split = j.value("split", std::string{"all"});
    m.n_samples = j.value("n_samples", std::size_t{0});
    m.n_positive = j.value("n_positive", std::size_t{0});
}

// Nodes are stored as [feature, threshold, left, right, weight, impurity, positive].
inline void to_json(json& j, const model_t& m) {
    json trees = json::array();
    for (const auto& t : m.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes) {
            nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.weight, n.impurity, n.positive}));
        }
        trees.push_back(std::move(nodes));
    }
    json names = json::array();
    for (auto n : feature_names) {
        names.push_back(n);
    }
    j = json{{"format", model_format_version},
             {"schema_version", m.schema_version},
             {"feature_names", std::move(names)},
             {"config", m.config},
             {"metadata", m.metadata},
             {"trees", std::move(trees)}};
}

inline void from_json(const json& j, model_t& m) {
    if (j.value("format", std::string{}) != model_format_version) {
        throw std::invalid_argument("model: unsupported format " + j.value("format", std::string{"<none>"}));
    }
    m.schema_version = j.at("schema_version").get<std::string>();
    if (m.schema_version != feature_schema_version) {
        throw std::invalid_argument("model: feature schema mismatch: " + m.schema_version);
    }
    if (j.contains("feature_names")) {
        const auto& names = j.at("feature_names");
        if (names.size() != feature_count) {
            throw std::invalid_argument("model: expected " + std::to_string(feature_count) + " feature names");
        }
        for (std::size_t i = 0; i < feature_count; ++i) {
            if (names.at(i).get<std::string>() != feature_names[i]) {
                throw std::invalid_argument("model: feature " + std::to_string(i) + " is " +
                                            names.at(i).get<std::string>() + ", expected " +
                                            std::string(feature_names[i]));
            }
        }
    }
    m.config = j.at("config").get<forest_config_t>();
    m.metadata = j.at("metadata").get<model_metadata_t>();
    m.trees.clear();
    for (const auto& jt : j.at("trees")) {
        decision_tree_t t;
        for (const auto& jn : jt) {
            tree_node_t n;
            n.feature = jn.at(0).get<int>();
            n.threshold = jn.at(1).get<double>();
            n.left = jn.at(2).get<std::int32_t>();
            n.right = jn.at(3).get<std::int32_t>();
            n.weight = jn.at(4).get<double>();
            n.impurity = jn.at(5).get<double>();
            n.positive = jn.at(6).get<double>();
            auto limit = static_cast<std::int32_t>(jt.size());
            if (n.feature >= static_cast<int>(feature_count) ||
                (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= limit || n.right >= limit))) {
                throw std::invalid_argument("model: malformed tree node");
            }
            t.nodes.push_back(n);
        }
        if (t.nodes.empty()) {
            throw std::invalid_argument("model: empty tree");
        }
        m.trees.push_back(std::move(t));
    }
}

// ---------------------------------------------------------------------------
// Training and prediction

inline model_t train(std::span<const feature_vector_t> x, std::span<const std::uint8_t> y, std::uint64_t seed,
                     const forest_config_t& cfg = {}) {
    if (x.size() != y.size() || x.empty()) {
        throw std::invalid_argument("train: need equally sized, non-empty features and labels");
    }
    std::size_t positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
    if (positives == 0 || positives == y.size()) {
        throw std::invalid_argument("train: dataset must contain both alias and non-alias pairs");
    }
    if (cfg.n_trees == 0) {
        throw std::invalid_argument("train: n_trees must be positive");
    }
    model_t m;
    m.config = cfg;
    m.config.max_features = cfg.features_per_split();
    m.metadata.seed = seed;
    m.metadata.n_samples = x.size();
    m.metadata.n_positive = positives;
    m.trees.resize(cfg.n_trees);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < cfg.n_trees; t = next++) {
            rng_t rng(mix_seed(seed, t));
            std::vector<double> counts(x.size(), 0.0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                counts[bounded(rng, x.size())] += 1.0;
            }
            std::vector<std::pair<std::size_t, double>> samples;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (counts[i] > 0.0) {
                    samples.emplace_back(i, counts[i]);
                }
            }
            detail::tree_builder_t builder(x, y, m.config, rng);
            m.trees[t] = builder.build(std::move(samples));
        }
    };
    unsigned n_threads = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, cfg.n_trees));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n_threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    return m;
}

inline model_t train(std::span<const labeled_pair_t> data, std::uint64_t seed, const forest_config_t& cfg = {}) {
    std::set<std::pair<address_t, address_t>> seen;
    std::vector<feature_vector_t> x;
    std::vector<std::uint8_t> y;
    x.reserve(data.size());
    y.reserve(data.size());
    for (const auto& p : data) {
        if (!seen.insert({p.signature.seed, p.signature.candidate}).second) {
            throw std::invalid_argument("train: duplicated pair " + p.signature.seed.str() + " / " +
                                        p.signature.candidate.str());
        }
        x.push_back(p.signature.features);
        y.push_back(p.label ? 1 : 0);
    }
    auto m = train(x, y, seed, cfg);
    m.metadata.dataset_hash = dataset_hash(data);
    return m;
}

inline void check_schema(const model_t& m) {
    if (m.schema_version != feature_schema_version) {
        throw std::invalid_argument("classify: model schema " + m.schema_version + " does not match " +
                                    std::string(feature_schema_version));
    }
}

// Strict majority; a tied vote is a non-alias verdict.
inline bool classify(const model_t& m, const feature_vector_t& x) {
    check_schema(m);
    return 2 * m.alias_votes(x) > m.trees.size();
}

inline bool classify(const model_t& m, const signature_t& s) { return classify(m, s.features); }

struct feature_importance_t {
    std::string_view feature;
    std::size_t index = 0;
    double importance = 0.0;
};

// Mean decrease in Gini impurity, normalized per tree then averaged and renormalized.
inline std::vector<feature_importance_t> feature_importance(const model_t& m) {
    std::array<double, feature_count> total{};
    for (const auto& t : m.trees) {
        std::array<double, feature_count> imp{};
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                continue;
            }
            const auto& l = t.nodes[static_cast<std::size_t>(n.left)];
            const auto& r = t.nodes[static_cast<std::size_t>(n.right)];
            imp[static_cast<std::size_t>(n.feature)] +=
                n.weight * n.impurity - l.weight * l.impurity - r.weight * r.impurity;
        }
        double sum = 0.0;
        for (auto v : imp) {
            sum += v;
        }
        if (sum > 0.0) {
            for (std::size_t f = 0; f < feature_count; ++f) {
                total[f] += imp[f] / sum;
            }
        }
    }
    double sum = 0.0;
    for (auto v : total) {
        sum += v;
    }
    std::vector<feature_importance_t> out;
    for (std::size_t f = 0; f < feature_count; ++f) {
        out.push_back({feature_names[f], f, sum > 0.0 ? total[f] / sum : 0.0});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const feature_importance_t& a, const feature_importance_t& b) { return a.importance > b.importance; });
    return out;
}

// ---------------------------------------------------------------------------
// Held-out evaluation

struct binary_scores_t {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::optional<double> precision() const {
        return tp + fp == 0 ? std::nullopt : std::optional<double>(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    std::optional<double> recall() const {
        return tp + fn == 0 ? std::nullopt : std::optional<double>(static_cast<double>(tp) / static_cast<double>(tp + fn));
    }
    std::optional<double> f1() const {
        auto p = precision();
        auto r = recall();
        if (!p || !r || *p + *r == 0.0) {
            return std::nullopt;
        }
        return 2.0 * *p * *r / (*p + *r);
    }
    double accuracy() const {
        auto n = tp + fp + tn + fn;
        return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
    }
};

inline binary_scores_t score(const model_t& m, std::span<const labeled_pair_t> data) {
    binary_scores_t s;
    for (const auto& p : data) {
        bool pred = classify(m, p.signature);
        if (pred && p.label) ++s.tp;
        else if (pred) ++s.fp;
        else if (p.label) ++s.fn;
        else ++s.tn;
    }
    return s;
}

struct split_evaluation_t {
    std::vector<binary_scores_t> splits;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;
};

// Repeated random train/test splits; undefined per-split ratios count as 0 in the means.
inline split_evaluation_t evaluate_splits(std::span<const labeled_pair_t> data, std::size_t n_splits,
                                          double train_fraction, std::uint64_t seed, const forest_config_t& cfg = {}) {
    if (n_splits == 0 || !(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("evaluate_splits: need n_splits > 0 and 0 < train_fraction < 1");
    }
    split_evaluation_t ev;
    for (std::size_t s = 0; s < n_splits; ++s) {
        rng_t rng(mix_seed(seed, 0x73706c6974ULL + s));
        std::vector<std::size_t> idx(data.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            idx[i] = i;
        }
        shuffle(idx, rng);
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
        std::vector<labeled_pair_t> train_set, test_set;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? train_set : test_set).push_back(data[idx[i]]);
        }
        auto m = train(train_set, mix_seed(seed, s), cfg);
        auto sc = score(m, test_set);
        ev.mean_precision += sc.precision().value_or(0.0);
        ev.mean_recall += sc.recall().value_or(0.0);
        ev.mean_f1 += sc.f1().value_or(0.0);
        ev.splits.push_back(sc);
    }
    auto n = static_cast<double>(n_splits);
    ev.mean_precision /= n;
    ev.mean_recall /= n;
    ev.mean_f1 /= n;
    return ev;
}

} // namespace ltd
