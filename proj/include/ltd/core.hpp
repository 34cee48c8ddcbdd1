#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <arpa/inet.h>

#include <nlohmann/json.hpp>

namespace ltd {

using json = nlohmann::json;

// Monotonic time since an engine epoch. Virtual for the simulator, steady_clock for the real backend.
using timestamp_t = std::chrono::nanoseconds;
using rate_t = std::uint32_t;

inline constexpr std::int64_t ns_per_second = 1'000'000'000;

inline double to_seconds(timestamp_t t) { return static_cast<double>(t.count()) / ns_per_second; }
inline timestamp_t from_seconds(double s) { return timestamp_t{static_cast<std::int64_t>(s * ns_per_second + (s >= 0 ? 0.5 : -0.5))}; }

// ---------------------------------------------------------------------------
// Errors

class ltd_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised before any packet leaves when a round breaks the safety policy.
class policy_violation : public ltd_error {
public:
    using ltd_error::ltd_error;
};

// The backend cannot probe at all (no raw socket privilege, missing acknowledgment).
class capability_error : public ltd_error {
public:
    using ltd_error::ltd_error;
};

// Transient backend failure during a round; callers may retry.
class engine_error : public ltd_error {
public:
    using ltd_error::ltd_error;
};

class unknown_target : public ltd_error {
public:
    explicit unknown_target(const std::string& address)
        : ltd_error("unknown target: " + address), address_(address) {}
    const std::string& address() const noexcept { return address_; }

private:
    std::string address_;
};

// ---------------------------------------------------------------------------
// Address

enum class address_family_t : std::uint8_t { v4 = 4, v6 = 6 };

class address_t {
public:
    address_t() = default;

    // Accepts any textual spelling inet_pton understands; stores the inet_ntop form.
    static address_t parse(std::string_view text) {
        std::string s{text};
        address_t a;
        if (inet_pton(AF_INET, s.c_str(), a.bytes_.data()) == 1) {
            a.family_ = address_family_t::v4;
        } else if (inet_pton(AF_INET6, s.c_str(), a.bytes_.data()) == 1) {
            a.family_ = address_family_t::v6;
        } else {
            throw std::invalid_argument("invalid IP address: '" + s + "'");
        }
        a.text_ = a.format();
        return a;
    }

    static address_t from_v4(std::uint32_t host_order) {
        address_t a;
        a.family_ = address_family_t::v4;
        a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
        a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
        a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
        a.bytes_[3] = static_cast<std::uint8_t>(host_order);
        a.text_ = a.format();
        return a;
    }

    static address_t from_bytes(address_family_t family, std::span<const std::uint8_t> raw) {
        address_t a;
        a.family_ = family;
        std::size_t n = family == address_family_t::v4 ? 4 : 16;
        if (raw.size() < n) {
            throw std::invalid_argument("address_t::from_bytes: short buffer");
        }
        std::copy_n(raw.begin(), n, a.bytes_.begin());
        a.text_ = a.format();
        return a;
    }

    address_family_t family() const noexcept { return family_; }
    bool is_v4() const noexcept { return family_ == address_family_t::v4; }
    bool is_v6() const noexcept { return family_ == address_family_t::v6; }
    const std::string& str() const noexcept { return text_; }
    std::span<const std::uint8_t> bytes() const noexcept {
        return {bytes_.data(), is_v4() ? std::size_t{4} : std::size_t{16}};
    }

    // Opaque, stable map key: family tag followed by the canonical text.
    std::string key() const { return (is_v4() ? "4|" : "6|") + text_; }

    friend bool operator==(const address_t& a, const address_t& b) noexcept {
        return a.family_ == b.family_ && a.bytes_ == b.bytes_;
    }
    friend std::strong_ordering operator<=>(const address_t& a, const address_t& b) noexcept {
        if (auto c = a.family_ <=> b.family_; c != 0) {
            return c;
        }
        return a.bytes_ <=> b.bytes_;
    }

private:
    std::string format() const {
        char buf[INET6_ADDRSTRLEN] = {};
        inet_ntop(is_v4() ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof(buf));
        return buf;
    }

    address_family_t family_ = address_family_t::v4;
    std::array<std::uint8_t, 16> bytes_{};
    std::string text_ = "0.0.0.0";
};

inline void to_json(json& j, const address_t& a) { j = a.str(); }
inline void from_json(const json& j, address_t& a) { a = address_t::parse(j.get<std::string>()); }

// ---------------------------------------------------------------------------
// Loss traces

struct probe_t {
    std::uint32_t seq = 0;
    timestamp_t sent_at{0};
    bool received = false;

    friend bool operator==(const probe_t&, const probe_t&) = default;
};

struct loss_trace_t {
    address_t target;
    rate_t rate = 0;
    timestamp_t duration{0};
    std::vector<probe_t> probes;

    std::size_t sent() const noexcept { return probes.size(); }

    std::size_t lost() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(probes.begin(), probes.end(), [](const probe_t& p) { return !p.received; }));
    }

    // One bit per probe, 1 = lost.
    std::vector<std::uint8_t> loss_bits() const {
        std::vector<std::uint8_t> bits(probes.size());
        std::transform(probes.begin(), probes.end(), bits.begin(),
                       [](const probe_t& p) { return static_cast<std::uint8_t>(p.received ? 0 : 1); });
        return bits;
    }

    std::string loss_string() const {
        std::string s(probes.size(), '0');
        for (std::size_t i = 0; i < probes.size(); ++i) {
            if (!probes[i].received) {
                s[i] = '1';
            }
        }
        return s;
    }

    friend bool operator==(const loss_trace_t&, const loss_trace_t&) = default;
};

// Structural checks: seq is 0..sent-1 and sent matches rate x duration within one probe.
inline void validate(const loss_trace_t& t) {
    for (std::size_t i = 0; i < t.probes.size(); ++i) {
        if (t.probes[i].seq != i) {
            throw std::invalid_argument("loss trace for " + t.target.str() + ": non-sequential seq at " +
                                        std::to_string(i));
        }
    }
    double expected = static_cast<double>(t.rate) * to_seconds(t.duration);
    if (std::abs(static_cast<double>(t.sent()) - expected) > 1.0 + 1e-9) {
        throw std::invalid_argument("loss trace for " + t.target.str() + ": sent=" + std::to_string(t.sent()) +
                                    " but rate x duration=" + std::to_string(expected));
    }
}

inline double loss_rate(const loss_trace_t& trace) {
    if (trace.probes.empty()) {
        throw std::invalid_argument("loss_rate: empty trace for " + trace.target.str());
    }
    return static_cast<double>(trace.lost()) / static_cast<double>(trace.sent());
}

inline void to_json(json& j, const loss_trace_t& t) {
    json sent_at = json::array();
    for (const auto& p : t.probes) {
        sent_at.push_back(p.sent_at.count());
    }
    j = json{{"target", t.target},
             {"rate", t.rate},
             {"duration", to_seconds(t.duration)},
             {"sent", t.sent()},
             {"loss_bits", t.loss_string()},
             {"sent_at_ns", std::move(sent_at)}};
}

inline void from_json(const json& j, loss_trace_t& t) {
    t.target = j.at("target").get<address_t>();
    t.rate = j.at("rate").get<rate_t>();
    t.duration = from_seconds(j.at("duration").get<double>());
    auto bits = j.at("loss_bits").get<std::string>();
    auto n = j.at("sent").get<std::size_t>();
    if (bits.size() != n) {
        throw std::invalid_argument("loss trace: loss_bits length does not match sent");
    }
    std::vector<std::int64_t> sent_at;
    if (j.contains("sent_at_ns")) {
        sent_at = j.at("sent_at_ns").get<std::vector<std::int64_t>>();
        if (sent_at.size() != n) {
            throw std::invalid_argument("loss trace: sent_at_ns length does not match sent");
        }
    }
    t.probes.clear();
    t.probes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (bits[i] != '0' && bits[i] != '1') {
            throw std::invalid_argument("loss trace: loss_bits must contain only 0/1");
        }
        t.probes.push_back(probe_t{static_cast<std::uint32_t>(i),
                                   timestamp_t{sent_at.empty() ? 0 : sent_at[i]}, bits[i] == '0'});
    }
}

// ---------------------------------------------------------------------------
// Signatures

inline constexpr std::size_t feature_count = 11;
inline constexpr std::string_view feature_schema_version = "ltd-signature-v1";

enum feature_index : std::size_t {
    loss_rate_s = 0,
    loss_rate_c,
    loss_rate_ks,
    loss_rate_kc,
    change_point_s,
    change_point_c,
    gap_gap_s,
    gap_gap_c,
    burst_burst_s,
    burst_burst_c,
    pearson_sc,
};

inline constexpr std::array<std::string_view, feature_count> feature_names = {
    "loss_rate_s",    "loss_rate_c",    "loss_rate_ks", "loss_rate_kc", "change_point_s", "change_point_c",
    "gg_s",           "gg_c",           "bb_s",         "bb_c",         "pearson_sc",
};

using feature_vector_t = std::array<double, feature_count>;

// Conditions under which a feature slot carries a convention value rather than a measurement.
struct signature_flags_t {
    bool missing_control_s = false;
    bool missing_control_c = false;
    bool short_trace = false;
    bool zero_variance = false;

    friend bool operator==(const signature_flags_t&, const signature_flags_t&) = default;
};

struct signature_traces_t {
    loss_trace_t seed;
    loss_trace_t candidate;
    std::optional<loss_trace_t> control_s;
    std::optional<loss_trace_t> control_c;

    friend bool operator==(const signature_traces_t&, const signature_traces_t&) = default;
};

struct signature_t {
    address_t seed;
    address_t candidate;
    feature_vector_t features{};
    signature_flags_t flags;
    std::optional<signature_traces_t> traces;

    friend bool operator==(const signature_t&, const signature_t&) = default;
};

inline void to_json(json& j, const signature_t& s) {
    j = json{{"seed", s.seed},
             {"candidate", s.candidate},
             {"schema", feature_schema_version},
             {"features", s.features},
             {"flags",
              {{"missing_control_s", s.flags.missing_control_s},
               {"missing_control_c", s.flags.missing_control_c},
               {"short_trace", s.flags.short_trace},
               {"zero_variance", s.flags.zero_variance}}}};
    if (s.traces) {
        json tr{{"seed", s.traces->seed}, {"candidate", s.traces->candidate}};
        tr["control_s"] = s.traces->control_s ? json(*s.traces->control_s) : json(nullptr);
        tr["control_c"] = s.traces->control_c ? json(*s.traces->control_c) : json(nullptr);
        j["traces"] = std::move(tr);
    }
}

inline void from_json(const json& j, signature_t& s) {
    if (j.contains("schema") && j.at("schema").get<std::string>() != feature_schema_version) {
        throw std::invalid_argument("signature schema mismatch: " + j.at("schema").get<std::string>());
    }
    s.seed = j.at("seed").get<address_t>();
    s.candidate = j.at("candidate").get<address_t>();
    auto f = j.at("features").get<std::vector<double>>();
    if (f.size() != feature_count) {
        throw std::invalid_argument("signature: expected 11 features, got " + std::to_string(f.size()));
    }
    std::copy(f.begin(), f.end(), s.features.begin());
    s.flags = {};
    if (j.contains("flags")) {
        const auto& fl = j.at("flags");
        s.flags.missing_control_s = fl.value("missing_control_s", false);
        s.flags.missing_control_c = fl.value("missing_control_c", false);
        s.flags.short_trace = fl.value("short_trace", false);
        s.flags.zero_variance = fl.value("zero_variance", false);
    }
    s.traces.reset();
    if (j.contains("traces")) {
        const auto& tr = j.at("traces");
        signature_traces_t t;
        t.seed = tr.at("seed").get<loss_trace_t>();
        t.candidate = tr.at("candidate").get<loss_trace_t>();
        if (!tr.at("control_s").is_null()) {
            t.control_s = tr.at("control_s").get<loss_trace_t>();
        }
        if (!tr.at("control_c").is_null()) {
            t.control_c = tr.at("control_c").get<loss_trace_t>();
        }
        s.traces = std::move(t);
    }
}

// ---------------------------------------------------------------------------
// Alias sets and partitions

struct alias_set_t {
    address_t seed;
    std::set<address_t> members;

    friend bool operator==(const alias_set_t&, const alias_set_t&) = default;
};

struct partition_t {
    std::vector<alias_set_t> sets;

    std::set<address_t> universe() const {
        std::set<address_t> u;
        for (const auto& s : sets) {
            u.insert(s.members.begin(), s.members.end());
        }
        return u;
    }

    // Canonical order: sets sorted by their smallest member.
    void normalize() {
        std::sort(sets.begin(), sets.end(), [](const alias_set_t& a, const alias_set_t& b) {
            return *a.members.begin() < *b.members.begin();
        });
    }

    friend bool operator==(const partition_t&, const partition_t&) = default;
};

// Throws unless the sets are non-empty, pairwise disjoint, contain their seeds, and (optionally) cover `expected`.
inline void validate(const partition_t& p, const std::set<address_t>* expected = nullptr) {
    std::set<address_t> seen;
    for (const auto& s : p.sets) {
        if (s.members.empty()) {
            throw std::invalid_argument("partition: empty alias set");
        }
        if (!s.members.contains(s.seed)) {
            throw std::invalid_argument("partition: seed " + s.seed.str() + " not in its alias set");
        }
        for (const auto& m : s.members) {
            if (!seen.insert(m).second) {
                throw std::invalid_argument("partition: address " + m.str() + " appears in two sets");
            }
        }
    }
    if (expected != nullptr && seen != *expected) {
        throw std::invalid_argument("partition does not cover the expected address set");
    }
}

inline void to_json(json& j, const partition_t& p) {
    partition_t sorted = p;
    sorted.normalize();
    json sets = json::array();
    for (const auto& s : sorted.sets) {
        json members = json::array();
        for (const auto& m : s.members) {
            members.push_back(m.str());
        }
        sets.push_back(std::move(members));
    }
    j = json{{"alias_sets", std::move(sets)}};
}

// The first member listed becomes the seed; the JSON document does not carry seeds separately.
inline void from_json(const json& j, partition_t& p) {
    p.sets.clear();
    for (const auto& js : j.at("alias_sets")) {
        alias_set_t s;
        for (const auto& m : js) {
            auto a = m.get<address_t>();
            if (s.members.empty()) {
                s.seed = a;
            }
            s.members.insert(a);
        }
        if (s.members.empty()) {
            throw std::invalid_argument("partition JSON: empty alias set");
        }
        p.sets.push_back(std::move(s));
    }
}

// ---------------------------------------------------------------------------
// Rate limit evidence

enum class rate_search_status_t { converged, closest_rate, failed };

inline std::string_view to_string(rate_search_status_t s) {
    switch (s) {
    case rate_search_status_t::converged:
        return "converged";
    case rate_search_status_t::closest_rate:
        return "closest_rate";
    case rate_search_status_t::failed:
        return "failed";
    }
    return "failed";
}

inline rate_search_status_t parse_rate_search_status(std::string_view s) {
    if (s == "converged") return rate_search_status_t::converged;
    if (s == "closest_rate") return rate_search_status_t::closest_rate;
    if (s == "failed") return rate_search_status_t::failed;
    throw std::invalid_argument("unknown rate search status: " + std::string{s});
}

struct rate_round_t {
    rate_t rate = 0;
    double loss = 0.0;

    friend bool operator==(const rate_round_t&, const rate_round_t&) = default;
};

struct rate_limit_evidence_t {
    address_t target;
    rate_t r_s = 0;
    std::uint32_t rounds_used = 0;
    // Rounds until the first round whose loss reached the lower bound of the target range.
    std::uint32_t trigger_rounds = 0;
    double final_loss = 0.0;
    rate_search_status_t status = rate_search_status_t::failed;
    bool zero_response = false;
    std::vector<rate_round_t> history;

    friend bool operator==(const rate_limit_evidence_t&, const rate_limit_evidence_t&) = default;
};

inline void to_json(json& j, const rate_limit_evidence_t& e) {
    json hist = json::array();
    for (const auto& r : e.history) {
        hist.push_back({{"rate", r.rate}, {"loss", r.loss}});
    }
    j = json{{"target", e.target},
             {"r_s", e.r_s},
             {"rounds_used", e.rounds_used},
             {"trigger_rounds", e.trigger_rounds},
             {"final_loss", e.final_loss},
             {"status", to_string(e.status)},
             {"zero_response", e.zero_response},
             {"history", std::move(hist)}};
}

inline void from_json(const json& j, rate_limit_evidence_t& e) {
    e.target = j.at("target").get<address_t>();
    e.r_s = j.at("r_s").get<rate_t>();
    e.rounds_used = j.at("rounds_used").get<std::uint32_t>();
    e.trigger_rounds = j.value("trigger_rounds", 0u);
    e.final_loss = j.at("final_loss").get<double>();
    e.status = parse_rate_search_status(j.at("status").get<std::string>());
    e.zero_response = j.value("zero_response", false);
    e.history.clear();
    if (j.contains("history")) {
        for (const auto& r : j.at("history")) {
            e.history.push_back({r.at("rate").get<rate_t>(), r.at("loss").get<double>()});
        }
    }
}

} // namespace ltd

template <>
struct std::hash<ltd::address_t> {
    std::size_t operator()(const ltd::address_t& a) const noexcept { return std::hash<std::string>{}(a.key()); }
};
