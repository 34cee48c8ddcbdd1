#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ltd;

namespace {

// RFC 1071 style reference sum over 16-bit big-endian words.
std::uint16_t checksum_oracle(const std::vector<std::uint8_t>& d) {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < d.size(); i += 2) {
        sum += static_cast<std::uint64_t>(d[i]) << 8 | (i + 1 < d.size() ? d[i + 1] : 0);
    }
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

} // namespace

TEST(icmp_checksum, known_vector) {
    // 0x0001 + 0xf203 + 0xf4f5 + 0xf6f7 = 0x2ddf0 -> 0xddf2 -> ~ = 0x220d
    std::vector<std::uint8_t> d{0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7};
    EXPECT_EQ(icmp::checksum(d), 0x220d);
}

TEST(icmp_checksum, matches_oracle_on_random_buffers) {
    ltd::rng_t rng(1);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint8_t> d(1 + rng() % 64);
        for (auto& b : d) b = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(icmp::checksum(d), checksum_oracle(d));
    }
}

TEST(icmp_encode, request_round_trips) {
    auto pkt = icmp::encode_request(address_family_t::v4, 0x1234, {7, 0x00010002});
    EXPECT_EQ(checksum_oracle(pkt), 0);
    auto e = icmp::decode(pkt);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->type, icmp::echo_request_v4);
    EXPECT_EQ(e->id, 0x1234);
    EXPECT_EQ(e->seq, 0x0002);
    auto p = icmp::decode_payload(e->payload);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->token, 7u);
    EXPECT_EQ(p->seq, 0x00010002u);
}

TEST(icmp_encode, flow_checksum_is_held_constant) {
    for (std::uint32_t seq = 0; seq < 500; seq += 7) {
        auto pkt = icmp::encode_request(address_family_t::v4, 99, {seq * 3u, seq}, std::uint16_t{0xbeef});
        EXPECT_EQ(pkt[2] << 8 | pkt[3], 0xbeef);
        EXPECT_EQ(checksum_oracle(pkt), 0) << seq;
    }
}

TEST(icmp_encode, v6_leaves_checksum_to_the_kernel) {
    auto pkt = icmp::encode_request(address_family_t::v6, 1, {1, 1}, std::uint16_t{0xbeef});
    EXPECT_EQ(pkt[0], icmp::echo_request_v6);
    EXPECT_EQ(pkt[2], 0);
    EXPECT_EQ(pkt[3], 0);
}

TEST(icmp_decode, rejects_foreign_payloads_and_short_messages) {
    std::vector<std::uint8_t> tiny{0, 0, 0};
    EXPECT_FALSE(icmp::decode(tiny));
    std::vector<std::uint8_t> payload(icmp::payload_size, 0);
    EXPECT_FALSE(icmp::decode_payload(payload));
    payload.resize(4);
    EXPECT_FALSE(icmp::decode_payload(payload));
}

TEST(icmp_decode, strips_ipv4_header_and_finds_quoted_request) {
    auto req = icmp::encode_request(address_family_t::v4, 5, {42, 9});
    std::vector<std::uint8_t> ip(24, 0);
    ip[0] = 0x46; // version 4, IHL 6 words
    std::vector<std::uint8_t> quoted = ip;
    quoted.insert(quoted.end(), req.begin(), req.end());

    std::vector<std::uint8_t> err{icmp::time_exceeded_v4, 0, 0, 0, 0, 0, 0, 0};
    err.insert(err.end(), quoted.begin(), quoted.end());
    std::vector<std::uint8_t> wire(20, 0);
    wire[0] = 0x45;
    wire.insert(wire.end(), err.begin(), err.end());

    auto msg = icmp::strip_ip_header(address_family_t::v4, wire);
    ASSERT_EQ(msg.size(), err.size());
    auto e = icmp::decode(msg);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->type, icmp::time_exceeded_v4);
    auto inner = icmp::quoted_request(address_family_t::v4, *e);
    ASSERT_TRUE(inner);
    EXPECT_EQ(inner->id, 5);
    EXPECT_EQ(icmp::decode_payload(inner->payload)->token, 42u);

    std::vector<std::uint8_t> v6_header(3, 0x60);
    EXPECT_TRUE(icmp::strip_ip_header(address_family_t::v4, v6_header).empty());
}
