#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "ltd/core.hpp"

namespace ltd::icmp {

inline constexpr std::uint8_t echo_request_v4 = 8;
inline constexpr std::uint8_t echo_reply_v4 = 0;
inline constexpr std::uint8_t time_exceeded_v4 = 11;
inline constexpr std::uint8_t unreachable_v4 = 3;
inline constexpr std::uint8_t echo_request_v6 = 128;
inline constexpr std::uint8_t echo_reply_v6 = 129;
inline constexpr std::uint8_t time_exceeded_v6 = 3;
inline constexpr std::uint8_t unreachable_v6 = 1;

inline constexpr std::size_t header_size = 8;
inline constexpr std::uint32_t payload_magic = 0x4c74642eU; // "Ltd."

// Internet checksum (ones' complement of the ones' complement sum of 16-bit words).
inline std::uint16_t checksum(std::span<const std::uint8_t> data) {
    std::uint32_t sum = 0;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) {
        sum += static_cast<std::uint32_t>(data[i] << 8 | data[i + 1]);
    }
    if (i < data.size()) {
        sum += static_cast<std::uint32_t>(data[i] << 8);
    }
    while (sum >> 16) {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    return static_cast<std::uint16_t>(~sum & 0xffff);
}

// Payload layout: magic, probe token, full sequence number, flow compensation word.
struct probe_payload_t {
    std::uint32_t token = 0; // identifies the target within a round
    std::uint32_t seq = 0;

    friend bool operator==(const probe_payload_t&, const probe_payload_t&) = default;
};

inline constexpr std::size_t payload_size = 14;

struct echo_t {
    std::uint8_t type = echo_request_v4;
    std::uint8_t code = 0;
    std::uint16_t checksum = 0;
    std::uint16_t id = 0;
    std::uint16_t seq = 0;
    std::vector<std::uint8_t> payload;
};

namespace detail {

inline void put16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v >> 8);
    p[1] = static_cast<std::uint8_t>(v);
}

inline void put32(std::uint8_t* p, std::uint32_t v) {
    put16(p, static_cast<std::uint16_t>(v >> 16));
    put16(p + 2, static_cast<std::uint16_t>(v));
}

inline std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

inline std::uint32_t get32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(get16(p)) << 16 | get16(p + 2);
}

// Ones' complement 16-bit addition.
inline std::uint16_t ones_add(std::uint16_t a, std::uint16_t b) {
    std::uint32_t s = static_cast<std::uint32_t>(a) + b;
    return static_cast<std::uint16_t>((s & 0xffff) + (s >> 16));
}

} // namespace detail

// Builds an Echo Request whose checksum field equals `flow_checksum` by adjusting the
// last payload word, so that per-flow load balancers hashing the ICMP header keep the path.
// IPv6 checksums cover a pseudo-header and are filled in by the kernel; the compensation
// word is left at zero there.
inline std::vector<std::uint8_t> encode_request(address_family_t family, std::uint16_t id, probe_payload_t payload,
                                                std::optional<std::uint16_t> flow_checksum = std::nullopt) {
    std::vector<std::uint8_t> pkt(header_size + payload_size, 0);
    pkt[0] = family == address_family_t::v4 ? echo_request_v4 : echo_request_v6;
    detail::put16(&pkt[4], id);
    detail::put16(&pkt[6], static_cast<std::uint16_t>(payload.seq & 0xffff));
    detail::put32(&pkt[8], payload_magic);
    detail::put32(&pkt[12], payload.token);
    detail::put32(&pkt[16], payload.seq);
    if (family == address_family_t::v6) {
        return pkt;
    }
    std::uint16_t c = checksum(pkt);
    if (flow_checksum) {
        // Want ~(sum + w) == target, with sum == ~c: w = ~target - sum.
        std::uint16_t sum = static_cast<std::uint16_t>(~c);
        std::uint16_t w = detail::ones_add(static_cast<std::uint16_t>(~*flow_checksum), static_cast<std::uint16_t>(~sum));
        detail::put16(&pkt[20], w);
        c = checksum(pkt);
    }
    detail::put16(&pkt[2], c);
    return pkt;
}

// Parses an ICMP message (without IP header).
inline std::optional<echo_t> decode(std::span<const std::uint8_t> msg) {
    if (msg.size() < header_size) {
        return std::nullopt;
    }
    echo_t e;
    e.type = msg[0];
    e.code = msg[1];
    e.checksum = detail::get16(&msg[2]);
    e.id = detail::get16(&msg[4]);
    e.seq = detail::get16(&msg[6]);
    e.payload.assign(msg.begin() + header_size, msg.end());
    return e;
}

inline std::optional<probe_payload_t> decode_payload(std::span<const std::uint8_t> payload) {
    if (payload.size() < payload_size || detail::get32(payload.data()) != payload_magic) {
        return std::nullopt;
    }
    return probe_payload_t{detail::get32(&payload[4]), detail::get32(&payload[8])};
}

// Strips the IPv4 header that raw IPv4 sockets deliver; IPv6 raw sockets deliver the ICMP message only.
inline std::span<const std::uint8_t> strip_ip_header(address_family_t family, std::span<const std::uint8_t> pkt) {
    if (family == address_family_t::v6) {
        return pkt;
    }
    if (pkt.empty() || (pkt[0] >> 4) != 4) {
        return {};
    }
    std::size_t ihl = static_cast<std::size_t>(pkt[0] & 0x0f) * 4;
    if (ihl < 20 || ihl > pkt.size()) {
        return {};
    }
    return pkt.subspan(ihl);
}

// The Echo Request quoted inside a Time Exceeded / Unreachable error.
inline std::optional<echo_t> quoted_request(address_family_t family, const echo_t& error) {
    std::span<const std::uint8_t> inner(error.payload);
    if (family == address_family_t::v4) {
        inner = strip_ip_header(family, inner);
    } else {
        if (inner.size() < 40) {
            return std::nullopt;
        }
        inner = inner.subspan(40);
    }
    return decode(inner);
}

} // namespace ltd::icmp
