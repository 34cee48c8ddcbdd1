#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <tuple>
#include <vector>

#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "ltd/core.hpp"
#include "ltd/icmp.hpp"
#include "ltd/probe_engine.hpp"

namespace ltd::real {

struct raw_options_t {
    address_t source;
    bool source_set = false;
    bool i_understand_impact = false;
    std::uint32_t max_ttl = 30;
    timestamp_t hop_timeout = std::chrono::seconds{1};
};

// Owns a raw ICMP socket for one address family.
class raw_socket_t {
public:
    raw_socket_t(address_family_t family, const address_t& source) : family_(family) {
        int domain = family == address_family_t::v4 ? AF_INET : AF_INET6;
        int proto = family == address_family_t::v4 ? static_cast<int>(IPPROTO_ICMP) : static_cast<int>(IPPROTO_ICMPV6);
        fd_ = ::socket(domain, SOCK_RAW, proto);
        if (fd_ < 0) {
            int err = errno;
            if (err == EPERM || err == EACCES) {
                throw capability_error("raw ICMP socket needs CAP_NET_RAW or root: " + std::string(std::strerror(err)));
            }
            throw engine_error("cannot open raw ICMP socket: " + std::string(std::strerror(err)));
        }
        auto addr = sockaddr_of(source);
        if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), addr_len()) != 0) {
            int err = errno;
            ::close(fd_);
            throw engine_error("cannot bind to source " + source.str() + ": " + std::strerror(err));
        }
    }

    ~raw_socket_t() {
        if (fd_ >= 0) {
            ::close(fd_);
        }
    }

    raw_socket_t(const raw_socket_t&) = delete;
    raw_socket_t& operator=(const raw_socket_t&) = delete;

    void set_ttl(int ttl) {
        int level = family_ == address_family_t::v4 ? static_cast<int>(IPPROTO_IP) : static_cast<int>(IPPROTO_IPV6);
        int opt = family_ == address_family_t::v4 ? IP_TTL : IPV6_UNICAST_HOPS;
        if (::setsockopt(fd_, level, opt, &ttl, sizeof ttl) != 0) {
            throw engine_error(std::string("setsockopt TTL: ") + std::strerror(errno));
        }
    }

    void send(const address_t& dst, std::span<const std::uint8_t> pkt) {
        auto addr = sockaddr_of(dst);
        auto n = ::sendto(fd_, pkt.data(), pkt.size(), 0, reinterpret_cast<const sockaddr*>(&addr), addr_len());
        if (n < 0 && errno != ENOBUFS && errno != EAGAIN) {
            throw engine_error("sendto " + dst.str() + ": " + std::strerror(errno));
        }
    }

    // Waits up to `timeout` for one datagram; returns the sender and bytes.
    std::optional<std::pair<address_t, std::vector<std::uint8_t>>> receive(std::chrono::milliseconds timeout) {
        pollfd p{fd_, POLLIN, 0};
        int r = ::poll(&p, 1, static_cast<int>(std::max<std::int64_t>(0, timeout.count())));
        if (r <= 0) {
            return std::nullopt;
        }
        std::vector<std::uint8_t> buf(2048);
        sockaddr_storage from{};
        socklen_t len = sizeof from;
        auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
        if (n < 0) {
            return std::nullopt;
        }
        buf.resize(static_cast<std::size_t>(n));
        address_t src;
        if (from.ss_family == AF_INET) {
            const auto* in = reinterpret_cast<const sockaddr_in*>(&from);
            src = address_t::from_v4(ntohl(in->sin_addr.s_addr));
        } else {
            const auto* in6 = reinterpret_cast<const sockaddr_in6*>(&from);
            std::array<std::uint8_t, 16> b{};
            std::memcpy(b.data(), &in6->sin6_addr, 16);
            src = address_t::from_bytes(address_family_t::v6, b);
        }
        return std::make_pair(src, std::move(buf));
    }

    address_family_t family() const noexcept { return family_; }

private:
    sockaddr_storage sockaddr_of(const address_t& a) const {
        if (a.family() != family_) {
            throw std::invalid_argument("address family mismatch for " + a.str());
        }
        sockaddr_storage ss{};
        if (family_ == address_family_t::v4) {
            auto* in = reinterpret_cast<sockaddr_in*>(&ss);
            in->sin_family = AF_INET;
            std::memcpy(&in->sin_addr, a.bytes().data(), 4);
        } else {
            auto* in6 = reinterpret_cast<sockaddr_in6*>(&ss);
            in6->sin6_family = AF_INET6;
            std::memcpy(&in6->sin6_addr, a.bytes().data(), 16);
        }
        return ss;
    }

    socklen_t addr_len() const {
        return family_ == address_family_t::v4 ? sizeof(sockaddr_in) : sizeof(sockaddr_in6);
    }

    address_family_t family_;
    int fd_ = -1;
};

// Probe engine over raw ICMP Echo sockets. A sender thread follows the round schedule and
// never sends to a target sooner than 90% of its nominal inter-probe gap; a receiver thread
// matches replies by (identifier, token, sequence).
class raw_engine_t final : public probe_engine_t {
public:
    explicit raw_engine_t(raw_options_t options, engine_options_t engine_options = {})
        : probe_engine_t(engine_options), opts_(std::move(options)) {
        if (!opts_.i_understand_impact) {
            throw capability_error("the real backend requires the --i-understand-impact acknowledgment");
        }
        if (!opts_.source_set) {
            throw capability_error("the real backend requires an explicit source address");
        }
        socket_ = std::make_unique<raw_socket_t>(opts_.source.family(), opts_.source);
        std::random_device rd;
        id_ = static_cast<std::uint16_t>((rd() ^ static_cast<unsigned>(::getpid())) & 0xffff);
    }

    timestamp_t now() override {
        return std::chrono::duration_cast<timestamp_t>(std::chrono::steady_clock::now().time_since_epoch());
    }

    route_t route_trace(const address_t& target, flow_id_t flow_id) override {
        route_t hops;
        auto fam = opts_.source.family();
        for (std::uint32_t ttl = 1; ttl <= opts_.max_ttl; ++ttl) {
            socket_->set_ttl(static_cast<int>(ttl));
            auto pkt = icmp::encode_request(fam, id_, {0xffffffffU, ttl}, static_cast<std::uint16_t>(flow_id));
            socket_->send(target, pkt);
            auto deadline = std::chrono::steady_clock::now() + opts_.hop_timeout;
            std::optional<address_t> hop;
            bool reached = false;
            while (!hop) {
                auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
                if (left.count() <= 0) break;
                auto got = socket_->receive(left);
                if (!got) break;
                auto msg = icmp::decode(icmp::strip_ip_header(fam, got->second));
                if (!msg) continue;
                if (is_reply(*msg) && msg->id == id_ && msg->seq == ttl) {
                    hop = got->first;
                    reached = true;
                } else if (is_error(*msg)) {
                    auto q = icmp::quoted_request(fam, *msg);
                    if (q && q->id == id_ && q->seq == ttl) {
                        hop = got->first;
                    }
                }
            }
            hops.push_back(hop);
            if (reached) {
                break;
            }
        }
        socket_->set_ttl(64);
        bool any = false;
        for (const auto& h : hops) any = any || h.has_value();
        if (!any) {
            return {};
        }
        return hops;
    }

protected:
    void sleep_until(timestamp_t t) override {
        auto d = t - now();
        if (d.count() > 0) {
            std::this_thread::sleep_for(d);
        }
    }

    round_result_t run_round(std::span<const probe_task_t> tasks, timestamp_t start) override {
        round_result_t result;
        struct send_t {
            timestamp_t at;
            std::uint32_t task;
            std::uint32_t seq;
        };
        std::vector<send_t> schedule;
        std::map<address_t, std::uint32_t> token_of;
        timestamp_t longest{0};
        for (std::uint32_t i = 0; i < tasks.size(); ++i) {
            const auto& t = tasks[i];
            auto& trace = result[t.target];
            trace.target = t.target;
            trace.rate = t.rate;
            trace.duration = t.duration;
            auto n = probe_count(t);
            trace.probes.resize(n);
            for (std::uint32_t k = 0; k < n; ++k) {
                schedule.push_back({probe_offset(t, k), i, k});
            }
            token_of[t.target] = i;
            longest = std::max(longest, t.start_at + t.duration);
        }
        std::sort(schedule.begin(), schedule.end(),
                  [](const send_t& a, const send_t& b) { return std::tie(a.at, a.task, a.seq) < std::tie(b.at, b.task, b.seq); });
        timestamp_t deadline = start + longest + options_.reply_timeout;

        std::mutex mu;
        std::atomic<bool> done{false};
        std::exception_ptr failure;
        auto fam = opts_.source.family();

        std::thread receiver([&] {
            while (!done) {
                auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now());
                if (left.count() <= 0) break;
                auto got = socket_->receive(std::min(left, std::chrono::milliseconds{100}));
                if (!got) continue;
                auto msg = icmp::decode(icmp::strip_ip_header(fam, got->second));
                if (!msg || !is_reply(*msg) || msg->id != id_) continue;
                auto pl = icmp::decode_payload(msg->payload);
                if (!pl || pl->token >= tasks.size()) continue;
                const auto& target = tasks[pl->token].target;
                if (got->first != target) continue;
                std::lock_guard lock(mu);
                auto& probes = result[target].probes;
                if (pl->seq < probes.size()) {
                    probes[pl->seq].received = true;
                    record({now(), target, pl->seq, emission_kind_t::reply, {}});
                }
            }
        });

        std::vector<timestamp_t> last_sent(tasks.size(), timestamp_t{-1});
        try {
            for (const auto& s : schedule) {
                const auto& t = tasks[s.task];
                timestamp_t at = start + s.at;
                auto min_gap = timestamp_t{static_cast<std::int64_t>(0.9 * ns_per_second / t.rate)};
                if (last_sent[s.task].count() >= 0) {
                    at = std::max(at, last_sent[s.task] + min_gap);
                }
                sleep_until(at);
                auto pkt = icmp::encode_request(fam, id_, {s.task, s.seq}, static_cast<std::uint16_t>(t.flow_id.value_or(0)));
                timestamp_t sent_at = now();
                socket_->send(t.target, pkt);
                last_sent[s.task] = sent_at;
                std::lock_guard lock(mu);
                result[t.target].probes[s.seq] = probe_t{s.seq, sent_at, result[t.target].probes[s.seq].received};
                record({sent_at, t.target, s.seq, emission_kind_t::send, {}});
            }
        } catch (...) {
            failure = std::current_exception();
            done = true;
        }
        receiver.join();
        if (failure) {
            std::rethrow_exception(failure);
        }
        return result;
    }

private:
    bool is_reply(const icmp::echo_t& m) const {
        return m.type == (opts_.source.is_v4() ? icmp::echo_reply_v4 : icmp::echo_reply_v6);
    }

    bool is_error(const icmp::echo_t& m) const {
        if (opts_.source.is_v4()) {
            return m.type == icmp::time_exceeded_v4 || m.type == icmp::unreachable_v4;
        }
        return m.type == icmp::time_exceeded_v6 || m.type == icmp::unreachable_v6;
    }

    raw_options_t opts_;
    std::unique_ptr<raw_socket_t> socket_;
    std::uint16_t id_ = 0;
};

} // namespace ltd::real
