#pragma once

// Deterministic discrete-event network: a virtual clock, point-to-point
// underlay links and endpoint-independent NAT boxes.

#include "ruta/net.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ruta::sim {

using Duration = std::chrono::nanoseconds;
/// Virtual time since simulation start.
using Time = std::chrono::nanoseconds;

constexpr Duration from_ms(double ms) { return Duration(std::int64_t(ms * 1e6)); }
constexpr Duration from_seconds(double s) { return Duration(std::int64_t(s * 1e9)); }
constexpr double to_ms(Duration d) { return double(d.count()) / 1e6; }

struct TraceRecord {
    Time time{};
    std::string node;
    std::string event;
    std::string detail;
    bool operator==(const TraceRecord&) const = default;
};

using TimerId = std::uint64_t;

class EventLoop {
public:
    Time now() const { return now_; }

    /// Throws InvariantViolation when `at` lies in the past.
    TimerId schedule_at(Time at, std::function<void()> fn);
    TimerId schedule_in(Duration delay, std::function<void()> fn) { return schedule_at(now_ + delay, std::move(fn)); }
    void cancel(TimerId id);

    /// Runs every event with time <= `until`, then advances the clock to `until`.
    std::size_t run_until(Time until);
    /// Runs until no events remain or `max_events` have executed.
    std::size_t run(std::size_t max_events = SIZE_MAX);

    bool idle() const { return pending_.empty(); }
    std::size_t executed() const { return executed_; }

    void set_tracing(bool on) { tracing_ = on; }
    void record(std::string node, std::string event, std::string detail = {});
    const std::vector<TraceRecord>& trace() const { return trace_; }
    /// Line-delimited JSON, one {time, node, event, detail} object per record.
    std::string trace_jsonl() const;

private:
    struct Event {
        Time at;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };
    bool step();

    Time now_{0};
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::unordered_set<TimerId> pending_;
    std::size_t executed_ = 0;
    bool tracing_ = true;
    std::vector<TraceRecord> trace_;
};

/// Seeded PRNG; a separate stream per link keeps fates independent of event interleaving.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double stddev) { return stddev <= 0 ? 0.0 : std::normal_distribution<double>(0.0, stddev)(engine_); }
    bool bernoulli(double p) { return p > 0 && uniform() < p; }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

struct Datagram {
    Endpoint src;
    Endpoint dst;
    std::vector<std::uint8_t> payload;
    bool operator==(const Datagram&) const = default;
};

using Receiver = std::function<void(const Datagram&)>;

struct LinkConfig {
    Ipv4Address a;
    Ipv4Address b;
    Duration delay_ab{0};
    Duration delay_ba{0};
    Duration jitter{0}; // stddev of a zero-truncated Gaussian
    double loss_ab = 0.0;
    double loss_ba = 0.0;
    double bandwidth_bps = 0.0;   // 0 = unlimited
    std::size_t queue_bytes = 0;  // 0 = no FIFO queueing, serialization delay only
    bool up = true;
};

struct LinkCounters {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;
    std::uint64_t dropped = 0; // link down or queue overflow
    std::uint64_t in_flight = 0;
    std::uint64_t bytes_delivered = 0;
};

struct NatConfig {
    std::string name;
    Ipv4Prefix inside;
    Ipv4Address public_ip;
    Duration idle_timeout = std::chrono::seconds(300);
    /// Mappings are allocated lowest-free above this base port.
    std::uint16_t base_port = 40000;
};

struct NatCounters {
    std::uint64_t translated_out = 0;
    std::uint64_t translated_in = 0;
    std::uint64_t dropped = 0;
};

/// Endpoint-independent (full-cone) NAT.
class SimNat {
public:
    enum class Direction { Outbound, Inbound };

    explicit SimNat(NatConfig cfg) : cfg_(std::move(cfg)) {}

    const NatConfig& config() const { return cfg_; }
    bool is_inside(Ipv4Address ip) const { return cfg_.inside.contains(ip); }

    /// Outbound rewrites the source, creating a mapping on first use. Inbound
    /// rewrites the destination; throws NoMapping for unmapped ports.
    Datagram translate(Datagram pkt, Direction dir, Time now);

    std::optional<Endpoint> mapping_for(Endpoint inside) const;
    std::map<Endpoint, std::uint16_t> mappings() const;
    NatCounters& counters() { return counters_; }
    const NatCounters& counters() const { return counters_; }

private:
    struct Mapping {
        Endpoint inside;
        Time last_used{};
    };
    void expire(Time now);

    NatConfig cfg_;
    std::map<Endpoint, std::uint16_t> by_inside_;
    std::map<std::uint16_t, Mapping> by_port_;
    NatCounters counters_;
};

class Network {
public:
    Network(EventLoop& loop, std::uint64_t seed) : loop_(loop), seed_(seed) {}

    EventLoop& loop() { return loop_; }

    void attach(Ipv4Address ip, Receiver rx);
    void detach(Ipv4Address ip);

    std::size_t add_link(const LinkConfig& cfg);
    std::optional<std::size_t> find_link(Ipv4Address a, Ipv4Address b) const;
    LinkConfig& link_config(std::size_t id) { return links_.at(id).cfg; }
    const LinkCounters& link_counters(std::size_t id) const { return links_.at(id).counters; }
    std::size_t link_count() const { return links_.size(); }

    std::size_t add_nat(NatConfig cfg);
    SimNat& nat(std::size_t id) { return nats_.at(id); }
    std::size_t nat_count() const { return nats_.size(); }

    /// Sends from the sender's own (inside) addressing. NAT translation and link
    /// fate are applied here; loss and drops are silent to the caller.
    void send(Datagram pkt);

    std::uint64_t unrouted() const { return unrouted_; }
    std::uint64_t undeliverable() const { return undeliverable_; }

private:
    struct Link {
        LinkConfig cfg;
        LinkCounters counters;
        Rng rng;
        Time busy_ab{0};
        Time busy_ba{0};
    };

    EventLoop& loop_;
    std::uint64_t seed_;
    std::vector<Link> links_;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> link_index_;
    std::vector<SimNat> nats_;
    std::unordered_map<Ipv4Address, Receiver> receivers_;
    std::uint64_t unrouted_ = 0;
    std::uint64_t undeliverable_ = 0;
};

} // namespace ruta::sim
