#pragma once

// Two-way link measurement over Linkstate OAM, and the client half of the
// STUN exchange. Sessions are passive state machines: callers feed them
// send/receive times and own the timers.

#include "ruta/netsim.hpp"
#include "ruta/schema.hpp"
#include "ruta/srou.hpp"

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace ruta::probe {

struct ProbeConfig {
    sim::Duration interval = std::chrono::seconds(1);
    std::size_t window = 100;
    sim::Duration timeout = std::chrono::seconds(1);
    int down_after = 3; // consecutive losses
    sim::Duration report_interval = std::chrono::seconds(10);
};

struct ProbeTimestamps {
    sim::Time t1{}, t2{}, t3{}, t4{};
    sim::Duration two_way() const { return (t4 - t1) - (t3 - t2); }
};

struct ProbeOutcome {
    std::uint32_t seq = 0;
    sim::Time sent_at{};
    std::optional<ProbeTimestamps> ts; // empty when lost
};

struct Utilization {
    double rx = 0.0;
    double tx = 0.0;
};

class ProbeSession {
public:
    ProbeSession(schema::SlocShort local, schema::SlocShort peer, ProbeConfig cfg = {});

    const schema::SlocShort& local() const { return local_; }
    const schema::SlocShort& peer() const { return peer_; }
    const ProbeConfig& config() const { return cfg_; }

    /// Allocates the next sequence number and records t1.
    srou::OamMessage next_request(sim::Time now);
    /// Matches by sender_seq. Late, duplicate or unknown responses are ignored; returns whether it counted.
    bool on_response(const srou::OamMessage& resp, sim::Time t4);
    /// Declares pending probes older than the timeout lost.
    void expire(sim::Time now);

    /// Throws EmptyWindow.
    schema::LinkStateRecord compute_metrics(sim::Time now, Utilization util = {}) const;

    const std::deque<ProbeOutcome>& window() const { return window_; }
    double smoothed_jitter_us() const { return jitter_ns_ / 1000.0; }
    int consecutive_losses() const { return consecutive_losses_; }
    std::uint32_t last_seq() const { return seq_; }
    std::size_t pending() const { return pending_.size(); }

private:
    void complete(ProbeOutcome o);

    schema::SlocShort local_;
    schema::SlocShort peer_;
    ProbeConfig cfg_;
    std::uint32_t seq_ = 0;
    std::map<std::uint32_t, sim::Time> pending_;
    std::deque<ProbeOutcome> window_;
    std::optional<std::int64_t> last_two_way_ns_;
    double jitter_ns_ = 0.0;
    int consecutive_losses_ = 0;
};

/// Stateless with respect to requesters; keeps only its own sequence counter.
class ProbeResponder {
public:
    /// Throws MalformedOam unless `req` is a Linkstate request.
    srou::OamMessage respond(const srou::OamMessage& req, sim::Time t2, sim::Time t3);
    /// Decodes first; any codec failure becomes MalformedOam.
    srou::OamMessage respond(std::span<const std::uint8_t> req, sim::Time t2, sim::Time t3);
    std::uint32_t seq() const { return seq_; }

private:
    std::uint32_t seq_ = 0;
};

struct MeshPeer {
    std::string system_name;
    std::vector<schema::Sloc> slocs;
};

/// One session per (local SLoC, peer SLoC) pair, skipping self and, when the
/// white-list is non-empty, peers not on it.
std::vector<ProbeSession> start_full_mesh(const std::string& self, const std::vector<schema::Sloc>& local,
                                          const std::vector<MeshPeer>& peers,
                                          const std::set<std::string>& white_list = {}, ProbeConfig cfg = {});

/// Client side of the STUN exchange: sends, waits 1s, 2s then 4s between
/// attempts, and reports Timeout after the third wait.
class StunExchange {
public:
    using Send = std::function<void(const std::vector<std::uint8_t>&)>;
    using Done = std::function<void(std::optional<Endpoint> observed, std::optional<Errc> error)>;

    StunExchange(sim::EventLoop& loop, Send send, Done done,
                 std::vector<sim::Duration> backoff = {std::chrono::seconds(1), std::chrono::seconds(2),
                                                       std::chrono::seconds(4)});
    ~StunExchange();

    void start();
    /// Feed any OAM datagram; non-STUN responses are ignored.
    void on_datagram(std::span<const std::uint8_t> bytes);
    bool finished() const { return finished_; }
    int attempts() const { return attempts_; }

private:
    void attempt();

    sim::EventLoop& loop_;
    Send send_;
    Done done_;
    std::vector<sim::Duration> backoff_;
    int attempts_ = 0;
    bool finished_ = false;
    sim::TimerId timer_ = 0;
    std::shared_ptr<bool> alive_;
};

/// Server side: response payload is the observed source.
srou::OamMessage stun_serve(const srou::OamMessage& req, Endpoint observed_src);

} // namespace ruta::probe
