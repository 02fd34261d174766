#include "ruta/netsim.hpp"

#include "ruta/error.hpp"

#include <json.hpp>

#include <algorithm>

namespace ruta::sim {

// ---------------------------------------------------------------- EventLoop

TimerId EventLoop::schedule_at(Time at, std::function<void()> fn) {
    if (at < now_) throw Error(Errc::InvariantViolation, "cannot schedule an event in the past");
    TimerId id = next_seq_++;
    queue_.push(Event{at, id, std::move(fn)});
    pending_.insert(id);
    return id;
}

void EventLoop::cancel(TimerId id) { pending_.erase(id); }

bool EventLoop::step() {
    while (!queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        if (pending_.erase(ev.seq) == 0) continue;
        now_ = ev.at;
        ++executed_;
        ev.fn();
        return true;
    }
    return false;
}

std::size_t EventLoop::run_until(Time until) {
    std::size_t n = 0;
    while (!queue_.empty()) {
        // skip cancelled heads so their timestamps do not gate the loop
        if (!pending_.count(queue_.top().seq)) {
            queue_.pop();
            continue;
        }
        if (queue_.top().at > until) break;
        step();
        ++n;
    }
    if (until > now_) now_ = until;
    return n;
}

std::size_t EventLoop::run(std::size_t max_events) {
    std::size_t n = 0;
    while (n < max_events && step()) ++n;
    return n;
}

void EventLoop::record(std::string node, std::string event, std::string detail) {
    if (!tracing_) return;
    trace_.push_back(TraceRecord{now_, std::move(node), std::move(event), std::move(detail)});
}

std::string EventLoop::trace_jsonl() const {
    std::string out;
    for (const auto& r : trace_) {
        nlohmann::json j{{"time", r.time.count()}, {"node", r.node}, {"event", r.event}, {"detail", r.detail}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------- SimNat

void SimNat::expire(Time now) {
    for (auto it = by_port_.begin(); it != by_port_.end();) {
        if (now - it->second.last_used > cfg_.idle_timeout) {
            by_inside_.erase(it->second.inside);
            it = by_port_.erase(it);
        } else {
            ++it;
        }
    }
}

Datagram SimNat::translate(Datagram pkt, Direction dir, Time now) {
    expire(now);
    if (dir == Direction::Outbound) {
        auto it = by_inside_.find(pkt.src);
        std::uint16_t port;
        if (it != by_inside_.end()) {
            port = it->second;
        } else {
            std::uint32_t candidate = std::uint32_t(cfg_.base_port) + 1;
            while (candidate <= 65535 && by_port_.count(std::uint16_t(candidate))) ++candidate;
            if (candidate > 65535) {
                ++counters_.dropped;
                throw Error(Errc::NoMapping, "NAT " + cfg_.name + " port space exhausted");
            }
            port = std::uint16_t(candidate);
            by_inside_[pkt.src] = port;
            by_port_[port] = Mapping{pkt.src, now};
        }
        by_port_[port].last_used = now;
        pkt.src = Endpoint{cfg_.public_ip, port};
        ++counters_.translated_out;
        return pkt;
    }
    auto it = by_port_.find(pkt.dst.port);
    if (pkt.dst.ip != cfg_.public_ip || it == by_port_.end()) {
        ++counters_.dropped;
        throw Error(Errc::NoMapping, "NAT " + cfg_.name + " has no mapping for " + pkt.dst.to_string());
    }
    it->second.last_used = now;
    pkt.dst = it->second.inside;
    ++counters_.translated_in;
    return pkt;
}

std::optional<Endpoint> SimNat::mapping_for(Endpoint inside) const {
    auto it = by_inside_.find(inside);
    if (it == by_inside_.end()) return std::nullopt;
    return Endpoint{cfg_.public_ip, it->second};
}

std::map<Endpoint, std::uint16_t> SimNat::mappings() const { return by_inside_; }

// ---------------------------------------------------------------- Network

void Network::attach(Ipv4Address ip, Receiver rx) { receivers_[ip] = std::move(rx); }

void Network::detach(Ipv4Address ip) { receivers_.erase(ip); }

std::size_t Network::add_link(const LinkConfig& cfg) {
    auto key = std::minmax(cfg.a.value, cfg.b.value);
    if (link_index_.count(key))
        throw Error(Errc::InvariantViolation, "duplicate link " + cfg.a.to_string() + " - " + cfg.b.to_string());
    std::size_t id = links_.size();
    // splitmix-style decorrelation of per-link streams
    std::uint64_t s = seed_ + 0x9E3779B97F4A7C15ULL * (id + 1);
    links_.push_back(Link{cfg, {}, Rng(s ^ (s >> 31)), Time{0}, Time{0}});
    link_index_[key] = id;
    return id;
}

std::optional<std::size_t> Network::find_link(Ipv4Address a, Ipv4Address b) const {
    auto it = link_index_.find(std::minmax(a.value, b.value));
    if (it == link_index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Network::add_nat(NatConfig cfg) {
    nats_.emplace_back(std::move(cfg));
    return nats_.size() - 1;
}

void Network::send(Datagram pkt) {
    const Time now = loop_.now();
    Ipv4Address route_src = pkt.src.ip;
    std::string origin = pkt.src.to_string();

    for (auto& nat : nats_) {
        if (nat.is_inside(pkt.src.ip) && !nat.is_inside(pkt.dst.ip)) {
            pkt = nat.translate(std::move(pkt), SimNat::Direction::Outbound, now);
            break;
        }
    }
    for (auto& nat : nats_) {
        if (pkt.dst.ip == nat.config().public_ip) {
            try {
                pkt = nat.translate(std::move(pkt), SimNat::Direction::Inbound, now);
            } catch (const Error&) {
                loop_.record(nat.config().name, "nat_drop", "dst=" + pkt.dst.to_string());
                return;
            }
            break;
        }
    }

    auto id = find_link(route_src, pkt.dst.ip);
    if (!id) {
        ++unrouted_;
        loop_.record(origin, "unrouted", "dst=" + pkt.dst.to_string());
        return;
    }
    Link& link = links_[*id];
    bool forward = route_src == link.cfg.a;
    LinkCounters& c = link.counters;
    ++c.sent;
    if (!link.cfg.up) {
        ++c.dropped;
        loop_.record(origin, "link_down_drop", "dst=" + pkt.dst.to_string());
        return;
    }
    if (link.rng.bernoulli(forward ? link.cfg.loss_ab : link.cfg.loss_ba)) {
        ++c.lost;
        loop_.record(origin, "loss", "dst=" + pkt.dst.to_string());
        return;
    }

    Duration serialization{0};
    if (link.cfg.bandwidth_bps > 0)
        serialization = Duration(std::int64_t(double(pkt.payload.size()) * 8.0 * 1e9 / link.cfg.bandwidth_bps));
    Time depart = now;
    if (link.cfg.queue_bytes > 0 && link.cfg.bandwidth_bps > 0) {
        Time& busy = forward ? link.busy_ab : link.busy_ba;
        Time start = std::max(now, busy);
        double backlog = double((start - now).count()) * link.cfg.bandwidth_bps / 8e9;
        if (backlog + double(pkt.payload.size()) > double(link.cfg.queue_bytes)) {
            ++c.dropped;
            loop_.record(origin, "queue_drop", "dst=" + pkt.dst.to_string());
            return;
        }
        busy = start + serialization;
        depart = start;
    }
    Duration jitter(std::int64_t(std::max(0.0, link.rng.normal(double(link.cfg.jitter.count())))));
    Time arrival = depart + serialization + (forward ? link.cfg.delay_ab : link.cfg.delay_ba) + jitter;

    ++c.in_flight;
    std::size_t link_id = *id;
    loop_.schedule_at(arrival, [this, link_id, pkt = std::move(pkt)]() {
        LinkCounters& lc = links_[link_id].counters;
        --lc.in_flight;
        ++lc.delivered;
        lc.bytes_delivered += pkt.payload.size();
        auto rx = receivers_.find(pkt.dst.ip);
        if (rx == receivers_.end()) {
            ++undeliverable_;
            return;
        }
        // copy: the receiver may detach itself while handling
        Receiver handler = rx->second;
        handler(pkt);
    });
}

} // namespace ruta::sim
