#include "ruta/probe.hpp"

#include "ruta/error.hpp"

#include <algorithm>
#include <cmath>

namespace ruta::probe {

ProbeSession::ProbeSession(schema::SlocShort local, schema::SlocShort peer, ProbeConfig cfg)
    : local_(std::move(local)), peer_(std::move(peer)), cfg_(cfg) {
    if (cfg_.window == 0) throw Error(Errc::OutOfRange, "probe window must be positive");
}

srou::OamMessage ProbeSession::next_request(sim::Time now) {
    ++seq_;
    pending_[seq_] = now;
    return srou::OamMessage::linkstate_request(seq_, std::uint64_t(now.count()));
}

bool ProbeSession::on_response(const srou::OamMessage& resp, sim::Time t4) {
    if (!resp.is_linkstate_response()) return false;
    const auto* body = std::get_if<srou::LinkstateBody>(&resp.payload);
    if (!body) return false;
    auto it = pending_.find(body->sender_seq);
    if (it == pending_.end()) return false;
    ProbeTimestamps ts{sim::Time(std::int64_t(body->sender_timestamp)), sim::Time(std::int64_t(body->received_timestamp)),
                       sim::Time(std::int64_t(body->timestamp)), t4};
    if (ts.t4 < ts.t1 || ts.t3 < ts.t2) return false;
    ProbeOutcome o{it->first, it->second, ts};
    pending_.erase(it);
    complete(std::move(o));
    return true;
}

void ProbeSession::expire(sim::Time now) {
    for (auto it = pending_.begin(); it != pending_.end();) {
        if (now - it->second >= cfg_.timeout) {
            ProbeOutcome o{it->first, it->second, std::nullopt};
            it = pending_.erase(it);
            complete(std::move(o));
        } else {
            ++it;
        }
    }
}

void ProbeSession::complete(ProbeOutcome o) {
    if (o.ts) {
        std::int64_t twd = o.ts->two_way().count();
        if (last_two_way_ns_) {
            double d = double(twd - *last_two_way_ns_);
            jitter_ns_ += (std::abs(d) - jitter_ns_) / 16.0;
        }
        last_two_way_ns_ = twd;
        consecutive_losses_ = 0;
    } else {
        ++consecutive_losses_;
    }
    window_.push_back(std::move(o));
    while (window_.size() > cfg_.window) window_.pop_front();
}

schema::LinkStateRecord ProbeSession::compute_metrics(sim::Time now, Utilization util) const {
    if (window_.empty()) throw Error(Errc::EmptyWindow, "no completed probes for " + peer_.render());
    std::int64_t sum_ns = 0;
    std::size_t delivered = 0;
    for (const auto& o : window_) {
        if (!o.ts) continue;
        sum_ns += o.ts->two_way().count();
        ++delivered;
    }
    schema::LinkStateRecord r;
    r.src = local_;
    r.dst = peer_;
    r.two_way_delay_us = delivered ? double(sum_ns) / double(delivered) / 1000.0 : 0.0;
    r.jitter_us = jitter_ns_ / 1000.0;
    r.loss = double(window_.size() - delivered) / double(window_.size());
    r.utilization_rx = std::clamp(util.rx, 0.0, 1.0);
    r.utilization_tx = std::clamp(util.tx, 0.0, 1.0);
    r.status = consecutive_losses_ >= cfg_.down_after ? schema::LinkStatus::Down : schema::LinkStatus::Up;
    r.sampled_at_ns = now.count();
    return r;
}

srou::OamMessage ProbeResponder::respond(const srou::OamMessage& req, sim::Time t2, sim::Time t3) {
    const auto* body = std::get_if<srou::LinkstateBody>(&req.payload);
    if (!req.is_linkstate_request() || !body) throw Error(Errc::MalformedOam, "not a Linkstate request");
    srou::OamMessage resp;
    resp.flow_id = req.flow_id;
    resp.type = srou::OamType::Linkstate;
    resp.subtype = srou::oam_subtype::kResponse;
    resp.payload = srou::LinkstateBody{++seq_, std::uint64_t(t3.count()), std::uint64_t(t2.count()), body->seq,
                                       body->timestamp};
    return resp;
}

srou::OamMessage ProbeResponder::respond(std::span<const std::uint8_t> req, sim::Time t2, sim::Time t3) {
    srou::OamMessage msg;
    try {
        msg = srou::decode_oam(req);
    } catch (const Error& e) {
        throw Error(Errc::MalformedOam, std::string("undecodable probe: ") + e.what());
    }
    return respond(msg, t2, t3);
}

std::vector<ProbeSession> start_full_mesh(const std::string& self, const std::vector<schema::Sloc>& local,
                                          const std::vector<MeshPeer>& peers, const std::set<std::string>& white_list,
                                          ProbeConfig cfg) {
    std::vector<ProbeSession> out;
    for (const auto& l : local)
        for (const auto& p : peers) {
            if (p.system_name == self) continue;
            if (!white_list.empty() && !white_list.count(p.system_name)) continue;
            for (const auto& ps : p.slocs)
                out.emplace_back(schema::short_of(self, l), schema::short_of(p.system_name, ps), cfg);
        }
    return out;
}

// ---------------------------------------------------------------- STUN

StunExchange::StunExchange(sim::EventLoop& loop, Send send, Done done, std::vector<sim::Duration> backoff)
    : loop_(loop), send_(std::move(send)), done_(std::move(done)), backoff_(std::move(backoff)),
      alive_(std::make_shared<bool>(true)) {
    if (backoff_.empty()) throw Error(Errc::OutOfRange, "STUN backoff schedule is empty");
}

StunExchange::~StunExchange() {
    *alive_ = false;
    loop_.cancel(timer_);
}

void StunExchange::start() {
    attempts_ = 0;
    finished_ = false;
    attempt();
}

void StunExchange::attempt() {
    if (finished_) return;
    if (attempts_ == int(backoff_.size())) {
        finished_ = true;
        done_(std::nullopt, Errc::Timeout);
        return;
    }
    sim::Duration wait = backoff_[std::size_t(attempts_)];
    ++attempts_;
    send_(srou::encode_oam(srou::OamMessage::stun_request()));
    auto alive = alive_;
    timer_ = loop_.schedule_in(wait, [this, alive] {
        if (*alive) attempt();
    });
}

void StunExchange::on_datagram(std::span<const std::uint8_t> bytes) {
    if (finished_) return;
    srou::OamMessage msg;
    try {
        msg = srou::decode_oam(bytes);
    } catch (const Error&) {
        return;
    }
    const auto* obs = std::get_if<srou::StunObserved>(&msg.payload);
    if (msg.type != srou::OamType::Stun || msg.subtype != srou::oam_subtype::kResponse || !obs) return;
    finished_ = true;
    loop_.cancel(timer_);
    done_(obs->observed, std::nullopt);
}

srou::OamMessage stun_serve(const srou::OamMessage& req, Endpoint observed_src) {
    if (req.type != srou::OamType::Stun || req.subtype != srou::oam_subtype::kRequest)
        throw Error(Errc::MalformedOam, "not a STUN request");
    auto resp = srou::OamMessage::stun_response(observed_src);
    resp.flow_id = req.flow_id;
    return resp;
}

} // namespace ruta::probe
