#include "ruta/dataplane.hpp"

#include "ruta/error.hpp"

#include <algorithm>

namespace ruta::dp {

namespace {

bool is_zero(const IpAddress& a) {
    return std::visit([](const auto& x) { return x.is_zero(); }, a);
}

std::string errc_name(Errc c) {
    std::string s = to_string(c);
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char ch = s[i];
        if (std::isupper(static_cast<unsigned char>(ch))) {
            if (i > 0) out.push_back('_');
            out.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        } else {
            out.push_back(ch);
        }
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------- runtime

NodeRuntime::NodeRuntime(World& world, NodeConfig cfg)
    : world_(world), cfg_(std::move(cfg)), client_(world.store.client(cfg_.name)), session_(client_, cfg_.leases),
      alive_(std::make_shared<bool>(false)), rx_bytes_(cfg_.slocs.size(), 0), tx_bytes_(cfg_.slocs.size(), 0) {
    if (cfg_.slocs.empty()) throw Error(Errc::OutOfRange, "node " + cfg_.name + " has no SLoC");
    for (const auto& s : cfg_.slocs) schema::validate(s);
}

NodeRuntime::~NodeRuntime() {
    if (*alive_) {
        *alive_ = false;
        std::set<std::uint32_t> ips;
        for (const auto& s : cfg_.slocs) ips.insert(s.private_addr.ip.value);
        for (auto ip : ips) world_.net.detach(Ipv4Address(ip));
    }
}

void NodeRuntime::start() {
    if (*alive_) return;
    *alive_ = true;
    std::set<std::uint32_t> ips;
    for (const auto& s : cfg_.slocs) ips.insert(s.private_addr.ip.value);
    auto alive = alive_;
    for (auto ip : ips)
        world_.net.attach(Ipv4Address(ip), [this, alive](const sim::Datagram& d) {
            if (*alive) receive(d);
        });
    world_.loop.record(cfg_.name, "start", std::string(schema::role_token(cfg_.role)));

    session_.start();
    if (lsdb_session_) lsdb_session_->start();
    services_mirror_.emplace(client_, "/service/");
    services_changed_ = true;
    schema::register_node(
        session_, cfg_.role, cfg_.name, cfg_.site_id, cfg_.location,
        [this, alive](schema::RegisterResult r) {
            if (!*alive) return;
            if (r.error) {
                registration_error_ = r.error;
                counters_.inc("register.failed");
                world_.loop.record(cfg_.name, "register_failed", r.message);
                return;
            }
            record_ = r.record;
            world_.loop.record(cfg_.name, "registered", "label=" + std::to_string(record_->system_label));
            try {
                schema::announce_service(session_, *record_, cfg_.slocs);
            } catch (const Error& e) {
                counters_.inc("service.announce_failed");
                world_.loop.record(cfg_.name, "announce_failed", e.what());
            }
            on_registered();
        },
        cfg_.registration);

    every(cfg_.control_interval, [this] { control_tick(); });
    if (cfg_.probing && !probe_roles().empty()) {
        every(cfg_.probe.interval, [this] { probe_tick(); });
        every(cfg_.probe.report_interval, [this] { report_tick(); });
    }
}

void NodeRuntime::kill() {
    if (!*alive_) return;
    *alive_ = false;
    session_.stop();
    if (lsdb_session_) lsdb_session_->stop();
    std::set<std::uint32_t> ips;
    for (const auto& s : cfg_.slocs) ips.insert(s.private_addr.ip.value);
    for (auto ip : ips) world_.net.detach(Ipv4Address(ip));
    world_.loop.record(cfg_.name, "kill");
}

void NodeRuntime::use_lsdb(LsdbNode& lsdb) {
    lsdb_ = &lsdb;
    lsdb_session_ = std::make_unique<schema::NodeSession>(lsdb.lsdb_store().client(cfg_.name), cfg_.leases);
    if (*alive_) lsdb_session_->start();
}

kv::Client NodeRuntime::linkstate_client() const { return lsdb_session_ ? lsdb_session_->client() : client_; }

void NodeRuntime::every(sim::Duration period, std::function<void()> fn) {
    auto alive = alive_;
    world_.loop.schedule_in(period, [this, alive, period, fn = std::move(fn)] {
        if (!*alive) return;
        fn();
        if (*alive) every(period, fn);
    });
}

std::optional<std::size_t> NodeRuntime::sloc_index(const std::string& short_form_text) const {
    for (std::size_t i = 0; i < cfg_.slocs.size(); ++i)
        if (short_form(i) == short_form_text) return i;
    return std::nullopt;
}

std::vector<schema::ServiceEntry> NodeRuntime::services(schema::Role role) const {
    std::vector<schema::ServiceEntry> out;
    if (!services_mirror_) return out;
    std::string prefix = "/service/" + std::string(schema::role_token(role)) + "/";
    for (auto it = services_mirror_->entries().lower_bound(prefix);
         it != services_mirror_->entries().end() && it->first.rfind(prefix, 0) == 0; ++it) {
        try {
            out.push_back({it->first.substr(prefix.size()), schema::decode_service(it->second.value)});
        } catch (const Error&) {
            // Corrupt announcements are skipped.
        }
    }
    return out;
}

void NodeRuntime::send(std::size_t sloc, Endpoint dst, std::vector<std::uint8_t> payload) {
    sim::Datagram d{cfg_.slocs.at(sloc).private_addr, dst, std::move(payload)};
    counters_.inc("tx");
    tx_bytes_[sloc] += d.payload.size();
    if (world_.tap) world_.tap(cfg_.name, d);
    world_.net.send(std::move(d));
}

void NodeRuntime::postcard(const srou::DataPacket& pkt, const std::string& action) {
    if (!pkt.header.flags.telemetry) return;
    world_.postcards.push_back(Postcard{cfg_.name, pkt.header.flow_id.as_u32(), world_.loop.now().count(),
                                        pkt.header.segments_left, action});
    counters_.inc("postcard");
}

void NodeRuntime::receive(const sim::Datagram& d) {
    std::optional<std::size_t> idx;
    for (std::size_t i = 0; i < cfg_.slocs.size(); ++i)
        if (cfg_.slocs[i].private_addr == d.dst) idx = i;
    if (!idx) {
        drop("no_sloc");
        return;
    }
    counters_.inc("rx");
    rx_bytes_[*idx] += d.payload.size();
    switch (classify(d.payload)) {
    case Demux::Empty: drop("empty"); return;
    case Demux::Passthrough: on_passthrough(*idx, d); return;
    case Demux::Srou: break;
    }
    srou::Packet pkt;
    try {
        pkt = srou::decode_packet(d.payload);
    } catch (const Error& e) {
        drop(errc_name(e.code()));
        return;
    }
    if (auto* oam = std::get_if<srou::OamMessage>(&pkt))
        handle_oam(*idx, d, *oam);
    else
        handle_data(*idx, d, std::move(std::get<srou::DataPacket>(pkt)));
}

void NodeRuntime::on_passthrough(std::size_t, const sim::Datagram&) { drop("bad_magic"); }

void NodeRuntime::handle_oam(std::size_t sloc, const sim::Datagram& d, const srou::OamMessage& msg) {
    const auto now = world_.loop.now();
    if (msg.is_linkstate_request()) {
        send(sloc, d.src, srou::encode_oam(responder_.respond(msg, now, now)));
        counters_.inc("probe.answered");
    } else if (msg.is_linkstate_response()) {
        auto it = sessions_.find({sloc, d.src});
        if (it == sessions_.end() || !it->second.on_response(msg, now)) drop("probe_unmatched");
    } else if (msg.type == srou::OamType::Stun && msg.subtype == srou::oam_subtype::kRequest &&
               cfg_.role == schema::Role::Stun) {
        send(sloc, d.src, srou::encode_oam(probe::stun_serve(msg, d.src)));
        counters_.inc("stun.served");
    } else {
        drop("oam_unhandled");
    }
}

void NodeRuntime::handle_data(std::size_t sloc, const sim::Datagram& d, srou::DataPacket pkt) {
    if (!admit(d, pkt)) {
        drop("admission");
        return;
    }
    auto& h = pkt.header;
    if (h.segments_left == 0) {
        drop("no_segments_left");
        postcard(pkt, "drop:no_segments_left");
        return;
    }
    if (is_zero(h.source_address) && h.source_port == 0) {
        h.source_address = d.src.ip;
        h.source_port = d.src.port;
        counters_.inc("source_filled");
    }
    auto [seg, next] = srou::advance_segment(h);
    pkt.header = std::move(next);
    if (auto* w = std::get_if<srou::Waypoint>(&seg)) {
        postcard(pkt, "relay");
        counters_.inc("relay");
        send(sloc, w->locator, srou::encode_packet(pkt));
        return;
    }
    execute(sloc, std::get<srou::FunctionSegment>(seg), pkt);
}

void NodeRuntime::execute(std::size_t, const srou::FunctionSegment&, srou::DataPacket& pkt) {
    drop("unknown_function");
    postcard(pkt, "drop:unknown_function");
}

void NodeRuntime::control_tick() {
    services_changed_ = false;
    if (services_mirror_) services_changed_ = !services_mirror_->sync().empty() || services_changed_;
    if (services_changed_ && cfg_.probing && !probe_roles().empty()) refresh_probes();
    on_control_tick();
}

void NodeRuntime::refresh_probes() {
    std::map<std::pair<std::size_t, Endpoint>, schema::SlocShort> desired;
    for (auto role : probe_roles())
        for (const auto& entry : services(role)) {
            if (entry.system_name == cfg_.name) continue;
            if (!cfg_.probe_white_list.empty() && !cfg_.probe_white_list.count(entry.system_name)) continue;
            for (std::size_t i = 0; i < cfg_.slocs.size(); ++i)
                for (const auto& peer : entry.slocs)
                    if (peer.color == cfg_.slocs[i].color)
                        desired.emplace(std::make_pair(i, peer.public_addr), schema::short_of(entry.system_name, peer));
        }
    for (auto it = sessions_.begin(); it != sessions_.end();)
        it = desired.count(it->first) ? std::next(it) : sessions_.erase(it);
    for (const auto& [key, peer] : desired)
        if (!sessions_.count(key))
            sessions_.emplace(key, probe::ProbeSession(schema::short_of(cfg_.name, cfg_.slocs[key.first]), peer,
                                                       cfg_.probe));
}

void NodeRuntime::probe_tick() {
    const auto now = world_.loop.now();
    for (auto& [key, s] : sessions_) {
        s.expire(now);
        send(key.first, key.second, srou::encode_oam(s.next_request(now)));
    }
}

void NodeRuntime::report_tick() {
    const auto now = world_.loop.now();
    double secs = sim::to_ms(now - last_report_) / 1000.0;
    last_report_ = now;
    std::vector<probe::Utilization> util(cfg_.slocs.size());
    for (std::size_t i = 0; i < cfg_.slocs.size(); ++i) {
        const auto& s = cfg_.slocs[i];
        if (secs > 0 && s.rx_bw > 0) util[i].rx = double(rx_bytes_[i]) * 8.0 / secs / s.rx_bw;
        if (secs > 0 && s.tx_bw > 0) util[i].tx = double(tx_bytes_[i]) * 8.0 / secs / s.tx_bw;
        rx_bytes_[i] = tx_bytes_[i] = 0;
    }
    for (auto& [key, s] : sessions_) {
        schema::LinkStateRecord rec;
        try {
            rec = s.compute_metrics(now, util[key.first]);
        } catch (const Error&) {
            continue;
        }
        try {
            schema::report_linkstate(session_, rec);
            counters_.inc("report.ok");
        } catch (const Error& e) {
            counters_.inc("report." + errc_name(e.code()));
        }
        if (lsdb_session_) {
            try {
                schema::report_linkstate(*lsdb_session_, rec);
            } catch (const Error& e) {
                counters_.inc("report.lsdb_" + errc_name(e.code()));
            }
        }
    }
}

// ---------------------------------------------------------------- fabric, STUN, LSDB

Fabric::Fabric(World& world, NodeConfig cfg, FabricConfig fcfg)
    : NodeRuntime(world, [&] {
          cfg.role = schema::Role::Fabric;
          return std::move(cfg);
      }()),
      fcfg_(std::move(fcfg)) {}

bool Fabric::admit(const sim::Datagram& d, const srou::DataPacket& pkt) {
    if (!fcfg_.edge_token) return true;
    const auto& h = pkt.header;
    // Only packets that have not yet visited any segment came straight from a client.
    bool first_hop = !h.segments.empty() && h.segments_left == h.last_entry() + 1;
    if (!first_hop) return true;
    bool ok = fcfg_.edge_token->validate(h.flow_id.as_u32(), d.src.ip, world_.loop.now());
    counters_.inc(ok ? "token.accepted" : "token.rejected");
    return ok;
}

StunServer::StunServer(World& world, NodeConfig cfg)
    : NodeRuntime(world, [&] {
          cfg.role = schema::Role::Stun;
          return std::move(cfg);
      }()) {}

LsdbNode::LsdbNode(World& world, NodeConfig cfg)
    : NodeRuntime(world, [&] {
          cfg.role = schema::Role::Lsdb;
          return std::move(cfg);
      }()),
      lsdb_store_(std::make_unique<kv::Store>(world.loop, cfg_.name)) {}

// ---------------------------------------------------------------- hosts

Host::Host(sim::EventLoop& loop, std::string name, MacAddress mac, Ipv4Address ip)
    : loop_(loop), name_(std::move(name)), mac_(mac), ip_(ip) {}

void Host::send(frame::HostFrame f) {
    if (!linecard_) throw Error(Errc::InvariantViolation, "host " + name_ + " is not attached");
    ++sent_;
    auto bytes = frame::encode_frame(f);
    Linecard* lc = linecard_;
    std::size_t port = port_;
    loop_.schedule_in(sim::Duration(0), [lc, port, bytes = std::move(bytes)] { lc->from_host(port, bytes); });
}

void Host::send_to(MacAddress dst_mac, Ipv4Address dst_ip, std::vector<std::uint8_t> payload) {
    send(frame::HostFrame{dst_mac, mac_, ip_, dst_ip, 64, std::move(payload)});
}

void Host::announce() {
    MacAddress bcast;
    bcast.bytes.fill(0xFF);
    send(frame::HostFrame{bcast, mac_, ip_, Ipv4Address(0xFFFFFFFF), 64, {}});
}

void Host::deliver(const frame::HostFrame& f) {
    ++received_;
    if (receive_) receive_(f);
}

// ---------------------------------------------------------------- linecard

Linecard::Linecard(World& world, NodeConfig cfg, LinecardConfig lcfg)
    : NodeRuntime(world, [&] {
          cfg.role = schema::Role::Linecard;
          return std::move(cfg);
      }()),
      lcfg_(std::move(lcfg)), table_(lcfg_.imports) {
    path::validate(lcfg_.sla);
}

std::size_t Linecard::attach_host(Host& host, Attachment att, std::optional<HostIdentity> id) {
    if (host.linecard_) throw Error(Errc::InvariantViolation, "host " + host.name() + " is already attached");
    ports_.push_back(Port{&host, std::move(att), std::move(id), false, {}});
    host.linecard_ = this;
    host.port_ = ports_.size() - 1;
    return host.port_;
}

void Linecard::add_prefix(std::size_t port, Ipv4Prefix prefix) {
    auto& p = ports_.at(port);
    if (p.att.kind != Attachment::Kind::L3) throw Error(Errc::InvariantViolation, "prefixes need an L3 attachment");
    p.prefixes.push_back(prefix);
    local_l3_[p.att.id].insert(prefix, port);
    schema::ServiceRoute r;
    r.type = schema::RouteType::Type5;
    r.export_rt = p.att.export_rt;
    r.rd = p.att.rd;
    r.prefix = prefix;
    r.value = {cfg_.site_id, cfg_.name, policy_tag(p), {}};
    announce(r);
}

bool Linecard::headless() const { return sync_ && sync_->headless(); }

void Linecard::on_registered() {
    sync_ = std::make_unique<path::RouteSync>(client_, table_);
    linkstate_.emplace(linkstate_client(), std::string(schema::kLinkstatePrefix));
    control_.emplace(client_, "/control/");
    identity_.emplace(client_, "/identity/");
    std::vector<kv::KvEntry> rules;
    for (const auto& [k, e] : control_->entries()) rules.push_back(e);
    policy_ = schema::build_policy(rules);
    auto pending = std::move(pending_);
    pending_.clear();
    for (const auto& r : pending) announce(r);
}

void Linecard::on_control_tick() {
    if (!sync_) return;
    sync_->sync();
    bool dirty = services_changed();
    if (!linkstate_->sync().empty()) dirty = true;
    if (!control_->sync().empty()) {
        std::vector<kv::KvEntry> rules;
        for (const auto& [k, e] : control_->entries()) rules.push_back(e);
        policy_ = schema::build_policy(rules);
    }
    identity_->sync();
    const auto now = world_.loop.now();
    if (now - last_refresh_ >= lcfg_.path_refresh) {
        last_refresh_ = now;
        dirty = true;
    }
    if (dirty) {
        graph_.reset();
        paths_.clear();
    }
    if (headless() != was_headless_) {
        was_headless_ = !was_headless_;
        world_.loop.record(cfg_.name, was_headless_ ? "headless" : "reattached", std::to_string(pending_.size()));
    }
    if (!pending_.empty() && !headless()) {
        auto pending = std::move(pending_);
        pending_.clear();
        for (const auto& r : pending) {
            world_.loop.record(cfg_.name, "replay", r.key());
            announce(r);
        }
    }
}

void Linecard::announce(const schema::ServiceRoute& r) {
    // Queued routes go out first; order is preserved across a partition.
    if (!sync_ || !pending_.empty()) {
        pending_.push_back(r);
        return;
    }
    try {
        schema::announce_route(session_, r);
        counters_.inc("route.announced");
        world_.loop.record(cfg_.name, "announce", r.key());
    } catch (const Error& e) {
        if (e.code() != Errc::StoreUnavailable) throw;
        pending_.push_back(r);
    }
}

std::vector<std::uint32_t> Linecard::groups_of(const Port& p) const {
    if (!p.identity || !identity_) return {};
    schema::Identity probe{p.identity->user_id, p.identity->device_id, {}};
    auto it = identity_->entries().find(probe.key());
    if (it == identity_->entries().end()) return {};
    try {
        return schema::parse_identity(it->first, it->second.value).groups;
    } catch (const Error&) {
        return {};
    }
}

std::uint32_t Linecard::policy_tag(const Port& p) const {
    auto g = groups_of(p);
    return g.empty() ? 0 : *std::min_element(g.begin(), g.end());
}

void Linecard::learn(std::size_t port, const frame::HostFrame& f) {
    auto& p = ports_[port];
    if (p.learned || f.src_ip.is_zero()) return;
    p.learned = true;
    local_l2_[{p.att.id, f.src_mac}] = port;
    if (p.att.kind == Attachment::Kind::L3) local_l3_[p.att.id].insert(Ipv4Prefix::make(f.src_ip, 32), port);
    world_.loop.record(cfg_.name, "learn", f.src_mac.to_string() + " " + f.src_ip.to_string());
    schema::ServiceRoute r;
    r.type = schema::RouteType::Type2;
    r.export_rt = p.att.export_rt;
    r.rd = p.att.rd;
    r.mac = f.src_mac;
    r.ip = f.src_ip;
    r.value = {cfg_.site_id, cfg_.name, policy_tag(p), {}};
    announce(r);
}

std::optional<std::size_t> Linecard::local_port(const Attachment& att, const frame::HostFrame& f) const {
    if (att.kind == Attachment::Kind::L2) {
        auto it = local_l2_.find({att.id, f.dst_mac});
        if (it != local_l2_.end()) return it->second;
        return std::nullopt;
    }
    auto t = local_l3_.find(att.id);
    if (t == local_l3_.end()) return std::nullopt;
    auto hit = t->second.lookup(f.dst_ip);
    if (!hit) return std::nullopt;
    return *hit->second;
}

void Linecard::deliver(std::size_t port, frame::HostFrame f) {
    auto& p = ports_.at(port);
    if (p.att.kind == Attachment::Kind::L3) f.dst_mac = p.host->mac();
    counters_.inc("delivered");
    p.host->deliver(f);
}

void Linecard::from_host(std::size_t port, const std::vector<std::uint8_t>& bytes) {
    if (!alive()) return;
    counters_.inc("host.rx");
    frame::HostFrame f;
    try {
        f = frame::decode_frame(bytes);
    } catch (const Error&) {
        drop("malformed_frame");
        return;
    }
    learn(port, f);
    if (f.dst_mac.is_broadcast()) {
        counters_.inc("host.broadcast");
        return;
    }
    const Port& p = ports_.at(port);
    if (auto local = local_port(p.att, f); local && *local != port) {
        counters_.inc("hairpin");
        deliver(*local, f);
        return;
    }
    const auto& reg = srou::FunctionRegistry::defaults();
    bool l2 = p.att.kind == Attachment::Kind::L2;
    auto fn = reg.code_of(l2 ? srou::FunctionKind::DecapL2 : srou::FunctionKind::DecapL3);
    const schema::ServiceRoute* route = nullptr;
    try {
        route = l2 ? &table_.resolve_mac(p.att.id, f.dst_mac) : &table_.resolve_ip(p.att.id, f.dst_ip);
    } catch (const Error&) {
        drop("no_route");
        return;
    }
    if (route->value.system_name == cfg_.name) {
        drop("no_route");
        return;
    }
    Meta meta{policy_tag(p), p.att.telemetry, groups_of(p)};
    encap(meta, f, *route, *fn, p.att.id);
}

std::optional<Endpoint> Linecard::endpoint_of(const std::string& short_form_text) const {
    for (auto role : {schema::Role::Linecard, schema::Role::Fabric})
        for (const auto& e : services(role))
            for (const auto& s : e.slocs)
                if (schema::short_of(e.system_name, s).render() == short_form_text) return s.public_addr;
    try {
        return schema::SlocShort::parse(short_form_text).private_addr;
    } catch (const Error&) {
        return std::nullopt;
    }
}

path::LinkGraph& Linecard::graph() {
    if (graph_) return *graph_;
    records_.clear();
    std::vector<schema::LinkStateRecord> recs;
    if (linkstate_)
        for (const auto& [k, e] : linkstate_->entries()) {
            try {
                auto r = schema::decode_linkstate(e.value);
                records_[{r.src.render(), r.dst.render()}] = r;
                recs.push_back(std::move(r));
            } catch (const Error&) {
                // Unreadable records contribute no edge.
            }
        }
    graph_.emplace(recs, lcfg_.sla);
    std::set<std::string> relays;
    for (const auto& e : services(schema::Role::Fabric))
        for (const auto& s : e.slocs) relays.insert(schema::short_of(e.system_name, s).render());
    // An empty relay set would mean "anyone may relay"; keep linecards out regardless.
    if (relays.empty()) relays.insert("");
    graph_->set_relays(std::move(relays));
    return *graph_;
}

std::optional<path::ComputedPath> Linecard::path_to(const std::string& dst_node) {
    if (auto it = paths_.find(dst_node); it != paths_.end()) return it->second;
    std::vector<std::string> dsts;
    for (const auto& e : services(schema::Role::Linecard))
        if (e.system_name == dst_node)
            for (const auto& s : e.slocs) dsts.push_back(schema::short_of(e.system_name, s).render());
    if (dsts.empty()) return std::nullopt;
    std::sort(dsts.begin(), dsts.end());
    std::vector<std::string> srcs;
    for (std::size_t i = 0; i < cfg_.slocs.size(); ++i) srcs.push_back(short_form(i));
    std::sort(srcs.begin(), srcs.end());

    auto& g = graph();
    // Best measured direct pair: up before down, then cheaper.
    std::optional<std::tuple<bool, path::Cost, std::string, std::string>> best;
    std::optional<schema::LinkStateRecord> best_rec;
    for (const auto& s : srcs)
        for (const auto& d : dsts) {
            auto it = records_.find({s, d});
            if (it == records_.end()) it = records_.find({d, s});
            if (it == records_.end()) continue;
            std::tuple<bool, path::Cost, std::string, std::string> key{
                it->second.status == schema::LinkStatus::Down, path::edge_cost(it->second, lcfg_.sla), s, d};
            if (!best || key < *best) {
                best = key;
                best_rec = it->second;
            }
        }
    std::string src = best ? std::get<2>(*best) : srcs.front();
    std::string dst = best ? std::get<3>(*best) : dsts.front();

    path::ComputedPath p;
    auto verdict = path::evaluate_sla(best_rec, lcfg_.sla);
    if (verdict.ok) {
        p.src = src;
        p.waypoints = {dst};
        p.cost = std::get<1>(*best);
        p.source = path::PathSource::Direct;
    } else {
        counters_.inc("sla.violation." + std::string(path::to_string(verdict.reason)));
        try {
            p = path::compute_path(g, srcs, dsts, lcfg_.sla);
        } catch (const Error& e) {
            if (e.code() != Errc::NoFeasiblePath) throw;
            counters_.inc("path.fallback_direct");
            p.src = src;
            p.waypoints = {dst};
            p.cost = best ? std::get<1>(*best) : 0;
            p.source = path::PathSource::Direct;
        }
    }
    p.computed_at_ns = world_.loop.now().count();
    std::string detail = dst_node + " via";
    for (const auto& w : p.waypoints) detail += " " + w;
    world_.loop.record(cfg_.name, "path", detail);
    paths_[dst_node] = p;
    return p;
}

void Linecard::encap(const Meta& meta, const frame::HostFrame& f, const schema::ServiceRoute& route,
                     std::uint16_t function, std::uint32_t args) {
    auto rule = policy_.lookup_route(f.src_mac, f.src_ip, f.dst_mac, f.dst_ip);
    schema::PolicyValue action = rule ? *rule : policy_.lookup(meta.src_groups, {route.value.policy_tag});
    if (action.action == schema::Action::Deny) {
        drop("policy_deny");
        return;
    }
    path::ComputedPath p;
    if (action.action == schema::Action::Steer) {
        auto direct = path_to(route.value.system_name);
        if (!direct) {
            drop("no_destination_sloc");
            return;
        }
        for (const auto& s : action.slocs) p.waypoints.push_back(s.render());
        const auto& final_dst = direct->waypoints.back();
        if (p.waypoints.back() != final_dst) p.waypoints.push_back(final_dst);
        p.src = direct->src;
        p.source = path::PathSource::PolicySteer;
        counters_.inc("path.steered");
    } else {
        auto computed = path_to(route.value.system_name);
        if (!computed) {
            drop("no_destination_sloc");
            return;
        }
        p = *computed;
    }
    std::vector<Endpoint> eps;
    for (const auto& w : p.waypoints) {
        auto ep = endpoint_of(w);
        if (!ep) {
            drop("unknown_sloc");
            return;
        }
        eps.push_back(*ep);
    }
    path::SegmentList sl;
    try {
        sl = path::to_segment_list(eps, function, args, lcfg_.sla.max_segments);
    } catch (const Error& e) {
        drop(errc_name(e.code()));
        return;
    }
    std::size_t idx = sloc_index(p.src).value_or(0);
    srou::DataPacket pkt;
    auto& h = pkt.header;
    h.flags.telemetry = meta.telemetry;
    h.flow_id = srou::FlowId::from_u32(meta.flow_id);
    h.protocol = srou::Protocol::Ipv4;
    h.source_address = cfg_.slocs[idx].private_addr.ip;
    h.source_port = cfg_.slocs[idx].private_addr.port;
    h.segments = std::move(sl.segments);
    h.segments_left = sl.segments_left;
    pkt.payload = frame::encode_frame(f);
    counters_.inc("encap");
    send(idx, sl.outer_dst, srou::encode_packet(pkt));
}

void Linecard::execute(std::size_t, const srou::FunctionSegment& fn, srou::DataPacket& pkt) {
    const auto* entry = srou::FunctionRegistry::defaults().find(fn.function);
    if (!entry) {
        drop("unknown_function");
        postcard(pkt, "drop:unknown_function");
        return;
    }
    if (pkt.header.protocol != srou::Protocol::Ipv4) {
        drop("unsupported_protocol");
        postcard(pkt, "drop:unsupported_protocol");
        return;
    }
    frame::HostFrame f;
    try {
        f = frame::decode_frame(pkt.payload);
    } catch (const Error&) {
        drop("malformed_inner");
        postcard(pkt, "drop:malformed_inner");
        return;
    }
    bool l2 = entry->kind == srou::FunctionKind::DecapL2;
    std::optional<std::size_t> port;
    if (l2) {
        auto it = local_l2_.find({fn.args, f.dst_mac});
        if (it != local_l2_.end()) port = it->second;
    } else if (auto t = local_l3_.find(fn.args); t != local_l3_.end()) {
        if (auto hit = t->second.lookup(f.dst_ip)) port = *hit->second;
    }
    if (port) {
        postcard(pkt, "deliver");
        deliver(*port, std::move(f));
        return;
    }
    const std::string miss = l2 ? "no_l2_entry" : "no_vrf_route";
    const schema::ServiceRoute* route = nullptr;
    try {
        route = l2 ? &table_.resolve_mac(fn.args, f.dst_mac) : &table_.resolve_ip(fn.args, f.dst_ip);
    } catch (const Error&) {
    }
    if (!route || route->value.system_name == cfg_.name || f.ttl <= 1) {
        drop(miss);
        postcard(pkt, "drop:" + miss);
        return;
    }
    --f.ttl;
    postcard(pkt, "reencap");
    counters_.inc("reencap");
    encap(Meta{pkt.header.flow_id.as_u32(), pkt.header.flags.telemetry, {}}, f, *route, fn.function, fn.args);
}

// ---------------------------------------------------------------- native socket

srou::Header native_header(const std::vector<Endpoint>& waypoints, std::uint32_t flow_id, Endpoint source) {
    if (waypoints.size() < 2) throw Error(Errc::InvariantViolation, "native path needs an edge and a destination");
    srou::Header h;
    h.flow_id = srou::FlowId::from_u32(flow_id);
    h.protocol = srou::Protocol::Ipv4;
    h.source_address = source.ip;
    h.source_port = source.port;
    for (std::size_t i = waypoints.size(); i-- > 1;) h.segments.push_back(srou::Waypoint{waypoints[i]});
    h.segments_left = std::uint8_t(h.segments.size());
    return h;
}

Demux classify(std::span<const std::uint8_t> payload) {
    if (payload.empty()) return Demux::Empty;
    return payload[0] == srou::kMagic ? Demux::Srou : Demux::Passthrough;
}

NativeClient::NativeClient(World& world, std::string name, NativeClientConfig cfg)
    : world_(world), name_(std::move(name)), cfg_(std::move(cfg)) {
    if (cfg_.path.empty()) throw Error(Errc::InvariantViolation, "native client needs a server in its path");
}

NativeClient::~NativeClient() { world_.net.detach(cfg_.local.ip); }

void NativeClient::start() {
    world_.net.attach(cfg_.local.ip, [this](const sim::Datagram& d) { receive(d); });
    if (!cfg_.stun) return;
    stun_ = std::make_unique<probe::StunExchange>(
        world_.loop,
        [this](const std::vector<std::uint8_t>& bytes) {
            sim::Datagram d{cfg_.local, *cfg_.stun, bytes};
            if (world_.tap) world_.tap(name_, d);
            world_.net.send(std::move(d));
        },
        [this](std::optional<Endpoint> observed, std::optional<Errc>) {
            public_ = observed;
            world_.loop.record(name_, "stun", observed ? observed->to_string() : "timeout");
            if (stun_done_) stun_done_(observed);
        });
    stun_->start();
}

void NativeClient::send_srou(std::vector<std::uint8_t> app) {
    std::vector<Endpoint> wps{cfg_.edge};
    wps.insert(wps.end(), cfg_.path.begin(), cfg_.path.end());
    srou::DataPacket pkt{native_header(wps, token_), std::move(app)};
    sim::Datagram d{cfg_.local, cfg_.edge, srou::encode_packet(pkt)};
    counters_.inc("tx.srou");
    if (world_.tap) world_.tap(name_, d);
    world_.net.send(std::move(d));
}

void NativeClient::send_passthrough(std::vector<std::uint8_t> app) {
    sim::Datagram d{cfg_.local, cfg_.path.back(), std::move(app)};
    counters_.inc("tx.passthrough");
    if (world_.tap) world_.tap(name_, d);
    world_.net.send(std::move(d));
}

void NativeClient::receive(const sim::Datagram& d) {
    counters_.inc("rx");
    switch (classify(d.payload)) {
    case Demux::Empty: counters_.inc("drop.empty"); return;
    case Demux::Passthrough:
        counters_.inc("rx.passthrough");
        if (app_) app_(d.payload, false);
        return;
    case Demux::Srou: break;
    }
    srou::Packet pkt;
    try {
        pkt = srou::decode_packet(d.payload);
    } catch (const Error&) {
        counters_.inc("drop.malformed");
        return;
    }
    if (std::holds_alternative<srou::OamMessage>(pkt)) {
        if (stun_) stun_->on_datagram(d.payload);
        return;
    }
    counters_.inc("rx.srou");
    if (app_) app_(std::get<srou::DataPacket>(pkt).payload, true);
}

NativeServer::NativeServer(World& world, std::string name, Endpoint local, Endpoint edge)
    : world_(world), name_(std::move(name)), local_(local), edge_(edge) {}

NativeServer::~NativeServer() { world_.net.detach(local_.ip); }

void NativeServer::start() {
    world_.net.attach(local_.ip, [this](const sim::Datagram& d) { receive(d); });
}

void NativeServer::receive(const sim::Datagram& d) {
    counters_.inc("rx");
    auto out = [this](Endpoint dst, std::vector<std::uint8_t> bytes) {
        sim::Datagram r{local_, dst, std::move(bytes)};
        counters_.inc("tx");
        if (world_.tap) world_.tap(name_, r);
        world_.net.send(std::move(r));
    };
    switch (classify(d.payload)) {
    case Demux::Empty: counters_.inc("drop.empty"); return;
    case Demux::Passthrough:
        counters_.inc("rx.passthrough");
        if (app_) app_(d.payload, d.src, false);
        if (echo_) out(d.src, d.payload);
        return;
    case Demux::Srou: break;
    }
    srou::Packet pkt;
    try {
        pkt = srou::decode_packet(d.payload);
    } catch (const Error&) {
        counters_.inc("drop.malformed");
        return;
    }
    auto* data = std::get_if<srou::DataPacket>(&pkt);
    if (!data) {
        counters_.inc("drop.oam");
        return;
    }
    const auto& h = data->header;
    if (h.segments_left != 0) {
        counters_.inc("drop.segments_remaining");
        return;
    }
    Endpoint reply_to = h.source_endpoint();
    if (reply_to.is_zero()) reply_to = d.src;
    sources_.push_back(reply_to);
    counters_.inc("rx.srou");
    if (app_) app_(data->payload, reply_to, true);
    if (!echo_) return;
    // Retrace the request: its earlier fabrics in reverse, then the edge, then the client.
    std::vector<Endpoint> wps;
    for (std::size_t i = 1; i < h.segments.size(); ++i)
        if (auto* w = std::get_if<srou::Waypoint>(&h.segments[i])) wps.push_back(w->locator);
    wps.push_back(edge_);
    wps.push_back(reply_to);
    srou::DataPacket reply{native_header(wps, h.flow_id.as_u32(), local_), data->payload};
    out(wps.front(), srou::encode_packet(reply));
}

} // namespace ruta::dp
