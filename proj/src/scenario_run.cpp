#include "ruta/scenario.hpp"

#include "ruta/error.hpp"
#include "ruta/hex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ruta::scenario {

using nlohmann::json;

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    auto rank = std::size_t(std::ceil(q * double(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

std::string render(const json& report) { return report.dump(2) + "\n"; }

namespace {

// Marks passthrough payloads so the first octet is never the SRoU magic.
constexpr std::uint8_t kPassthroughMark = 0x17;

struct FlowState {
    const FlowSpec* spec = nullptr;
    std::string ingress; // node that encapsulates the flow
    std::uint32_t sent = 0;
    std::set<std::uint32_t> seqs;
    std::uint32_t duplicates = 0;
    std::uint32_t replies = 0;
    std::vector<double> latency_ms;
    std::map<std::string, std::uint64_t> hops;
    std::set<Endpoint> captured_dsts;
    json captures = json::array();
};

class Runner {
public:
    Runner(const Scenario& s, const RunOptions& o)
        : s_(s), seed_(o.seed.value_or(s.seed)), until_(o.until.value_or(s.until)), net_(loop_, seed_),
          store_(loop_), world_{loop_, net_, store_, {}, {}}, tokens_(token::key_from_seed(seed_)) {}

    RunResult run() {
        build();
        start();
        loop_.run_until(until_);
        drain_observer();
        RunResult r;
        r.report = report();
        r.trace_jsonl = loop_.trace_jsonl();
        r.failures = failures_;
        r.store = store_.snapshot();
        return r;
    }

private:
    // ------------------------------------------------------------ construction

    Ipv4Address ip_of(const std::string& ref) const {
        auto slash = ref.find('/');
        std::string name = ref.substr(0, slash);
        std::size_t idx = slash == std::string::npos ? 0 : std::stoul(ref.substr(slash + 1));
        for (const auto& n : s_.nodes)
            if (n.name == name) return n.slocs.at(idx).private_addr.ip;
        for (const auto& c : s_.clients)
            if (c.name == name) return c.local.ip;
        for (const auto& v : s_.servers)
            if (v.name == name) return v.local.ip;
        throw Error(Errc::InvariantViolation, "unresolved endpoint " + ref);
    }

    Endpoint service_endpoint(const std::string& name) const {
        for (const auto& n : s_.nodes)
            if (n.name == name) return n.slocs[0].public_addr.value_or(n.slocs[0].private_addr);
        for (const auto& v : s_.servers)
            if (v.name == name) return v.local;
        throw Error(Errc::InvariantViolation, "unresolved endpoint " + name);
    }

    void build() {
        for (const auto& n : s_.nats) {
            sim::NatConfig c;
            c.name = n.name;
            c.inside = n.inside;
            c.public_ip = n.public_ip;
            c.base_port = n.base_port;
            c.idle_timeout = n.idle_timeout;
            net_.add_nat(c);
        }
        for (const auto& l : s_.links) {
            sim::LinkConfig c;
            c.a = ip_of(l.a);
            c.b = ip_of(l.b);
            c.delay_ab = l.delay_ab;
            c.delay_ba = l.delay_ba;
            c.jitter = l.jitter;
            c.loss_ab = l.loss_ab;
            c.loss_ba = l.loss_ba;
            c.bandwidth_bps = l.bandwidth_bps;
            c.queue_bytes = l.queue_bytes;
            c.up = l.up;
            net_.add_link(c);
        }
        for (const auto& n : s_.nodes) {
            dp::NodeConfig c;
            c.role = n.role;
            c.name = n.name;
            c.site_id = n.site;
            c.location = n.location;
            for (const auto& sl : n.slocs) {
                schema::Sloc x;
                x.color = sl.color;
                x.private_addr = sl.private_addr;
                x.public_addr = sl.public_addr.value_or(sl.private_addr);
                x.interface_name = sl.interface_name;
                x.rx_bw = sl.rx_bw;
                x.tx_bw = sl.tx_bw;
                c.slocs.push_back(x);
            }
            c.leases = s_.leases;
            c.probe = s_.probe;
            c.probing = n.probing;
            c.probe_white_list = {n.probe_white_list.begin(), n.probe_white_list.end()};
            c.control_interval = s_.control_interval;
            std::unique_ptr<dp::NodeRuntime> rt;
            switch (n.role) {
            case schema::Role::Linecard: {
                dp::LinecardConfig lc;
                for (const auto& im : n.imports) lc.imports.push_back({im.type, im.rt, im.table});
                lc.sla = s_.sla;
                lc.path_refresh = s_.path_refresh;
                auto p = std::make_unique<dp::Linecard>(world_, c, lc);
                linecards_[n.name] = p.get();
                rt = std::move(p);
                break;
            }
            case schema::Role::Fabric: {
                dp::FabricConfig fc;
                if (n.edge_token) fc.edge_token = tokens_;
                rt = std::make_unique<dp::Fabric>(world_, c, fc);
                break;
            }
            case schema::Role::Stun: rt = std::make_unique<dp::StunServer>(world_, c); break;
            case schema::Role::Lsdb: {
                auto p = std::make_unique<dp::LsdbNode>(world_, c);
                lsdbs_[n.name] = p.get();
                rt = std::move(p);
                break;
            }
            default: throw Error(Errc::InvariantViolation, "no runtime for role");
            }
            order_.push_back(n.name);
            nodes_[n.name] = std::move(rt);
        }
        for (const auto& n : s_.nodes)
            if (n.lsdb) nodes_[n.name]->use_lsdb(*lsdbs_.at(*n.lsdb));

        for (const auto& h : s_.hosts) {
            auto host = std::make_unique<dp::Host>(loop_, h.name, h.mac, h.ip);
            dp::Attachment att{h.attach, h.id, h.rt, h.rd, h.telemetry};
            ports_[h.name] = linecards_.at(h.linecard)->attach_host(*host, att, h.identity);
            auto* raw = host.get();
            host->on_receive([this, raw](const frame::HostFrame& f) { on_host_frame(*raw, f); });
            hosts_[h.name] = std::move(host);
        }
        for (const auto& v : s_.servers) {
            auto sv = std::make_unique<dp::NativeServer>(world_, v.name, v.local, service_endpoint(v.edge));
            sv->set_echo(v.echo);
            std::string name = v.name;
            sv->on_app([this, name](std::span<const std::uint8_t> p, Endpoint, bool via) {
                on_server_payload(name, p, via);
            });
            servers_[v.name] = std::move(sv);
        }
        for (const auto& c : s_.clients) {
            dp::NativeClientConfig cfg;
            cfg.local = c.local;
            cfg.edge = service_endpoint(c.edge);
            for (const auto& p : c.path) cfg.path.push_back(service_endpoint(p));
            if (c.stun) cfg.stun = service_endpoint(*c.stun);
            auto cl = std::make_unique<dp::NativeClient>(world_, c.name, cfg);
            cl->on_app([this](std::span<const std::uint8_t> p, bool via) { on_client_reply(p, via); });
            clients_[c.name] = std::move(cl);
        }

        for (const auto& f : s_.flows) {
            FlowState st;
            st.spec = &f;
            if (auto h = std::find_if(s_.hosts.begin(), s_.hosts.end(), [&](const HostSpec& x) { return x.name == f.from; });
                h != s_.hosts.end())
                st.ingress = h->linecard;
            else
                st.ingress = f.from;
            flows_.push_back(std::move(st));
        }
        world_.tap = [this](const std::string& node, const sim::Datagram& d) { on_tap(node, d); };
    }

    void start() {
        admin_ = store_.client("scenario-admin");
        observer_ = admin_.watch_prefix("/");
        observer_->set_notify([this] { drain_observer(); });
        for (const auto& id : s_.identities) {
            schema::Identity x{id.user, id.device, id.groups};
            admin_.put(x.key(), schema::encode_identity(x));
        }
        for (const auto& r : s_.group_rules) admin_.put(r.key(), schema::encode_policy(r.value));

        for (const auto& name : order_) nodes_[name]->start();
        for (auto& [name, sv] : servers_) sv->start();
        for (auto& [name, cl] : clients_) cl->start();
        for (const auto& h : s_.hosts) {
            auto* lc = linecards_.at(h.linecard);
            for (const auto& p : h.prefixes) lc->add_prefix(ports_.at(h.name), p);
            dp::Host* host = hosts_.at(h.name).get();
            loop_.schedule_at(h.announce_at, [host] { host->announce(); });
        }
        for (std::size_t i = 0; i < flows_.size(); ++i) {
            const auto& f = *flows_[i].spec;
            for (std::uint32_t k = 0; k < f.count; ++k)
                loop_.schedule_at(f.start + f.interval * k, [this, i, k] { send(i, k); });
        }
        for (const auto& f : s_.faults) loop_.schedule_at(f.at, [this, &f] { apply(f); });
        for (const auto& c : s_.checks) loop_.schedule_at(c.at, [this, &c] { check(c); });
    }

    // ------------------------------------------------------------ traffic

    std::uint32_t token_for(const ClientSpec& c, const dp::NativeClient& cl) const {
        if (c.token == TokenMode::None) return 0;
        Ipv4Address pub = c.local.ip;
        if (cl.public_endpoint()) {
            pub = cl.public_endpoint()->ip;
        } else {
            for (std::size_t i = 0; i < net_.nat_count(); ++i)
                if (const_cast<sim::Network&>(net_).nat(i).is_inside(c.local.ip))
                    pub = const_cast<sim::Network&>(net_).nat(i).config().public_ip;
        }
        auto t = tokens_.mint(pub, loop_.now());
        return c.token == TokenMode::Invalid ? t ^ 0xA5A5A5A5u : t;
    }

    void send(std::size_t i, std::uint32_t seq) {
        auto& st = flows_[i];
        const auto& f = *st.spec;
        auto app = frame::encode_app({std::uint32_t(i), seq, loop_.now().count()}, f.size);
        ++st.sent;
        if (f.mode == FlowMode::Overlay) {
            auto& src = *hosts_.at(f.from);
            auto& dst = *hosts_.at(f.to);
            src.send_to(dst.mac(), dst.ip(), std::move(app));
            return;
        }
        auto& cl = *clients_.at(f.from);
        const auto& spec = *std::find_if(s_.clients.begin(), s_.clients.end(),
                                         [&](const ClientSpec& c) { return c.name == f.from; });
        if (f.mode == FlowMode::Srou) {
            cl.set_token(token_for(spec, cl));
            cl.send_srou(std::move(app));
        } else {
            app.insert(app.begin(), kPassthroughMark);
            cl.send_passthrough(std::move(app));
        }
    }

    std::optional<frame::AppPayload> app_of(std::span<const std::uint8_t> p) const {
        auto a = frame::decode_app(p);
        if (a && a->flow < flows_.size()) return a;
        return std::nullopt;
    }

    void deliver(const frame::AppPayload& a, const std::string& at) {
        auto& st = flows_[a.flow];
        if (st.spec->to != at) return;
        if (!st.seqs.insert(a.seq).second) {
            ++st.duplicates;
            return;
        }
        st.latency_ms.push_back(double(loop_.now().count() - a.sent_at_ns) / 1e6);
    }

    void on_host_frame(const dp::Host& h, const frame::HostFrame& f) {
        if (auto a = app_of(f.payload); a && flows_[a->flow].spec->mode == FlowMode::Overlay) deliver(*a, h.name());
    }

    void on_server_payload(const std::string& server, std::span<const std::uint8_t> p, bool via_srou) {
        if (!via_srou) {
            if (p.empty() || p[0] != kPassthroughMark) return;
            p = p.subspan(1);
        }
        auto a = app_of(p);
        if (!a) return;
        auto mode = flows_[a->flow].spec->mode;
        if ((mode == FlowMode::Srou) == via_srou && mode != FlowMode::Overlay) deliver(*a, server);
    }

    void on_client_reply(std::span<const std::uint8_t> p, bool via_srou) {
        if (!via_srou && !p.empty() && p[0] == kPassthroughMark) p = p.subspan(1);
        if (auto a = app_of(p)) ++flows_[a->flow].replies;
    }

    void on_tap(const std::string& node, const sim::Datagram& d) {
        if (dp::classify(d.payload) != dp::Demux::Srou) return;
        srou::Packet pkt;
        try {
            pkt = srou::decode_packet(d.payload);
        } catch (const Error&) {
            return;
        }
        auto* data = std::get_if<srou::DataPacket>(&pkt);
        if (!data) return;
        std::optional<frame::AppPayload> a;
        bool overlay = false;
        try {
            a = app_of(frame::decode_frame(data->payload).payload);
            overlay = true;
        } catch (const Error&) {
            a = app_of(data->payload);
        }
        if (!a) return;
        auto& st = flows_[a->flow];
        if ((st.spec->mode == FlowMode::Overlay) != overlay) return;
        ++st.hops[node];
        if (node != st.ingress || !st.captured_dsts.insert(d.dst).second) return;
        const auto& h = data->header;
        json segs = json::array();
        for (const auto& s : h.segments) segs.push_back(srou::to_string(s));
        st.captures.push_back({{"at_ns", loop_.now().count()},
                               {"node", node},
                               {"outer_src", d.src.to_string()},
                               {"outer_dst", d.dst.to_string()},
                               {"flow_id", h.flow_id.as_u32()},
                               {"telemetry", h.flags.telemetry},
                               {"source", h.source_endpoint().to_string()},
                               {"segments_left", h.segments_left},
                               {"segments", segs},
                               {"header_octets", srou::srou_length(h)},
                               {"header_hex", to_hex(srou::encode_header(h))}});
    }

    // ------------------------------------------------------------ faults and checks

    void apply(const FaultSpec& f) {
        switch (f.kind) {
        case FaultKind::Link: {
            auto a = ip_of(f.a), b = ip_of(f.b);
            auto id = net_.find_link(a, b);
            if (!id) throw Error(Errc::InvariantViolation, "no link for fault");
            auto& c = net_.link_config(*id);
            bool fwd = c.a == a;
            if (f.delay_ab) (fwd ? c.delay_ab : c.delay_ba) = *f.delay_ab;
            if (f.delay_ba) (fwd ? c.delay_ba : c.delay_ab) = *f.delay_ba;
            if (f.jitter) c.jitter = *f.jitter;
            if (f.loss_ab) (fwd ? c.loss_ab : c.loss_ba) = *f.loss_ab;
            if (f.loss_ba) (fwd ? c.loss_ba : c.loss_ab) = *f.loss_ba;
            if (f.up) c.up = *f.up;
            loop_.record("scenario", "fault", "link " + f.a + " - " + f.b);
            break;
        }
        case FaultKind::StorePartition:
            if (f.target.empty())
                store_.partition(f.on);
            else
                store_.partition(nodes_.at(f.target)->session().client().id(), f.on);
            loop_.record("scenario", "fault",
                         std::string(f.on ? "partition " : "heal ") + (f.target.empty() ? "store" : f.target));
            break;
        case FaultKind::NodeKill:
            nodes_.at(f.target)->kill();
            loop_.record("scenario", "fault", "kill " + f.target);
            break;
        case FaultKind::GroupRule:
            admin_.put(f.rule->key(), schema::encode_policy(f.rule->value));
            loop_.record("scenario", "fault", "policy " + f.rule->key());
            break;
        case FaultKind::HostAnnounce:
            hosts_.at(f.target)->announce();
            loop_.record("scenario", "fault", "announce " + f.target);
            break;
        }
    }

    void drain_observer() {
        if (!observer_) return;
        try {
            for (auto& ev : observer_->poll())
                if (ev.kind == kv::EventKind::Delete) deletes_.push_back({loop_.now().count(), ev.entry.key, ev.revision});
        } catch (const Error&) {
            // Buffered until the store is reachable again.
        }
    }

    static bool matches(const std::string& key, const CheckSpec& c) {
        return key.rfind(c.prefix, 0) == 0 && (c.contains.empty() || key.find(c.contains) != std::string::npos);
    }

    void check(const CheckSpec& c) {
        drain_observer();
        std::size_t found = 0;
        for (const auto& e : store_.snapshot()) found += matches(e.key, c);
        std::size_t deleted = 0;
        for (const auto& d : deletes_) deleted += matches(d.key, c);
        bool ok = c.present ? found > 0 : found == 0 && (!c.watched || deleted > 0);
        std::string what = std::string(c.present ? "present " : "absent ") + c.prefix +
                           (c.contains.empty() ? "" : " ~" + c.contains) + " at " +
                           std::to_string(loop_.now().count()) + "ns";
        checks_.push_back({{"at_ns", loop_.now().count()},
                           {"prefix", c.prefix},
                           {"contains", c.contains},
                           {"present", c.present},
                           {"watched", c.watched},
                           {"found", found},
                           {"observed_deletes", deleted},
                           {"ok", ok}});
        if (!ok) failures_.push_back("check failed: " + what);
    }

    // ------------------------------------------------------------ report

    json flow_report(FlowState& st) {
        const auto& f = *st.spec;
        std::sort(st.latency_ms.begin(), st.latency_ms.end());
        json lat = {{"count", st.latency_ms.size()}};
        if (!st.latency_ms.empty()) {
            lat["min"] = st.latency_ms.front();
            lat["max"] = st.latency_ms.back();
            lat["p50"] = percentile(st.latency_ms, 0.50);
            lat["p90"] = percentile(st.latency_ms, 0.90);
            lat["p99"] = percentile(st.latency_ms, 0.99);
            lat["mean"] = std::accumulate(st.latency_ms.begin(), st.latency_ms.end(), 0.0) / double(st.latency_ms.size());
        }
        json via = json::array();
        for (const auto& [node, n] : st.hops)
            if (node != st.ingress && nodes_.count(node) && nodes_[node]->config().role == schema::Role::Fabric)
                via.push_back(node);
        std::string mode = f.mode == FlowMode::Overlay ? "overlay" : f.mode == FlowMode::Srou ? "srou" : "passthrough";
        return {{"from", f.from},
                {"to", f.to},
                {"mode", mode},
                {"ingress", st.ingress},
                {"sent", st.sent},
                {"delivered", st.seqs.size()},
                {"lost", st.sent - st.seqs.size()},
                {"duplicates", st.duplicates},
                {"replies", st.replies},
                {"latency_ms", lat},
                {"hops", st.hops},
                {"via", via},
                {"captures", st.captures}};
    }

    json node_report(const std::string& name) {
        auto& n = *nodes_.at(name);
        json j = {{"role", schema::role_token(n.config().role)},
                  {"alive", n.alive()},
                  {"label", n.record() ? json(n.record()->system_label) : json(nullptr)},
                  {"registration_error", n.registration_error() ? json(to_string(*n.registration_error())) : json(nullptr)},
                  {"counters", n.counters().all()},
                  {"probe_sessions", n.probe_sessions().size()}};
        if (auto it = linecards_.find(name); it != linecards_.end()) {
            auto* lc = it->second;
            j["headless"] = lc->headless();
            j["routes"] = lc->routes().routes().size();
            json paths = json::object();
            for (const auto& [dst, other] : linecards_)
                if (other != lc && other->alive()) lc->path_to(dst);
            for (const auto& [dst, p] : lc->paths())
                paths[dst] = {{"src", p.src},
                              {"waypoints", p.waypoints},
                              {"cost_ns", p.cost},
                              {"source", path::to_string(p.source)},
                              {"computed_at_ns", p.computed_at_ns}};
            j["paths"] = paths;
        }
        return j;
    }

    json network_report() {
        json links = json::array();
        std::uint64_t sent = 0, delivered = 0, lost = 0, dropped = 0, in_flight = 0;
        for (std::size_t i = 0; i < net_.link_count(); ++i) {
            const auto& c = net_.link_config(i);
            const auto& k = net_.link_counters(i);
            links.push_back({{"a", c.a.to_string()},
                             {"b", c.b.to_string()},
                             {"sent", k.sent},
                             {"delivered", k.delivered},
                             {"lost", k.lost},
                             {"dropped", k.dropped},
                             {"in_flight", k.in_flight},
                             {"bytes_delivered", k.bytes_delivered}});
            sent += k.sent;
            delivered += k.delivered;
            lost += k.lost;
            dropped += k.dropped;
            in_flight += k.in_flight;
        }
        json nats = json::array();
        for (std::size_t i = 0; i < net_.nat_count(); ++i) {
            auto& n = net_.nat(i);
            json maps = json::array();
            for (const auto& [inside, port] : n.mappings())
                maps.push_back({{"inside", inside.to_string()},
                                {"public", Endpoint{n.config().public_ip, port}.to_string()}});
            nats.push_back({{"name", n.config().name},
                            {"public_ip", n.config().public_ip.to_string()},
                            {"translated_out", n.counters().translated_out},
                            {"translated_in", n.counters().translated_in},
                            {"dropped", n.counters().dropped},
                            {"mappings", maps}});
        }
        return {{"links", links},
                {"nats", nats},
                {"totals",
                 {{"sent", sent}, {"delivered", delivered}, {"lost", lost}, {"dropped", dropped}, {"in_flight", in_flight}}},
                {"conserved", sent == delivered + lost + dropped + in_flight},
                {"unrouted", net_.unrouted()},
                {"undeliverable", net_.undeliverable()}};
    }

    json linkstate_report() {
        json out = json::array();
        for (const auto& e : store_.snapshot()) {
            if (e.key.rfind(schema::kLinkstatePrefix, 0) != 0) continue;
            schema::LinkStateRecord r;
            try {
                r = schema::decode_linkstate(e.value);
            } catch (const Error&) {
                continue;
            }
            json j = {{"key", e.key},
                      {"status", r.status == schema::LinkStatus::Up ? "up" : "down"},
                      {"estimated_two_way_us", r.two_way_delay_us},
                      {"jitter_us", r.jitter_us},
                      {"loss", r.loss}};
            if (auto id = net_.find_link(r.src.private_addr.ip, r.dst.private_addr.ip)) {
                const auto& c = net_.link_config(*id);
                j["configured_two_way_us"] = double((c.delay_ab + c.delay_ba).count()) / 1e3;
            }
            out.push_back(j);
        }
        return out;
    }

    void evaluate_expectations(json& flows, json& results) {
        for (const auto& x : s_.expect) {
            const auto& f = flows.at(x.flow);
            std::vector<std::string> problems;
            if (x.delivered && f["delivered"].get<std::uint32_t>() != *x.delivered)
                problems.push_back("delivered " + f["delivered"].dump() + " != " + std::to_string(*x.delivered));
            if (x.lost && f["lost"].get<std::uint32_t>() != *x.lost)
                problems.push_back("lost " + f["lost"].dump() + " != " + std::to_string(*x.lost));
            if (x.replies && f["replies"].get<std::uint32_t>() != *x.replies)
                problems.push_back("replies " + f["replies"].dump() + " != " + std::to_string(*x.replies));
            if (x.p50_ms) {
                if (!f["latency_ms"].contains("p50")) {
                    problems.push_back("no latency samples");
                } else {
                    double p50 = f["latency_ms"]["p50"].get<double>();
                    if (std::abs(p50 - *x.p50_ms) > x.tolerance * *x.p50_ms)
                        problems.push_back("p50 " + std::to_string(p50) + "ms outside " + std::to_string(*x.p50_ms) +
                                           "ms +/- " + std::to_string(x.tolerance * 100) + "%");
                }
            }
            if (x.via && f["via"].get<std::vector<std::string>>() != *x.via)
                problems.push_back("via " + f["via"].dump() + " != " + json(*x.via).dump());
            std::string detail;
            for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
            results.push_back({{"flow", x.flow}, {"ok", problems.empty()}, {"detail", detail}});
            if (!problems.empty()) failures_.push_back("flow " + x.flow + ": " + detail);
        }
    }

    json report() {
        json flows = json::object();
        for (auto& st : flows_) flows[st.spec->name] = flow_report(st);
        json expectations = json::array();
        evaluate_expectations(flows, expectations);

        json nodes = json::object();
        for (const auto& name : order_) nodes[name] = node_report(name);
        json native = {{"servers", json::object()}, {"clients", json::object()}};
        for (const auto& [name, sv] : servers_) {
            json src = json::array();
            for (const auto& e : sv->srou_sources()) src.push_back(e.to_string());
            native["servers"][name] = {{"srou_sources", src}, {"counters", sv->counters().all()}};
        }
        for (const auto& [name, cl] : clients_)
            native["clients"][name] = {
                {"public", cl->public_endpoint() ? json(cl->public_endpoint()->to_string()) : json(nullptr)},
                {"counters", cl->counters().all()}};

        json postcards = json::array();
        for (const auto& p : world_.postcards)
            postcards.push_back({{"node", p.node},
                                 {"flow_id", p.flow_id},
                                 {"timestamp_ns", p.timestamp_ns},
                                 {"segments_left", p.segments_left},
                                 {"action", p.action}});
        json deletes = json::array();
        for (const auto& d : deletes_) deletes.push_back({{"at_ns", d.at_ns}, {"key", d.key}, {"revision", d.revision}});
        json store = json::array();
        for (const auto& e : store_.snapshot())
            store.push_back({{"key", e.key}, {"value", e.value}, {"leased", e.lease.has_value()}});

        return {{"schema", kSchemaVersion},
                {"scenario", s_.name},
                {"seed", seed_},
                {"until_ns", until_.count()},
                {"events", loop_.executed()},
                {"flows", flows},
                {"expectations", expectations},
                {"checks", checks_},
                {"failures", failures_},
                {"nodes", nodes},
                {"native", native},
                {"network", network_report()},
                {"linkstate", linkstate_report()},
                {"postcards", postcards},
                {"watch_deletes", deletes},
                {"store", store}};
    }

    struct Delete {
        std::int64_t at_ns;
        std::string key;
        kv::Revision revision;
    };

    const Scenario& s_;
    std::uint64_t seed_;
    sim::Duration until_;
    sim::EventLoop loop_;
    sim::Network net_;
    kv::Store store_;
    dp::World world_;
    token::EdgeToken tokens_;
    std::vector<std::string> order_;
    std::map<std::string, std::unique_ptr<dp::NodeRuntime>> nodes_;
    std::map<std::string, dp::Linecard*> linecards_;
    std::map<std::string, dp::LsdbNode*> lsdbs_;
    std::map<std::string, std::unique_ptr<dp::Host>> hosts_;
    std::map<std::string, std::size_t> ports_;
    std::map<std::string, std::unique_ptr<dp::NativeServer>> servers_;
    std::map<std::string, std::unique_ptr<dp::NativeClient>> clients_;
    std::vector<FlowState> flows_;
    kv::Client admin_;
    std::optional<kv::Watch> observer_;
    std::vector<Delete> deletes_;
    json checks_ = json::array();
    std::vector<std::string> failures_;
};

} // namespace

RunResult run(const Scenario& s, const RunOptions& opts) {
    validate(s);
    auto r = std::make_unique<Runner>(s, opts);
    return r->run();
}

} // namespace ruta::scenario
