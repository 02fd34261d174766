#include "ruta/scenario.hpp"

#include "ruta/error.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ruta::scenario {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

/// A YAML node together with its field path for diagnostics.
struct Field {
    YAML::Node node;
    std::string path;

    [[noreturn]] void fail(const std::string& msg) const { throw SchemaError(path, line_of(node), msg); }

    bool has(const std::string& key) const { return node[key].IsDefined() && !node[key].IsNull(); }

    Field at(const std::string& key) const {
        if (!node.IsMap()) fail("expected a mapping");
        if (!has(key)) throw SchemaError(path + "." + key, line_of(node), "required field missing");
        return {node[key], path + "." + key};
    }

    std::vector<Field> items() const {
        if (!node.IsSequence()) fail("expected a list");
        std::vector<Field> out;
        for (std::size_t i = 0; i < node.size(); ++i) out.push_back({node[i], path + "[" + std::to_string(i) + "]"});
        return out;
    }

    std::vector<Field> items_or_empty(const std::string& key) const {
        return has(key) ? at(key).items() : std::vector<Field>{};
    }

    void allow(std::initializer_list<const char*> keys) const {
        if (!node.IsMap()) fail("expected a mapping");
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& kv : node) {
            auto k = kv.first.as<std::string>();
            if (!ok.count(k)) throw SchemaError(path + "." + k, line_of(kv.first), "unknown field");
        }
    }

    std::string str() const {
        if (!node.IsScalar()) fail("expected a scalar");
        return node.as<std::string>();
    }

    template <typename T>
    T as() const {
        if (!node.IsScalar()) fail("expected a scalar");
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail("cannot convert '" + node.as<std::string>() + "'");
        }
    }

    double number() const { return as<double>(); }
    double non_negative() const {
        double v = number();
        if (!(v >= 0) || !std::isfinite(v)) fail("must be a non-negative number");
        return v;
    }
    double fraction() const {
        double v = number();
        if (!(v >= 0 && v <= 1)) fail("must be within [0, 1]");
        return v;
    }
    std::uint32_t u32() const {
        auto v = as<long long>();
        if (v < 0 || v > 0xFFFFFFFFLL) fail("out of range");
        return std::uint32_t(v);
    }
    sim::Duration ms() const { return sim::Duration(std::llround(non_negative() * 1e6)); }
    sim::Duration secs() const { return sim::Duration(std::llround(non_negative() * 1e9)); }

    template <typename Fn>
    auto parsed(Fn fn) const -> decltype(fn(std::string())) {
        auto s = str();
        try {
            return fn(s);
        } catch (const Error& e) {
            fail(std::string("invalid value '") + s + "': " + e.what());
        }
    }

    Endpoint endpoint() const { return parsed([](const std::string& s) { return Endpoint::parse(s); }); }
    Ipv4Address ipv4() const { return parsed([](const std::string& s) { return Ipv4Address::parse(s); }); }
    Ipv4Prefix prefix() const { return parsed([](const std::string& s) { return Ipv4Prefix::parse(s); }); }
    MacAddress mac() const { return parsed([](const std::string& s) { return MacAddress::parse(s); }); }
};

std::optional<std::uint32_t> group_of(const Field& f) {
    if (f.str() == "*") return std::nullopt;
    return f.u32();
}

schema::PolicyValue policy_value(const Field& f) {
    schema::PolicyValue v;
    auto a = f.at("action").str();
    if (a == "permit") v.action = schema::Action::Permit;
    else if (a == "deny") v.action = schema::Action::Deny;
    else if (a == "steer") v.action = schema::Action::Steer;
    else f.at("action").fail("expected permit, deny or steer");
    for (const auto& s : f.items_or_empty("slocs"))
        v.slocs.push_back(s.parsed([](const std::string& x) { return schema::SlocShort::parse(x); }));
    try {
        schema::validate(v);
    } catch (const Error& e) {
        f.fail(e.what());
    }
    return v;
}

schema::GroupRule group_rule(const Field& f) {
    f.allow({"src", "dst", "action", "slocs"});
    schema::GroupRule r;
    r.src = f.has("src") ? group_of(f.at("src")) : std::nullopt;
    r.dst = f.has("dst") ? group_of(f.at("dst")) : std::nullopt;
    r.value = policy_value(f);
    return r;
}

NodeSpec node(const Field& f) {
    f.allow({"name", "role", "site", "location", "slocs", "probing", "probe_white_list", "lsdb", "edge_token",
             "imports"});
    NodeSpec n;
    n.name = f.at("name").str();
    n.role = f.at("role").parsed([](const std::string& s) { return schema::parse_role(s); });
    if (n.role == schema::Role::Etcd || n.role == schema::Role::Analytic)
        f.at("role").fail("role has no runtime in scenarios");
    if (f.has("site")) n.site = f.at("site").u32();
    if (f.has("location")) {
        auto l = f.at("location");
        l.allow({"lat", "lon"});
        n.location.lat = l.at("lat").number();
        n.location.lon = l.at("lon").number();
    }
    for (const auto& s : f.at("slocs").items()) {
        s.allow({"color", "private", "public", "interface", "rx_bw", "tx_bw"});
        SlocSpec sl;
        if (s.has("color")) sl.color = s.at("color").str();
        sl.private_addr = s.at("private").endpoint();
        if (s.has("public")) sl.public_addr = s.at("public").endpoint();
        if (s.has("interface")) sl.interface_name = s.at("interface").str();
        if (s.has("rx_bw")) sl.rx_bw = s.at("rx_bw").non_negative();
        if (s.has("tx_bw")) sl.tx_bw = s.at("tx_bw").non_negative();
        n.slocs.push_back(sl);
    }
    if (n.slocs.empty()) f.at("slocs").fail("a node needs at least one SLoC");
    if (f.has("probing")) n.probing = f.at("probing").as<bool>();
    for (const auto& p : f.items_or_empty("probe_white_list")) n.probe_white_list.push_back(p.str());
    if (f.has("lsdb")) n.lsdb = f.at("lsdb").str();
    if (f.has("edge_token")) n.edge_token = f.at("edge_token").as<bool>();
    for (const auto& i : f.items_or_empty("imports")) {
        i.allow({"type", "rt", "table"});
        ImportSpec im;
        auto t = i.at("type").u32();
        if (t != 2 && t != 5) i.at("type").fail("route type must be 2 or 5");
        im.type = schema::RouteType(t);
        im.rt = i.at("rt").str();
        im.table = i.at("table").u32();
        n.imports.push_back(im);
    }
    return n;
}

LinkSpec link(const Field& f) {
    f.allow({"a", "b", "delay_ms", "delay_ba_ms", "jitter_ms", "loss", "loss_ba", "bandwidth_bps", "queue_bytes", "up"});
    LinkSpec l;
    l.a = f.at("a").str();
    l.b = f.at("b").str();
    if (f.has("delay_ms")) l.delay_ab = l.delay_ba = f.at("delay_ms").ms();
    if (f.has("delay_ba_ms")) l.delay_ba = f.at("delay_ba_ms").ms();
    if (f.has("jitter_ms")) l.jitter = f.at("jitter_ms").ms();
    if (f.has("loss")) l.loss_ab = l.loss_ba = f.at("loss").fraction();
    if (f.has("loss_ba")) l.loss_ba = f.at("loss_ba").fraction();
    if (f.has("bandwidth_bps")) l.bandwidth_bps = f.at("bandwidth_bps").non_negative();
    if (f.has("queue_bytes")) l.queue_bytes = std::size_t(f.at("queue_bytes").u32());
    if (f.has("up")) l.up = f.at("up").as<bool>();
    return l;
}

HostSpec host(const Field& f) {
    f.allow({"name", "linecard", "mac", "ip", "attach", "vnid", "vrf", "rt", "rd", "telemetry", "user", "device",
             "prefixes", "announce_at_s"});
    HostSpec h;
    h.name = f.at("name").str();
    h.linecard = f.at("linecard").str();
    h.mac = f.at("mac").mac();
    h.ip = f.at("ip").ipv4();
    auto kind = f.has("attach") ? f.at("attach").str() : std::string("l2");
    if (kind == "l2") {
        h.attach = dp::Attachment::Kind::L2;
        h.id = f.at("vnid").u32();
    } else if (kind == "l3") {
        h.attach = dp::Attachment::Kind::L3;
        h.id = f.at("vrf").u32();
    } else {
        f.at("attach").fail("expected l2 or l3");
    }
    h.rt = f.at("rt").str();
    h.rd = f.at("rd").str();
    if (f.has("telemetry")) h.telemetry = f.at("telemetry").as<bool>();
    if (f.has("user") || f.has("device")) h.identity = dp::HostIdentity{f.at("user").str(), f.at("device").str()};
    for (const auto& p : f.items_or_empty("prefixes")) h.prefixes.push_back(p.prefix());
    if (!h.prefixes.empty() && h.attach != dp::Attachment::Kind::L3) f.at("prefixes").fail("prefixes need attach: l3");
    if (f.has("announce_at_s")) h.announce_at = f.at("announce_at_s").secs();
    return h;
}

FlowSpec flow(const Field& f) {
    f.allow({"name", "from", "to", "count", "interval_ms", "start_s", "size", "mode"});
    FlowSpec fl;
    fl.name = f.at("name").str();
    fl.from = f.at("from").str();
    fl.to = f.at("to").str();
    if (f.has("count")) fl.count = f.at("count").u32();
    if (f.has("interval_ms")) fl.interval = f.at("interval_ms").ms();
    if (f.has("start_s")) fl.start = f.at("start_s").secs();
    if (f.has("size")) fl.size = f.at("size").u32();
    if (f.has("mode")) {
        auto m = f.at("mode").str();
        if (m == "overlay") fl.mode = FlowMode::Overlay;
        else if (m == "srou") fl.mode = FlowMode::Srou;
        else if (m == "passthrough") fl.mode = FlowMode::Passthrough;
        else f.at("mode").fail("expected overlay, srou or passthrough");
    }
    if (fl.size > 1400) f.at("size").fail("at most 1400 octets");
    return fl;
}

FaultSpec fault(const Field& f) {
    FaultSpec x;
    x.at = f.at("at_s").secs();
    auto kind = f.at("kind").str();
    if (kind == "link") {
        f.allow({"at_s", "kind", "a", "b", "delay_ms", "delay_ba_ms", "jitter_ms", "loss", "loss_ba", "up"});
        x.kind = FaultKind::Link;
        x.a = f.at("a").str();
        x.b = f.at("b").str();
        if (f.has("delay_ms")) x.delay_ab = x.delay_ba = f.at("delay_ms").ms();
        if (f.has("delay_ba_ms")) x.delay_ba = f.at("delay_ba_ms").ms();
        if (f.has("jitter_ms")) x.jitter = f.at("jitter_ms").ms();
        if (f.has("loss")) x.loss_ab = x.loss_ba = f.at("loss").fraction();
        if (f.has("loss_ba")) x.loss_ba = f.at("loss_ba").fraction();
        if (f.has("up")) x.up = f.at("up").as<bool>();
    } else if (kind == "store_partition") {
        f.allow({"at_s", "kind", "node", "on"});
        x.kind = FaultKind::StorePartition;
        if (f.has("node")) x.target = f.at("node").str();
        if (f.has("on")) x.on = f.at("on").as<bool>();
    } else if (kind == "node_kill") {
        f.allow({"at_s", "kind", "node"});
        x.kind = FaultKind::NodeKill;
        x.target = f.at("node").str();
    } else if (kind == "group_rule") {
        f.allow({"at_s", "kind", "rule"});
        x.kind = FaultKind::GroupRule;
        x.rule = group_rule(f.at("rule"));
    } else if (kind == "host_announce") {
        f.allow({"at_s", "kind", "host"});
        x.kind = FaultKind::HostAnnounce;
        x.target = f.at("host").str();
    } else {
        f.at("kind").fail("expected link, store_partition, node_kill, group_rule or host_announce");
    }
    return x;
}

Scenario scenario(const Field& root) {
    root.allow({"schema", "name", "seed", "until_s", "probe", "leases", "control_interval_ms", "sla",
                "path_refresh_s", "nodes", "links", "nats", "hosts", "identities", "group_rules", "clients", "servers",
                "flows", "faults", "checks", "expect"});
    Scenario s;
    s.schema = root.at("schema").as<int>();
    if (s.schema != kSchemaVersion) root.at("schema").fail("unsupported schema version");
    s.name = root.at("name").str();
    if (root.has("seed")) s.seed = root.at("seed").as<std::uint64_t>();
    if (root.has("until_s")) s.until = root.at("until_s").secs();
    if (root.has("probe")) {
        auto p = root.at("probe");
        p.allow({"interval_ms", "window", "timeout_ms", "down_after", "report_interval_s"});
        if (p.has("interval_ms")) s.probe.interval = p.at("interval_ms").ms();
        if (p.has("window")) s.probe.window = p.at("window").u32();
        if (p.has("timeout_ms")) s.probe.timeout = p.at("timeout_ms").ms();
        if (p.has("down_after")) s.probe.down_after = int(p.at("down_after").u32());
        if (p.has("report_interval_s")) s.probe.report_interval = p.at("report_interval_s").secs();
        if (s.probe.window == 0) p.at("window").fail("must be positive");
        if (s.probe.interval.count() == 0) p.at("interval_ms").fail("must be positive");
        if (s.probe.report_interval.count() == 0) p.at("report_interval_s").fail("must be positive");
    }
    if (root.has("leases")) {
        auto l = root.at("leases");
        l.allow({"node_ttl_s", "route_ttl_s"});
        if (l.has("node_ttl_s")) s.leases.node_ttl = l.at("node_ttl_s").secs();
        if (l.has("route_ttl_s")) s.leases.route_ttl = l.at("route_ttl_s").secs();
    }
    if (root.has("control_interval_ms")) s.control_interval = root.at("control_interval_ms").ms();
    if (s.control_interval.count() == 0) root.at("control_interval_ms").fail("must be positive");
    if (root.has("sla")) {
        auto p = root.at("sla");
        p.allow({"max_delay_ms", "max_loss", "max_segments", "loss_penalty_ms", "jitter_weight"});
        if (p.has("max_delay_ms")) s.sla.max_delay_ms = p.at("max_delay_ms").non_negative();
        if (p.has("max_loss")) s.sla.max_loss = p.at("max_loss").fraction();
        if (p.has("max_segments")) s.sla.max_segments = p.at("max_segments").u32();
        if (p.has("loss_penalty_ms")) s.sla.loss_penalty_ms = p.at("loss_penalty_ms").non_negative();
        if (p.has("jitter_weight")) s.sla.jitter_weight = p.at("jitter_weight").non_negative();
        try {
            path::validate(s.sla);
        } catch (const Error& e) {
            p.fail(e.what());
        }
    }
    if (root.has("path_refresh_s")) s.path_refresh = root.at("path_refresh_s").secs();

    for (const auto& n : root.items_or_empty("nodes")) s.nodes.push_back(node(n));
    for (const auto& l : root.items_or_empty("links")) s.links.push_back(link(l));
    for (const auto& n : root.items_or_empty("nats")) {
        n.allow({"name", "inside", "public_ip", "base_port", "idle_timeout_s"});
        NatSpec nat;
        nat.name = n.at("name").str();
        nat.inside = n.at("inside").prefix();
        nat.public_ip = n.at("public_ip").ipv4();
        if (n.has("base_port")) nat.base_port = std::uint16_t(n.at("base_port").u32());
        if (n.has("idle_timeout_s")) nat.idle_timeout = n.at("idle_timeout_s").secs();
        s.nats.push_back(nat);
    }
    for (const auto& h : root.items_or_empty("hosts")) s.hosts.push_back(host(h));
    for (const auto& i : root.items_or_empty("identities")) {
        i.allow({"user", "device", "groups"});
        IdentitySpec id{i.at("user").str(), i.at("device").str(), {}};
        for (const auto& g : i.at("groups").items()) id.groups.push_back(g.u32());
        s.identities.push_back(id);
    }
    for (const auto& g : root.items_or_empty("group_rules")) s.group_rules.push_back(group_rule(g));
    for (const auto& c : root.items_or_empty("clients")) {
        c.allow({"name", "local", "edge", "path", "stun", "token"});
        ClientSpec cl;
        cl.name = c.at("name").str();
        cl.local = c.at("local").endpoint();
        cl.edge = c.at("edge").str();
        for (const auto& p : c.at("path").items()) cl.path.push_back(p.str());
        if (cl.path.empty()) c.at("path").fail("needs at least the server");
        if (c.has("stun")) cl.stun = c.at("stun").str();
        if (c.has("token")) {
            auto t = c.at("token").str();
            if (t == "valid") cl.token = TokenMode::Valid;
            else if (t == "invalid") cl.token = TokenMode::Invalid;
            else if (t == "none") cl.token = TokenMode::None;
            else c.at("token").fail("expected valid, invalid or none");
        }
        s.clients.push_back(cl);
    }
    for (const auto& v : root.items_or_empty("servers")) {
        v.allow({"name", "local", "edge", "echo"});
        ServerSpec sv{v.at("name").str(), v.at("local").endpoint(), v.at("edge").str(), true};
        if (v.has("echo")) sv.echo = v.at("echo").as<bool>();
        s.servers.push_back(sv);
    }
    for (const auto& f : root.items_or_empty("flows")) s.flows.push_back(flow(f));
    for (const auto& f : root.items_or_empty("faults")) s.faults.push_back(fault(f));
    for (const auto& c : root.items_or_empty("checks")) {
        c.allow({"at_s", "prefix", "contains", "present", "watched"});
        CheckSpec ck;
        ck.at = c.at("at_s").secs();
        ck.prefix = c.at("prefix").str();
        if (c.has("contains")) ck.contains = c.at("contains").str();
        if (c.has("present")) ck.present = c.at("present").as<bool>();
        if (c.has("watched")) ck.watched = c.at("watched").as<bool>();
        s.checks.push_back(ck);
    }
    for (const auto& e : root.items_or_empty("expect")) {
        e.allow({"flow", "delivered", "lost", "replies", "p50_ms", "tolerance", "via"});
        FlowExpect x;
        x.flow = e.at("flow").str();
        if (e.has("delivered")) x.delivered = e.at("delivered").u32();
        if (e.has("lost")) x.lost = e.at("lost").u32();
        if (e.has("replies")) x.replies = e.at("replies").u32();
        if (e.has("p50_ms")) x.p50_ms = e.at("p50_ms").non_negative();
        if (e.has("tolerance")) x.tolerance = e.at("tolerance").fraction();
        if (e.node["via"].IsDefined()) {
            std::vector<std::string> via;
            for (const auto& v : Field{e.node["via"], e.path + ".via"}.items()) via.push_back(v.str());
            std::sort(via.begin(), via.end());
            x.via = via;
        }
        s.expect.push_back(x);
    }
    return s;
}

template <typename T>
std::string item_path(const std::string& list, const std::vector<T>&, std::size_t i) {
    return "$." + list + "[" + std::to_string(i) + "]";
}

} // namespace

void validate(const Scenario& s) {
    std::map<std::string, std::string> kinds; // name -> kind
    auto declare = [&](const std::string& name, const std::string& kind, const std::string& path) {
        if (name.empty()) throw SchemaError(path + ".name", 0, "empty name");
        if (!kinds.emplace(name, kind).second) throw SchemaError(path + ".name", 0, "duplicate name '" + name + "'");
    };
    for (std::size_t i = 0; i < s.nodes.size(); ++i) declare(s.nodes[i].name, "node", item_path("nodes", s.nodes, i));
    for (std::size_t i = 0; i < s.hosts.size(); ++i) declare(s.hosts[i].name, "host", item_path("hosts", s.hosts, i));
    for (std::size_t i = 0; i < s.clients.size(); ++i)
        declare(s.clients[i].name, "client", item_path("clients", s.clients, i));
    for (std::size_t i = 0; i < s.servers.size(); ++i)
        declare(s.servers[i].name, "server", item_path("servers", s.servers, i));

    auto node_of = [&](const std::string& name) -> const NodeSpec* {
        for (const auto& n : s.nodes)
            if (n.name == name) return &n;
        return nullptr;
    };
    auto need_role = [&](const std::string& name, schema::Role role, const std::string& path) {
        auto* n = node_of(name);
        if (!n) throw SchemaError(path, 0, "unknown node '" + name + "'");
        if (n->role != role)
            throw SchemaError(path, 0, "'" + name + "' is not a " + std::string(schema::role_token(role)));
    };
    // Link endpoints: "<node>", "<node>/<sloc index>", client or server names.
    auto endpoint_ok = [&](const std::string& ref, const std::string& path) {
        auto slash = ref.find('/');
        std::string name = ref.substr(0, slash);
        auto it = kinds.find(name);
        if (it == kinds.end()) throw SchemaError(path, 0, "dangling endpoint '" + ref + "'");
        if (it->second == "host") throw SchemaError(path, 0, "hosts attach to linecards, not links");
        if (slash != std::string::npos) {
            auto* n = node_of(name);
            std::size_t idx = 0;
            try {
                idx = std::stoul(ref.substr(slash + 1));
            } catch (const std::exception&) {
                throw SchemaError(path, 0, "bad SLoC index in '" + ref + "'");
            }
            if (!n || idx >= n->slocs.size()) throw SchemaError(path, 0, "no SLoC " + ref);
        }
    };

    std::set<std::string> sloc_texts;
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
        const auto& n = s.nodes[i];
        auto p = item_path("nodes", s.nodes, i);
        for (std::size_t j = 0; j < n.slocs.size(); ++j) {
            if (n.slocs[j].private_addr.port == 0 || n.slocs[j].private_addr.ip.is_zero())
                throw SchemaError(p + ".slocs[" + std::to_string(j) + "].private", 0, "needs an address and port");
            sloc_texts.insert(n.name + "|" + n.slocs[j].color + "|" + n.slocs[j].private_addr.to_string());
        }
        if (n.lsdb) need_role(*n.lsdb, schema::Role::Lsdb, p + ".lsdb");
        if (n.edge_token && n.role != schema::Role::Fabric) throw SchemaError(p + ".edge_token", 0, "fabrics only");
        if (!n.imports.empty() && n.role != schema::Role::Linecard)
            throw SchemaError(p + ".imports", 0, "linecards only");
        for (const auto& w : n.probe_white_list)
            if (!node_of(w)) throw SchemaError(p + ".probe_white_list", 0, "unknown node '" + w + "'");
    }
    for (std::size_t i = 0; i < s.links.size(); ++i) {
        auto p = item_path("links", s.links, i);
        endpoint_ok(s.links[i].a, p + ".a");
        endpoint_ok(s.links[i].b, p + ".b");
    }
    for (std::size_t i = 0; i < s.hosts.size(); ++i) {
        const auto& h = s.hosts[i];
        auto p = item_path("hosts", s.hosts, i);
        need_role(h.linecard, schema::Role::Linecard, p + ".linecard");
        bool imported = false;
        for (const auto& im : node_of(h.linecard)->imports) imported |= im.table == h.id;
        if (!imported) throw SchemaError(p, 0, "linecard imports no table " + std::to_string(h.id));
    }
    for (std::size_t i = 0; i < s.clients.size(); ++i) {
        const auto& c = s.clients[i];
        auto p = item_path("clients", s.clients, i);
        need_role(c.edge, schema::Role::Fabric, p + ".edge");
        for (std::size_t j = 0; j + 1 < c.path.size(); ++j)
            need_role(c.path[j], schema::Role::Fabric, p + ".path[" + std::to_string(j) + "]");
        auto k = kinds.find(c.path.back());
        if (k == kinds.end() || k->second != "server") throw SchemaError(p + ".path", 0, "must end at a server");
        if (c.stun) need_role(*c.stun, schema::Role::Stun, p + ".stun");
    }
    for (std::size_t i = 0; i < s.servers.size(); ++i)
        need_role(s.servers[i].edge, schema::Role::Fabric, item_path("servers", s.servers, i) + ".edge");

    std::set<std::string> flow_names;
    for (std::size_t i = 0; i < s.flows.size(); ++i) {
        const auto& f = s.flows[i];
        auto p = item_path("flows", s.flows, i);
        if (!flow_names.insert(f.name).second) throw SchemaError(p + ".name", 0, "duplicate flow name");
        auto from = kinds.find(f.from);
        auto to = kinds.find(f.to);
        if (from == kinds.end()) throw SchemaError(p + ".from", 0, "unknown endpoint '" + f.from + "'");
        if (to == kinds.end()) throw SchemaError(p + ".to", 0, "unknown endpoint '" + f.to + "'");
        if (from->second == "host") {
            if (to->second != "host") throw SchemaError(p + ".to", 0, "host flows end at a host");
            if (f.mode != FlowMode::Overlay) throw SchemaError(p + ".mode", 0, "host flows use overlay");
        } else if (from->second == "client") {
            if (to->second != "server") throw SchemaError(p + ".to", 0, "client flows end at a server");
            if (f.mode == FlowMode::Overlay) throw SchemaError(p + ".mode", 0, "client flows use srou or passthrough");
            const auto& cpath = std::find_if(s.clients.begin(), s.clients.end(),
                                             [&](const ClientSpec& c) { return c.name == f.from; })->path;
            if (cpath.back() != f.to) throw SchemaError(p + ".to", 0, "client path ends at a different server");
        } else {
            throw SchemaError(p + ".from", 0, "flows start at a host or a client");
        }
        if (f.count == 0) throw SchemaError(p + ".count", 0, "must be positive");
    }
    for (std::size_t i = 0; i < s.faults.size(); ++i) {
        const auto& f = s.faults[i];
        auto p = item_path("faults", s.faults, i);
        switch (f.kind) {
        case FaultKind::Link: {
            endpoint_ok(f.a, p + ".a");
            endpoint_ok(f.b, p + ".b");
            bool found = false;
            for (const auto& l : s.links) found |= (l.a == f.a && l.b == f.b) || (l.a == f.b && l.b == f.a);
            if (!found) throw SchemaError(p, 0, "no link " + f.a + " - " + f.b);
            break;
        }
        case FaultKind::StorePartition:
            if (!f.target.empty() && !node_of(f.target)) throw SchemaError(p + ".node", 0, "unknown node");
            break;
        case FaultKind::NodeKill:
            if (!node_of(f.target)) throw SchemaError(p + ".node", 0, "unknown node '" + f.target + "'");
            break;
        case FaultKind::HostAnnounce: {
            auto k = kinds.find(f.target);
            if (k == kinds.end() || k->second != "host") throw SchemaError(p + ".host", 0, "unknown host");
            break;
        }
        case FaultKind::GroupRule: break;
        }
        if (f.at > s.until) throw SchemaError(p + ".at_s", 0, "after the end of the run");
    }
    for (std::size_t i = 0; i < s.expect.size(); ++i) {
        auto p = item_path("expect", s.expect, i);
        if (!flow_names.count(s.expect[i].flow)) throw SchemaError(p + ".flow", 0, "unknown flow");
        if (s.expect[i].via)
            for (const auto& v : *s.expect[i].via) need_role(v, schema::Role::Fabric, p + ".via");
    }
    for (std::size_t i = 0; i < s.checks.size(); ++i)
        if (s.checks[i].at > s.until)
            throw SchemaError(item_path("checks", s.checks, i) + ".at_s", 0, "after the end of the run");
}

Scenario parse(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw SchemaError("$", e.mark.line + 1, e.msg);
    }
    if (!root.IsMap()) throw SchemaError("$", 0, "document must be a mapping");
    Scenario s = scenario(Field{root, "$"});
    try {
        validate(s);
    } catch (const SchemaError& e) {
        // Recover a line number for cross-reference errors from the field path.
        if (e.line() > 0) throw;
        YAML::Node n = root;
        std::string rest = e.path().substr(1);
        int line = 0;
        while (!rest.empty()) {
            if (rest[0] == '.') {
                auto end = rest.find_first_of(".[", 1);
                auto key = rest.substr(1, end == std::string::npos ? std::string::npos : end - 1);
                if (!n.IsMap() || !n[key].IsDefined()) break;
                n = n[key];
                rest = end == std::string::npos ? "" : rest.substr(end);
            } else if (rest[0] == '[') {
                auto end = rest.find(']');
                auto idx = std::stoul(rest.substr(1, end - 1));
                if (!n.IsSequence() || idx >= n.size()) break;
                n = n[idx];
                rest = rest.substr(end + 1);
            } else {
                break;
            }
            line = line_of(n);
        }
        std::string msg = e.what();
        msg = msg.substr(msg.find(": ") + 2);
        throw SchemaError(e.path(), line, msg);
    }
    return s;
}

Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("$", 0, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

} // namespace ruta::scenario
