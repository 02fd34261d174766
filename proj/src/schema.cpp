#include "ruta/schema.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace ruta::schema {

using nlohmann::json;

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
    T v{};
    if (s.empty()) return std::nullopt;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

// Key components may not be empty or contain '/'.
bool component_ok(std::string_view s) { return !s.empty() && s.find('/') == std::string_view::npos; }

json parse_json(const std::string& value, Errc err) {
    try {
        return json::parse(value);
    } catch (const json::exception& e) {
        throw Error(err, std::string("value is not JSON: ") + e.what());
    }
}

template <typename F>
auto guarded(Errc err, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == err) throw;
        throw Error(err, e.what());
    } catch (const json::exception& e) {
        throw Error(err, e.what());
    }
}

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

} // namespace

// ---------------------------------------------------------------- roles

std::string_view role_token(Role r) {
    switch (r) {
    case Role::Etcd: return "etcd";
    case Role::Fabric: return "fabric";
    case Role::Linecard: return "linecard";
    case Role::Stun: return "STUN";
    case Role::Analytic: return "analytic";
    case Role::Lsdb: return "lsdb";
    }
    return "?";
}

Role parse_role(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    for (Role r : {Role::Etcd, Role::Fabric, Role::Linecard, Role::Stun, Role::Analytic, Role::Lsdb}) {
        std::string tok(role_token(r));
        std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return char(std::tolower(c)); });
        if (tok == lower) return r;
    }
    throw Error(Errc::MalformedValue, "unknown role '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- nodes

std::string node_key(Role role, const std::string& system_name) {
    return "/node/" + std::string(role_token(role)) + "/" + system_name;
}

std::string encode_node(const NodeRecord& n) {
    json j{{"role", role_token(n.role)},
           {"system_name", n.system_name},
           {"site_id", n.site_id},
           {"location", {{"lat", n.location.lat}, {"lon", n.location.lon}}},
           {"system_label", n.system_label}};
    return j.dump();
}

NodeRecord decode_node(const std::string& value) {
    return guarded(Errc::MalformedValue, [&] {
        json j = parse_json(value, Errc::MalformedValue);
        NodeRecord n;
        n.role = parse_role(j.at("role").get<std::string>());
        n.system_name = j.at("system_name").get<std::string>();
        n.site_id = j.at("site_id").get<std::uint32_t>();
        n.location = {j.at("location").at("lat").get<double>(), j.at("location").at("lon").get<double>()};
        n.system_label = j.at("system_label").get<std::uint32_t>();
        if (n.system_label >= kLabelSpace) throw Error(Errc::MalformedValue, "system_label exceeds 24 bits");
        return n;
    });
}

// ---------------------------------------------------------------- SLoC

std::string SlocShort::render() const { return system_name + "|" + color + "|" + private_addr.to_string(); }

SlocShort SlocShort::parse(std::string_view s) {
    auto parts = split(s, '|');
    if (parts.size() != 3 || parts[0].empty() || parts[1].empty())
        throw Error(Errc::MalformedValue, "bad SLoC short form '" + std::string(s) + "'");
    try {
        return SlocShort{parts[0], parts[1], Endpoint::parse(parts[2])};
    } catch (const Error& e) {
        throw Error(Errc::MalformedValue, e.what());
    }
}

SlocShort short_of(const std::string& system_name, const Sloc& s) { return {system_name, s.color, s.private_addr}; }

void validate(const Sloc& s) {
    if (s.color.empty() || s.color.find('|') != std::string::npos || s.color.find('/') != std::string::npos)
        throw Error(Errc::OutOfRange, "SLoC color must be non-empty without '|' or '/'");
    if (s.private_addr.port == 0 || s.public_addr.port == 0)
        throw Error(Errc::OutOfRange, "SLoC ports must be in 1..65535");
    if (!(s.rx_bw >= 0) || !(s.tx_bw >= 0)) throw Error(Errc::OutOfRange, "SLoC bandwidth must be non-negative");
}

std::string service_key(Role role, const std::string& system_name) {
    return "/service/" + std::string(role_token(role)) + "/" + system_name;
}

std::string encode_service(const std::vector<Sloc>& slocs) {
    json arr = json::array();
    for (const auto& s : slocs) {
        json j{{"color", s.color},
               {"private", s.private_addr.to_string()},
               {"public", s.public_addr.to_string()},
               {"rx_bw", s.rx_bw},
               {"tx_bw", s.tx_bw}};
        if (s.interface_name) j["interface_name"] = *s.interface_name;
        arr.push_back(std::move(j));
    }
    return json{{"slocs", arr}}.dump();
}

std::vector<Sloc> decode_service(const std::string& value) {
    return guarded(Errc::MalformedValue, [&] {
        json j = parse_json(value, Errc::MalformedValue);
        std::vector<Sloc> out;
        for (const auto& e : j.at("slocs")) {
            Sloc s;
            s.color = e.at("color").get<std::string>();
            s.private_addr = Endpoint::parse(e.at("private").get<std::string>());
            s.public_addr = Endpoint::parse(e.at("public").get<std::string>());
            s.rx_bw = e.at("rx_bw").get<double>();
            s.tx_bw = e.at("tx_bw").get<double>();
            if (e.contains("interface_name")) s.interface_name = e.at("interface_name").get<std::string>();
            validate(s);
            out.push_back(std::move(s));
        }
        return out;
    });
}

// ---------------------------------------------------------------- routes

std::string route_prefix(RouteType type, const std::string& rt) {
    return "/route/" + std::to_string(int(type)) + "/" + rt + "/";
}

std::string ServiceRoute::key() const {
    std::string k = route_prefix(type, export_rt) + rd + "/";
    if (type == RouteType::Type2) return k + mac.to_string() + "/" + ip.to_string();
    return k + prefix.network.to_string() + "/" + std::to_string(prefix.length);
}

void validate(const ServiceRoute& r) {
    if (r.type != RouteType::Type2 && r.type != RouteType::Type5)
        throw Error(Errc::MalformedRoute, "route type must be 2 or 5");
    if (!component_ok(r.export_rt) || !component_ok(r.rd))
        throw Error(Errc::MalformedRoute, "RT and RD must be non-empty and free of '/'");
    if (r.type == RouteType::Type5) {
        if (r.prefix.length > 32) throw Error(Errc::MalformedRoute, "mask exceeds 32");
        if ((r.prefix.network.value & ~prefix_mask(r.prefix.length)) != 0)
            throw Error(Errc::MalformedRoute, "prefix has host bits set");
    }
    if (r.value.system_name.empty()) throw Error(Errc::MalformedRoute, "route value needs SystemName");
}

std::string encode_route_value(const RouteValue& v) {
    json tlvs = json::array();
    for (const auto& t : v.tlvs) tlvs.push_back({{"type", t.type}, {"value", t.value}});
    return json{{"site_id", v.site_id}, {"system_name", v.system_name}, {"policy_tag", v.policy_tag}, {"tlvs", tlvs}}
        .dump();
}

RouteValue decode_route_value(const std::string& value) {
    return guarded(Errc::MalformedRoute, [&] {
        json j = parse_json(value, Errc::MalformedRoute);
        RouteValue v;
        v.site_id = j.at("site_id").get<std::uint32_t>();
        v.system_name = j.at("system_name").get<std::string>();
        v.policy_tag = j.at("policy_tag").get<std::uint32_t>();
        if (j.contains("tlvs"))
            for (const auto& t : j.at("tlvs")) v.tlvs.push_back({t.at("type").get<std::uint16_t>(), t.at("value").get<std::string>()});
        return v;
    });
}

ServiceRoute parse_route(const std::string& key, const std::string& value) {
    return guarded(Errc::MalformedRoute, [&] {
        auto parts = split(key, '/');
        // "", "route", type, rt, rd, a, b
        if (parts.size() != 7 || !parts[0].empty() || parts[1] != "route")
            throw Error(Errc::MalformedRoute, "bad route key '" + key + "'");
        ServiceRoute r;
        if (parts[2] == "2")
            r.type = RouteType::Type2;
        else if (parts[2] == "5")
            r.type = RouteType::Type5;
        else
            throw Error(Errc::MalformedRoute, "route type must be 2 or 5");
        r.export_rt = parts[3];
        r.rd = parts[4];
        if (r.type == RouteType::Type2) {
            r.mac = MacAddress::parse(parts[5]);
            r.ip = Ipv4Address::parse(parts[6]);
        } else {
            auto mask = parse_uint<unsigned>(parts[6]);
            if (!mask || *mask > 32) throw Error(Errc::MalformedRoute, "mask must be 0..32");
            r.prefix.network = Ipv4Address::parse(parts[5]);
            r.prefix.length = std::uint8_t(*mask);
        }
        r.value = decode_route_value(value);
        validate(r);
        if (r.key() != key) throw Error(Errc::MalformedRoute, "route key is not canonical: '" + key + "'");
        return r;
    });
}

// ---------------------------------------------------------------- link state

std::string LinkStateRecord::key() const {
    return std::string(kLinkstatePrefix) + src.render() + " - " + dst.render();
}

void validate(const LinkStateRecord& r) {
    if (!in_unit(r.loss)) throw Error(Errc::OutOfRange, "loss must lie in [0,1]");
    if (!in_unit(r.utilization_rx) || !in_unit(r.utilization_tx))
        throw Error(Errc::OutOfRange, "utilization must lie in [0,1]");
    if (!std::isfinite(r.two_way_delay_us) || r.two_way_delay_us < 0 || !std::isfinite(r.jitter_us) || r.jitter_us < 0)
        throw Error(Errc::OutOfRange, "delay and jitter must be finite and non-negative");
}

std::string encode_linkstate(const LinkStateRecord& r) {
    return json{{"src", r.src.render()},
                {"dst", r.dst.render()},
                {"two_way_delay_us", r.two_way_delay_us},
                {"jitter_us", r.jitter_us},
                {"loss", r.loss},
                {"utilization_rx", r.utilization_rx},
                {"utilization_tx", r.utilization_tx},
                {"status", r.status == LinkStatus::Up ? "up" : "down"},
                {"sampled_at_ns", r.sampled_at_ns}}
        .dump();
}

LinkStateRecord decode_linkstate(const std::string& value) {
    return guarded(Errc::MalformedValue, [&] {
        json j = parse_json(value, Errc::MalformedValue);
        LinkStateRecord r;
        r.src = SlocShort::parse(j.at("src").get<std::string>());
        r.dst = SlocShort::parse(j.at("dst").get<std::string>());
        r.two_way_delay_us = j.at("two_way_delay_us").get<double>();
        r.jitter_us = j.at("jitter_us").get<double>();
        r.loss = j.at("loss").get<double>();
        r.utilization_rx = j.at("utilization_rx").get<double>();
        r.utilization_tx = j.at("utilization_tx").get<double>();
        auto st = j.at("status").get<std::string>();
        if (st != "up" && st != "down") throw Error(Errc::MalformedValue, "status must be up or down");
        r.status = st == "up" ? LinkStatus::Up : LinkStatus::Down;
        r.sampled_at_ns = j.at("sampled_at_ns").get<std::int64_t>();
        try {
            validate(r);
        } catch (const Error& e) {
            throw Error(Errc::MalformedValue, e.what());
        }
        return r;
    });
}

std::pair<SlocShort, SlocShort> parse_linkstate_key(const std::string& key) {
    if (key.rfind(kLinkstatePrefix, 0) != 0) throw Error(Errc::MalformedValue, "not a link-state key: " + key);
    std::string_view rest(key);
    rest.remove_prefix(kLinkstatePrefix.size());
    auto sep = rest.find(" - ");
    if (sep == std::string_view::npos) throw Error(Errc::MalformedValue, "link-state key lacks ' - ': " + key);
    return {SlocShort::parse(rest.substr(0, sep)), SlocShort::parse(rest.substr(sep + 3))};
}

// ---------------------------------------------------------------- policy

std::string_view to_string(Action a) {
    switch (a) {
    case Action::Permit: return "Permit";
    case Action::Deny: return "Deny";
    case Action::Steer: return "Steer";
    }
    return "?";
}

void validate(const PolicyValue& v) {
    if (v.action == Action::Steer && v.slocs.empty()) throw Error(Errc::MalformedValue, "Steer needs a SLoC list");
    if (v.action != Action::Steer && !v.slocs.empty())
        throw Error(Errc::MalformedValue, std::string(to_string(v.action)) + " takes no SLoC list");
}

std::string encode_policy(const PolicyValue& v) {
    validate(v);
    json slocs = json::array();
    for (const auto& s : v.slocs) slocs.push_back(s.render());
    return json{{"action", to_string(v.action)}, {"slocs", slocs}}.dump();
}

PolicyValue decode_policy(const std::string& value) {
    return guarded(Errc::MalformedValue, [&] {
        json j = parse_json(value, Errc::MalformedValue);
        PolicyValue v;
        auto a = j.at("action").get<std::string>();
        if (a == "Permit")
            v.action = Action::Permit;
        else if (a == "Deny")
            v.action = Action::Deny;
        else if (a == "Steer")
            v.action = Action::Steer;
        else
            throw Error(Errc::MalformedValue, "unknown action '" + a + "'");
        if (j.contains("slocs"))
            for (const auto& s : j.at("slocs")) v.slocs.push_back(SlocShort::parse(s.get<std::string>()));
        validate(v);
        return v;
    });
}

namespace {

std::string group_token(const std::optional<std::uint32_t>& g) { return g ? std::to_string(*g) : "*"; }

std::optional<std::uint32_t> parse_group_token(const std::string& s) {
    if (s == "*") return std::nullopt;
    auto v = parse_uint<std::uint32_t>(s);
    if (!v) throw Error(Errc::MalformedValue, "bad group tag '" + s + "'");
    return v;
}

} // namespace

std::string GroupRule::key() const { return "/control/group/" + group_token(src) + "/" + group_token(dst); }

GroupRule parse_group_rule(const std::string& key, const std::string& value) {
    auto parts = split(key, '/');
    if (parts.size() != 5 || parts[1] != "control" || parts[2] != "group")
        throw Error(Errc::MalformedValue, "bad group rule key '" + key + "'");
    return GroupRule{parse_group_token(parts[3]), parse_group_token(parts[4]), decode_policy(value)};
}

std::string Identity::key() const { return "/identity/" + user_id + "/" + device_id; }

std::string encode_identity(const Identity& id) { return json{{"groups", id.groups}}.dump(); }

Identity parse_identity(const std::string& key, const std::string& value) {
    auto parts = split(key, '/');
    if (parts.size() != 4 || parts[1] != "identity" || parts[2].empty() || parts[3].empty())
        throw Error(Errc::MalformedValue, "bad identity key '" + key + "'");
    return guarded(Errc::MalformedValue, [&] {
        json j = parse_json(value, Errc::MalformedValue);
        return Identity{parts[2], parts[3], j.at("groups").get<std::vector<std::uint32_t>>()};
    });
}

std::string RouteRule::key() const {
    if (type == RouteType::Type2)
        return "/control/RT/2/" + src_mac.to_string() + "/" + src_ip.to_string() + "/" + dst_mac.to_string() + "/" +
               dst_ip.to_string();
    return "/control/RT/5/" + src_prefix.network.to_string() + "/" + std::to_string(src_prefix.length) + "/" +
           dst_prefix.network.to_string() + "/" + std::to_string(dst_prefix.length);
}

RouteRule parse_route_rule(const std::string& key, const std::string& value) {
    return guarded(Errc::MalformedValue, [&] {
        auto parts = split(key, '/');
        if (parts.size() != 8 || parts[1] != "control" || parts[2] != "RT")
            throw Error(Errc::MalformedValue, "bad route rule key '" + key + "'");
        RouteRule r;
        if (parts[3] == "2") {
            r.type = RouteType::Type2;
            r.src_mac = MacAddress::parse(parts[4]);
            r.src_ip = Ipv4Address::parse(parts[5]);
            r.dst_mac = MacAddress::parse(parts[6]);
            r.dst_ip = Ipv4Address::parse(parts[7]);
        } else if (parts[3] == "5") {
            r.type = RouteType::Type5;
            auto sm = parse_uint<unsigned>(parts[5]);
            auto dm = parse_uint<unsigned>(parts[7]);
            if (!sm || !dm || *sm > 32 || *dm > 32) throw Error(Errc::MalformedValue, "mask must be 0..32");
            r.src_prefix = Ipv4Prefix::make(Ipv4Address::parse(parts[4]), int(*sm));
            r.dst_prefix = Ipv4Prefix::make(Ipv4Address::parse(parts[6]), int(*dm));
        } else {
            throw Error(Errc::MalformedValue, "route rule type must be 2 or 5");
        }
        r.value = decode_policy(value);
        return r;
    });
}

PolicyTable::PolicyTable(std::vector<GroupRule> groups, std::vector<RouteRule> routes)
    : groups_(std::move(groups)), routes_(std::move(routes)) {}

PolicyValue PolicyTable::lookup(std::vector<std::uint32_t> src_groups, std::vector<std::uint32_t> dst_groups) const {
    if (src_groups.empty()) src_groups = {0};
    if (dst_groups.empty()) dst_groups = {0};
    auto has = [](const std::vector<std::uint32_t>& v, std::uint32_t x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    auto level = [&](const GroupRule& r) -> int {
        bool s_ok = !r.src || has(src_groups, *r.src);
        bool d_ok = !r.dst || has(dst_groups, *r.dst);
        if (!s_ok || !d_ok) return -1;
        if (r.src && r.dst) return 0;
        if (!r.src && r.dst) return 1;
        if (r.src && !r.dst) return 2;
        return 3;
    };
    const GroupRule* best = nullptr;
    int best_level = 4;
    for (const auto& r : groups_) {
        int l = level(r);
        if (l < 0) continue;
        auto pair = std::make_pair(r.src.value_or(0), r.dst.value_or(0));
        if (!best || l < best_level ||
            (l == best_level && pair < std::make_pair(best->src.value_or(0), best->dst.value_or(0)))) {
            best = &r;
            best_level = l;
        }
    }
    return best ? best->value : PolicyValue{};
}

std::optional<PolicyValue> PolicyTable::lookup_route(MacAddress src_mac, Ipv4Address src_ip, MacAddress dst_mac,
                                                     Ipv4Address dst_ip) const {
    for (const auto& r : routes_)
        if (r.type == RouteType::Type2 && r.src_mac == src_mac && r.src_ip == src_ip && r.dst_mac == dst_mac &&
            r.dst_ip == dst_ip)
            return r.value;
    const RouteRule* best = nullptr;
    for (const auto& r : routes_) {
        if (r.type != RouteType::Type5 || !r.src_prefix.contains(src_ip) || !r.dst_prefix.contains(dst_ip)) continue;
        if (!best || std::tie(r.dst_prefix.length, r.src_prefix.length) >
                         std::tie(best->dst_prefix.length, best->src_prefix.length))
            best = &r;
    }
    if (best) return best->value;
    return std::nullopt;
}

PolicyTable build_policy(const std::vector<kv::KvEntry>& entries, std::vector<std::string>* warnings) {
    std::vector<GroupRule> groups;
    std::vector<RouteRule> routes;
    for (const auto& e : entries) {
        try {
            if (e.key.rfind("/control/group/", 0) == 0)
                groups.push_back(parse_group_rule(e.key, e.value));
            else if (e.key.rfind("/control/RT/", 0) == 0)
                routes.push_back(parse_route_rule(e.key, e.value));
        } catch (const Error& err) {
            if (warnings) warnings->push_back(e.key + ": " + err.what());
        }
    }
    return PolicyTable(std::move(groups), std::move(routes));
}

PolicyTable load_policy(const kv::Client& c, std::vector<std::string>* warnings) {
    return build_policy(c.get_prefix("/control/"), warnings);
}

PolicyValue lookup_policy(const kv::Client& c, const std::vector<std::uint32_t>& src_groups,
                          const std::vector<std::uint32_t>& dst_groups) {
    return load_policy(c).lookup(src_groups, dst_groups);
}

std::vector<std::uint32_t> lookup_identity(const kv::Client& c, const std::string& user_id,
                                           const std::string& device_id) {
    Identity probe{user_id, device_id, {}};
    auto e = c.get(probe.key());
    if (!e) return {};
    return parse_identity(e->key, e->value).groups;
}

// ---------------------------------------------------------------- NodeSession

NodeSession::NodeSession(kv::Client client, LeasePolicy policy)
    : client_(client), policy_(policy), alive_(std::make_shared<bool>(true)) {}

NodeSession::~NodeSession() {
    *alive_ = false;
    stop();
}

void NodeSession::start() {
    node_lease_ = client_.grant_lease(policy_.node_ttl).id;
    route_lease_ = client_.grant_lease(policy_.route_ttl).id;
    running_ = true;
    auto& loop = client_.store().loop();
    auto alive = alive_;
    node_timer_ = loop.schedule_in(policy_.node_ttl / 3, [this, alive] {
        if (*alive) tick(true);
    });
    route_timer_ = loop.schedule_in(policy_.route_ttl / 3, [this, alive] {
        if (*alive) tick(false);
    });
}

void NodeSession::stop() {
    if (!running_) return;
    running_ = false;
    auto& loop = client_.store().loop();
    loop.cancel(node_timer_);
    loop.cancel(route_timer_);
}

void NodeSession::tick(bool node_class) {
    if (!running_) return;
    kv::LeaseId& id = node_class ? node_lease_ : route_lease_;
    sim::Duration ttl = node_class ? policy_.node_ttl : policy_.route_ttl;
    try {
        client_.keepalive(id);
    } catch (const Error& e) {
        ++keepalive_failures_;
        if (e.code() == Errc::LeaseNotFound) {
            id = client_.grant_lease(ttl).id;
            if (lost_) lost_(node_class);
        }
    }
    auto alive = alive_;
    sim::TimerId t = client_.store().loop().schedule_in(ttl / 3, [this, alive, node_class] {
        if (*alive) tick(node_class);
    });
    (node_class ? node_timer_ : route_timer_) = t;
}

// ---------------------------------------------------------------- procedures

void register_node(NodeSession& s, Role role, const std::string& system_name, std::uint32_t site_id,
                   Location location, std::function<void(RegisterResult)> done, RegisterOptions opts) {
    auto fail = [&done](const Error& e) { done(RegisterResult{std::nullopt, e.code(), e.what()}); };
    if (system_name.empty() || system_name.find('/') != std::string::npos || system_name.find('|') != std::string::npos)
        return fail(Error(Errc::MalformedValue, "system_name must be non-empty without '/' or '|'"));
    kv::Client c = s.client();
    try {
        c.lock(opts.lock_name, s.node_lease(), [c, lease = s.node_lease(), role, system_name, site_id, location, done,
                                                 opts](kv::LockGuard guard) mutable {
            auto body = [c, lease, role, system_name, site_id, location, done, opts, guard]() mutable {
                RegisterResult result;
                try {
                    std::set<std::uint32_t> used;
                    for (const auto& e : c.get_prefix("/node/")) {
                        NodeRecord n;
                        try {
                            n = decode_node(e.value);
                        } catch (const Error&) {
                            continue;
                        }
                        if (n.system_name == system_name)
                            throw Error(Errc::DuplicateSystemName, "system name '" + system_name + "' is registered");
                        used.insert(n.system_label);
                    }
                    std::uint32_t label = 0;
                    while (used.count(label)) ++label;
                    if (label >= opts.label_ceiling)
                        throw Error(Errc::LabelSpaceExhausted, "no free system label below " +
                                                                   std::to_string(opts.label_ceiling));
                    NodeRecord rec{role, system_name, site_id, location, label};
                    c.put(node_key(role, system_name), encode_node(rec), lease);
                    result.record = rec;
                } catch (const Error& e) {
                    result.error = e.code();
                    result.message = e.what();
                }
                try {
                    c.unlock(guard);
                } catch (const Error&) {
                    // session lapsed or store unreachable: the lock is freed by lease expiry
                }
                done(std::move(result));
            };
            if (opts.critical_section > sim::Duration(0))
                c.store().loop().schedule_in(opts.critical_section, std::move(body));
            else
                body();
        });
    } catch (const Error& e) {
        fail(e);
    }
}

kv::Revision announce_service(NodeSession& s, const NodeRecord& node, const std::vector<Sloc>& slocs) {
    auto& c = s.client();
    if (!c.get(node_key(node.role, node.system_name)))
        throw Error(Errc::NotRegistered, "node '" + node.system_name + "' is not registered");
    for (const auto& sl : slocs) validate(sl);
    return c.put(service_key(node.role, node.system_name), encode_service(slocs), s.node_lease());
}

HuntResult hunt(const kv::Client& c, Role role) {
    HuntResult out;
    std::string prefix = "/service/" + std::string(role_token(role)) + "/";
    for (const auto& e : c.get_prefix(prefix)) {
        std::string name = e.key.substr(prefix.size());
        try {
            out.entries.push_back(ServiceEntry{name, decode_service(e.value)});
        } catch (const Error& err) {
            out.warnings.push_back(e.key + ": " + err.what());
        }
    }
    return out;
}

kv::Revision announce_route(NodeSession& s, const ServiceRoute& r) {
    validate(r);
    return s.client().put(r.key(), encode_route_value(r.value), s.route_lease());
}

bool withdraw_route(NodeSession& s, const std::string& key) { return s.client().erase(key); }

kv::Revision report_linkstate(kv::Client& c, kv::LeaseId lease, const LinkStateRecord& rec) {
    validate(rec);
    return c.put(rec.key(), encode_linkstate(rec), lease);
}

kv::Revision report_linkstate(NodeSession& s, const LinkStateRecord& rec) {
    return report_linkstate(s.client(), s.route_lease(), rec);
}

} // namespace ruta::schema
