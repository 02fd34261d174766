#pragma once

// Key paths and value documents of the control plane, plus the node-side
// procedures that write them (registration, service announcement, hunting,
// route and link-state publication, policy lookup).

#include "ruta/error.hpp"
#include "ruta/kv.hpp"
#include "ruta/net.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ruta::schema {

enum class Role { Etcd, Fabric, Linecard, Stun, Analytic, Lsdb };

/// Key token: "etcd", "fabric", "linecard", "STUN", "analytic", "lsdb".
std::string_view role_token(Role r);
/// Case-insensitive; throws MalformedValue.
Role parse_role(std::string_view s);

struct Location {
    double lat = 0.0;
    double lon = 0.0;
    bool operator==(const Location&) const = default;
};

constexpr std::uint32_t kLabelSpace = 1u << 24;

struct NodeRecord {
    Role role = Role::Linecard;
    std::string system_name;
    std::uint32_t site_id = 0;
    Location location;
    std::uint32_t system_label = 0;
    bool operator==(const NodeRecord&) const = default;
};

std::string node_key(Role role, const std::string& system_name);
std::string encode_node(const NodeRecord& n);
NodeRecord decode_node(const std::string& value);

struct Sloc {
    std::string color;
    Endpoint private_addr;
    Endpoint public_addr;
    std::optional<std::string> interface_name;
    double rx_bw = 0.0; // bits/s
    double tx_bw = 0.0;
    bool operator==(const Sloc&) const = default;
};

/// "<systemName>|<color>|<privateIP:port>"
struct SlocShort {
    std::string system_name;
    std::string color;
    Endpoint private_addr;

    std::string render() const;
    static SlocShort parse(std::string_view s);
    auto operator<=>(const SlocShort&) const = default;
    bool operator==(const SlocShort&) const = default;
};

SlocShort short_of(const std::string& system_name, const Sloc& s);
void validate(const Sloc& s);

std::string service_key(Role role, const std::string& system_name);
std::string encode_service(const std::vector<Sloc>& slocs);
std::vector<Sloc> decode_service(const std::string& value);

enum class RouteType { Type2 = 2, Type5 = 5 };

struct RouteTlv {
    std::uint16_t type = 0;
    std::string value; // hex
    bool operator==(const RouteTlv&) const = default;
};

struct RouteValue {
    std::uint32_t site_id = 0;
    std::string system_name;
    std::uint32_t policy_tag = 0;
    std::vector<RouteTlv> tlvs;
    bool operator==(const RouteValue&) const = default;
};

struct ServiceRoute {
    RouteType type = RouteType::Type2;
    std::string export_rt;
    std::string rd;
    MacAddress mac;     // Type2
    Ipv4Address ip;     // Type2
    Ipv4Prefix prefix;  // Type5
    RouteValue value;

    std::string key() const;
    bool operator==(const ServiceRoute&) const = default;
};

/// Throws MalformedRoute.
void validate(const ServiceRoute& r);
/// Parses key and value together. Throws MalformedRoute.
ServiceRoute parse_route(const std::string& key, const std::string& value);
std::string encode_route_value(const RouteValue& v);
RouteValue decode_route_value(const std::string& value);
std::string route_prefix(RouteType type, const std::string& rt);

enum class LinkStatus { Up, Down };

struct LinkStateRecord {
    SlocShort src;
    SlocShort dst;
    double two_way_delay_us = 0.0;
    double jitter_us = 0.0;
    double loss = 0.0;
    double utilization_rx = 0.0;
    double utilization_tx = 0.0;
    LinkStatus status = LinkStatus::Up;
    std::int64_t sampled_at_ns = 0;

    std::string key() const;
    bool operator==(const LinkStateRecord&) const = default;
};

inline constexpr std::string_view kLinkstatePrefix = "/stats/linkstate/";

/// Throws OutOfRange.
void validate(const LinkStateRecord& r);
std::string encode_linkstate(const LinkStateRecord& r);
LinkStateRecord decode_linkstate(const std::string& value);
/// Returns (src, dst) from a link-state key.
std::pair<SlocShort, SlocShort> parse_linkstate_key(const std::string& key);

enum class Action { Permit, Deny, Steer };
std::string_view to_string(Action a);

struct PolicyValue {
    Action action = Action::Permit;
    std::vector<SlocShort> slocs;
    bool operator==(const PolicyValue&) const = default;
};

/// Steer requires a non-empty list; Permit/Deny forbid one. Throws MalformedValue.
void validate(const PolicyValue& v);
std::string encode_policy(const PolicyValue& v);
PolicyValue decode_policy(const std::string& value);

/// Group of 0 is the default group. nullopt renders as "*".
struct GroupRule {
    std::optional<std::uint32_t> src;
    std::optional<std::uint32_t> dst;
    PolicyValue value;
    std::string key() const;
    bool operator==(const GroupRule&) const = default;
};
GroupRule parse_group_rule(const std::string& key, const std::string& value);

struct Identity {
    std::string user_id;
    std::string device_id;
    std::vector<std::uint32_t> groups;
    std::string key() const;
    bool operator==(const Identity&) const = default;
};
std::string encode_identity(const Identity& id);
Identity parse_identity(const std::string& key, const std::string& value);

struct RouteRule {
    RouteType type = RouteType::Type2;
    // Type2
    MacAddress src_mac, dst_mac;
    Ipv4Address src_ip, dst_ip;
    // Type5
    Ipv4Prefix src_prefix, dst_prefix;
    PolicyValue value;
    std::string key() const;
    bool operator==(const RouteRule&) const = default;
};
RouteRule parse_route_rule(const std::string& key, const std::string& value);

/// Immutable policy snapshot. Route rules are consulted before group rules.
class PolicyTable {
public:
    PolicyTable() = default;
    PolicyTable(std::vector<GroupRule> groups, std::vector<RouteRule> routes);

    /// exact (s,d) > (*,d) > (s,*) > (*,*) > Permit. Ties within a level go to
    /// the numerically smallest (s,d). Empty tag sets mean {0}.
    PolicyValue lookup(std::vector<std::uint32_t> src_groups, std::vector<std::uint32_t> dst_groups) const;

    /// Type2 exact match first, then the Type5 rule with the longest dst then src mask.
    std::optional<PolicyValue> lookup_route(MacAddress src_mac, Ipv4Address src_ip, MacAddress dst_mac,
                                            Ipv4Address dst_ip) const;

    const std::vector<GroupRule>& groups() const { return groups_; }
    const std::vector<RouteRule>& routes() const { return routes_; }

private:
    std::vector<GroupRule> groups_;
    std::vector<RouteRule> routes_;
};

/// Builds a table from "/control/" entries; unparseable entries are skipped and reported in `warnings`.
PolicyTable build_policy(const std::vector<kv::KvEntry>& entries, std::vector<std::string>* warnings = nullptr);
/// Loads "/control/" rules; unparseable entries are skipped and reported in `warnings`.
PolicyTable load_policy(const kv::Client& c, std::vector<std::string>* warnings = nullptr);
PolicyValue lookup_policy(const kv::Client& c, const std::vector<std::uint32_t>& src_groups,
                          const std::vector<std::uint32_t>& dst_groups);
std::vector<std::uint32_t> lookup_identity(const kv::Client& c, const std::string& user_id,
                                           const std::string& device_id);

// ---------------------------------------------------------------- node session

struct LeasePolicy {
    sim::Duration node_ttl = std::chrono::seconds(60);   // /node, /service
    sim::Duration route_ttl = std::chrono::seconds(600); // /route, /stats
};

/// A node's two control-plane leases and their keepalive timers.
class NodeSession {
public:
    NodeSession(kv::Client client, LeasePolicy policy = {});
    ~NodeSession();
    NodeSession(const NodeSession&) = delete;
    NodeSession& operator=(const NodeSession&) = delete;

    /// Grants both leases and starts keepalives every ttl/3.
    void start();
    /// Stops keepalives; the leases then lapse on their own.
    void stop();
    bool running() const { return running_; }

    kv::Client& client() { return client_; }
    const kv::Client& client() const { return client_; }
    kv::LeaseId node_lease() const { return node_lease_; }
    kv::LeaseId route_lease() const { return route_lease_; }
    const LeasePolicy& policy() const { return policy_; }

    /// Called when a keepalive finds its lease gone; the session has re-granted it.
    void on_lease_lost(std::function<void(bool node_class)> fn) { lost_ = std::move(fn); }
    std::uint64_t keepalive_failures() const { return keepalive_failures_; }

private:
    void tick(bool node_class);

    kv::Client client_;
    LeasePolicy policy_;
    kv::LeaseId node_lease_ = 0;
    kv::LeaseId route_lease_ = 0;
    sim::TimerId node_timer_ = 0;
    sim::TimerId route_timer_ = 0;
    bool running_ = false;
    std::uint64_t keepalive_failures_ = 0;
    std::function<void(bool)> lost_;
    std::shared_ptr<bool> alive_;
};

struct RegisterOptions {
    std::uint32_t label_ceiling = kLabelSpace;
    /// Time spent inside the critical section; widens race windows in tests.
    sim::Duration critical_section{0};
    std::string lock_name = "system-label";
};

struct RegisterResult {
    std::optional<NodeRecord> record;
    std::optional<Errc> error;
    std::string message;
};

/// Asynchronous: lock, scan /node/, take the smallest unused label, write
/// under the node lease, unlock, then `done`.
void register_node(NodeSession& s, Role role, const std::string& system_name, std::uint32_t site_id,
                   Location location, std::function<void(RegisterResult)> done, RegisterOptions opts = {});

/// Throws NotRegistered, StoreUnavailable, OutOfRange.
kv::Revision announce_service(NodeSession& s, const NodeRecord& node, const std::vector<Sloc>& slocs);

struct ServiceEntry {
    std::string system_name;
    std::vector<Sloc> slocs;
    bool operator==(const ServiceEntry&) const = default;
};

struct HuntResult {
    std::vector<ServiceEntry> entries; // key-sorted
    std::vector<std::string> warnings;
};

HuntResult hunt(const kv::Client& c, Role role);

kv::Revision announce_route(NodeSession& s, const ServiceRoute& r);
bool withdraw_route(NodeSession& s, const std::string& key);

/// Writes under `lease`; pass the LSDB client and lease when an LSDB node exists.
kv::Revision report_linkstate(kv::Client& c, kv::LeaseId lease, const LinkStateRecord& rec);
kv::Revision report_linkstate(NodeSession& s, const LinkStateRecord& rec);

} // namespace ruta::schema
