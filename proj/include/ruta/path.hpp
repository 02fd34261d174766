#pragma once

// Route resolution and relay path selection for one linecard.

#include "ruta/kv.hpp"
#include "ruta/lpm.hpp"
#include "ruta/schema.hpp"
#include "ruta/srou.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ruta::path {

struct SlaPolicy {
    double max_delay_ms = 200.0;
    double max_loss = 0.02;
    std::size_t max_segments = 4;
    double loss_penalty_ms = 1000.0; // per unit of loss
    double jitter_weight = 0.0;
};

void validate(const SlaPolicy& p);

// ---------------------------------------------------------------- mirror

/// Local copy of one store prefix kept current through a watch. While the
/// store is unreachable the copy is frozen and `headless()` is set.
class Mirror {
public:
    Mirror(kv::Client client, std::string prefix);

    /// Applies pending watch events; returns them in revision order.
    std::vector<kv::WatchEvent> sync();

    const std::map<std::string, kv::KvEntry>& entries() const { return entries_; }
    const std::string& prefix() const { return prefix_; }
    bool headless() const { return headless_; }
    kv::Revision epoch() const { return epoch_; }

private:
    void attach();

    kv::Client client_;
    std::string prefix_;
    std::optional<kv::Watch> watch_;
    std::map<std::string, kv::KvEntry> entries_;
    bool headless_ = false;
    kv::Revision epoch_ = 0;
};

// ---------------------------------------------------------------- route table

struct Import {
    schema::RouteType type = schema::RouteType::Type2;
    std::string rt;
    /// VNID for Type2, VRF for Type5. Type2 host addresses are also indexed
    /// under this id for L3 lookups.
    std::uint32_t table_id = 0;
};

class RouteTable {
public:
    RouteTable() = default;
    explicit RouteTable(std::vector<Import> imports);

    const std::vector<Import>& imports() const { return imports_; }
    std::vector<std::string> watch_prefixes() const;

    /// Ignores routes whose RT is not imported; returns whether the route was taken.
    bool upsert(const schema::ServiceRoute& r);
    bool erase(const std::string& key);
    /// Replaces the whole table from parsed store entries; returns keys that failed to parse.
    std::vector<std::string> rebuild(const std::vector<kv::KvEntry>& entries);
    /// Applies one watch event; malformed puts are ignored and reported.
    bool apply(const kv::WatchEvent& ev);

    /// Type2 exact match. Throws NoRoute.
    const schema::ServiceRoute& resolve_mac(std::uint32_t vnid, MacAddress mac) const;
    /// Type2 host address first, then Type5 longest prefix. Throws NoRoute.
    const schema::ServiceRoute& resolve_ip(std::uint32_t vrf, Ipv4Address ip) const;

    std::size_t size() const { return routes_.size(); }
    const std::map<std::string, schema::ServiceRoute>& routes() const { return routes_; }

private:
    std::optional<std::uint32_t> table_for(const schema::ServiceRoute& r) const;

    std::vector<Import> imports_;
    std::map<std::string, schema::ServiceRoute> routes_;
    std::map<std::string, std::uint32_t> table_of_;
    std::map<std::pair<std::uint32_t, MacAddress>, std::string> by_mac_;
    std::map<std::pair<std::uint32_t, Ipv4Address>, std::string> by_host_;
    std::map<std::uint32_t, Lpm<std::string>> by_prefix_;
};

/// Keeps a RouteTable in step with the store through per-RT mirrors.
class RouteSync {
public:
    RouteSync(kv::Client client, RouteTable& table);

    /// Never throws on StoreUnavailable; the table is then frozen and headless() is set.
    void sync();
    bool headless() const;
    kv::Revision epoch() const;
    /// Revisions of the events applied by the most recent sync(), in order.
    const std::vector<kv::Revision>& last_applied() const { return last_applied_; }

private:
    RouteTable& table_;
    std::vector<Mirror> mirrors_;
    std::vector<kv::Revision> last_applied_;
};

// ---------------------------------------------------------------- SLA

enum class SlaReason { None, Delay, Loss, Down, Unknown };
std::string_view to_string(SlaReason r);

struct SlaVerdict {
    bool ok = true;
    SlaReason reason = SlaReason::None;
};

/// One-way delay is taken as half the two-way delay. Missing data is a violation.
SlaVerdict evaluate_sla(const std::optional<schema::LinkStateRecord>& direct, const SlaPolicy& policy);

// ---------------------------------------------------------------- graph

/// Integer cost in nanoseconds of milliseconds-equivalent, so sums are exact.
using Cost = std::int64_t;

Cost edge_cost(const schema::LinkStateRecord& r, const SlaPolicy& policy);
inline double cost_ms(Cost c) { return double(c) / 1e6; }

struct Edge {
    std::string to;
    Cost cost = 0;
};

/// Directed graph over SLoC short forms. A record A->B also provides B->A
/// unless B->A was probed itself.
class LinkGraph {
public:
    LinkGraph() = default;
    LinkGraph(const std::vector<schema::LinkStateRecord>& records, const SlaPolicy& policy);

    void add_edge(const std::string& from, const std::string& to, Cost cost, bool measured = true);
    void remove_edge(const std::string& from, const std::string& to);
    /// Vertices allowed as intermediate hops; empty means all.
    void set_relays(std::set<std::string> relays) { relays_ = std::move(relays); }
    bool may_relay(const std::string& v) const { return relays_.empty() || relays_.count(v) != 0; }

    const std::map<std::string, std::map<std::string, Edge>>& adjacency() const { return adj_; }
    std::optional<Cost> cost(const std::string& from, const std::string& to) const;

private:
    std::map<std::string, std::map<std::string, Edge>> adj_;
    std::set<std::pair<std::string, std::string>> measured_;
    std::set<std::string> relays_;
};

enum class PathSource { Direct, Engineered, PolicySteer };
std::string_view to_string(PathSource s);

struct ComputedPath {
    std::optional<schema::ServiceRoute> dst_route;
    std::string src;
    /// First entry is the outer destination; the last is the destination SLoC.
    std::vector<std::string> waypoints;
    Cost cost = 0;
    std::int64_t computed_at_ns = 0;
    PathSource source = PathSource::Direct;
    bool operator==(const ComputedPath&) const = default;
};

/// Minimum-cost path with at most `policy.max_segments` hops, by hop-layered
/// relaxation. Ties go to fewer hops, then the lexicographically smaller
/// SLoC sequence. Throws NoFeasiblePath.
ComputedPath compute_path(const LinkGraph& g, const std::vector<std::string>& srcs,
                          const std::vector<std::string>& dsts, const SlaPolicy& policy);

struct SegmentList {
    Endpoint outer_dst;
    std::vector<srou::Segment> segments;
    std::uint8_t segments_left = 0;
};

/// [Function(vnid, fn), Waypoint(w_n) .. Waypoint(w_2)], outer = w_1. Throws TooManySegments.
SegmentList to_segment_list(const std::vector<Endpoint>& waypoints, std::uint16_t function, std::uint32_t vnid,
                            std::size_t max_segments = 4);

} // namespace ruta::path
