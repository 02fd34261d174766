#pragma once

// Node runtimes on the simulated underlay: linecards (encap/decap, host
// learning, policy, path selection), fabrics (segment relay, first-hop source
// fill, edge admission), STUN and LSDB nodes, and the native-socket endpoints.
// Every runtime is a set of callbacks on the simulator's event loop.

#include "ruta/frame.hpp"
#include "ruta/kv.hpp"
#include "ruta/lpm.hpp"
#include "ruta/netsim.hpp"
#include "ruta/path.hpp"
#include "ruta/probe.hpp"
#include "ruta/schema.hpp"
#include "ruta/srou.hpp"
#include "ruta/token.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ruta::dp {

struct Postcard {
    std::string node;
    std::uint32_t flow_id = 0;
    std::int64_t timestamp_ns = 0;
    std::uint8_t segments_left = 0; // after processing
    std::string action;
    bool operator==(const Postcard&) const = default;
};

/// Named monotonically increasing counters ("tx", "rx", "drop.<reason>", ...).
class Counters {
public:
    void inc(const std::string& name, std::uint64_t n = 1) { values_[name] += n; }
    std::uint64_t get(const std::string& name) const {
        auto it = values_.find(name);
        return it == values_.end() ? 0 : it->second;
    }
    const std::map<std::string, std::uint64_t>& all() const { return values_; }

private:
    std::map<std::string, std::uint64_t> values_;
};

/// Shared plumbing for every runtime of one simulation.
struct World {
    sim::EventLoop& loop;
    sim::Network& net;
    kv::Store& store;
    std::vector<Postcard> postcards;
    /// Sees every datagram a runtime hands to the network.
    std::function<void(const std::string& node, const sim::Datagram&)> tap;
};

struct NodeConfig {
    schema::Role role = schema::Role::Fabric;
    std::string name;
    std::uint32_t site_id = 0;
    schema::Location location;
    std::vector<schema::Sloc> slocs;
    schema::LeasePolicy leases;
    probe::ProbeConfig probe;
    bool probing = true;
    /// Peers to probe; empty means every hunted peer of the probed roles.
    std::set<std::string> probe_white_list;
    sim::Duration control_interval = std::chrono::seconds(1);
    schema::RegisterOptions registration;
};

class LsdbNode;

class NodeRuntime {
public:
    NodeRuntime(World& world, NodeConfig cfg);
    virtual ~NodeRuntime();
    NodeRuntime(const NodeRuntime&) = delete;
    NodeRuntime& operator=(const NodeRuntime&) = delete;

    /// Attaches to the underlay, starts the leases and registers.
    void start();
    /// Stops everything at once; leases then lapse in the store.
    void kill();

    const std::string& name() const { return cfg_.name; }
    const NodeConfig& config() const { return cfg_; }
    bool alive() const { return *alive_; }
    const std::optional<schema::NodeRecord>& record() const { return record_; }
    const std::optional<Errc>& registration_error() const { return registration_error_; }
    const Counters& counters() const { return counters_; }
    schema::NodeSession& session() { return session_; }

    /// Also report link state to, and in linecards read it from, this LSDB.
    void use_lsdb(LsdbNode& lsdb);

    /// Probe sessions keyed by (local SLoC index, peer endpoint).
    const std::map<std::pair<std::size_t, Endpoint>, probe::ProbeSession>& probe_sessions() const { return sessions_; }

protected:
    virtual void on_registered() {}
    virtual void on_control_tick() {}
    /// Roles whose service SLoCs this node probes.
    virtual std::vector<schema::Role> probe_roles() const { return {}; }
    /// Called for data packets before any processing. Returning false drops silently.
    virtual bool admit(const sim::Datagram&, const srou::DataPacket&) { return true; }
    /// A Function segment became active here.
    virtual void execute(std::size_t sloc, const srou::FunctionSegment& fn, srou::DataPacket& pkt);
    /// Non-SRoU payload on a SLoC port.
    virtual void on_passthrough(std::size_t sloc, const sim::Datagram& d);

    void send(std::size_t sloc, Endpoint dst, std::vector<std::uint8_t> payload);
    void drop(const std::string& reason) { counters_.inc("drop." + reason); }
    void postcard(const srou::DataPacket& pkt, const std::string& action);
    /// Runs `fn` every `period` while alive, first at now + period.
    void every(sim::Duration period, std::function<void()> fn);
    std::optional<std::size_t> sloc_index(const std::string& short_form) const;
    std::string short_form(std::size_t sloc) const { return schema::short_of(cfg_.name, cfg_.slocs[sloc]).render(); }

    /// Service announcements of `role`, from the local mirror.
    std::vector<schema::ServiceEntry> services(schema::Role role) const;
    bool services_changed() const { return services_changed_; }
    /// The store link-state comes from (LSDB when attached).
    kv::Client linkstate_client() const;

    World& world_;
    NodeConfig cfg_;
    kv::Client client_;
    schema::NodeSession session_;
    Counters counters_;
    std::optional<schema::NodeRecord> record_;
    std::shared_ptr<bool> alive_;
    LsdbNode* lsdb_ = nullptr;

private:
    void receive(const sim::Datagram& d);
    void handle_oam(std::size_t sloc, const sim::Datagram& d, const srou::OamMessage& msg);
    void handle_data(std::size_t sloc, const sim::Datagram& d, srou::DataPacket pkt);
    void control_tick();
    void refresh_probes();
    void probe_tick();
    void report_tick();

    std::optional<Errc> registration_error_;
    std::unique_ptr<schema::NodeSession> lsdb_session_;
    std::optional<path::Mirror> services_mirror_;
    bool services_changed_ = false;
    std::map<std::pair<std::size_t, Endpoint>, probe::ProbeSession> sessions_;
    probe::ProbeResponder responder_;
    std::vector<std::uint64_t> rx_bytes_, tx_bytes_;
    sim::Time last_report_{0};
};

// ---------------------------------------------------------------- fabric

struct FabricConfig {
    /// When set this fabric is an edge: first-hop packets must carry a valid token.
    std::optional<token::EdgeToken> edge_token;
};

class Fabric : public NodeRuntime {
public:
    Fabric(World& world, NodeConfig cfg, FabricConfig fcfg = {});

protected:
    std::vector<schema::Role> probe_roles() const override { return {schema::Role::Fabric}; }
    bool admit(const sim::Datagram& d, const srou::DataPacket& pkt) override;

private:
    FabricConfig fcfg_;
};

class StunServer : public NodeRuntime {
public:
    StunServer(World& world, NodeConfig cfg);
};

/// Regional link-state cache with its own store.
class LsdbNode : public NodeRuntime {
public:
    LsdbNode(World& world, NodeConfig cfg);
    kv::Store& lsdb_store() { return *lsdb_store_; }

private:
    std::unique_ptr<kv::Store> lsdb_store_;
};

// ---------------------------------------------------------------- linecard

class Linecard;

/// A host on an access port. Frames reach the linecard with zero delay.
class Host {
public:
    using Receive = std::function<void(const frame::HostFrame&)>;

    Host(sim::EventLoop& loop, std::string name, MacAddress mac, Ipv4Address ip);

    const std::string& name() const { return name_; }
    MacAddress mac() const { return mac_; }
    Ipv4Address ip() const { return ip_; }

    void send(frame::HostFrame f);
    void send_to(MacAddress dst_mac, Ipv4Address dst_ip, std::vector<std::uint8_t> payload);
    /// Broadcast frame that lets the linecard learn this host.
    void announce();
    void on_receive(Receive fn) { receive_ = std::move(fn); }
    void deliver(const frame::HostFrame& f);

    std::uint64_t sent() const { return sent_; }
    std::uint64_t received() const { return received_; }

private:
    friend class Linecard;
    sim::EventLoop& loop_;
    std::string name_;
    MacAddress mac_;
    Ipv4Address ip_;
    Linecard* linecard_ = nullptr;
    std::size_t port_ = 0;
    Receive receive_;
    std::uint64_t sent_ = 0;
    std::uint64_t received_ = 0;
};

struct Attachment {
    enum class Kind { L2, L3 };
    Kind kind = Kind::L2;
    std::uint32_t id = 0; // VNID for L2, VRF for L3
    std::string export_rt;
    std::string rd;
    bool telemetry = false; // set the T-bit on this port's traffic
};

struct HostIdentity {
    std::string user_id;
    std::string device_id;
};

struct LinecardConfig {
    std::vector<path::Import> imports;
    path::SlaPolicy sla;
    sim::Duration path_refresh = std::chrono::seconds(10);
};

class Linecard : public NodeRuntime {
public:
    Linecard(World& world, NodeConfig cfg, LinecardConfig lcfg);

    std::size_t attach_host(Host& host, Attachment att, std::optional<HostIdentity> id = std::nullopt);
    /// Announces a Type5 prefix reachable through the host on `port`.
    void add_prefix(std::size_t port, Ipv4Prefix prefix);
    void from_host(std::size_t port, const std::vector<std::uint8_t>& bytes);

    const path::RouteTable& routes() const { return table_; }
    bool headless() const;
    const std::map<std::string, path::ComputedPath>& paths() const { return paths_; }
    /// Path towards a destination linecard, computed on demand. nullopt when it has no known SLoC.
    std::optional<path::ComputedPath> path_to(const std::string& dst_node);

protected:
    void on_registered() override;
    void on_control_tick() override;
    std::vector<schema::Role> probe_roles() const override {
        return {schema::Role::Fabric, schema::Role::Linecard};
    }
    void execute(std::size_t sloc, const srou::FunctionSegment& fn, srou::DataPacket& pkt) override;

private:
    struct Port {
        Host* host = nullptr;
        Attachment att;
        std::optional<HostIdentity> identity;
        bool learned = false;
        std::vector<Ipv4Prefix> prefixes;
    };

    void learn(std::size_t port, const frame::HostFrame& f);
    void announce(const schema::ServiceRoute& r);
    std::vector<std::uint32_t> groups_of(const Port& p) const;
    std::uint32_t policy_tag(const Port& p) const;
    void deliver(std::size_t port, frame::HostFrame f);
    std::optional<std::size_t> local_port(const Attachment& att, const frame::HostFrame& f) const;
    struct Meta {
        std::uint32_t flow_id = 0;
        bool telemetry = false;
        std::vector<std::uint32_t> src_groups;
    };
    void encap(const Meta& meta, const frame::HostFrame& f, const schema::ServiceRoute& route,
               std::uint16_t function, std::uint32_t args);
    path::LinkGraph& graph();
    std::optional<Endpoint> endpoint_of(const std::string& short_form) const;

    LinecardConfig lcfg_;
    std::vector<Port> ports_;
    std::map<std::pair<std::uint32_t, MacAddress>, std::size_t> local_l2_;
    std::map<std::uint32_t, Lpm<std::size_t>> local_l3_;
    std::vector<schema::ServiceRoute> pending_;
    bool was_headless_ = false;
    path::RouteTable table_;
    std::unique_ptr<path::RouteSync> sync_;
    std::optional<path::Mirror> linkstate_;
    std::optional<path::Mirror> control_;
    std::optional<path::Mirror> identity_;
    schema::PolicyTable policy_;
    std::optional<path::LinkGraph> graph_;
    std::map<std::pair<std::string, std::string>, schema::LinkStateRecord> records_;
    std::map<std::string, path::ComputedPath> paths_;
    sim::Time last_refresh_{0};
};

// ---------------------------------------------------------------- native socket

/// Segment list for a native-socket datagram sent to `waypoints.front()`;
/// no Function segment, the last waypoint is the final destination.
srou::Header native_header(const std::vector<Endpoint>& waypoints, std::uint32_t flow_id, Endpoint source = {});

/// Classification of a UDP payload at a native-socket endpoint.
enum class Demux { Srou, Passthrough, Empty };
Demux classify(std::span<const std::uint8_t> payload);

struct NativeClientConfig {
    Endpoint local;
    Endpoint edge;
    /// Fabrics after the edge, in visit order, then the server.
    std::vector<Endpoint> path;
    std::optional<Endpoint> stun;
};

class NativeClient {
public:
    using App = std::function<void(std::span<const std::uint8_t>, bool via_srou)>;

    NativeClient(World& world, std::string name, NativeClientConfig cfg);
    ~NativeClient();

    void start();
    void set_token(std::uint32_t token) { token_ = token; }
    std::uint32_t token() const { return token_; }
    void send_srou(std::vector<std::uint8_t> app);
    /// Sends `app` straight to the server without SRoU.
    void send_passthrough(std::vector<std::uint8_t> app);
    void on_app(App fn) { app_ = std::move(fn); }
    /// Called once STUN resolves (or fails) after start().
    void on_stun(std::function<void(std::optional<Endpoint>)> fn) { stun_done_ = std::move(fn); }

    const std::optional<Endpoint>& public_endpoint() const { return public_; }
    const Counters& counters() const { return counters_; }
    const std::string& name() const { return name_; }

private:
    void receive(const sim::Datagram& d);

    World& world_;
    std::string name_;
    NativeClientConfig cfg_;
    std::uint32_t token_ = 0;
    App app_;
    std::function<void(std::optional<Endpoint>)> stun_done_;
    std::unique_ptr<probe::StunExchange> stun_;
    std::optional<Endpoint> public_;
    Counters counters_;
};

class NativeServer {
public:
    /// `reply_to` is where replies should go (the SRoU source for SRoU requests).
    using App = std::function<void(std::span<const std::uint8_t>, Endpoint reply_to, bool via_srou)>;

    /// `edge` is the client-facing fabric; replies retrace the request's fabrics then the edge.
    NativeServer(World& world, std::string name, Endpoint local, Endpoint edge);
    ~NativeServer();

    void start();
    void on_app(App fn) { app_ = std::move(fn); }
    /// Echo every application payload back to its sender.
    void set_echo(bool on) { echo_ = on; }

    const std::vector<Endpoint>& srou_sources() const { return sources_; }
    const Counters& counters() const { return counters_; }
    const std::string& name() const { return name_; }

private:
    void receive(const sim::Datagram& d);

    World& world_;
    std::string name_;
    Endpoint local_;
    Endpoint edge_;
    App app_;
    bool echo_ = false;
    std::vector<Endpoint> sources_;
    Counters counters_;
};

} // namespace ruta::dp
