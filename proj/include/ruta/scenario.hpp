#pragma once

// Scenario documents (YAML or JSON, "schema: 1") and the runner that turns
// one into a simulation and a deterministic JSON report.

#include "ruta/dataplane.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace ruta::scenario {

inline constexpr int kSchemaVersion = 1;

/// Validation failure with the offending field path and source line (0 if unknown).
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string path, int line, const std::string& msg)
        : std::runtime_error(format(path, line, msg)), path_(std::move(path)), line_(line) {}
    const std::string& path() const { return path_; }
    int line() const { return line_; }

private:
    static std::string format(const std::string& path, int line, const std::string& msg) {
        return (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + path + ": " + msg;
    }
    std::string path_;
    int line_;
};

struct SlocSpec {
    std::string color = "internet";
    Endpoint private_addr;
    std::optional<Endpoint> public_addr;
    std::optional<std::string> interface_name;
    double rx_bw = 1e9;
    double tx_bw = 1e9;
};

struct ImportSpec {
    schema::RouteType type = schema::RouteType::Type2;
    std::string rt;
    std::uint32_t table = 0;
};

struct NodeSpec {
    std::string name;
    schema::Role role = schema::Role::Fabric;
    std::uint32_t site = 0;
    schema::Location location;
    std::vector<SlocSpec> slocs;
    bool probing = true;
    std::vector<std::string> probe_white_list;
    std::optional<std::string> lsdb;
    bool edge_token = false;         // fabric only
    std::vector<ImportSpec> imports; // linecard only
};

struct LinkSpec {
    std::string a, b;
    sim::Duration delay_ab{0}, delay_ba{0}, jitter{0};
    double loss_ab = 0.0, loss_ba = 0.0;
    double bandwidth_bps = 0.0;
    std::size_t queue_bytes = 0;
    bool up = true;
};

struct NatSpec {
    std::string name;
    Ipv4Prefix inside;
    Ipv4Address public_ip;
    std::uint16_t base_port = 40000;
    sim::Duration idle_timeout = std::chrono::seconds(300);
};

struct HostSpec {
    std::string name;
    std::string linecard;
    MacAddress mac;
    Ipv4Address ip;
    dp::Attachment::Kind attach = dp::Attachment::Kind::L2;
    std::uint32_t id = 0; // vnid or vrf
    std::string rt;
    std::string rd;
    bool telemetry = false;
    std::optional<dp::HostIdentity> identity;
    std::vector<Ipv4Prefix> prefixes;
    sim::Duration announce_at{0};
};

struct IdentitySpec {
    std::string user, device;
    std::vector<std::uint32_t> groups;
};

enum class TokenMode { Valid, Invalid, None };

struct ClientSpec {
    std::string name;
    Endpoint local;
    std::string edge;
    std::vector<std::string> path; // fabric names then the server name
    std::optional<std::string> stun;
    TokenMode token = TokenMode::Valid;
};

struct ServerSpec {
    std::string name;
    Endpoint local;
    std::string edge;
    bool echo = true;
};

enum class FlowMode { Overlay, Srou, Passthrough };

struct FlowSpec {
    std::string name;
    std::string from, to;
    std::uint32_t count = 1;
    sim::Duration interval = std::chrono::milliseconds(10);
    sim::Duration start{0};
    std::size_t size = 64;
    FlowMode mode = FlowMode::Overlay; // hosts use Overlay; native clients Srou or Passthrough
};

enum class FaultKind { Link, StorePartition, NodeKill, GroupRule, HostAnnounce };

struct FaultSpec {
    sim::Duration at{0};
    FaultKind kind = FaultKind::Link;
    // Link
    std::string a, b;
    std::optional<sim::Duration> delay_ab, delay_ba, jitter;
    std::optional<double> loss_ab, loss_ba;
    std::optional<bool> up;
    // StorePartition (node empty = whole store), NodeKill, HostAnnounce
    std::string target;
    bool on = true;
    // GroupRule
    std::optional<schema::GroupRule> rule;
};

struct CheckSpec {
    sim::Duration at{0};
    std::string prefix;
    std::string contains;
    bool present = true;
    /// For absence checks: the observer watch must have seen a delete of a matching key.
    bool watched = false;
};

struct FlowExpect {
    std::string flow;
    std::optional<std::uint32_t> delivered;
    std::optional<std::uint32_t> lost;
    std::optional<std::uint32_t> replies; // native flows: echoes back at the client
    std::optional<double> p50_ms;
    double tolerance = 0.02; // relative, for p50_ms
    /// Fabric nodes that relayed the flow, sorted. Empty list means direct.
    std::optional<std::vector<std::string>> via;
};

struct Scenario {
    int schema = kSchemaVersion;
    std::string name;
    std::uint64_t seed = 1;
    sim::Duration until = std::chrono::seconds(60);
    probe::ProbeConfig probe;
    schema::LeasePolicy leases;
    sim::Duration control_interval = std::chrono::seconds(1);
    path::SlaPolicy sla;
    sim::Duration path_refresh = std::chrono::seconds(10);
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    std::vector<NatSpec> nats;
    std::vector<HostSpec> hosts;
    std::vector<IdentitySpec> identities;
    std::vector<schema::GroupRule> group_rules;
    std::vector<ClientSpec> clients;
    std::vector<ServerSpec> servers;
    std::vector<FlowSpec> flows;
    std::vector<FaultSpec> faults;
    std::vector<CheckSpec> checks;
    std::vector<FlowExpect> expect;
};

/// Parses YAML or JSON text (JSON is valid YAML). Throws SchemaError.
Scenario parse(const std::string& text);
Scenario load(const std::string& path);
/// Cross-reference validation; parse() already calls it.
void validate(const Scenario& s);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<sim::Duration> until;
};

struct RunResult {
    nlohmann::json report;
    std::string trace_jsonl;
    std::vector<std::string> failures; // unmet expectations and checks
    std::vector<kv::KvEntry> store;    // final store contents
    bool ok() const { return failures.empty(); }
};

RunResult run(const Scenario& s, const RunOptions& opts = {});

/// Canonical text of a report: two-space indented, keys sorted, trailing newline.
std::string render(const nlohmann::json& report);

/// Store tables, each a key-sorted list of rows with named columns.
enum class Table { Routes, Linkstate, Nodes, Services };
std::optional<Table> table_from_string(std::string_view s);
nlohmann::json dump_table(const std::vector<kv::KvEntry>& store, Table t);
/// Fixed-width text projection of dump_table().
std::string format_table(const nlohmann::json& rows, Table t);
/// Reads the "store" section of a report back into entries.
std::vector<kv::KvEntry> store_from_report(const nlohmann::json& report);

/// Percentile by nearest rank on a sorted sample; q in (0, 1].
double percentile(const std::vector<double>& sorted, double q);

} // namespace ruta::scenario
