// Acceptance criteria, one PASS/FAIL line each. Exit status is the number of failures.

#include "ruta/error.hpp"
#include "ruta/hex.hpp"
#include "ruta/path.hpp"
#include "ruta/probe.hpp"
#include "ruta/scenario.hpp"
#include "ruta/schema.hpp"
#include "ruta/srou.hpp"

#include "../support/generators.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace ruta;
using namespace std::chrono_literals;
using nlohmann::json;
namespace sc = ruta::scenario;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    std::string digest; // deterministic run output, compared on rerun
};

class Checker {
public:
    void require(bool ok, const std::string& what) {
        if (!ok && out.pass) {
            out.pass = false;
            out.detail = what;
        }
    }
    Outcome out;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> fixture(const std::string& name) {
    return parse_hex(slurp(std::string(RUTA_FIXTURE_DIR) + "/" + name));
}

sc::RunResult run_bundled(const std::string& name) {
    return sc::run(sc::load(std::string(RUTA_SCENARIO_DIR) + "/" + name + ".yaml"));
}

std::string digest_of(const sc::RunResult& r) { return sc::render(r.report) + r.trace_jsonl; }

const json* capture_to(const json& flow, const std::string& outer_dst) {
    for (const auto& c : flow["captures"])
        if (c["outer_dst"] == outer_dst) return &c;
    return nullptr;
}

// ---------------------------------------------------------------- 1

Outcome c1_direct_header() {
    Checker c;
    const std::vector<std::uint8_t> expected{0x00, 0x18, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0xc0, 0xa8, 0x63, 0x4d,
                                             0x15, 0xab, 0x01, 0x0a, 0x00, 0x01, 0xff, 0x00, 0x04, 0xd2, 0x00, 0x01};
    srou::Header h;
    h.protocol = srou::Protocol::Ipv4;
    h.source_address = Ipv4Address::parse("192.168.99.77");
    h.source_port = 5547;
    h.segments = {srou::FunctionSegment{1234, srou::kEndDT2U}};
    h.segments_left = 1;
    auto bytes = srou::encode_header(h);
    c.require(bytes.size() == 24, "encoded length " + std::to_string(bytes.size()));
    c.require(bytes == expected, "bytes differ: " + to_hex(bytes));
    c.require(fixture("direct_header.hex") == expected, "fixture differs from literal");
    auto d = srou::decode_header(expected);
    c.require(d.consumed == 24 && d.header == h, "decode mismatch");
    c.require(srou::encode_header(d.header) == expected, "re-encode mismatch");
    if (c.out.pass) c.out.detail = "24 octets, byte-exact, round-trips";
    return c.out;
}

// ---------------------------------------------------------------- 2

Outcome c2_codec_fuzz() {
    Checker c;
    constexpr int kN = 100000;
    testgen::CodecGen gen(0xC0DEC);
    int headers = 0, oams = 0, mutated = 0, rejected = 0;
    for (int i = 0; i < kN && c.out.pass; ++i) {
        auto h = gen.header();
        auto b = srou::encode_header(h);
        auto d = srou::decode_header(b);
        c.require(d.header == h && srou::encode_header(d.header) == b, "header round trip at " + std::to_string(i));
        headers += c.out.pass;
    }
    for (int i = 0; i < kN && c.out.pass; ++i) {
        auto m = gen.oam();
        auto b = srou::encode_oam(m);
        c.require(srou::decode_oam(b) == m && srou::encode_oam(srou::decode_oam(b)) == b,
                  "oam round trip at " + std::to_string(i));
        oams += c.out.pass;
    }
    for (int i = 0; i < kN && c.out.pass; ++i) {
        auto m = gen.mutate(gen.coin() ? srou::encode_header(gen.header()) : srou::encode_oam(gen.oam()));
        try {
            (void)srou::decode_packet(m);
        } catch (const Error&) {
            ++rejected;
        } catch (const std::exception& e) {
            c.require(false, std::string("untyped exception: ") + e.what());
        }
        ++mutated;
    }
    if (c.out.pass)
        c.out.detail = std::to_string(headers) + " headers, " + std::to_string(oams) + " OAM, " +
                       std::to_string(mutated) + " mutated (" + std::to_string(rejected) + " typed rejections)";
    return c.out;
}

// ---------------------------------------------------------------- 3

Outcome c3_spine_leaf() {
    Checker c;
    auto r = run_bundled("spine_leaf");
    const auto& f = r.report["flows"];
    c.require(r.ok(), r.ok() ? "" : r.failures.front());
    c.require(f["direct"]["sent"] == 100 && f["direct"]["delivered"] == 100 && f["direct"]["lost"] == 0,
              "direct flow " + f["direct"]["delivered"].dump() + " delivered");
    auto* direct = capture_to(f["direct"], "192.168.99.78:5546");
    c.require(direct && parse_hex((*direct)["header_hex"].get<std::string>()) == fixture("direct_header.hex"),
              "direct header differs from the 24-octet layout");
    c.require(f["congested"]["delivered"] == 100 && f["congested"]["lost"] == 0, "congested flow lost packets");
    c.require(f["congested"]["via"] == json::array({"Spine-A"}), "congested via " + f["congested"]["via"].dump());
    auto* te = capture_to(f["congested"], "192.168.99.75:17777");
    c.require(te && parse_hex((*te)["header_hex"].get<std::string>()) == fixture("te_header.hex"),
              "engineered header differs from the 30-octet layout");
    c.require(r.report["network"]["conserved"].get<bool>(), "datagram totals do not reconcile");
    if (c.out.pass) c.out.detail = "100/100 direct, 100/100 via Spine-A, both headers byte-exact";
    c.out.digest = digest_of(r);
    return c.out;
}

// ---------------------------------------------------------------- 4

Outcome c4_multicloud() {
    Checker c;
    auto r = run_bundled("multicloud");
    const auto& f = r.report["flows"]["rtc"];
    c.require(f["lost"] == 0 && f["delivered"] == f["sent"], "lost " + f["lost"].dump());
    double p50 = f["latency_ms"].value("p50", -1.0);
    c.require(std::abs(p50 - 240.0) <= 0.02 * 240.0, "p50 " + std::to_string(p50) + "ms");
    const auto& path = r.report["nodes"]["LC-FRA"]["paths"]["LC-CTU"];
    c.require(path.contains("waypoints") && path["waypoints"].size() == 2,
              "waypoints " + (path.contains("waypoints") ? path["waypoints"].dump() : "none"));
    c.require(f["via"] == json::array({"TX-CAN"}), "via " + f["via"].dump());
    if (c.out.pass) {
        std::ostringstream o;
        o << "p50 " << p50 << "ms (direct 385ms), 2 waypoints via TX-CAN, loss 0";
        c.out.detail = o.str();
    }
    c.out.digest = digest_of(r);
    return c.out;
}

// ---------------------------------------------------------------- 5

probe::ProbeSession probe_link(sim::Duration ab, sim::Duration ba, double loss_ab, int n, std::uint64_t seed) {
    const Endpoint a = Endpoint::parse("10.0.0.1:17777"), b = Endpoint::parse("10.0.0.2:17777");
    sim::EventLoop loop;
    sim::Network net(loop, seed);
    sim::LinkConfig l;
    l.a = a.ip;
    l.b = b.ip;
    l.delay_ab = ab;
    l.delay_ba = ba;
    l.loss_ab = loss_ab;
    net.add_link(l);
    probe::ProbeConfig cfg;
    cfg.window = std::size_t(n);
    probe::ProbeSession s(schema::SlocShort{"A", "inet", a}, schema::SlocShort{"B", "inet", b}, cfg);
    probe::ProbeResponder responder;
    net.attach(b.ip, [&](const sim::Datagram& d) {
        net.send({b, d.src, srou::encode_oam(responder.respond(d.payload, loop.now(), loop.now()))});
    });
    net.attach(a.ip, [&](const sim::Datagram& d) { s.on_response(srou::decode_oam(d.payload), loop.now()); });
    for (int i = 0; i < n; ++i)
        loop.schedule_at(sim::Time(i * cfg.interval), [&] {
            s.expire(loop.now());
            net.send({a, b, srou::encode_oam(s.next_request(loop.now()))});
        });
    loop.run_until(sim::Time(n * cfg.interval) + cfg.timeout);
    s.expire(loop.now());
    return s;
}

Outcome c5_twamp() {
    Checker c;
    auto asym = probe_link(10ms, 30ms, 0.0, 30, 1).compute_metrics(sim::Time(100s));
    c.require(asym.two_way_delay_us == 40000.0, "two-way delay " + std::to_string(asym.two_way_delay_us) + "us");
    auto lossy = probe_link(5ms, 5ms, 0.05, 1000, 2025).compute_metrics(sim::Time(2000s));
    c.require(std::abs(lossy.loss - 0.05) <= 0.015, "loss estimate " + std::to_string(lossy.loss));
    std::ostringstream o;
    o << "twd " << asym.two_way_delay_us << "us, loss " << lossy.loss * 100 << "% over 1000 probes";
    if (c.out.pass) c.out.detail = o.str();
    c.out.digest = o.str();
    return c.out;
}

// ---------------------------------------------------------------- 6

// Exhaustive simple-path search up to `max_hops` edges.
std::optional<path::Cost> exhaustive(const std::map<std::pair<int, int>, path::Cost>& edges, int n, int s, int t,
                                     std::size_t max_hops) {
    std::optional<path::Cost> best;
    std::vector<int> stack{s};
    std::function<void(path::Cost)> dfs = [&](path::Cost cost) {
        int v = stack.back();
        if (v == t) {
            if (!best || cost < *best) best = cost;
            return;
        }
        if (stack.size() - 1 == max_hops) return;
        for (const auto& [e, w] : edges) {
            if (e.first != v || std::find(stack.begin(), stack.end(), e.second) != stack.end()) continue;
            stack.push_back(e.second);
            dfs(cost + w);
            stack.pop_back();
        }
    };
    dfs(0);
    return best;
}

Outcome c6_path_oracle() {
    Checker c;
    std::mt19937_64 rng(0x9A7E);
    path::SlaPolicy policy;
    auto name = [](int i) { return "v" + std::to_string(i); };
    int graphs = 0, queries = 0, infeasible = 0;
    std::ostringstream digest;
    for (; graphs < 200 && c.out.pass; ++graphs) {
        int n = 3 + int(rng() % 7);
        std::map<std::pair<int, int>, path::Cost> edges;
        path::LinkGraph g;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                if (u != v && rng() % 100 < 45) {
                    path::Cost w = path::Cost(rng() % 8) * 250'000;
                    edges[{u, v}] = w;
                    g.add_edge(name(u), name(v), w);
                }
        for (int t = 1; t < n; ++t) {
            auto want = exhaustive(edges, n, 0, t, policy.max_segments);
            ++queries;
            try {
                auto got = path::compute_path(g, {name(0)}, {name(t)}, policy);
                c.require(want && got.cost == *want, "graph " + std::to_string(graphs) + " cost mismatch");
                c.require(got.waypoints.size() <= policy.max_segments, "too many waypoints");
                digest << got.cost << ",";
            } catch (const Error& e) {
                c.require(!want && e.code() == Errc::NoFeasiblePath, "graph " + std::to_string(graphs) + " missed a path");
                ++infeasible;
                digest << "x,";
            }
        }
    }
    if (c.out.pass)
        c.out.detail = std::to_string(graphs) + " graphs, " + std::to_string(queries) + " queries (" +
                       std::to_string(infeasible) + " infeasible) match exhaustive search";
    c.out.digest = digest.str();
    return c.out;
}

// ---------------------------------------------------------------- 7

Outcome c7_leases() {
    Checker c;
    auto r = run_bundled("lease_expiry");
    c.require(r.ok(), r.ok() ? "" : r.failures.front());
    const std::int64_t kill = 30'000'000'000, node_ttl = 60'000'000'000, route_ttl = 600'000'000'000;
    const std::int64_t eps = 1'000'000;
    std::map<std::string, std::int64_t> deleted_at;
    for (const auto& d : r.report["watch_deletes"]) {
        auto key = d["key"].get<std::string>();
        if (key.find("LC_B") != std::string::npos || key.find("/2:1234/") != std::string::npos)
            deleted_at.emplace(key, d["at_ns"].get<std::int64_t>());
    }
    int node_keys = 0, route_keys = 0;
    for (const auto& [key, at] : deleted_at) {
        bool short_lease = key.rfind("/node/", 0) == 0 || key.rfind("/service/", 0) == 0;
        bool long_lease = key.rfind("/route/", 0) == 0 || key.rfind("/stats/", 0) == 0;
        if (key.rfind("/stats/linkstate/LC_A", 0) == 0) continue; // LC_A's own record survives
        if (short_lease) {
            ++node_keys;
            c.require(at > kill && at <= kill + node_ttl + eps, key + " deleted at " + std::to_string(at));
        } else if (long_lease) {
            ++route_keys;
            c.require(at > kill + node_ttl && at <= kill + route_ttl + eps, key + " deleted at " + std::to_string(at));
        }
    }
    c.require(node_keys == 2, "watch saw " + std::to_string(node_keys) + " /node and /service deletes");
    c.require(route_keys >= 2, "watch saw " + std::to_string(route_keys) + " /route and /stats deletes");
    for (const auto& e : r.store)
        c.require(e.key.find("LC_B") == std::string::npos || e.key.rfind("/stats/linkstate/LC_A", 0) == 0,
                  "still stored: " + e.key);
    if (c.out.pass)
        c.out.detail = std::to_string(node_keys) + " short-lease and " + std::to_string(route_keys) +
                       " long-lease keys expired in bounds, deletes observed by watch";
    c.out.digest = digest_of(r);
    return c.out;
}

// ---------------------------------------------------------------- 8

Outcome c8_headless() {
    Checker c;
    auto r = run_bundled("headless");
    c.require(r.ok(), r.ok() ? "" : r.failures.front());
    for (const auto& name : {"a_to_b", "b_to_a", "to_late_host"}) {
        const auto& f = r.report["flows"][name];
        c.require(f["lost"] == 0 && f["delivered"] == f["sent"], std::string(name) + " lost " + f["lost"].dump());
    }
    c.require(r.report["nodes"]["LC_A"]["counters"].value("report.store_unavailable", 0) > 0,
              "LC_A never lost the store");
    std::vector<std::string> replayed;
    bool went_headless = false;
    std::istringstream trace(r.trace_jsonl);
    for (std::string line; std::getline(trace, line);) {
        auto ev = json::parse(line);
        if (ev["node"] != "LC_A") continue;
        if (ev["event"] == "headless") went_headless = true;
        if (ev["event"] == "replay") replayed.push_back(ev["detail"]);
    }
    c.require(went_headless, "no headless transition traced");
    const std::vector<std::string> order{"/route/2/65000:1234/1:1234/02:00:0a:00:00:5a/10.0.0.90",
                                         "/route/2/65000:1234/1:1234/02:00:0a:00:00:5b/10.0.0.91"};
    c.require(replayed == order, "replay order " + json(replayed).dump());
    std::map<std::string, std::int64_t> rev;
    for (const auto& e : r.store) rev[e.key] = e.mod_revision;
    c.require(rev.count(order[0]) && rev.count(order[1]) && rev[order[0]] < rev[order[1]], "store revisions out of order");
    if (c.out.pass) c.out.detail = "0 added loss across the partition, 2 announcements replayed in order on heal";
    c.out.digest = digest_of(r);
    return c.out;
}

// ---------------------------------------------------------------- 9

Outcome c9_nat() {
    Checker c;
    auto r = run_bundled("native_socket_nat");
    c.require(r.ok(), r.ok() ? "" : r.failures.front());
    std::string mapped;
    for (const auto& nat : r.report["network"]["nats"])
        for (const auto& m : nat["mappings"])
            if (m["inside"] == "10.9.0.2:5000") mapped = m["public"];
    c.require(!mapped.empty(), "no NAT mapping for the client");
    const auto& sources = r.report["native"]["servers"]["game"]["srou_sources"];
    c.require(sources.size() == 20, "server saw " + std::to_string(sources.size()) + " SRoU packets");
    for (const auto& s : sources) c.require(s == mapped, "filled source " + s.dump() + " != " + mapped);
    const auto& overlay = r.report["flows"]["overlay"];
    c.require(overlay["replies"] == 20, "replies " + overlay["replies"].dump());
    auto* first = capture_to(overlay, "198.51.100.1:17777");
    c.require(first && (*first)["source"] == "0.0.0.0:0", "client did not send a zero source");
    const auto& legacy = r.report["flows"]["legacy"];
    c.require(legacy["delivered"] == 5 && legacy["replies"] == 5, "passthrough delivered " + legacy["delivered"].dump());
    c.require(legacy["hops"].empty(), "passthrough touched the overlay");
    c.require(r.report["flows"]["forged"]["delivered"] == 0, "forged token admitted");
    c.require(r.report["nodes"]["edge-fra"]["counters"].value("token.rejected", 0) == 10, "edge rejections");
    if (c.out.pass) c.out.detail = "source filled with " + mapped + " on 20/20, 20 replies, passthrough 5/5 untouched";
    c.out.digest = digest_of(r);
    return c.out;
}

// ---------------------------------------------------------------- 10

Outcome c10_labels() {
    Checker c;
    std::ostringstream digest;
    for (std::uint64_t seed = 1; seed <= 20 && c.out.pass; ++seed) {
        sim::EventLoop loop;
        kv::Store store(loop);
        std::vector<std::unique_ptr<schema::NodeSession>> sessions;
        std::vector<std::optional<schema::RegisterResult>> results(50);
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 50; ++i) {
            sessions.push_back(std::make_unique<schema::NodeSession>(store.client("r" + std::to_string(i))));
            sessions.back()->start();
            schema::RegisterOptions opts;
            opts.critical_section = std::chrono::microseconds(1 + rng() % 5000);
            loop.schedule_in(sim::Duration(std::int64_t(rng() % 5'000'000)), [&, i, opts] {
                schema::register_node(*sessions[std::size_t(i)], schema::Role::Fabric, "r" + std::to_string(i), 1, {},
                                      [&, i](schema::RegisterResult res) { results[std::size_t(i)] = res; }, opts);
            });
        }
        loop.run_until(sim::Time(60s));
        std::set<std::uint32_t> labels;
        for (const auto& res : results) {
            c.require(res && res->record, "seed " + std::to_string(seed) + ": registration incomplete");
            if (res && res->record) {
                labels.insert(res->record->system_label);
                digest << res->record->system_label << ",";
            }
        }
        std::set<std::uint32_t> want;
        for (std::uint32_t l = 0; l < 50; ++l) want.insert(l);
        c.require(labels == want, "seed " + std::to_string(seed) + ": labels not {0..49}");
    }
    if (c.out.pass) c.out.detail = "50 registrants got exactly {0..49} under 20 seeds";
    c.out.digest = digest.str();
    return c.out;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> fn;
};

} // namespace

int main() {
    std::vector<Criterion> all{
        {1, "direct header layout", c1_direct_header},
        {2, "codec fuzz", c2_codec_fuzz},
        {3, "spine-leaf forwarding", c3_spine_leaf},
        {4, "multicloud relay", c4_multicloud},
        {5, "TWAMP metrics", c5_twamp},
        {6, "path engine vs exhaustive search", c6_path_oracle},
        {7, "lease expiry", c7_leases},
        {8, "headless forwarding", c8_headless},
        {9, "NAT source fill", c9_nat},
        {10, "label allocation", c10_labels},
    };
    int failures = 0;
    std::map<int, std::string> digests;
    auto report = [&](int id, const char* title, const Outcome& o) {
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << title << ": " << o.detail << std::endl;
        failures += !o.pass;
    };
    for (const auto& c : all) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what(), ""};
        }
        digests[c.id] = o.digest;
        report(c.id, c.title, o);
    }

    Outcome det;
    int compared = 0;
    for (const auto& c : all) {
        if (c.id < 3) continue;
        std::string again;
        try {
            again = c.fn().digest;
        } catch (const std::exception& e) {
            again = e.what();
        }
        ++compared;
        if (again != digests[c.id] && det.pass) {
            det.pass = false;
            det.detail = "criterion " + std::to_string(c.id) + " differs on rerun";
        }
    }
    if (det.pass) det.detail = std::to_string(compared) + " criteria byte-identical on rerun";
    report(11, "determinism", det);
    return failures;
}
