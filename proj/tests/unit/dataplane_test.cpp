#include "ruta/dataplane.hpp"
#include "ruta/error.hpp"
#include "ruta/hex.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace ruta;
using namespace ruta::dp;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> fixture(const std::string& name) {
    std::ifstream in(std::string(RUTA_FIXTURE_DIR) + "/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_hex(ss.str());
}

// RFC 1071 one's-complement sum, written out longhand.
std::uint16_t oracle_checksum(const std::vector<std::uint8_t>& b, std::size_t from, std::size_t n) {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < n; i += 2) sum += std::uint64_t(b[from + i]) * 256 + (i + 1 < n ? b[from + i + 1] : 0);
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return std::uint16_t(~sum);
}

schema::Sloc sloc(const std::string& ep, const std::string& color = "internet") {
    schema::Sloc s;
    s.color = color;
    s.private_addr = Endpoint::parse(ep);
    s.public_addr = s.private_addr;
    s.rx_bw = s.tx_bw = 1e9;
    return s;
}

NodeConfig node(const std::string& name, std::vector<schema::Sloc> slocs, std::uint32_t site = 1) {
    NodeConfig c;
    c.name = name;
    c.site_id = site;
    c.slocs = std::move(slocs);
    c.probe.window = 10;
    c.probe.report_interval = 5s;
    return c;
}

const MacAddress kMac1 = MacAddress::parse("02:00:00:00:00:01");
const MacAddress kMac2 = MacAddress::parse("02:00:00:00:00:02");
const MacAddress kMac3 = MacAddress::parse("02:00:00:00:00:03");
const MacAddress kMac4 = MacAddress::parse("02:00:00:00:00:04");
const std::string kLcA = "192.168.99.77:5547";
const std::string kLcB = "192.168.99.78:5546";
const std::string kSpine = "192.168.99.75:17777";

// Two linecards and one spine fully meshed; vnid 1234 and vrf 7 on both linecards.
struct Testbed {
    explicit Testbed(std::chrono::milliseconds direct_delay = 10ms, std::uint64_t seed = 7)
        : net(loop, seed), store(loop), world{loop, net, store, {}, {}} {
        auto link = [&](const std::string& a, const std::string& b, sim::Duration d) {
            sim::LinkConfig l;
            l.a = Endpoint::parse(a).ip;
            l.b = Endpoint::parse(b).ip;
            l.delay_ab = l.delay_ba = d;
            return net.add_link(l);
        };
        direct = link(kLcA, kLcB, direct_delay);
        link(kLcA, kSpine, 10ms);
        link(kLcB, kSpine, 10ms);
        link(kLcA, kProbe, 1ms);
        link(kLcB, kProbe, 1ms);
        link(kSpine, kProbe, 1ms);

        LinecardConfig lc;
        lc.imports = {{schema::RouteType::Type2, "RT-L2", 1234}, {schema::RouteType::Type5, "RT-L3", 7},
                      {schema::RouteType::Type2, "RT-L3", 7}};
        a = std::make_unique<Linecard>(world, node("LC_A", {sloc(kLcA)}), lc);
        b = std::make_unique<Linecard>(world, node("LC_B", {sloc(kLcB)}, 2), lc);
        spine = std::make_unique<Fabric>(world, node("Spine-A", {sloc(kSpine)}));

        h1 = std::make_unique<Host>(loop, "h1", kMac1, Ipv4Address::parse("10.0.0.1"));
        h2 = std::make_unique<Host>(loop, "h2", kMac2, Ipv4Address::parse("10.0.0.2"));
        h3 = std::make_unique<Host>(loop, "h3", kMac3, Ipv4Address::parse("10.7.1.1"));
        h4 = std::make_unique<Host>(loop, "h4", kMac4, Ipv4Address::parse("10.7.2.1"));
        p1 = a->attach_host(*h1, {Attachment::Kind::L2, 1234, "RT-L2", "1:1", false}, HostIdentity{"u1", "d1"});
        p2 = b->attach_host(*h2, {Attachment::Kind::L2, 1234, "RT-L2", "2:1", false});
        p3 = a->attach_host(*h3, {Attachment::Kind::L3, 7, "RT-L3", "1:7", false});
        p4 = b->attach_host(*h4, {Attachment::Kind::L3, 7, "RT-L3", "2:7", false});

        world.tap = [this](const std::string& n, const sim::Datagram& d) {
            if (!d.payload.empty() && d.payload[0] == srou::kMagic) {
                auto pkt = srou::decode_packet(d.payload);
                if (std::holds_alternative<srou::DataPacket>(pkt)) data.push_back({n, d});
            }
        };
        net.attach(Endpoint::parse(kProbe).ip, [this](const sim::Datagram& d) { probe_rx.push_back(d); });
    }

    void start() {
        a->start();
        b->start();
        spine->start();
        h1->announce();
        h2->announce();
        h3->announce();
        h4->announce();
        b->add_prefix(p4, Ipv4Prefix::parse("10.7.2.0/24"));
    }

    std::vector<std::pair<std::string, sim::Datagram>> data_from(const std::string& n) const {
        std::vector<std::pair<std::string, sim::Datagram>> out;
        for (const auto& d : data)
            if (d.first == n) out.push_back(d);
        return out;
    }

    void inject(const std::string& to, const srou::DataPacket& pkt) { inject(to, srou::encode_packet(pkt)); }
    void inject(const std::string& to, std::vector<std::uint8_t> bytes) {
        net.send(sim::Datagram{Endpoint::parse(kProbe), Endpoint::parse(to), std::move(bytes)});
    }

    static constexpr const char* kProbe = "192.168.99.10:9999";
    sim::EventLoop loop;
    sim::Network net;
    kv::Store store;
    World world;
    std::size_t direct = 0;
    std::unique_ptr<Linecard> a, b;
    std::unique_ptr<Fabric> spine;
    std::unique_ptr<Host> h1, h2, h3, h4;
    std::size_t p1 = 0, p2 = 0, p3 = 0, p4 = 0;
    std::vector<std::pair<std::string, sim::Datagram>> data;
    std::vector<sim::Datagram> probe_rx;
};

srou::DataPacket data_packet(std::vector<srou::Segment> reversed, std::uint8_t sl, bool telemetry = false) {
    srou::DataPacket p;
    p.header.flags.telemetry = telemetry;
    p.header.protocol = srou::Protocol::Ipv4;
    p.header.segments = std::move(reversed);
    p.header.segments_left = sl;
    p.payload = {1, 2, 3};
    return p;
}

} // namespace

TEST(DataplaneFrame, RoundTripAndChecksum) {
    frame::HostFrame f{kMac2, kMac1, Ipv4Address::parse("10.0.0.1"), Ipv4Address::parse("10.0.0.2"), 17, {9, 8, 7}};
    auto bytes = frame::encode_frame(f);
    ASSERT_EQ(bytes.size(), 14u + 20u + 3u);
    EXPECT_EQ(oracle_checksum(bytes, 14, 20), 0);
    EXPECT_EQ(frame::decode_frame(bytes), f);
    bytes[14 + 8] ^= 0x01; // TTL
    EXPECT_THROW(frame::decode_frame(bytes), Error);
    EXPECT_THROW(frame::decode_frame(std::vector<std::uint8_t>(20, 0)), Error);
}

TEST(DataplaneFrame, ChecksumMatchesOracleOnRandomFrames) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 300; ++i) {
        frame::HostFrame f;
        f.src_ip = Ipv4Address(std::uint32_t(rng()));
        f.dst_ip = Ipv4Address(std::uint32_t(rng()));
        f.ttl = std::uint8_t(rng() % 255 + 1);
        f.payload.resize(rng() % 64);
        for (auto& x : f.payload) x = std::uint8_t(rng());
        auto bytes = frame::encode_frame(f);
        auto stored = std::uint16_t(bytes[24] << 8 | bytes[25]);
        bytes[24] = bytes[25] = 0;
        EXPECT_EQ(stored, oracle_checksum(bytes, 14, 20));
    }
}

TEST(DataplaneFrame, AppPayloadRoundTrip) {
    frame::AppPayload p{3, 99, 123456789};
    auto bytes = frame::encode_app(p, 64);
    EXPECT_EQ(bytes.size(), 64u);
    EXPECT_EQ(frame::decode_app(bytes), p);
    EXPECT_EQ(frame::encode_app(p, 0).size(), frame::kAppPayloadOctets);
}

TEST(DataplaneToken, BucketWindow) {
    token::EdgeToken t(token::key_from_seed(1), 30s, 1);
    auto ip = Ipv4Address::parse("203.0.113.5");
    sim::Time now = 95s; // bucket 3
    auto tok = t.mint(ip, now);
    EXPECT_TRUE(t.validate(tok, ip, now));
    EXPECT_TRUE(t.validate(t.mint_for_bucket(ip, 2), ip, now));
    EXPECT_FALSE(t.validate(t.mint_for_bucket(ip, 1), ip, now));
    EXPECT_FALSE(t.validate(t.mint_for_bucket(ip, 4), ip, now));
    EXPECT_FALSE(t.validate(tok, Ipv4Address::parse("203.0.113.6"), now));
    token::EdgeToken other(token::key_from_seed(2), 30s, 1);
    EXPECT_NE(other.mint(ip, now), tok);
    EXPECT_EQ(token::key_from_seed(1), token::key_from_seed(1));
}

TEST(DataplaneToken, RandomTokensAreRejected) {
    token::EdgeToken t(token::key_from_seed(9));
    auto ip = Ipv4Address::parse("203.0.113.5");
    std::mt19937 rng(11);
    int admitted = 0;
    for (int i = 0; i < 100000; ++i) admitted += t.validate(std::uint32_t(rng()), ip, 1000s);
    EXPECT_EQ(admitted, 0);
}

TEST(DataplaneNative, Classify) {
    EXPECT_EQ(classify(std::vector<std::uint8_t>{}), Demux::Empty);
    EXPECT_EQ(classify(std::vector<std::uint8_t>{0x00, 0x18}), Demux::Srou);
    EXPECT_EQ(classify(std::vector<std::uint8_t>{0x47}), Demux::Passthrough);
}

TEST(DataplaneNative, HeaderListsWaypointsAfterTheEdge) {
    auto e = Endpoint::parse("198.51.100.1:17777");
    auto t = Endpoint::parse("198.51.100.2:17777");
    auto s = Endpoint::parse("198.51.100.9:9000");
    auto h = native_header({e, t, s}, 77);
    ASSERT_EQ(h.segments.size(), 2u);
    EXPECT_EQ(h.segments_left, 2);
    EXPECT_EQ(std::get<srou::Waypoint>(h.segments[0]).locator, s);
    EXPECT_EQ(std::get<srou::Waypoint>(h.segments[1]).locator, t);
    EXPECT_EQ(h.flow_id.as_u32(), 77u);
    EXPECT_THROW(native_header({e}, 0), Error);
}

TEST(DataplaneLinecard, DirectEncapsulationMatchesGoldenHeader) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(30s);
    ASSERT_TRUE(tb.a->record());
    ASSERT_GT(tb.a->routes().routes().size(), 0u);
    tb.h1->send_to(kMac2, tb.h2->ip(), {0xAB});
    tb.loop.run_until(31s);

    auto sent = tb.data_from("LC_A");
    ASSERT_EQ(sent.size(), 1u);
    EXPECT_EQ(sent[0].second.dst, Endpoint::parse(kLcB));
    auto fig = fixture("direct_header.hex");
    std::vector<std::uint8_t> head(sent[0].second.payload.begin(), sent[0].second.payload.begin() + 24);
    EXPECT_EQ(head, fig);
    auto pkt = std::get<srou::DataPacket>(srou::decode_packet(sent[0].second.payload));
    auto inner = frame::decode_frame(pkt.payload);
    EXPECT_EQ(inner.src_mac, kMac1);
    EXPECT_EQ(inner.dst_mac, kMac2);
    EXPECT_EQ(inner.payload, std::vector<std::uint8_t>{0xAB});
    EXPECT_EQ(tb.h2->received(), 1u);
    EXPECT_EQ(tb.a->paths().at("LC_B").source, path::PathSource::Direct);
}

TEST(DataplaneLinecard, DegradedDirectLinkRoutesThroughSpine) {
    Testbed tb(400ms);
    tb.start();
    tb.loop.run_until(40s);
    tb.h1->send_to(kMac2, tb.h2->ip(), {0xCD});
    tb.loop.run_until(42s);

    auto sent = tb.data_from("LC_A");
    ASSERT_EQ(sent.size(), 1u);
    EXPECT_EQ(sent[0].second.dst, Endpoint::parse(kSpine));
    std::vector<std::uint8_t> head(sent[0].second.payload.begin(), sent[0].second.payload.begin() + 30);
    EXPECT_EQ(head, fixture("te_header.hex"));
    EXPECT_EQ(tb.spine->counters().get("relay"), 1u);
    EXPECT_EQ(tb.h2->received(), 1u);
    const auto& p = tb.a->paths().at("LC_B");
    EXPECT_EQ(p.source, path::PathSource::Engineered);
    ASSERT_EQ(p.waypoints.size(), 2u);
    EXPECT_EQ(p.waypoints[0], "Spine-A|internet|" + kSpine);
}

TEST(DataplaneLinecard, PolicyDenyAndSteer) {
    Testbed tb;
    tb.start();
    auto admin = tb.store.client("admin");
    schema::Identity id{"u1", "d1", {5}};
    admin.put(id.key(), schema::encode_identity(id));
    schema::GroupRule deny{5, std::nullopt, {schema::Action::Deny, {}}};
    admin.put(deny.key(), schema::encode_policy(deny.value));
    tb.loop.run_until(30s);
    tb.h1->send_to(kMac2, tb.h2->ip(), {1});
    tb.loop.run_until(31s);
    EXPECT_EQ(tb.h2->received(), 0u);
    EXPECT_EQ(tb.a->counters().get("drop.policy_deny"), 1u);

    schema::GroupRule steer{5, std::nullopt,
                            {schema::Action::Steer, {schema::SlocShort{"Spine-A", "internet", Endpoint::parse(kSpine)}}}};
    admin.put(steer.key(), schema::encode_policy(steer.value));
    tb.loop.run_until(33s);
    tb.h1->send_to(kMac2, tb.h2->ip(), {2});
    tb.loop.run_until(34s);
    EXPECT_EQ(tb.h2->received(), 1u);
    EXPECT_EQ(tb.spine->counters().get("relay"), 1u);
    auto sent = tb.data_from("LC_A");
    ASSERT_EQ(sent.size(), 1u);
    auto pkt = std::get<srou::DataPacket>(srou::decode_packet(sent[0].second.payload));
    EXPECT_EQ(pkt.header.flow_id.as_u32(), 5u); // source policy tag
}

TEST(DataplaneLinecard, RoutedDeliveryRewritesDestinationMac) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(30s);
    frame::HostFrame got;
    tb.h4->on_receive([&](const frame::HostFrame& f) { got = f; });
    // Addressed to the gateway MAC; the prefix route carries it to LC_B.
    tb.h3->send_to(MacAddress::parse("02:ff:ff:ff:ff:01"), Ipv4Address::parse("10.7.2.99"), {7});
    tb.loop.run_until(31s);
    EXPECT_EQ(tb.h4->received(), 1u);
    EXPECT_EQ(got.dst_mac, kMac4);
    auto sent = tb.data_from("LC_A");
    ASSERT_EQ(sent.size(), 1u);
    auto pkt = std::get<srou::DataPacket>(srou::decode_packet(sent[0].second.payload));
    auto fn = std::get<srou::FunctionSegment>(pkt.header.segments[0]);
    EXPECT_EQ(fn.function, srou::kEndDT4);
    EXPECT_EQ(fn.args, 7u);
}

TEST(DataplaneLinecard, LocalHairpinDoesNotEncapsulate) {
    Testbed tb;
    auto extra = std::make_unique<Host>(tb.loop, "h5", MacAddress::parse("02:00:00:00:00:05"),
                                        Ipv4Address::parse("10.0.0.5"));
    tb.a->attach_host(*extra, {Attachment::Kind::L2, 1234, "RT-L2", "1:1", false});
    tb.start();
    extra->announce();
    tb.loop.run_until(5s);
    tb.h1->send_to(extra->mac(), extra->ip(), {1});
    tb.loop.run_until(6s);
    EXPECT_EQ(extra->received(), 1u);
    EXPECT_TRUE(tb.data_from("LC_A").empty());
}

TEST(DataplaneFabric, FillsZeroSourceAndRelays) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(5s);
    auto dst = Endpoint::parse(Testbed::kProbe);
    tb.inject(kSpine, data_packet({srou::Waypoint{dst}}, 1));
    tb.loop.run_until(6s);
    ASSERT_EQ(tb.probe_rx.size(), 1u);
    auto pkt = std::get<srou::DataPacket>(srou::decode_packet(tb.probe_rx[0].payload));
    EXPECT_EQ(pkt.header.segments_left, 0);
    EXPECT_EQ(pkt.header.source_endpoint(), dst);
    EXPECT_EQ(tb.spine->counters().get("source_filled"), 1u);
}

TEST(DataplaneFabric, DropsExhaustedSegmentList) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(5s);
    tb.inject(kSpine, data_packet({srou::Waypoint{Endpoint::parse(kLcB)}}, 0, true));
    tb.inject(kSpine, std::vector<std::uint8_t>{0x00, 0x02});
    tb.loop.run_until(6s);
    EXPECT_EQ(tb.spine->counters().get("drop.no_segments_left"), 1u);
    EXPECT_EQ(tb.spine->counters().get("relay"), 0u);
    ASSERT_EQ(tb.world.postcards.size(), 1u);
    EXPECT_EQ(tb.world.postcards[0].action, "drop:no_segments_left");
    std::uint64_t malformed = 0;
    for (const auto& [k, v] : tb.spine->counters().all())
        if (k.rfind("drop.", 0) == 0 && k != "drop.no_segments_left") malformed += v;
    EXPECT_EQ(malformed, 1u);
}

TEST(DataplaneLinecard, UnknownFunctionIsDroppedWithPostcard) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(5s);
    tb.inject(kLcB, data_packet({srou::FunctionSegment{1234, 0x7777}}, 1, true));
    tb.loop.run_until(6s);
    EXPECT_EQ(tb.b->counters().get("drop.unknown_function"), 1u);
    ASSERT_EQ(tb.world.postcards.size(), 1u);
    EXPECT_EQ(tb.world.postcards[0].node, "LC_B");
    EXPECT_EQ(tb.world.postcards[0].action, "drop:unknown_function");
}

TEST(DataplaneLinecard, TelemetryPostcardsFollowThePath) {
    Testbed t2(400ms);
    auto h = std::make_unique<Host>(t2.loop, "ht", MacAddress::parse("02:00:00:00:00:09"),
                                    Ipv4Address::parse("10.0.0.9"));
    t2.a->attach_host(*h, {Attachment::Kind::L2, 1234, "RT-L2", "1:1", true});
    t2.start();
    h->announce();
    t2.loop.run_until(40s);
    h->send_to(kMac2, t2.h2->ip(), {1});
    t2.loop.run_until(42s);
    ASSERT_EQ(t2.world.postcards.size(), 2u);
    EXPECT_EQ(t2.world.postcards[0].node, "Spine-A");
    EXPECT_EQ(t2.world.postcards[0].action, "relay");
    EXPECT_EQ(t2.world.postcards[0].segments_left, 1);
    EXPECT_EQ(t2.world.postcards[1].node, "LC_B");
    EXPECT_EQ(t2.world.postcards[1].action, "deliver");
    EXPECT_EQ(t2.world.postcards[1].segments_left, 0);
    EXPECT_LT(t2.world.postcards[0].timestamp_ns, t2.world.postcards[1].timestamp_ns);
}

TEST(DataplaneLinecard, HeadlessKeepsForwarding) {
    Testbed tb(400ms);
    tb.start();
    tb.loop.run_until(40s);
    tb.h1->send_to(kMac2, tb.h2->ip(), {1});
    tb.loop.run_until(41s);
    auto before = tb.a->paths().at("LC_B").waypoints;
    auto routes_before = tb.a->routes().routes();

    tb.store.partition(true);
    tb.loop.run_until(100s);
    EXPECT_TRUE(tb.a->headless());
    for (int i = 0; i < 5; ++i) tb.h1->send_to(kMac2, tb.h2->ip(), {2});
    tb.loop.run_until(101s);
    EXPECT_EQ(tb.h2->received(), 6u);
    EXPECT_EQ(tb.a->paths().at("LC_B").waypoints, before);
    EXPECT_EQ(tb.a->routes().routes(), routes_before);

    tb.store.partition(false);
    tb.loop.run_until(110s);
    EXPECT_FALSE(tb.a->headless());
}

TEST(DataplaneRuntime, KillStopsForwarding) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(5s);
    tb.spine->kill();
    tb.inject(kSpine, data_packet({srou::Waypoint{Endpoint::parse(Testbed::kProbe)}}, 1));
    tb.loop.run_until(6s);
    EXPECT_TRUE(tb.probe_rx.empty());
    EXPECT_FALSE(tb.spine->alive());
}

TEST(DataplaneRuntime, ProbesOnlySameColourPeers) {
    Testbed tb;
    tb.start();
    tb.loop.run_until(10s);
    // LC_A probes LC_B and Spine-A; the spine probes fabrics only.
    EXPECT_EQ(tb.a->probe_sessions().size(), 2u);
    EXPECT_EQ(tb.spine->probe_sessions().size(), 0u);
    auto c = tb.store.client("reader");
    EXPECT_FALSE(c.get_prefix(std::string(schema::kLinkstatePrefix)).empty());
}

namespace {

// Client behind a NAT, an edge fabric with tokens, a transit fabric, a server and STUN.
struct NatBed {
    NatBed() : net(loop, 5), store(loop), world{loop, net, store, {}, {}}, tok(token::key_from_seed(42)) {
        sim::NatConfig nat;
        nat.name = "home";
        nat.inside = Ipv4Prefix::parse("10.9.0.0/24");
        nat.public_ip = Ipv4Address::parse("203.0.113.1");
        nat.base_port = 40000;
        net.add_nat(nat);
        auto link = [&](Endpoint a, Endpoint b, sim::Duration d) {
            sim::LinkConfig l;
            l.a = a.ip;
            l.b = b.ip;
            l.delay_ab = l.delay_ba = d;
            net.add_link(l);
        };
        link(client_ep, edge_ep, 5ms);
        link(client_ep, stun_ep, 5ms);
        link(client_ep, server_ep, 50ms);
        link(edge_ep, transit_ep, 10ms);
        link(transit_ep, server_ep, 10ms);

        FabricConfig fc;
        fc.edge_token = tok;
        auto cfg = [](const std::string& n, Endpoint ep) {
            NodeConfig c;
            c.name = n;
            c.site_id = 1;
            schema::Sloc s;
            s.color = "internet";
            s.private_addr = s.public_addr = ep;
            c.slocs = {s};
            c.probing = false;
            return c;
        };
        edge = std::make_unique<Fabric>(world, cfg("edge", edge_ep), fc);
        transit = std::make_unique<Fabric>(world, cfg("transit", transit_ep));
        stun = std::make_unique<StunServer>(world, cfg("stun", stun_ep));
        server = std::make_unique<NativeServer>(world, "server", server_ep, edge_ep);
        client = std::make_unique<NativeClient>(world, "client",
                                                NativeClientConfig{client_ep, edge_ep, {transit_ep, server_ep}, stun_ep});
        server->set_echo(true);
        client->on_app([this](std::span<const std::uint8_t> p, bool via) {
            replies.emplace_back(std::vector<std::uint8_t>(p.begin(), p.end()), via);
        });
        client->on_stun([this](std::optional<Endpoint> pub) {
            if (pub) client->set_token(tok.mint(pub->ip, loop.now()));
        });
    }

    void start() {
        edge->start();
        transit->start();
        stun->start();
        server->start();
        client->start();
    }

    Endpoint client_ep = Endpoint::parse("10.9.0.2:5000");
    Endpoint edge_ep = Endpoint::parse("198.51.100.1:17777");
    Endpoint transit_ep = Endpoint::parse("198.51.100.2:17777");
    Endpoint stun_ep = Endpoint::parse("198.51.100.3:3478");
    Endpoint server_ep = Endpoint::parse("198.51.100.9:9000");
    sim::EventLoop loop;
    sim::Network net;
    kv::Store store;
    World world;
    token::EdgeToken tok;
    std::unique_ptr<Fabric> edge, transit;
    std::unique_ptr<StunServer> stun;
    std::unique_ptr<NativeServer> server;
    std::unique_ptr<NativeClient> client;
    std::vector<std::pair<std::vector<std::uint8_t>, bool>> replies;
};

} // namespace

TEST(DataplaneNative, NatTraversalRoundTrip) {
    NatBed nb;
    nb.start();
    nb.loop.run_until(2s);
    ASSERT_TRUE(nb.client->public_endpoint());
    EXPECT_EQ(nb.client->public_endpoint()->ip, Ipv4Address::parse("203.0.113.1"));
    nb.client->send_srou({0x47, 0x48});
    nb.loop.run_until(3s);
    ASSERT_EQ(nb.server->srou_sources().size(), 1u);
    EXPECT_EQ(nb.server->srou_sources()[0], *nb.client->public_endpoint());
    ASSERT_EQ(nb.replies.size(), 1u);
    EXPECT_TRUE(nb.replies[0].second);
    EXPECT_EQ(nb.replies[0].first, (std::vector<std::uint8_t>{0x47, 0x48}));
    EXPECT_EQ(nb.edge->counters().get("token.accepted"), 1u);
    EXPECT_EQ(nb.transit->counters().get("relay"), 2u);
}

TEST(DataplaneNative, EdgeRejectsBadToken) {
    NatBed nb;
    nb.start();
    nb.loop.run_until(2s);
    nb.client->set_token(nb.client->token() ^ 1);
    nb.client->send_srou({0x47});
    nb.loop.run_until(3s);
    EXPECT_TRUE(nb.server->srou_sources().empty());
    EXPECT_EQ(nb.edge->counters().get("drop.admission"), 1u);
    EXPECT_EQ(nb.edge->counters().get("token.rejected"), 1u);
}

TEST(DataplaneNative, PassthroughReachesApplicationUntouched) {
    NatBed nb;
    nb.start();
    nb.loop.run_until(2s);
    std::vector<std::uint8_t> seen;
    nb.server->on_app([&](std::span<const std::uint8_t> p, Endpoint, bool via) {
        EXPECT_FALSE(via);
        seen.assign(p.begin(), p.end());
    });
    nb.client->send_passthrough({0x16, 0x03, 0x01});
    nb.loop.run_until(3s);
    EXPECT_EQ(seen, (std::vector<std::uint8_t>{0x16, 0x03, 0x01}));
    ASSERT_EQ(nb.replies.size(), 1u);
    EXPECT_FALSE(nb.replies[0].second);
}
