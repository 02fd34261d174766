#include "ruta/error.hpp"
#include "ruta/probe.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ruta;
using namespace ruta::probe;
using namespace std::chrono_literals;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::ParseError;
}

const Endpoint kA = Endpoint::parse("10.0.0.1:17777");
const Endpoint kB = Endpoint::parse("10.0.0.2:17777");

// Runs `n` probes from A to B over one simulated link and returns the session.
ProbeSession run_probes(const sim::LinkConfig& link, int n, std::uint64_t seed, ProbeConfig cfg = {}) {
    sim::EventLoop loop;
    sim::Network net(loop, seed);
    net.add_link(link);
    ProbeSession session(schema::SlocShort{"F1", "inet", kA}, schema::SlocShort{"F2", "inet", kB}, cfg);
    ProbeResponder responder;
    net.attach(kB.ip, [&](const sim::Datagram& d) {
        auto resp = responder.respond(d.payload, loop.now(), loop.now());
        net.send({kB, d.src, srou::encode_oam(resp)});
    });
    net.attach(kA.ip, [&](const sim::Datagram& d) { session.on_response(srou::decode_oam(d.payload), loop.now()); });
    for (int i = 0; i < n; ++i)
        loop.schedule_at(sim::Time(i * cfg.interval), [&] {
            session.expire(loop.now());
            net.send({kA, kB, srou::encode_oam(session.next_request(loop.now()))});
        });
    loop.run_until(sim::Time(n * cfg.interval) + cfg.timeout);
    session.expire(loop.now());
    return session;
}

sim::LinkConfig link(sim::Duration ab, sim::Duration ba, double loss_ab = 0, double loss_ba = 0) {
    sim::LinkConfig c;
    c.a = kA.ip;
    c.b = kB.ip;
    c.delay_ab = ab;
    c.delay_ba = ba;
    c.loss_ab = loss_ab;
    c.loss_ba = loss_ba;
    return c;
}

} // namespace

TEST(Prober, SymmetricDelayIsExact) {
    auto s = run_probes(link(20ms, 20ms), 50, 1);
    auto rec = s.compute_metrics(sim::Time(60s));
    EXPECT_EQ(rec.two_way_delay_us, 40000.0);
    EXPECT_EQ(rec.loss, 0.0);
    EXPECT_EQ(rec.jitter_us, 0.0);
    EXPECT_EQ(rec.status, schema::LinkStatus::Up);
}

TEST(Prober, AsymmetryIsInvisible) {
    sim::Duration forward = 10ms, reverse = 30ms;
    auto s = run_probes(link(forward, reverse), 20, 1);
    EXPECT_EQ(s.compute_metrics(sim::Time(60s)).two_way_delay_us,
              double(std::chrono::duration_cast<std::chrono::microseconds>(forward + reverse).count()));
}

TEST(Prober, FivePercentLossOverThousandProbes) {
    ProbeConfig cfg;
    cfg.window = 1000;
    auto s = run_probes(link(5ms, 5ms, 0.05, 0.0), 1000, 2024, cfg);
    ASSERT_EQ(s.window().size(), 1000u);
    auto rec = s.compute_metrics(sim::Time(2000s));
    EXPECT_NEAR(rec.loss, 0.05, 0.015);
}

TEST(Prober, LossEstimatorUnbiasedAcrossSeeds) {
    ProbeConfig cfg;
    cfg.window = 1000;
    double sum = 0;
    const int seeds = 20;
    for (int seed = 1; seed <= seeds; ++seed)
        sum += run_probes(link(1ms, 1ms, 0.05, 0.0), 1000, std::uint64_t(seed), cfg).compute_metrics(sim::Time(0)).loss;
    double mean = sum / seeds;
    double sigma = std::sqrt(0.05 * 0.95 / (1000.0 * seeds));
    EXPECT_NEAR(mean, 0.05, 3 * sigma);
}

TEST(Prober, WindowBoundAndSequence) {
    ProbeConfig cfg;
    cfg.window = 10;
    auto s = run_probes(link(1ms, 1ms), 35, 1, cfg);
    EXPECT_EQ(s.window().size(), 10u);
    EXPECT_EQ(s.last_seq(), 35u);
    for (std::size_t i = 1; i < s.window().size(); ++i) EXPECT_LT(s.window()[i - 1].seq, s.window()[i].seq);
}

TEST(Prober, ThreeConsecutiveLossesMeanDown) {
    ProbeSession s({"F1", "inet", kA}, {"F2", "inet", kB});
    EXPECT_EQ(code_of([&] { s.compute_metrics(sim::Time(0)); }), Errc::EmptyWindow);
    ProbeResponder r;
    auto deliver = [&](sim::Time t) {
        auto req = s.next_request(t);
        s.on_response(r.respond(req, t + 5ms, t + 5ms), t + 10ms);
    };
    deliver(sim::Time(0s));
    for (int i = 1; i <= 2; ++i) s.next_request(sim::Time(i * 1s));
    s.expire(sim::Time(4s));
    EXPECT_EQ(s.compute_metrics(sim::Time(4s)).status, schema::LinkStatus::Up);
    s.next_request(sim::Time(4s));
    s.expire(sim::Time(5s));
    auto down = s.compute_metrics(sim::Time(5s));
    EXPECT_EQ(down.status, schema::LinkStatus::Down);
    EXPECT_EQ(down.loss, 0.75);
    EXPECT_EQ(down.two_way_delay_us, 10000.0);
    deliver(sim::Time(6s));
    EXPECT_EQ(s.compute_metrics(sim::Time(7s)).status, schema::LinkStatus::Up);
}

TEST(Prober, JitterDecaysMonotonicallyOnConstantDelay) {
    ProbeSession s({"F1", "inet", kA}, {"F2", "inet", kB});
    ProbeResponder r;
    std::int64_t delays_ms[] = {10, 30, 5, 40, 12};
    sim::Time t(0);
    for (auto d : delays_ms) {
        s.on_response(r.respond(s.next_request(t), t, t), t + std::chrono::milliseconds(d));
        t += 1s;
    }
    double prev = s.smoothed_jitter_us();
    EXPECT_GT(prev, 0.0);
    for (int i = 0; i < 200; ++i) {
        s.on_response(r.respond(s.next_request(t), t, t), t + 20ms);
        t += 1s;
        double j = s.smoothed_jitter_us();
        if (i > 0) {
            EXPECT_LE(j, prev);
            EXPECT_NEAR(j, prev * 15.0 / 16.0, 1e-9);
        }
        prev = j;
    }
    EXPECT_LT(prev, 0.1);
}

TEST(Responder, EchoesRequesterFieldsEvenWhenReordered) {
    ProbeResponder r;
    auto req7 = srou::OamMessage::linkstate_request(7, 1111);
    auto req3 = srou::OamMessage::linkstate_request(3, 999);
    auto a = r.respond(req7, sim::Time(5000), sim::Time(6000));
    auto b = r.respond(req3, sim::Time(7000), sim::Time(7000));
    auto& ba = std::get<srou::LinkstateBody>(a.payload);
    auto& bb = std::get<srou::LinkstateBody>(b.payload);
    EXPECT_EQ(ba.sender_seq, 7u);
    EXPECT_EQ(ba.sender_timestamp, 1111u);
    EXPECT_EQ(ba.received_timestamp, 5000u);
    EXPECT_EQ(ba.timestamp, 6000u);
    EXPECT_EQ(bb.sender_seq, 3u);
    EXPECT_EQ(bb.sender_timestamp, 999u);
    EXPECT_EQ(bb.seq, ba.seq + 1);
    EXPECT_EQ(a.subtype, srou::oam_subtype::kResponse);

    auto bytes = srou::encode_oam(req7);
    bytes.resize(bytes.size() - 3);
    bytes[1] = std::uint8_t(bytes.size());
    EXPECT_EQ(code_of([&] { r.respond(bytes, sim::Time(0), sim::Time(0)); }), Errc::MalformedOam);
    EXPECT_EQ(code_of([&] { r.respond(srou::OamMessage::stun_request(), sim::Time(0), sim::Time(0)); }),
              Errc::MalformedOam);
}

TEST(Prober, LateAndUnknownResponsesIgnored) {
    ProbeSession s({"F1", "inet", kA}, {"F2", "inet", kB});
    ProbeResponder r;
    auto req = s.next_request(sim::Time(0));
    s.expire(sim::Time(2s));
    EXPECT_FALSE(s.on_response(r.respond(req, sim::Time(3s), sim::Time(3s)), sim::Time(3s)));
    EXPECT_FALSE(s.on_response(r.respond(srou::OamMessage::linkstate_request(99, 0), sim::Time(0), sim::Time(0)),
                               sim::Time(1)));
    EXPECT_EQ(s.window().size(), 1u);
}

TEST(FullMesh, SessionCounts) {
    auto sl = [](const char* a) { auto e = Endpoint::parse(a); return schema::Sloc{"inet", e, e, std::nullopt, 1e9, 1e9}; };
    std::vector<MeshPeer> peers = {{"F1", {sl("10.0.0.1:17777")}},
                                   {"F2", {sl("10.0.0.2:17777")}},
                                   {"F3", {sl("10.0.0.3:17777")}},
                                   {"F4", {sl("10.0.0.4:17777")}}};
    for (const auto& self : peers) EXPECT_EQ(start_full_mesh(self.system_name, self.slocs, peers).size(), 3u);
    auto wl = start_full_mesh("F1", peers[0].slocs, peers, {"F2"});
    ASSERT_EQ(wl.size(), 1u);
    EXPECT_EQ(wl[0].peer().system_name, "F2");
    peers[1].slocs.push_back(sl("10.0.1.2:17778"));
    peers[1].slocs[1].color = "mpls";
    EXPECT_EQ(start_full_mesh("F1", peers[0].slocs, peers, {"F2"}).size(), 2u);
}

namespace {

struct StunBed {
    sim::EventLoop loop;
    sim::Network net{loop, 1};
    Endpoint server = Endpoint::parse("203.0.113.10:3478");
    std::optional<Endpoint> observed;
    std::optional<Errc> error;
    sim::Time finished_at{};
    int requests_seen = 0;

    void serve() {
        net.attach(server.ip, [this](const sim::Datagram& d) {
            ++requests_seen;
            auto resp = stun_serve(srou::decode_oam(d.payload), d.src);
            net.send({server, d.src, srou::encode_oam(resp)});
        });
    }

    void run_client(Endpoint client) {
        StunExchange ex(
            loop, [&](const std::vector<std::uint8_t>& b) { net.send({client, server, b}); },
            [&](std::optional<Endpoint> o, std::optional<Errc> e) {
                observed = o;
                error = e;
                finished_at = loop.now();
            });
        net.attach(client.ip, [&](const sim::Datagram& d) { ex.on_datagram(d.payload); });
        ex.start();
        loop.run_until(sim::Time(30s));
    }
};

} // namespace

TEST(Stun, ObservedAddressMatchesNatTable) {
    StunBed bed;
    bed.serve();
    Endpoint inside = Endpoint::parse("10.9.9.2:6000");
    sim::LinkConfig l;
    l.a = inside.ip;
    l.b = bed.server.ip;
    l.delay_ab = l.delay_ba = 15ms;
    bed.net.add_link(l);
    auto nat = bed.net.add_nat({"nat", Ipv4Prefix::parse("10.9.9.0/24"), Ipv4Address::parse("198.51.100.7")});
    bed.run_client(inside);
    ASSERT_TRUE(bed.observed);
    EXPECT_EQ(bed.observed, bed.net.nat(nat).mapping_for(inside));
    EXPECT_EQ(*bed.observed, Endpoint::parse("198.51.100.7:40001"));
}

TEST(Stun, PublicClientSeesItself) {
    StunBed bed;
    bed.serve();
    Endpoint client = Endpoint::parse("192.0.2.5:5547");
    sim::LinkConfig l;
    l.a = client.ip;
    l.b = bed.server.ip;
    bed.net.add_link(l);
    bed.run_client(client);
    EXPECT_EQ(bed.observed, client);
}

TEST(Stun, UnreachableServerTimesOutAfterBackoff) {
    StunBed bed;
    bed.serve();
    Endpoint client = Endpoint::parse("192.0.2.5:5547");
    sim::LinkConfig l;
    l.a = client.ip;
    l.b = bed.server.ip;
    l.up = false;
    auto id = bed.net.add_link(l);
    bed.run_client(client);
    EXPECT_EQ(bed.error, Errc::Timeout);
    EXPECT_EQ(bed.finished_at, sim::Time(7s));
    EXPECT_EQ(bed.net.link_counters(id).dropped, 3u);
    EXPECT_EQ(bed.requests_seen, 0);
}
