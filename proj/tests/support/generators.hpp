#pragma once

// Random valid codec values for property tests.

#include "ruta/srou.hpp"

#include <random>

namespace ruta::testgen {

class CodecGen {
public:
    explicit CodecGen(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t u64() { return rng_(); }
    std::uint32_t below(std::uint32_t n) { return std::uint32_t(rng_() % n); }
    bool coin() { return rng_() & 1; }

    srou::Flags flags() {
        srou::Flags f;
        f.encrypted = coin();
        f.full_encryption = coin();
        f.telemetry = coin();
        return f;
    }

    srou::FlowId flow_id() {
        auto type = srou::FlowIdType(below(3));
        std::vector<std::uint8_t> b(srou::flow_id_octets(type));
        for (auto& x : b) x = std::uint8_t(rng_());
        return srou::FlowId::from_octets(type, b);
    }

    srou::Segment segment() {
        if (coin()) return srou::FunctionSegment{below(1u << 24), std::uint16_t(rng_())};
        Ipv4Address ip{std::uint32_t(rng_())};
        if (ip.octet(0) == 0xFF) ip.value &= 0x7FFFFFFF;
        return srou::Waypoint{Endpoint{ip, std::uint16_t(rng_())}};
    }

    srou::Header header() {
        srou::Header h;
        h.flags = flags();
        h.flow_id = flow_id();
        if (below(4) == 0) {
            h.protocol = srou::Protocol::Ipv6;
            Ipv6Address a;
            for (auto& x : a.bytes) x = std::uint8_t(rng_());
            h.source_address = a;
        } else {
            h.protocol = srou::Protocol::Ipv4;
            h.source_address = Ipv4Address(std::uint32_t(rng_()));
        }
        h.source_port = std::uint16_t(rng_());
        std::size_t n = 1 + below(12);
        for (std::size_t i = 0; i < n; ++i) h.segments.push_back(segment());
        h.segments_left = std::uint8_t(below(std::uint32_t(n) + 1));
        std::size_t tlvs = below(3);
        for (std::size_t i = 0; i < tlvs; ++i) {
            srou::Tlv t;
            t.type = srou::TlvType(below(3));
            t.value.resize(below(24));
            for (auto& x : t.value) x = std::uint8_t(rng_());
            h.tlvs.push_back(std::move(t));
        }
        return h;
    }

    srou::OamMessage oam() {
        srou::OamMessage m;
        switch (below(5)) {
        case 0: m = srou::OamMessage::linkstate_request(std::uint32_t(rng_()), rng_()); break;
        case 1:
            m.type = srou::OamType::Linkstate;
            m.subtype = srou::oam_subtype::kResponse;
            m.payload = srou::LinkstateBody{std::uint32_t(rng_()), rng_(), rng_(), std::uint32_t(rng_()), rng_()};
            break;
        case 2: m = srou::OamMessage::stun_request(); break;
        case 3: m = srou::OamMessage::stun_response(Endpoint{Ipv4Address(std::uint32_t(rng_())), std::uint16_t(rng_())}); break;
        default: {
            m.type = srou::OamType::Traceroute;
            m.subtype = std::uint8_t(rng_());
            std::vector<std::uint8_t> raw(1 + below(40));
            for (auto& x : raw) x = std::uint8_t(rng_());
            m.payload = raw;
        }
        }
        m.flags = flags();
        m.flow_id = flow_id();
        return m;
    }

    /// Flips, truncates, extends or overwrites a few octets.
    std::vector<std::uint8_t> mutate(std::vector<std::uint8_t> b) {
        std::size_t edits = 1 + below(4);
        for (std::size_t i = 0; i < edits; ++i) {
            switch (below(4)) {
            case 0:
                if (!b.empty()) b[below(std::uint32_t(b.size()))] ^= std::uint8_t(1u << below(8));
                break;
            case 1:
                if (!b.empty()) b.resize(below(std::uint32_t(b.size())));
                break;
            case 2: b.push_back(std::uint8_t(rng_())); break;
            default:
                if (!b.empty()) b[below(std::uint32_t(b.size()))] = std::uint8_t(rng_());
            }
        }
        return b;
    }

private:
    std::mt19937_64 rng_;
};

} // namespace ruta::testgen
