#include "ruta/srou.hpp"

#include "ruta/error.hpp"

#include <cstdio>

namespace ruta::srou {

namespace {

[[noreturn]] void invariant(const std::string& what) { throw Error(Errc::InvariantViolation, what); }

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(std::uint8_t(v >> 8));
        u8(std::uint8_t(v));
    }
    void u32(std::uint32_t v) {
        u16(std::uint16_t(v >> 16));
        u16(std::uint16_t(v));
    }
    void u64(std::uint64_t v) {
        u32(std::uint32_t(v >> 32));
        u32(std::uint32_t(v));
    }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t>& out() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

// Reads never go past `limit`; overruns raise `overrun` at the failing offset.
class Reader {
public:
    Reader(std::span<const std::uint8_t> data, Errc overrun) : data_(data), overrun_(overrun) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t((data_[pos_] << 8) | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t hi = u16();
        return (hi << 16) | u16();
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t hi = u32();
        return (hi << 32) | u32();
    }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n)
            throw Error(overrun_, std::string(to_string(overrun_)) + " at offset " + std::to_string(pos_), pos_);
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    Errc overrun_;
};

std::uint8_t flag_octet(const Flags& f, FlowIdType ft) {
    return std::uint8_t((f.reserved & 0x7) << 5 | (std::uint8_t(ft) & 0x3) << 3 | (f.encrypted ? 0x4 : 0) |
                        (f.full_encryption ? 0x2 : 0) | (f.telemetry ? 0x1 : 0));
}

struct CommonPrefix {
    std::uint8_t length = 0;
    Flags flags;
    FlowIdType flow_type = FlowIdType::FT32;
    std::uint8_t protocol = 0;
};

// Validates magic and SRoU Length against the buffer, returns the parsed first word.
CommonPrefix read_prefix(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4)
        throw Error(Errc::TruncatedHeader, "TruncatedHeader at offset " + std::to_string(bytes.size()), bytes.size());
    if (bytes[0] != kMagic) throw Error(Errc::BadMagic, "BadMagic at offset 0", 0);
    CommonPrefix p;
    p.length = bytes[1];
    if (p.length > bytes.size())
        throw Error(Errc::TruncatedHeader,
                    "TruncatedHeader at offset " + std::to_string(bytes.size()) + " (SRoU Length " +
                        std::to_string(p.length) + ")",
                    bytes.size());
    if (p.length < 4) throw Error(Errc::LengthMismatch, "LengthMismatch at offset 1: SRoU Length below 4", 1);
    std::uint8_t f = bytes[2];
    p.flags.reserved = f >> 5;
    p.flags.encrypted = f & 0x4;
    p.flags.full_encryption = f & 0x2;
    p.flags.telemetry = f & 0x1;
    std::uint8_t ft = (f >> 3) & 0x3;
    if (ft > 2) throw Error(Errc::InvalidFlowIdType, "InvalidFlowIdType at offset 2", 2);
    p.flow_type = FlowIdType(ft);
    p.protocol = bytes[3];
    return p;
}

void check_flags(const Flags& f) {
    if (f.reserved != 0) invariant("reserved bits must be zero on encode");
}

std::size_t source_octets(Protocol p) { return p == Protocol::Ipv6 ? 18 : 6; }

} // namespace

// ---------------------------------------------------------------- FlowId

std::size_t flow_id_octets(FlowIdType type) {
    switch (type) {
    case FlowIdType::FT32: return 4;
    case FlowIdType::FT64: return 8;
    case FlowIdType::FT96: return 12;
    }
    throw Error(Errc::InvalidFlowIdType, "invalid flow id type");
}

FlowId FlowId::from_u32(std::uint32_t v) {
    FlowId f;
    for (int i = 0; i < 4; ++i) f.bytes_[i] = std::uint8_t(v >> (24 - 8 * i));
    return f;
}

FlowId FlowId::from_u64(std::uint64_t v) {
    FlowId f;
    f.type_ = FlowIdType::FT64;
    for (int i = 0; i < 8; ++i) f.bytes_[i] = std::uint8_t(v >> (56 - 8 * i));
    return f;
}

FlowId FlowId::from_octets(FlowIdType type, std::span<const std::uint8_t> octets) {
    if (octets.size() != flow_id_octets(type)) invariant("flow id width does not match its type");
    FlowId f;
    f.type_ = type;
    std::copy(octets.begin(), octets.end(), f.bytes_.begin());
    return f;
}

std::uint32_t FlowId::as_u32() const {
    return std::uint32_t(bytes_[0]) << 24 | std::uint32_t(bytes_[1]) << 16 | std::uint32_t(bytes_[2]) << 8 | bytes_[3];
}

// ---------------------------------------------------------------- data header

Endpoint Header::source_endpoint() const {
    if (auto* v4 = std::get_if<Ipv4Address>(&source_address)) return Endpoint{*v4, source_port};
    return Endpoint{};
}

std::size_t sr_hdr_len(const Header& hdr) {
    std::size_t n = kFlagQuartetOctets + kSegmentOctets * hdr.segments.size();
    for (const auto& t : hdr.tlvs) n += 2 + t.value.size();
    return n;
}

std::size_t srou_length(const Header& hdr) {
    return 4 + flow_id_octets(hdr.flow_id.type()) + source_octets(hdr.protocol) + sr_hdr_len(hdr);
}

std::vector<std::uint8_t> encode_header(const Header& hdr) {
    check_flags(hdr.flags);
    if (hdr.protocol == Protocol::Oam) invariant("OAM messages are encoded with encode_oam");
    if (hdr.protocol != Protocol::Ipv4 && hdr.protocol != Protocol::Ipv6)
        throw Error(Errc::UnsupportedProtocol, "unsupported protocol id");
    bool v6 = std::holds_alternative<Ipv6Address>(hdr.source_address);
    if (v6 != (hdr.protocol == Protocol::Ipv6)) invariant("source address family does not match protocol id");
    if (hdr.sloc_type != SlocType::Ipv4Port48)
        throw Error(Errc::UnsupportedSlocType, "only 48-bit IPv4+port SLoCs are supported");
    if (hdr.segments.empty()) invariant("segment list must not be empty");
    if (hdr.segments.size() > 256) invariant("segment list longer than 256 entries");
    if (hdr.segments_left > hdr.segments.size()) invariant("segments_left exceeds last_entry + 1");
    for (const auto& t : hdr.tlvs)
        if (t.value.size() > 255) invariant("TLV value longer than 255 octets");
    std::size_t sr_len = sr_hdr_len(hdr);
    std::size_t total = srou_length(hdr);
    if (sr_len > 255 || total > 255) invariant("SRoU header longer than 255 octets");

    Writer w;
    w.u8(kMagic);
    w.u8(std::uint8_t(total));
    w.u8(flag_octet(hdr.flags, hdr.flow_id.type()));
    w.u8(std::uint8_t(hdr.protocol));
    w.bytes(hdr.flow_id.octets());
    if (v6)
        w.bytes(std::get<Ipv6Address>(hdr.source_address).bytes);
    else
        w.u32(std::get<Ipv4Address>(hdr.source_address).value);
    w.u16(hdr.source_port);
    w.u8(std::uint8_t(hdr.sloc_type));
    w.u8(std::uint8_t(sr_len));
    w.u8(hdr.last_entry());
    w.u8(hdr.segments_left);
    for (const auto& seg : hdr.segments) {
        if (auto* wp = std::get_if<Waypoint>(&seg)) {
            if (wp->locator.ip.octet(0) == kFunctionMarker)
                invariant("waypoint address may not begin with 0xFF (function marker)");
            w.u32(wp->locator.ip.value);
            w.u16(wp->locator.port);
        } else {
            const auto& fn = std::get<FunctionSegment>(seg);
            if (fn.args > 0xFFFFFF) invariant("function args exceed 24 bits");
            w.u8(kFunctionMarker);
            w.u8(std::uint8_t(fn.args >> 16));
            w.u16(std::uint16_t(fn.args));
            w.u16(fn.function);
        }
    }
    for (const auto& t : hdr.tlvs) {
        w.u8(std::uint8_t(t.type));
        w.u8(std::uint8_t(t.value.size()));
        w.bytes(t.value);
    }
    return std::move(w.out());
}

DecodedHeader decode_header(std::span<const std::uint8_t> bytes) {
    CommonPrefix p = read_prefix(bytes);
    if (p.protocol == std::uint8_t(Protocol::Oam)) invariant("protocol id 0x0 is an OAM message");
    if (p.protocol != std::uint8_t(Protocol::Ipv4) && p.protocol != std::uint8_t(Protocol::Ipv6))
        throw Error(Errc::UnsupportedProtocol, "UnsupportedProtocol at offset 3", 3);

    DecodedHeader out;
    Header& h = out.header;
    h.flags = p.flags;
    h.protocol = Protocol(p.protocol);
    out.reserved_bits_set = p.flags.reserved != 0;

    Reader r(bytes.first(p.length), Errc::LengthMismatch);
    r.bytes(4);
    h.flow_id = FlowId::from_octets(p.flow_type, r.bytes(flow_id_octets(p.flow_type)));
    if (h.protocol == Protocol::Ipv6) {
        Ipv6Address a;
        auto b = r.bytes(16);
        std::copy(b.begin(), b.end(), a.bytes.begin());
        h.source_address = a;
    } else {
        h.source_address = Ipv4Address(r.u32());
    }
    h.source_port = r.u16();
    std::size_t sloc_offset = r.pos();
    std::uint8_t sloc = r.u8();
    if (sloc != std::uint8_t(SlocType::Ipv4Port48))
        throw Error(Errc::UnsupportedSlocType, "UnsupportedSlocType at offset " + std::to_string(sloc_offset),
                    sloc_offset);
    std::size_t sr_len_offset = r.pos();
    std::size_t sr_len = r.u8();
    if (sloc_offset + sr_len != p.length)
        throw Error(Errc::LengthMismatch,
                    "LengthMismatch at offset " + std::to_string(sr_len_offset) + ": SR Hdr Len " +
                        std::to_string(sr_len) + " inconsistent with SRoU Length " + std::to_string(p.length),
                    sr_len_offset);
    std::size_t last_entry = r.u8();
    std::size_t sl_offset = r.pos();
    h.segments_left = r.u8();
    if (h.segments_left > last_entry + 1)
        throw Error(Errc::InvariantViolation, "InvariantViolation at offset " + std::to_string(sl_offset) +
                                                  ": Segments Left exceeds Last Entry + 1",
                    sl_offset);
    h.segments.reserve(last_entry + 1);
    for (std::size_t i = 0; i <= last_entry; ++i) {
        auto s = r.bytes(kSegmentOctets);
        if (s[0] == kFunctionMarker) {
            h.segments.push_back(FunctionSegment{std::uint32_t(s[1]) << 16 | std::uint32_t(s[2]) << 8 | s[3],
                                                 std::uint16_t(s[4] << 8 | s[5])});
        } else {
            Ipv4Address ip(s[0], s[1], s[2], s[3]);
            h.segments.push_back(Waypoint{Endpoint{ip, std::uint16_t(s[4] << 8 | s[5])}});
        }
    }
    while (r.remaining() > 0) {
        Tlv t;
        t.type = TlvType(r.u8());
        std::size_t len = r.u8();
        auto v = r.bytes(len);
        t.value.assign(v.begin(), v.end());
        h.tlvs.push_back(std::move(t));
    }
    out.consumed = p.length;
    return out;
}

std::pair<Segment, Header> advance_segment(const Header& hdr) {
    if (hdr.segments_left == 0) throw Error(Errc::NoSegmentsLeft, "no segments left");
    if (hdr.segments_left > hdr.segments.size()) invariant("segments_left exceeds last_entry + 1");
    Header next = hdr;
    next.segments_left = std::uint8_t(hdr.segments_left - 1);
    return {next.segments[next.segments_left], std::move(next)};
}

// ---------------------------------------------------------------- OAM

OamMessage OamMessage::linkstate_request(std::uint32_t seq, std::uint64_t timestamp) {
    OamMessage m;
    m.type = OamType::Linkstate;
    m.subtype = oam_subtype::kRequest;
    m.payload = LinkstateBody{seq, timestamp, 0, 0, 0};
    return m;
}

OamMessage OamMessage::stun_request() {
    OamMessage m;
    m.type = OamType::Stun;
    m.subtype = oam_subtype::kRequest;
    m.payload = std::monostate{};
    return m;
}

OamMessage OamMessage::stun_response(Endpoint observed) {
    OamMessage m;
    m.type = OamType::Stun;
    m.subtype = oam_subtype::kResponse;
    m.payload = StunObserved{observed};
    return m;
}

std::vector<std::uint8_t> encode_oam(const OamMessage& msg) {
    check_flags(msg.flags);
    Writer body;
    switch (msg.type) {
    case OamType::Linkstate: {
        auto* ls = std::get_if<LinkstateBody>(&msg.payload);
        if (!ls) invariant("linkstate message requires a linkstate payload");
        if (msg.subtype == oam_subtype::kRequest) {
            if (ls->received_timestamp != 0 || ls->sender_seq != 0 || ls->sender_timestamp != 0)
                invariant("linkstate request must carry zero echo fields");
        } else if (msg.subtype != oam_subtype::kResponse) {
            throw Error(Errc::UnknownOamSubtype, "unknown linkstate subtype");
        }
        body.u32(ls->seq);
        body.u64(ls->timestamp);
        body.u64(ls->received_timestamp);
        body.u32(ls->sender_seq);
        body.u64(ls->sender_timestamp);
        break;
    }
    case OamType::Stun:
        if (msg.subtype == oam_subtype::kRequest) {
            if (!std::holds_alternative<std::monostate>(msg.payload)) invariant("STUN request carries no payload");
        } else if (msg.subtype == oam_subtype::kResponse) {
            auto* st = std::get_if<StunObserved>(&msg.payload);
            if (!st) invariant("STUN response requires an observed address");
            body.u32(st->observed.ip.value);
            body.u16(st->observed.port);
        } else {
            throw Error(Errc::UnknownOamSubtype, "unknown STUN subtype");
        }
        break;
    case OamType::Traceroute:
        if (auto* raw = std::get_if<std::vector<std::uint8_t>>(&msg.payload))
            body.bytes(*raw);
        else if (!std::holds_alternative<std::monostate>(msg.payload))
            invariant("traceroute payload is opaque");
        break;
    default: throw Error(Errc::UnknownOamType, "unknown OAM type");
    }
    std::size_t total = 4 + flow_id_octets(msg.flow_id.type()) + 2 + body.out().size();
    if (total > 255) invariant("OAM message longer than 255 octets");
    Writer w;
    w.u8(kMagic);
    w.u8(std::uint8_t(total));
    w.u8(flag_octet(msg.flags, msg.flow_id.type()));
    w.u8(std::uint8_t(Protocol::Oam));
    w.bytes(msg.flow_id.octets());
    w.u8(std::uint8_t(msg.type));
    w.u8(msg.subtype);
    w.bytes(body.out());
    return std::move(w.out());
}

OamMessage decode_oam(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    CommonPrefix p = read_prefix(bytes);
    if (p.protocol != std::uint8_t(Protocol::Oam))
        throw Error(Errc::UnsupportedProtocol, "UnsupportedProtocol at offset 3: not an OAM message", 3);
    OamMessage m;
    m.flags = p.flags;
    Reader r(bytes.first(p.length), Errc::TruncatedHeader);
    r.bytes(4);
    m.flow_id = FlowId::from_octets(p.flow_type, r.bytes(flow_id_octets(p.flow_type)));
    std::size_t type_offset = r.pos();
    std::uint8_t type = r.u8();
    if (type > std::uint8_t(OamType::Stun))
        throw Error(Errc::UnknownOamType, "UnknownOamType at offset " + std::to_string(type_offset), type_offset);
    m.type = OamType(type);
    std::size_t sub_offset = r.pos();
    m.subtype = r.u8();
    std::size_t payload_offset = r.pos();
    auto payload = r.bytes(r.remaining());

    auto expect_len = [&](std::size_t want) {
        if (payload.size() < want)
            throw Error(Errc::TruncatedPayload,
                        "TruncatedPayload at offset " + std::to_string(payload_offset + payload.size()),
                        payload_offset + payload.size());
        if (payload.size() > want)
            throw Error(Errc::LengthMismatch, "LengthMismatch at offset " + std::to_string(payload_offset + want),
                        payload_offset + want);
    };
    auto bad_subtype = [&] {
        throw Error(Errc::UnknownOamSubtype, "UnknownOamSubtype at offset " + std::to_string(sub_offset), sub_offset);
    };

    switch (m.type) {
    case OamType::Linkstate: {
        if (m.subtype > oam_subtype::kResponse) bad_subtype();
        expect_len(kLinkstatePayloadOctets);
        Reader pr(payload, Errc::TruncatedPayload);
        LinkstateBody ls;
        ls.seq = pr.u32();
        ls.timestamp = pr.u64();
        ls.received_timestamp = pr.u64();
        ls.sender_seq = pr.u32();
        ls.sender_timestamp = pr.u64();
        if (m.subtype == oam_subtype::kRequest &&
            (ls.received_timestamp != 0 || ls.sender_seq != 0 || ls.sender_timestamp != 0))
            throw Error(Errc::InvariantViolation, "linkstate request carries non-zero echo fields", payload_offset);
        m.payload = ls;
        break;
    }
    case OamType::Stun:
        if (m.subtype == oam_subtype::kRequest) {
            expect_len(0);
            m.payload = std::monostate{};
        } else if (m.subtype == oam_subtype::kResponse) {
            expect_len(kStunResponseOctets);
            Reader pr(payload, Errc::TruncatedPayload);
            Ipv4Address ip(pr.u32());
            m.payload = StunObserved{Endpoint{ip, pr.u16()}};
        } else {
            bad_subtype();
        }
        break;
    case OamType::Traceroute:
        if (payload.empty())
            m.payload = std::monostate{};
        else
            m.payload = std::vector<std::uint8_t>(payload.begin(), payload.end());
        break;
    }
    if (consumed) *consumed = p.length;
    return m;
}

// ---------------------------------------------------------------- packets

Packet decode_packet(std::span<const std::uint8_t> bytes) {
    CommonPrefix p = read_prefix(bytes);
    if (p.protocol == std::uint8_t(Protocol::Oam)) return decode_oam(bytes);
    auto d = decode_header(bytes);
    auto rest = bytes.subspan(d.consumed);
    return DataPacket{std::move(d.header), std::vector<std::uint8_t>(rest.begin(), rest.end())};
}

std::vector<std::uint8_t> encode_packet(const DataPacket& pkt) {
    auto out = encode_header(pkt.header);
    out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
    return out;
}

// ---------------------------------------------------------------- functions

const FunctionRegistry& FunctionRegistry::defaults() {
    static const FunctionRegistry reg = [] {
        FunctionRegistry r;
        r.add(kEndDT2U, "End.DT2U", FunctionKind::DecapL2);
        r.add(kEndDT4, "End.DT4", FunctionKind::DecapL3);
        return r;
    }();
    return reg;
}

void FunctionRegistry::add(std::uint16_t code, std::string name, FunctionKind kind) {
    entries_[code] = Entry{std::move(name), kind};
}

const FunctionRegistry::Entry* FunctionRegistry::find(std::uint16_t code) const {
    auto it = entries_.find(code);
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::uint16_t> FunctionRegistry::code_of(FunctionKind kind) const {
    for (const auto& [code, e] : entries_)
        if (e.kind == kind) return code;
    return std::nullopt;
}

// ---------------------------------------------------------------- listing

namespace {

std::string hex(std::uint64_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%0*llx", width, static_cast<unsigned long long>(v));
    return buf;
}

std::string hex_octets(std::span<const std::uint8_t> b) {
    std::string s = "0x";
    char buf[3];
    for (auto x : b) {
        std::snprintf(buf, sizeof buf, "%02x", x);
        s += buf;
    }
    return s;
}

const char* flow_type_name(FlowIdType t) {
    switch (t) {
    case FlowIdType::FT32: return "32-bit";
    case FlowIdType::FT64: return "64-bit";
    case FlowIdType::FT96: return "96-bit";
    }
    return "?";
}

void annotate_prefix(std::vector<AnnotatedField>& out, const Flags& f, const FlowId& flow, std::size_t length,
                     std::uint8_t protocol) {
    const char* proto = protocol == 0 ? "OAM" : protocol == 1 ? "IPv4" : "IPv6";
    out.push_back({0, 8, "magic number", "0x00"});
    out.push_back({1, 8, "SRoU Length", std::to_string(length)});
    out.push_back({2, 3, "RRR", std::to_string(f.reserved)});
    out.push_back({2, 2, "FT", hex(std::uint8_t(flow.type()), 1) + " " + flow_type_name(flow.type())});
    out.push_back({2, 1, "C", f.encrypted ? "1 encrypted" : "0"});
    out.push_back({2, 1, "F", f.full_encryption ? "1 full packet" : "0 header only"});
    out.push_back({2, 1, "T", f.telemetry ? "1 postcard telemetry" : "0"});
    out.push_back({3, 8, "Protocol-ID", hex(protocol, 1) + " " + proto});
    out.push_back({4, unsigned(flow.octets().size() * 8), "Flow identifiers", hex_octets(flow.octets())});
}

const char* oam_type_name(OamType t) {
    switch (t) {
    case OamType::Linkstate: return "Linkstate";
    case OamType::Traceroute: return "Traceroute";
    case OamType::Stun: return "STUN";
    }
    return "?";
}

} // namespace

std::string to_string(const Segment& seg, const FunctionRegistry& registry) {
    if (auto* wp = std::get_if<Waypoint>(&seg)) return "Waypoint: " + wp->locator.to_string();
    const auto& fn = std::get<FunctionSegment>(seg);
    const auto* e = registry.find(fn.function);
    std::string name = e ? e->name : "unknown(" + hex(fn.function, 4) + ")";
    return "Function: " + name + " args=" + std::to_string(fn.args);
}

std::vector<AnnotatedField> annotate(std::span<const std::uint8_t> bytes, const FunctionRegistry& registry) {
    CommonPrefix p = read_prefix(bytes);
    std::vector<AnnotatedField> out;
    if (p.protocol == std::uint8_t(Protocol::Oam)) {
        std::size_t consumed = 0;
        OamMessage m = decode_oam(bytes, &consumed);
        annotate_prefix(out, m.flags, m.flow_id, consumed, p.protocol);
        std::size_t off = 4 + m.flow_id.octets().size();
        std::string sub = m.subtype == oam_subtype::kRequest ? "Request" : m.subtype == oam_subtype::kResponse
                                                                               ? "Response"
                                                                               : hex(m.subtype, 1);
        out.push_back({off, 16, "OAM Type",
                       hex(std::uint8_t(m.type), 1) + " " + oam_type_name(m.type) + " / Subtype: " + sub});
        off += 2;
        if (auto* ls = std::get_if<LinkstateBody>(&m.payload)) {
            out.push_back({off, 32, "seq", std::to_string(ls->seq)});
            out.push_back({off + 4, 64, "timestamp", std::to_string(ls->timestamp) + " ns"});
            out.push_back({off + 12, 64, "received timestamp", std::to_string(ls->received_timestamp) + " ns"});
            out.push_back({off + 20, 32, "sender seq", std::to_string(ls->sender_seq)});
            out.push_back({off + 24, 64, "sender timestamp", std::to_string(ls->sender_timestamp) + " ns"});
        } else if (auto* st = std::get_if<StunObserved>(&m.payload)) {
            out.push_back({off, 48, "observed address", st->observed.to_string()});
        } else if (auto* raw = std::get_if<std::vector<std::uint8_t>>(&m.payload)) {
            out.push_back({off, unsigned(raw->size() * 8), "OAM Payload", hex_octets(*raw)});
        }
        return out;
    }

    auto d = decode_header(bytes);
    const Header& h = d.header;
    annotate_prefix(out, h.flags, h.flow_id, d.consumed, p.protocol);
    std::size_t off = 4 + h.flow_id.octets().size();
    unsigned src_bits = h.protocol == Protocol::Ipv6 ? 128 : 32;
    out.push_back({off, src_bits, "Source Address", to_string(h.source_address)});
    off += src_bits / 8;
    out.push_back({off, 16, "Source Port", std::to_string(h.source_port)});
    out.push_back({off + 2, 8, "SLoC Type", "0x1 IPv4+port (48 bits)"});
    out.push_back({off + 3, 8, "SR Hdr Len", std::to_string(sr_hdr_len(h))});
    out.push_back({off + 4, 8, "Last Entry", std::to_string(h.last_entry())});
    out.push_back({off + 5, 8, "Segments Left", std::to_string(h.segments_left)});
    off += 6;
    for (std::size_t i = 0; i < h.segments.size(); ++i, off += kSegmentOctets)
        out.push_back({off, 48, "Segment List[" + std::to_string(i) + "]", to_string(h.segments[i], registry)});
    for (const auto& t : h.tlvs) {
        const char* name = t.type == TlvType::Padding         ? "Padding"
                           : t.type == TlvType::SrIntegrity   ? "SR Integrity"
                           : t.type == TlvType::PathTelemetry ? "PathTelemetry"
                                                              : "unknown";
        out.push_back({off, unsigned((2 + t.value.size()) * 8), "TLV",
                       hex(std::uint8_t(t.type), 1) + " " + name + " len=" + std::to_string(t.value.size())});
        off += 2 + t.value.size();
    }
    if (bytes.size() > d.consumed)
        out.push_back({d.consumed, unsigned((bytes.size() - d.consumed) * 8), "Inner Payload",
                       std::to_string(bytes.size() - d.consumed) + " octets"});
    return out;
}

} // namespace ruta::srou
