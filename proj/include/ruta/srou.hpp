#pragma once

// Segment Routing over UDP: data header, OAM messages and function segments.
// All multi-octet fields are big-endian on the wire.

#include "ruta/net.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ruta::srou {

inline constexpr std::uint8_t kMagic = 0x00;
inline constexpr std::uint8_t kFunctionMarker = 0xFF;
inline constexpr std::size_t kSegmentOctets = 6;
inline constexpr std::size_t kFlagQuartetOctets = 4;
inline constexpr std::size_t kLinkstatePayloadOctets = 32;
inline constexpr std::size_t kStunResponseOctets = 6;

enum class FlowIdType : std::uint8_t { FT32 = 0x0, FT64 = 0x1, FT96 = 0x2 };
enum class Protocol : std::uint8_t { Oam = 0x0, Ipv4 = 0x1, Ipv6 = 0x2 };
enum class SlocType : std::uint8_t { Reserved = 0x0, Ipv4Port48 = 0x1, Srv6 = 0x2, Compressed = 0x3 };
enum class TlvType : std::uint8_t { Padding = 0x0, SrIntegrity = 0x1, PathTelemetry = 0x2 };
enum class OamType : std::uint8_t { Linkstate = 0x0, Traceroute = 0x1, Stun = 0x2 };

namespace oam_subtype {
inline constexpr std::uint8_t kRequest = 0x0;
inline constexpr std::uint8_t kResponse = 0x1;
} // namespace oam_subtype

std::size_t flow_id_octets(FlowIdType type);

/// Opaque 32/64/96-bit flow tag. Octets beyond the type's width are always zero.
class FlowId {
public:
    FlowId() = default;

    static FlowId from_u32(std::uint32_t v);
    static FlowId from_u64(std::uint64_t v);
    /// `octets` must hold exactly flow_id_octets(type) octets.
    static FlowId from_octets(FlowIdType type, std::span<const std::uint8_t> octets);

    FlowIdType type() const { return type_; }
    std::span<const std::uint8_t> octets() const { return {bytes_.data(), flow_id_octets(type_)}; }
    /// Leading 32 bits, big-endian.
    std::uint32_t as_u32() const;

    auto operator<=>(const FlowId&) const = default;

private:
    FlowIdType type_ = FlowIdType::FT32;
    std::array<std::uint8_t, 12> bytes_{};
};

/// Common flag octet: RRR(3) FT(2) C F T. FT lives in the FlowId.
struct Flags {
    std::uint8_t reserved = 0;
    bool encrypted = false;       // C
    bool full_encryption = false; // F
    bool telemetry = false;       // T

    auto operator<=>(const Flags&) const = default;
};

struct Waypoint {
    Endpoint locator;
    auto operator<=>(const Waypoint&) const = default;
};

/// 0xFF | args(24) | function(16)
struct FunctionSegment {
    std::uint32_t args = 0;
    std::uint16_t function = 0;
    auto operator<=>(const FunctionSegment&) const = default;
};

using Segment = std::variant<Waypoint, FunctionSegment>;

struct Tlv {
    TlvType type = TlvType::Padding;
    std::vector<std::uint8_t> value;
    bool operator==(const Tlv&) const = default;
};

/// Data-packet header. last_entry, SRoU Length and SR Hdr Len are derived
/// from the segment list and TLVs on encode and checked on decode.
struct Header {
    Flags flags;
    FlowId flow_id;
    Protocol protocol = Protocol::Ipv4;
    IpAddress source_address = Ipv4Address{};
    std::uint16_t source_port = 0;
    SlocType sloc_type = SlocType::Ipv4Port48;
    std::uint8_t segments_left = 0;
    std::vector<Segment> segments; // reverse visit order: [0] is the final segment
    std::vector<Tlv> tlvs;

    std::uint8_t last_entry() const { return segments.empty() ? 0 : std::uint8_t(segments.size() - 1); }
    Endpoint source_endpoint() const;

    bool operator==(const Header&) const = default;
};

std::size_t sr_hdr_len(const Header& hdr);
std::size_t srou_length(const Header& hdr);

std::vector<std::uint8_t> encode_header(const Header& hdr);

struct DecodedHeader {
    Header header;
    std::size_t consumed = 0;
    bool reserved_bits_set = false;
};

DecodedHeader decode_header(std::span<const std::uint8_t> bytes);

/// Returns the next segment to visit and the header with segments_left decremented.
std::pair<Segment, Header> advance_segment(const Header& hdr);

// ---------------------------------------------------------------- OAM

struct LinkstateBody {
    std::uint32_t seq = 0;
    std::uint64_t timestamp = 0;
    std::uint64_t received_timestamp = 0;
    std::uint32_t sender_seq = 0;
    std::uint64_t sender_timestamp = 0;
    auto operator<=>(const LinkstateBody&) const = default;
};

struct StunObserved {
    Endpoint observed;
    auto operator<=>(const StunObserved&) const = default;
};

using OamPayload = std::variant<std::monostate, LinkstateBody, StunObserved, std::vector<std::uint8_t>>;

struct OamMessage {
    Flags flags;
    FlowId flow_id;
    OamType type = OamType::Linkstate;
    std::uint8_t subtype = oam_subtype::kRequest;
    OamPayload payload;

    static OamMessage linkstate_request(std::uint32_t seq, std::uint64_t timestamp);
    static OamMessage stun_request();
    static OamMessage stun_response(Endpoint observed);

    bool is_linkstate_request() const { return type == OamType::Linkstate && subtype == oam_subtype::kRequest; }
    bool is_linkstate_response() const { return type == OamType::Linkstate && subtype == oam_subtype::kResponse; }

    bool operator==(const OamMessage&) const = default;
};

std::vector<std::uint8_t> encode_oam(const OamMessage& msg);
/// `consumed` receives the SRoU Length of the message when non-null.
OamMessage decode_oam(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

// ---------------------------------------------------------------- packets

struct DataPacket {
    Header header;
    std::vector<std::uint8_t> payload;
    bool operator==(const DataPacket&) const = default;
};

using Packet = std::variant<DataPacket, OamMessage>;

/// Dispatches on Protocol-ID. Bytes after the header of a data packet become its payload.
Packet decode_packet(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_packet(const DataPacket& pkt);

// ---------------------------------------------------------------- functions

/// Registered network functions. Codes are not fixed by the wire format;
/// the default registry maps End.DT2U=0x0001 and End.DT4=0x0002.
enum class FunctionKind { DecapL2, DecapL3 };

class FunctionRegistry {
public:
    struct Entry {
        std::string name;
        FunctionKind kind;
    };

    static const FunctionRegistry& defaults();

    void add(std::uint16_t code, std::string name, FunctionKind kind);
    const Entry* find(std::uint16_t code) const;
    std::optional<std::uint16_t> code_of(FunctionKind kind) const;

private:
    std::map<std::uint16_t, Entry> entries_;
};

inline constexpr std::uint16_t kEndDT2U = 0x0001;
inline constexpr std::uint16_t kEndDT4 = 0x0002;

// ---------------------------------------------------------------- listing

struct AnnotatedField {
    std::size_t offset = 0;
    unsigned bits = 0;
    std::string name;
    std::string value;
};

/// Field-by-field listing of a data packet or OAM message.
std::vector<AnnotatedField> annotate(std::span<const std::uint8_t> bytes,
                                     const FunctionRegistry& registry = FunctionRegistry::defaults());

std::string to_string(const Segment& seg, const FunctionRegistry& registry = FunctionRegistry::defaults());

} // namespace ruta::srou
