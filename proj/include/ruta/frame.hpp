#pragma once

// Host-side frames carried inside SRoU: Ethernet II + IPv4 + opaque payload,
// and the probe-traffic payload used to measure delivery and latency.

#include "ruta/net.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ruta::frame {

inline constexpr std::size_t kEthernetOctets = 14;
inline constexpr std::size_t kIpv4Octets = 20;
inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint8_t kIpProtoUdp = 17;

struct HostFrame {
    MacAddress dst_mac;
    MacAddress src_mac;
    Ipv4Address src_ip;
    Ipv4Address dst_ip;
    std::uint8_t ttl = 64;
    std::vector<std::uint8_t> payload;
    bool operator==(const HostFrame&) const = default;
};

std::vector<std::uint8_t> encode_frame(const HostFrame& f);
/// Throws TruncatedPayload or MalformedValue (wrong EtherType, version, checksum or length).
HostFrame decode_frame(std::span<const std::uint8_t> bytes);

/// RFC 1071 checksum over `bytes`.
std::uint16_t internet_checksum(std::span<const std::uint8_t> bytes);

/// Traffic payload: flow number, sequence, send time; zero padded to `size`.
struct AppPayload {
    std::uint32_t flow = 0;
    std::uint32_t seq = 0;
    std::int64_t sent_at_ns = 0;
    bool operator==(const AppPayload&) const = default;
};

inline constexpr std::size_t kAppPayloadOctets = 16;

std::vector<std::uint8_t> encode_app(const AppPayload& p, std::size_t size = kAppPayloadOctets);
/// nullopt when shorter than kAppPayloadOctets.
std::optional<AppPayload> decode_app(std::span<const std::uint8_t> bytes);

} // namespace ruta::frame
