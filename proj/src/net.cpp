#include "ruta/net.hpp"

#include "ruta/error.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cstdio>

namespace ruta {

namespace {

[[noreturn]] void bad(std::string_view what, std::string_view text) {
    throw Error(Errc::ParseError, std::string(what) + ": '" + std::string(text) + "'");
}

template <typename T>
T parse_number(std::string_view text, std::string_view what, T max) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty() || v > std::uint64_t(max)) bad(what, text);
    return static_cast<T>(v);
}

} // namespace

const char* to_string(Errc code) noexcept {
    switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedHeader: return "TruncatedHeader";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnsupportedSlocType: return "UnsupportedSlocType";
    case Errc::UnsupportedProtocol: return "UnsupportedProtocol";
    case Errc::InvalidFlowIdType: return "InvalidFlowIdType";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::NoSegmentsLeft: return "NoSegmentsLeft";
    case Errc::UnknownOamType: return "UnknownOamType";
    case Errc::UnknownOamSubtype: return "UnknownOamSubtype";
    case Errc::InvalidKey: return "InvalidKey";
    case Errc::LeaseExpired: return "LeaseExpired";
    case Errc::LeaseNotFound: return "LeaseNotFound";
    case Errc::StoreUnavailable: return "StoreUnavailable";
    case Errc::CompactedRevision: return "CompactedRevision";
    case Errc::LockAbandoned: return "LockAbandoned";
    case Errc::ReentrantLock: return "ReentrantLock";
    case Errc::LabelSpaceExhausted: return "LabelSpaceExhausted";
    case Errc::DuplicateSystemName: return "DuplicateSystemName";
    case Errc::NotRegistered: return "NotRegistered";
    case Errc::MalformedRoute: return "MalformedRoute";
    case Errc::MalformedValue: return "MalformedValue";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::MalformedOam: return "MalformedOam";
    case Errc::EmptyWindow: return "EmptyWindow";
    case Errc::Timeout: return "Timeout";
    case Errc::NoRoute: return "NoRoute";
    case Errc::NoProbeData: return "NoProbeData";
    case Errc::NoFeasiblePath: return "NoFeasiblePath";
    case Errc::TooManySegments: return "TooManySegments";
    case Errc::PolicyDeny: return "PolicyDeny";
    case Errc::UnknownFunction: return "UnknownFunction";
    case Errc::NoL2Entry: return "NoL2Entry";
    case Errc::NoVrfRoute: return "NoVrfRoute";
    case Errc::LinkDown: return "LinkDown";
    case Errc::NoMapping: return "NoMapping";
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::SnapshotMissing: return "SnapshotMissing";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& what, std::optional<std::size_t> offset)
    : std::runtime_error(what), code_(code), offset_(offset) {}

Ipv4Address Ipv4Address::parse(std::string_view text) {
    std::uint32_t v = 0;
    std::size_t start = 0;
    for (int i = 0; i < 4; ++i) {
        auto dot = text.find('.', start);
        if ((i < 3) != (dot != std::string_view::npos)) bad("invalid IPv4 address", text);
        auto part = text.substr(start, i < 3 ? dot - start : std::string_view::npos);
        v = (v << 8) | parse_number<std::uint32_t>(part, "invalid IPv4 address", 255);
        start = dot + 1;
    }
    return Ipv4Address(v);
}

std::string Ipv4Address::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", octet(0), octet(1), octet(2), octet(3));
    return buf;
}

bool Ipv6Address::is_zero() const {
    for (auto b : bytes)
        if (b != 0) return false;
    return true;
}

Ipv6Address Ipv6Address::parse(std::string_view text) {
    Ipv6Address a;
    std::string s(text);
    if (inet_pton(AF_INET6, s.c_str(), a.bytes.data()) != 1) bad("invalid IPv6 address", text);
    return a;
}

std::string Ipv6Address::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
    return buf;
}

std::string to_string(const IpAddress& addr) {
    return std::visit([](const auto& a) { return a.to_string(); }, addr);
}

Endpoint Endpoint::parse(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) bad("endpoint must be ip:port", text);
    return Endpoint{Ipv4Address::parse(text.substr(0, colon)),
                    parse_number<std::uint16_t>(text.substr(colon + 1), "invalid port", 65535)};
}

std::string Endpoint::to_string() const { return ip.to_string() + ":" + std::to_string(port); }

MacAddress MacAddress::parse(std::string_view text) {
    MacAddress m;
    if (text.size() != 17) bad("invalid MAC address", text);
    for (int i = 0; i < 6; ++i) {
        if (i > 0 && text[i * 3 - 1] != ':') bad("invalid MAC address", text);
        auto part = text.substr(i * 3, 2);
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + 2, v, 16);
        if (ec != std::errc{} || ptr != part.data() + 2) bad("invalid MAC address", text);
        m.bytes[i] = std::uint8_t(v);
    }
    return m;
}

std::string MacAddress::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1], bytes[2], bytes[3],
                  bytes[4], bytes[5]);
    return buf;
}

bool MacAddress::is_broadcast() const {
    for (auto b : bytes)
        if (b != 0xff) return false;
    return true;
}

Ipv4Prefix Ipv4Prefix::make(Ipv4Address addr, int length) {
    if (length < 0 || length > 32) throw Error(Errc::OutOfRange, "prefix length out of range: " + std::to_string(length));
    return Ipv4Prefix{Ipv4Address(addr.value & prefix_mask(length)), std::uint8_t(length)};
}

Ipv4Prefix Ipv4Prefix::parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) bad("prefix must be ip/len", text);
    return make(Ipv4Address::parse(text.substr(0, slash)),
                parse_number<int>(text.substr(slash + 1), "invalid prefix length", 32));
}

bool Ipv4Prefix::contains(Ipv4Address addr) const {
    return (addr.value & prefix_mask(length)) == network.value;
}

std::string Ipv4Prefix::to_string() const { return network.to_string() + "/" + std::to_string(length); }

} // namespace ruta
