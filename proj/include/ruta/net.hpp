#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <variant>

namespace ruta {

/// IPv4 address held in host order.
struct Ipv4Address {
    std::uint32_t value = 0;

    constexpr Ipv4Address() = default;
    constexpr explicit Ipv4Address(std::uint32_t v) : value(v) {}
    constexpr Ipv4Address(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
        : value((std::uint32_t(a) << 24) | (std::uint32_t(b) << 16) | (std::uint32_t(c) << 8) | d) {}

    constexpr bool is_zero() const { return value == 0; }
    constexpr std::uint8_t octet(int i) const { return std::uint8_t(value >> (24 - 8 * i)); }

    static Ipv4Address parse(std::string_view text);
    std::string to_string() const;

    auto operator<=>(const Ipv4Address&) const = default;
};

struct Ipv6Address {
    std::array<std::uint8_t, 16> bytes{};

    bool is_zero() const;
    static Ipv6Address parse(std::string_view text);
    std::string to_string() const;

    auto operator<=>(const Ipv6Address&) const = default;
};

using IpAddress = std::variant<Ipv4Address, Ipv6Address>;

std::string to_string(const IpAddress& addr);

/// UDP endpoint (IPv4 address + port).
struct Endpoint {
    Ipv4Address ip;
    std::uint16_t port = 0;

    constexpr bool is_zero() const { return ip.is_zero() && port == 0; }

    /// Parses "a.b.c.d:port".
    static Endpoint parse(std::string_view text);
    std::string to_string() const;

    auto operator<=>(const Endpoint&) const = default;
};

struct MacAddress {
    std::array<std::uint8_t, 6> bytes{};

    static MacAddress parse(std::string_view text);
    std::string to_string() const;
    bool is_broadcast() const;

    auto operator<=>(const MacAddress&) const = default;
};

struct Ipv4Prefix {
    Ipv4Address network;
    std::uint8_t length = 0;

    /// Throws OutOfRange for length > 32; host bits are cleared.
    static Ipv4Prefix make(Ipv4Address addr, int length);
    /// Parses "a.b.c.d/len".
    static Ipv4Prefix parse(std::string_view text);

    bool contains(Ipv4Address addr) const;
    std::string to_string() const;

    auto operator<=>(const Ipv4Prefix&) const = default;
};

constexpr std::uint32_t prefix_mask(int length) {
    return length == 0 ? 0u : ~std::uint32_t(0) << (32 - length);
}

} // namespace ruta

template <>
struct std::hash<ruta::Ipv4Address> {
    std::size_t operator()(const ruta::Ipv4Address& a) const noexcept { return std::hash<std::uint32_t>{}(a.value); }
};

template <>
struct std::hash<ruta::Endpoint> {
    std::size_t operator()(const ruta::Endpoint& e) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t(e.ip.value) << 16) | e.port);
    }
};
