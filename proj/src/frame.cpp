#include "ruta/frame.hpp"

#include "ruta/error.hpp"

#include <algorithm>

namespace ruta::frame {

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    put16(out, std::uint16_t(v >> 16));
    put16(out, std::uint16_t(v));
}

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
    return std::uint16_t((b[at] << 8) | b[at + 1]);
}

std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t(get16(b, at)) << 16) | get16(b, at + 2);
}

} // namespace

std::uint16_t internet_checksum(std::span<const std::uint8_t> bytes) {
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) sum += get16(bytes, i);
    if (bytes.size() % 2) sum += std::uint32_t(bytes.back()) << 8;
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return std::uint16_t(~sum);
}

std::vector<std::uint8_t> encode_frame(const HostFrame& f) {
    std::size_t total = kIpv4Octets + f.payload.size();
    if (total > 0xFFFF) throw Error(Errc::OutOfRange, "frame payload too large");
    std::vector<std::uint8_t> out;
    out.reserve(kEthernetOctets + total);
    out.insert(out.end(), f.dst_mac.bytes.begin(), f.dst_mac.bytes.end());
    out.insert(out.end(), f.src_mac.bytes.begin(), f.src_mac.bytes.end());
    put16(out, kEtherTypeIpv4);
    std::size_t ip_at = out.size();
    out.push_back(0x45); // version 4, IHL 5
    out.push_back(0);
    put16(out, std::uint16_t(total));
    put32(out, 0); // identification, flags, fragment offset
    out.push_back(f.ttl);
    out.push_back(kIpProtoUdp);
    put16(out, 0);
    put32(out, f.src_ip.value);
    put32(out, f.dst_ip.value);
    std::uint16_t csum = internet_checksum(std::span(out).subspan(ip_at, kIpv4Octets));
    out[ip_at + 10] = std::uint8_t(csum >> 8);
    out[ip_at + 11] = std::uint8_t(csum);
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

HostFrame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kEthernetOctets + kIpv4Octets)
        throw Error(Errc::TruncatedPayload, "frame shorter than Ethernet+IPv4", bytes.size());
    HostFrame f;
    std::copy_n(bytes.begin(), 6, f.dst_mac.bytes.begin());
    std::copy_n(bytes.begin() + 6, 6, f.src_mac.bytes.begin());
    if (get16(bytes, 12) != kEtherTypeIpv4) throw Error(Errc::MalformedValue, "EtherType is not IPv4", 12);
    auto ip = bytes.subspan(kEthernetOctets);
    if (ip[0] != 0x45) throw Error(Errc::MalformedValue, "unsupported IPv4 version/IHL", kEthernetOctets);
    std::size_t total = get16(ip, 2);
    if (total < kIpv4Octets || total > ip.size())
        throw Error(Errc::TruncatedPayload, "IPv4 total length exceeds frame", kEthernetOctets + 2);
    if (internet_checksum(ip.first(kIpv4Octets)) != 0)
        throw Error(Errc::MalformedValue, "IPv4 header checksum mismatch", kEthernetOctets + 10);
    f.ttl = ip[8];
    f.src_ip = Ipv4Address(get32(ip, 12));
    f.dst_ip = Ipv4Address(get32(ip, 16));
    f.payload.assign(ip.begin() + kIpv4Octets, ip.begin() + std::ptrdiff_t(total));
    return f;
}

std::vector<std::uint8_t> encode_app(const AppPayload& p, std::size_t size) {
    std::vector<std::uint8_t> out;
    out.reserve(std::max(size, kAppPayloadOctets));
    put32(out, p.flow);
    put32(out, p.seq);
    put32(out, std::uint32_t(std::uint64_t(p.sent_at_ns) >> 32));
    put32(out, std::uint32_t(std::uint64_t(p.sent_at_ns)));
    if (out.size() < size) out.resize(size, 0);
    return out;
}

std::optional<AppPayload> decode_app(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kAppPayloadOctets) return std::nullopt;
    AppPayload p;
    p.flow = get32(bytes, 0);
    p.seq = get32(bytes, 4);
    p.sent_at_ns = std::int64_t((std::uint64_t(get32(bytes, 8)) << 32) | get32(bytes, 12));
    return p;
}

} // namespace ruta::frame
