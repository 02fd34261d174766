#include "ruta/token.hpp"

#include "ruta/error.hpp"

#include <sodium.h>

namespace ruta::token {

static_assert(kKeyOctets == crypto_shorthash_KEYBYTES);

EdgeToken::EdgeToken(Key key, sim::Duration bucket, int window) : key_(key), bucket_(bucket), window_(window) {
    if (bucket_.count() <= 0) throw Error(Errc::OutOfRange, "token bucket must be positive");
    if (window_ < 0) throw Error(Errc::OutOfRange, "token window must be non-negative");
    if (sodium_init() < 0) throw Error(Errc::InvariantViolation, "libsodium initialisation failed");
}

std::uint32_t EdgeToken::mint_for_bucket(Ipv4Address client, std::int64_t bucket) const {
    std::array<std::uint8_t, 12> msg{};
    for (int i = 0; i < 4; ++i) msg[std::size_t(i)] = client.octet(i);
    for (int i = 0; i < 8; ++i) msg[std::size_t(4 + i)] = std::uint8_t(std::uint64_t(bucket) >> (56 - 8 * i));
    std::array<std::uint8_t, crypto_shorthash_BYTES> out{};
    crypto_shorthash(out.data(), msg.data(), msg.size(), key_.data());
    return (std::uint32_t(out[0]) << 24) | (std::uint32_t(out[1]) << 16) | (std::uint32_t(out[2]) << 8) | out[3];
}

std::uint32_t EdgeToken::mint(Ipv4Address client, sim::Time now) const {
    return mint_for_bucket(client, bucket_of(now));
}

bool EdgeToken::validate(std::uint32_t token, Ipv4Address client, sim::Time now) const {
    std::int64_t b = bucket_of(now);
    bool ok = false;
    // Constant work per call regardless of which bucket matches.
    for (int i = 0; i <= window_; ++i) ok |= mint_for_bucket(client, b - i) == token;
    return ok;
}

Key key_from_seed(std::uint64_t seed) {
    if (sodium_init() < 0) throw Error(Errc::InvariantViolation, "libsodium initialisation failed");
    std::array<std::uint8_t, 8> in{};
    for (int i = 0; i < 8; ++i) in[std::size_t(i)] = std::uint8_t(seed >> (56 - 8 * i));
    Key k{};
    crypto_generichash(k.data(), k.size(), in.data(), in.size(), nullptr, 0);
    return k;
}

} // namespace ruta::token
