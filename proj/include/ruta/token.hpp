#pragma once

// Time-bucketed admission token for native-socket clients, carried in the
// FT32 flow id and checked statelessly at the edge fabric.

#include "ruta/net.hpp"
#include "ruta/netsim.hpp"

#include <array>
#include <cstdint>

namespace ruta::token {

inline constexpr std::size_t kKeyOctets = 16;
using Key = std::array<std::uint8_t, kKeyOctets>;

class EdgeToken {
public:
    /// `window` is the number of earlier buckets still accepted.
    explicit EdgeToken(Key key, sim::Duration bucket = std::chrono::seconds(30), int window = 1);

    /// Leading 32 bits of SipHash-2-4(key, client_ip || bucket).
    std::uint32_t mint(Ipv4Address client, sim::Time now) const;
    std::uint32_t mint_for_bucket(Ipv4Address client, std::int64_t bucket) const;
    bool validate(std::uint32_t token, Ipv4Address client, sim::Time now) const;

    std::int64_t bucket_of(sim::Time now) const { return now.count() / bucket_.count(); }
    sim::Duration bucket() const { return bucket_; }
    int window() const { return window_; }

private:
    Key key_;
    sim::Duration bucket_;
    int window_;
};

/// Derives a key from a scenario seed so runs stay reproducible.
Key key_from_seed(std::uint64_t seed);

} // namespace ruta::token
