#pragma once

#include "ruta/net.hpp"

#include <array>
#include <optional>
#include <unordered_map>

namespace ruta {

/// IPv4 longest-prefix match: one exact-match table per mask length.
template <typename T>
class Lpm {
public:
    void insert(Ipv4Prefix p, T value) {
        auto& slot = tables_[p.length];
        if (slot.insert_or_assign(p.network.value & prefix_mask(p.length), std::move(value)).second) ++size_;
    }

    bool erase(Ipv4Prefix p) {
        bool removed = tables_[p.length].erase(p.network.value & prefix_mask(p.length)) != 0;
        if (removed) --size_;
        return removed;
    }

    /// Longest matching prefix and its value.
    std::optional<std::pair<Ipv4Prefix, const T*>> lookup(Ipv4Address addr) const {
        for (int len = 32; len >= 0; --len) {
            const auto& t = tables_[std::size_t(len)];
            if (t.empty()) continue;
            auto net = addr.value & prefix_mask(len);
            auto it = t.find(net);
            if (it != t.end()) return std::make_pair(Ipv4Prefix{Ipv4Address(net), std::uint8_t(len)}, &it->second);
        }
        return std::nullopt;
    }

    const T* exact(Ipv4Prefix p) const {
        const auto& t = tables_[p.length];
        auto it = t.find(p.network.value & prefix_mask(p.length));
        return it == t.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

private:
    std::array<std::unordered_map<std::uint32_t, T>, 33> tables_;
    std::size_t size_ = 0;
};

} // namespace ruta
