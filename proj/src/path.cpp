#include "ruta/path.hpp"

#include "ruta/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ruta::path {

void validate(const SlaPolicy& p) {
    if (!(p.max_delay_ms > 0) || !std::isfinite(p.max_delay_ms))
        throw Error(Errc::OutOfRange, "max_delay_ms must be positive");
    if (!(p.max_loss >= 0 && p.max_loss <= 1)) throw Error(Errc::OutOfRange, "max_loss must lie in [0,1]");
    if (p.max_segments == 0 || p.max_segments > 255) throw Error(Errc::OutOfRange, "max_segments must lie in [1,255]");
    if (!(p.loss_penalty_ms >= 0) || !(p.jitter_weight >= 0))
        throw Error(Errc::OutOfRange, "cost weights must be non-negative");
}

// ---------------------------------------------------------------- mirror

Mirror::Mirror(kv::Client client, std::string prefix) : client_(client), prefix_(std::move(prefix)) { attach(); }

void Mirror::attach() {
    try {
        auto snap = client_.get_prefix(prefix_);
        auto w = client_.watch_prefix(prefix_);
        entries_.clear();
        for (auto& e : snap) entries_.emplace(e.key, std::move(e));
        watch_ = std::move(w);
        headless_ = false;
        epoch_ = client_.store().revision();
    } catch (const Error& e) {
        if (e.code() != Errc::StoreUnavailable) throw;
        headless_ = true;
    }
}

std::vector<kv::WatchEvent> Mirror::sync() {
    if (!watch_) {
        auto before = entries_;
        attach();
        if (!watch_) return {};
        // Report the difference as synthetic events at the attach revision.
        std::vector<kv::WatchEvent> diff;
        for (const auto& [k, e] : before)
            if (!entries_.count(k)) diff.push_back({kv::EventKind::Delete, e, epoch_});
        for (const auto& [k, e] : entries_) {
            auto it = before.find(k);
            if (it == before.end() || !(it->second == e)) diff.push_back({kv::EventKind::Put, e, e.mod_revision});
        }
        return diff;
    }
    std::vector<kv::WatchEvent> events;
    try {
        events = watch_->poll();
    } catch (const Error& e) {
        if (e.code() != Errc::StoreUnavailable) throw;
        headless_ = true;
        return {};
    }
    for (const auto& ev : events) {
        if (ev.kind == kv::EventKind::Put)
            entries_[ev.entry.key] = ev.entry;
        else
            entries_.erase(ev.entry.key);
    }
    headless_ = false;
    epoch_ = client_.store().revision();
    return events;
}

// ---------------------------------------------------------------- route table

RouteTable::RouteTable(std::vector<Import> imports) : imports_(std::move(imports)) {
    std::sort(imports_.begin(), imports_.end(), [](const Import& a, const Import& b) {
        return std::tie(a.type, a.rt, a.table_id) < std::tie(b.type, b.rt, b.table_id);
    });
    imports_.erase(std::unique(imports_.begin(), imports_.end(),
                               [](const Import& a, const Import& b) { return a.type == b.type && a.rt == b.rt; }),
                   imports_.end());
}

std::vector<std::string> RouteTable::watch_prefixes() const {
    std::vector<std::string> out;
    for (const auto& i : imports_) out.push_back(schema::route_prefix(i.type, i.rt));
    return out;
}

std::optional<std::uint32_t> RouteTable::table_for(const schema::ServiceRoute& r) const {
    for (const auto& i : imports_)
        if (i.type == r.type && i.rt == r.export_rt) return i.table_id;
    return std::nullopt;
}

bool RouteTable::upsert(const schema::ServiceRoute& r) {
    auto table = table_for(r);
    if (!table) return false;
    auto key = r.key();
    erase(key);
    routes_[key] = r;
    table_of_[key] = *table;
    if (r.type == schema::RouteType::Type2) {
        by_mac_[{*table, r.mac}] = key;
        if (!r.ip.is_zero()) by_host_[{*table, r.ip}] = key;
    } else {
        by_prefix_[*table].insert(r.prefix, key);
    }
    return true;
}

bool RouteTable::erase(const std::string& key) {
    auto it = routes_.find(key);
    if (it == routes_.end()) return false;
    const auto& r = it->second;
    std::uint32_t table = table_of_.at(key);
    if (r.type == schema::RouteType::Type2) {
        auto m = by_mac_.find({table, r.mac});
        if (m != by_mac_.end() && m->second == key) by_mac_.erase(m);
        auto h = by_host_.find({table, r.ip});
        if (h != by_host_.end() && h->second == key) by_host_.erase(h);
    } else {
        auto& lpm = by_prefix_[table];
        const auto* cur = lpm.exact(r.prefix);
        if (cur && *cur == key) lpm.erase(r.prefix);
    }
    table_of_.erase(key);
    routes_.erase(it);
    return true;
}

std::vector<std::string> RouteTable::rebuild(const std::vector<kv::KvEntry>& entries) {
    routes_.clear();
    table_of_.clear();
    by_mac_.clear();
    by_host_.clear();
    by_prefix_.clear();
    std::vector<std::string> bad;
    for (const auto& e : entries) {
        try {
            upsert(schema::parse_route(e.key, e.value));
        } catch (const Error&) {
            bad.push_back(e.key);
        }
    }
    return bad;
}

bool RouteTable::apply(const kv::WatchEvent& ev) {
    if (ev.kind == kv::EventKind::Delete) return erase(ev.entry.key);
    try {
        return upsert(schema::parse_route(ev.entry.key, ev.entry.value));
    } catch (const Error&) {
        // A malformed replacement withdraws whatever the key held before.
        erase(ev.entry.key);
        return false;
    }
}

const schema::ServiceRoute& RouteTable::resolve_mac(std::uint32_t vnid, MacAddress mac) const {
    auto it = by_mac_.find({vnid, mac});
    if (it == by_mac_.end())
        throw Error(Errc::NoRoute, "no Type2 route for " + mac.to_string() + " in VNID " + std::to_string(vnid));
    return routes_.at(it->second);
}

const schema::ServiceRoute& RouteTable::resolve_ip(std::uint32_t vrf, Ipv4Address ip) const {
    if (auto h = by_host_.find({vrf, ip}); h != by_host_.end()) return routes_.at(h->second);
    if (auto t = by_prefix_.find(vrf); t != by_prefix_.end())
        if (auto hit = t->second.lookup(ip)) return routes_.at(*hit->second);
    throw Error(Errc::NoRoute, "no route for " + ip.to_string() + " in VRF " + std::to_string(vrf));
}

RouteSync::RouteSync(kv::Client client, RouteTable& table) : table_(table) {
    std::vector<kv::KvEntry> all;
    for (const auto& p : table_.watch_prefixes()) {
        mirrors_.emplace_back(client, p);
        for (const auto& [k, e] : mirrors_.back().entries()) all.push_back(e);
    }
    table_.rebuild(all);
}

void RouteSync::sync() {
    last_applied_.clear();
    std::vector<kv::WatchEvent> events;
    for (auto& m : mirrors_) {
        auto evs = m.sync();
        events.insert(events.end(), evs.begin(), evs.end());
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const kv::WatchEvent& a, const kv::WatchEvent& b) { return a.revision < b.revision; });
    for (const auto& ev : events) {
        table_.apply(ev);
        last_applied_.push_back(ev.revision);
    }
}

bool RouteSync::headless() const {
    return std::any_of(mirrors_.begin(), mirrors_.end(), [](const Mirror& m) { return m.headless(); });
}

kv::Revision RouteSync::epoch() const {
    kv::Revision e = std::numeric_limits<kv::Revision>::max();
    for (const auto& m : mirrors_) e = std::min(e, m.epoch());
    return mirrors_.empty() ? 0 : e;
}

// ---------------------------------------------------------------- SLA

std::string_view to_string(SlaReason r) {
    switch (r) {
    case SlaReason::None: return "none";
    case SlaReason::Delay: return "delay";
    case SlaReason::Loss: return "loss";
    case SlaReason::Down: return "down";
    case SlaReason::Unknown: return "no-probe-data";
    }
    return "?";
}

SlaVerdict evaluate_sla(const std::optional<schema::LinkStateRecord>& direct, const SlaPolicy& policy) {
    if (!direct) return {false, SlaReason::Unknown};
    if (direct->status == schema::LinkStatus::Down) return {false, SlaReason::Down};
    if (direct->two_way_delay_us / 2.0 / 1000.0 > policy.max_delay_ms) return {false, SlaReason::Delay};
    if (direct->loss > policy.max_loss) return {false, SlaReason::Loss};
    return {};
}

// ---------------------------------------------------------------- graph

Cost edge_cost(const schema::LinkStateRecord& r, const SlaPolicy& policy) {
    double ms = r.two_way_delay_us / 2.0 / 1000.0 + policy.loss_penalty_ms * r.loss +
                policy.jitter_weight * r.jitter_us / 1000.0;
    return std::llround(ms * 1e6);
}

LinkGraph::LinkGraph(const std::vector<schema::LinkStateRecord>& records, const SlaPolicy& policy) {
    for (const auto& r : records) {
        if (r.status == schema::LinkStatus::Down) continue;
        auto from = r.src.render();
        auto to = r.dst.render();
        Cost c = edge_cost(r, policy);
        add_edge(from, to, c, true);
        add_edge(to, from, c, false);
    }
    // A measured-down direction must not survive through its reverse record.
    for (const auto& r : records)
        if (r.status == schema::LinkStatus::Down) remove_edge(r.src.render(), r.dst.render());
}

void LinkGraph::add_edge(const std::string& from, const std::string& to, Cost cost, bool measured) {
    if (cost < 0) throw Error(Errc::OutOfRange, "negative edge cost");
    if (from == to) return;
    auto key = std::make_pair(from, to);
    if (!measured && measured_.count(key)) return;
    if (measured) measured_.insert(key);
    adj_[from][to] = Edge{to, cost};
    adj_.try_emplace(to);
}

void LinkGraph::remove_edge(const std::string& from, const std::string& to) {
    auto it = adj_.find(from);
    if (it != adj_.end()) it->second.erase(to);
    measured_.erase({from, to});
}

std::optional<Cost> LinkGraph::cost(const std::string& from, const std::string& to) const {
    auto it = adj_.find(from);
    if (it == adj_.end()) return std::nullopt;
    auto e = it->second.find(to);
    if (e == it->second.end()) return std::nullopt;
    return e->second.cost;
}

std::string_view to_string(PathSource s) {
    switch (s) {
    case PathSource::Direct: return "direct";
    case PathSource::Engineered: return "engineered";
    case PathSource::PolicySteer: return "policy-steer";
    }
    return "?";
}

namespace {

struct Label {
    Cost cost = 0;
    std::vector<std::string> seq; // source first
};

bool better(const Label& a, const Label& b) { return std::tie(a.cost, a.seq) < std::tie(b.cost, b.seq); }

} // namespace

ComputedPath compute_path(const LinkGraph& g, const std::vector<std::string>& srcs,
                          const std::vector<std::string>& dsts, const SlaPolicy& policy) {
    std::set<std::string> dst_set(dsts.begin(), dsts.end());
    std::set<std::string> src_set(srcs.begin(), srcs.end());
    const auto& adj = g.adjacency();

    // layer[v] = best walk of exactly k hops ending at v
    std::map<std::string, Label> layer;
    for (const auto& s : src_set)
        if (!dst_set.count(s)) layer[s] = Label{0, {s}};

    std::optional<Label> best;
    std::size_t best_hops = 0;
    for (std::size_t k = 1; k <= policy.max_segments && !layer.empty(); ++k) {
        std::map<std::string, Label> next;
        for (const auto& [v, lab] : layer) {
            // Only sources (at k-1 == 0) and relays may forward.
            if (k > 1 && (!g.may_relay(v) || src_set.count(v))) continue;
            auto a = adj.find(v);
            if (a == adj.end()) continue;
            for (const auto& [w, e] : a->second) {
                if (src_set.count(w)) continue;
                Label cand{lab.cost + e.cost, lab.seq};
                cand.seq.push_back(w);
                auto it = next.find(w);
                if (it == next.end() || better(cand, it->second)) next[w] = std::move(cand);
            }
        }
        for (auto it = next.begin(); it != next.end();) {
            if (dst_set.count(it->first)) {
                if (!best || it->second.cost < best->cost ||
                    (it->second.cost == best->cost && k == best_hops && it->second.seq < best->seq)) {
                    best = it->second;
                    best_hops = k;
                }
                it = next.erase(it); // destinations are terminal
            } else {
                ++it;
            }
        }
        layer = std::move(next);
    }
    if (!best) throw Error(Errc::NoFeasiblePath, "no path within " + std::to_string(policy.max_segments) + " hops");

    ComputedPath p;
    p.src = best->seq.front();
    p.waypoints.assign(best->seq.begin() + 1, best->seq.end());
    p.cost = best->cost;
    p.source = p.waypoints.size() == 1 ? PathSource::Direct : PathSource::Engineered;
    return p;
}

SegmentList to_segment_list(const std::vector<Endpoint>& waypoints, std::uint16_t function, std::uint32_t vnid,
                            std::size_t max_segments) {
    if (waypoints.empty()) throw Error(Errc::InvariantViolation, "path has no waypoints");
    if (waypoints.size() > max_segments)
        throw Error(Errc::TooManySegments, std::to_string(waypoints.size()) + " segments exceed budget of " +
                                               std::to_string(max_segments));
    if (vnid > 0xFFFFFF) throw Error(Errc::OutOfRange, "function argument exceeds 24 bits");
    SegmentList out;
    out.outer_dst = waypoints.front();
    out.segments.push_back(srou::FunctionSegment{vnid, function});
    for (std::size_t i = waypoints.size(); i-- > 1;) out.segments.push_back(srou::Waypoint{waypoints[i]});
    out.segments_left = std::uint8_t(out.segments.size());
    return out;
}

} // namespace ruta::path
