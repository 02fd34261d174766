#include "ruta/kv.hpp"

#include "ruta/error.hpp"

#include <algorithm>

namespace ruta::kv {

struct Watch::State {
    Store* store = nullptr;
    std::shared_ptr<bool> store_alive;
    ClientId client = 0;
    std::string prefix;
    std::deque<WatchEvent> buffer;
    std::function<void()> notify;
    bool notify_scheduled = false;
    bool cancelled = false;
};

namespace {

bool has_prefix(const std::string& key, const std::string& prefix) {
    return key.compare(0, prefix.size(), prefix) == 0;
}

void check_key(const std::string& key) {
    if (key.empty()) throw Error(Errc::InvalidKey, "key must not be empty");
}

} // namespace

// ---------------------------------------------------------------- Watch

std::vector<WatchEvent> Watch::poll() {
    auto& s = *state_;
    if (s.cancelled || !*s.store_alive) return {};
    if (!s.store->reachable(s.client))
        throw Error(Errc::StoreUnavailable, "store " + s.store->name() + " unreachable");
    std::vector<WatchEvent> out(s.buffer.begin(), s.buffer.end());
    s.buffer.clear();
    return out;
}

std::size_t Watch::pending() const { return state_->buffer.size(); }

const std::string& Watch::prefix() const { return state_->prefix; }

void Watch::set_notify(std::function<void()> fn) {
    state_->notify = std::move(fn);
    if (!state_->buffer.empty() && *state_->store_alive) state_->store->schedule_notify(state_);
}

void Watch::cancel() {
    state_->cancelled = true;
    state_->buffer.clear();
    state_->notify = nullptr;
}

// ---------------------------------------------------------------- Store

Store::Store(sim::EventLoop& loop, std::string name)
    : loop_(loop), name_(std::move(name)), alive_(std::make_shared<bool>(true)) {}

Store::~Store() {
    *alive_ = false;
    for (auto& [id, l] : leases_) loop_.cancel(l.timer);
}

Client Store::client(std::string name) {
    clients_.push_back(std::move(name));
    return Client(this, ClientId(clients_.size() - 1));
}

void Store::partition(bool on) {
    partition_all_ = on;
    loop_.record(name_, on ? "partition_on" : "partition_off", "all clients");
    if (!on)
        for (auto& w : watches_)
            if (!w->buffer.empty()) schedule_notify(w);
}

void Store::partition(ClientId client, bool on) {
    if (on)
        partitioned_.insert(client);
    else
        partitioned_.erase(client);
    loop_.record(name_, on ? "partition_on" : "partition_off", clients_.at(client));
    if (!on)
        for (auto& w : watches_)
            if (w->client == client && !w->buffer.empty()) schedule_notify(w);
}

bool Store::reachable(ClientId client) const { return !partition_all_ && !partitioned_.count(client); }

void Store::require(ClientId c) const {
    if (!reachable(c)) throw Error(Errc::StoreUnavailable, "store " + name_ + " unreachable from " + clients_.at(c));
}

void Store::compact(Revision upto) {
    upto = std::min(upto, revision_);
    compacted_ = std::max(compacted_, upto);
    log_.erase(std::remove_if(log_.begin(), log_.end(), [&](const WatchEvent& e) { return e.revision <= compacted_; }),
               log_.end());
}

std::vector<KvEntry> Store::snapshot() const {
    std::vector<KvEntry> out;
    out.reserve(data_.size());
    for (const auto& [k, e] : data_) out.push_back(e);
    return out;
}

std::optional<Lease> Store::lease(LeaseId id) const {
    auto it = leases_.find(id);
    if (it == leases_.end()) return std::nullopt;
    return it->second.lease;
}

std::optional<LeaseId> Store::lease_of(const std::string& key) const {
    auto it = data_.find(key);
    if (it == data_.end()) return std::nullopt;
    return it->second.lease;
}

void Store::schedule_notify(const std::shared_ptr<Watch::State>& w) {
    if (w->cancelled || w->notify_scheduled || !w->notify || !reachable(w->client)) return;
    w->notify_scheduled = true;
    std::weak_ptr<Watch::State> weak = w;
    loop_.schedule_in(sim::Duration(0), [weak] {
        auto s = weak.lock();
        if (!s || !*s->store_alive) return;
        s->notify_scheduled = false;
        if (s->cancelled || s->buffer.empty() || !s->store->reachable(s->client)) return;
        if (s->notify) s->notify();
    });
}

void Store::publish(WatchEvent ev) {
    log_.push_back(ev);
    watches_.erase(std::remove_if(watches_.begin(), watches_.end(), [](const auto& w) { return w->cancelled; }),
                   watches_.end());
    for (auto& w : watches_) {
        if (!has_prefix(ev.entry.key, w->prefix)) continue;
        w->buffer.push_back(ev);
        schedule_notify(w);
    }
}

void Store::put_locked(const std::string& key, const std::string& value, std::optional<LeaseId> lease,
                       Revision rev) {
    auto it = data_.find(key);
    if (it != data_.end() && it->second.lease && it->second.lease != lease) {
        auto l = leases_.find(*it->second.lease);
        if (l != leases_.end()) l->second.keys.erase(key);
    }
    KvEntry& e = data_[key];
    if (it == data_.end()) {
        e.key = key;
        e.create_revision = rev;
    }
    e.value = value;
    e.lease = lease;
    e.mod_revision = rev;
    if (lease) leases_.at(*lease).keys.insert(key);
    publish(WatchEvent{EventKind::Put, e, rev});
}

bool Store::erase_locked(const std::string& key, Revision rev) {
    auto it = data_.find(key);
    if (it == data_.end()) return false;
    KvEntry e = it->second;
    if (e.lease) {
        auto l = leases_.find(*e.lease);
        if (l != leases_.end()) l->second.keys.erase(key);
    }
    data_.erase(it);
    e.mod_revision = rev;
    publish(WatchEvent{EventKind::Delete, std::move(e), rev});
    return true;
}

Revision Store::apply(const std::vector<TxnOp>& ops) {
    for (const auto& op : ops) {
        check_key(op.key);
        if (op.kind == TxnOp::Kind::Put && op.lease && !lease_alive(*op.lease))
            throw Error(Errc::LeaseExpired, "lease " + std::to_string(*op.lease) + " expired");
    }
    Revision rev = ++revision_;
    for (const auto& op : ops) {
        if (op.kind == TxnOp::Kind::Put)
            put_locked(op.key, op.value, op.lease, rev);
        else
            erase_locked(op.key, rev);
    }
    return rev;
}

void Store::expire_lease(LeaseId id) {
    auto it = leases_.find(id);
    if (it == leases_.end()) return;
    std::set<std::string> keys = std::move(it->second.keys);
    leases_.erase(it);
    loop_.record(name_, "lease_expired", "lease=" + std::to_string(id) + " keys=" + std::to_string(keys.size()));
    if (!keys.empty()) {
        Revision rev = ++revision_;
        for (const auto& k : keys) erase_locked(k, rev);
    }
    for (auto& [lname, lock] : locks_) {
        std::erase_if(lock.waiters, [&](const Waiter& w) { return w.session == id; });
        if (lock.holder && lock.holder->session == id) release_lock(lname);
    }
}

void Store::release_lock(const std::string& name) {
    auto& lock = locks_.at(name);
    lock.holder.reset();
    grant_next(name);
}

void Store::grant_next(const std::string& name) {
    auto& lock = locks_.at(name);
    while (!lock.holder && !lock.waiters.empty()) {
        Waiter w = std::move(lock.waiters.front());
        lock.waiters.pop_front();
        if (!lease_alive(w.session)) continue;
        std::string owner_key = "/lock/" + name + "/" + std::to_string(w.session);
        Revision rev = apply({TxnOp{TxnOp::Kind::Put, owner_key, clients_.at(w.client), w.session}});
        LockGuard g{name, w.session, rev};
        lock.holder = g;
        auto alive = alive_;
        loop_.schedule_in(sim::Duration(0), [alive, g, cb = std::move(w.on_acquired)] {
            if (*alive && cb) cb(g);
        });
    }
}

// ---------------------------------------------------------------- Client

bool Client::available() const { return store_->reachable(id_); }

Revision Client::put(const std::string& key, const std::string& value, std::optional<LeaseId> lease) {
    store_->require(id_);
    return store_->apply({TxnOp{TxnOp::Kind::Put, key, value, lease}});
}

std::optional<KvEntry> Client::get(const std::string& key) const {
    store_->require(id_);
    auto it = store_->data_.find(key);
    if (it == store_->data_.end()) return std::nullopt;
    return it->second;
}

bool Client::erase(const std::string& key) {
    store_->require(id_);
    check_key(key);
    if (!store_->data_.count(key)) return false;
    store_->apply({TxnOp{TxnOp::Kind::Delete, key, {}, std::nullopt}});
    return true;
}

std::vector<KvEntry> Client::get_prefix(const std::string& prefix) const {
    store_->require(id_);
    std::vector<KvEntry> out;
    for (auto it = store_->data_.lower_bound(prefix); it != store_->data_.end() && has_prefix(it->first, prefix); ++it)
        out.push_back(it->second);
    return out;
}

Watch Client::watch_prefix(const std::string& prefix, std::optional<Revision> from_revision) {
    store_->require(id_);
    auto st = std::make_shared<Watch::State>();
    st->store = store_;
    st->store_alive = store_->alive_;
    st->client = id_;
    st->prefix = prefix;
    if (from_revision) {
        if (*from_revision <= store_->compacted_)
            throw Error(Errc::CompactedRevision, "revision " + std::to_string(*from_revision) + " has been compacted");
        if (*from_revision > store_->revision_ + 1)
            throw Error(Errc::InvariantViolation, "watch cannot start in the future");
        for (const auto& ev : store_->log_)
            if (ev.revision >= *from_revision && has_prefix(ev.entry.key, prefix)) st->buffer.push_back(ev);
    }
    store_->watches_.push_back(st);
    return Watch(st);
}

Lease Client::grant_lease(sim::Duration ttl) {
    store_->require(id_);
    if (ttl <= sim::Duration(0)) throw Error(Errc::OutOfRange, "lease ttl must be positive");
    LeaseId id = store_->next_lease_++;
    Lease l{id, ttl, store_->loop_.now() + ttl};
    Store* s = store_;
    auto alive = store_->alive_;
    sim::TimerId timer = store_->loop_.schedule_at(l.expires_at, [s, alive, id] {
        if (*alive) s->expire_lease(id);
    });
    store_->leases_[id] = Store::LeaseState{l, id_, timer, {}};
    return l;
}

sim::Time Client::keepalive(LeaseId id) {
    store_->require(id_);
    auto it = store_->leases_.find(id);
    if (it == store_->leases_.end()) throw Error(Errc::LeaseNotFound, "lease " + std::to_string(id) + " not found");
    auto& st = it->second;
    store_->loop_.cancel(st.timer);
    st.lease.expires_at = store_->loop_.now() + st.lease.ttl;
    Store* s = store_;
    auto alive = store_->alive_;
    st.timer = store_->loop_.schedule_at(st.lease.expires_at, [s, alive, id] {
        if (*alive) s->expire_lease(id);
    });
    return st.lease.expires_at;
}

void Client::revoke(LeaseId id) {
    store_->require(id_);
    auto it = store_->leases_.find(id);
    if (it == store_->leases_.end()) throw Error(Errc::LeaseNotFound, "lease " + std::to_string(id) + " not found");
    store_->loop_.cancel(it->second.timer);
    store_->expire_lease(id);
}

void Client::lock(const std::string& name, LeaseId session, std::function<void(LockGuard)> on_acquired) {
    store_->require(id_);
    if (!store_->lease_alive(session))
        throw Error(Errc::LeaseExpired, "lock session lease " + std::to_string(session) + " expired");
    auto& lock = store_->locks_[name];
    bool holds = lock.holder && lock.holder->session == session;
    bool waits = std::any_of(lock.waiters.begin(), lock.waiters.end(),
                             [&](const Store::Waiter& w) { return w.session == session; });
    if (holds || waits) throw Error(Errc::ReentrantLock, "session already holds or awaits lock " + name);
    lock.waiters.push_back(Store::Waiter{id_, session, std::move(on_acquired)});
    store_->grant_next(name);
}

void Client::unlock(const LockGuard& guard) {
    store_->require(id_);
    auto it = store_->locks_.find(guard.name);
    if (it == store_->locks_.end() || !it->second.holder || it->second.holder->session != guard.session ||
        it->second.holder->revision != guard.revision)
        throw Error(Errc::LockAbandoned, "lock " + guard.name + " is no longer held by this session");
    std::string owner_key = "/lock/" + guard.name + "/" + std::to_string(guard.session);
    store_->apply({TxnOp{TxnOp::Kind::Delete, owner_key, {}, std::nullopt}});
    store_->release_lock(guard.name);
}

TxnResult Client::txn(const Txn& t) {
    store_->require(id_);
    bool ok = true;
    for (const auto& c : t.compares) {
        auto it = store_->data_.find(c.key);
        bool exists = it != store_->data_.end();
        switch (c.target) {
        case Compare::Target::Exists: ok = exists; break;
        case Compare::Target::Missing: ok = !exists; break;
        case Compare::Target::ValueEquals: ok = exists && it->second.value == c.value; break;
        case Compare::Target::ModRevisionEquals: ok = exists && it->second.mod_revision == c.revision; break;
        }
        if (!ok) break;
    }
    const auto& ops = ok ? t.success : t.failure;
    Revision rev = ops.empty() ? store_->revision_ : store_->apply(ops);
    return TxnResult{ok, rev};
}

} // namespace ruta::kv
