#pragma once

// In-process K-V control-plane store: revisions, prefix reads, prefix watches,
// leases, FIFO locks and compare-and-swap transactions, driven by the
// simulator's virtual clock. Everything runs on the event-loop thread.

#include "ruta/netsim.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ruta::kv {

using Revision = std::int64_t;
using LeaseId = std::int64_t;
using ClientId = std::uint32_t;

struct KvEntry {
    std::string key;
    std::string value; // opaque octets
    std::optional<LeaseId> lease;
    Revision create_revision = 0;
    Revision mod_revision = 0;
    bool operator==(const KvEntry&) const = default;
};

struct Lease {
    LeaseId id = 0;
    sim::Duration ttl{0};
    sim::Time expires_at{0};
};

enum class EventKind { Put, Delete };

struct WatchEvent {
    EventKind kind = EventKind::Put;
    KvEntry entry;
    Revision revision = 0;
    bool operator==(const WatchEvent&) const = default;
};

struct LockGuard {
    std::string name;
    LeaseId session = 0;
    Revision revision = 0;
};

struct Compare {
    enum class Target { Exists, Missing, ValueEquals, ModRevisionEquals };
    std::string key;
    Target target = Target::Exists;
    std::string value;
    Revision revision = 0;
};

struct TxnOp {
    enum class Kind { Put, Delete };
    Kind kind = Kind::Put;
    std::string key;
    std::string value;
    std::optional<LeaseId> lease;
};

struct Txn {
    std::vector<Compare> compares;
    std::vector<TxnOp> success;
    std::vector<TxnOp> failure;
};

struct TxnResult {
    bool succeeded = false;
    Revision revision = 0;
};

class Store;

/// Single-consumer stream of events under one prefix.
class Watch {
public:
    /// Drains buffered events in revision order. Throws StoreUnavailable
    /// while the owning client is partitioned; buffered events are kept.
    std::vector<WatchEvent> poll();
    std::size_t pending() const;
    const std::string& prefix() const;
    /// Invoked (via the event loop) after new events become deliverable.
    void set_notify(std::function<void()> fn);
    void cancel();

private:
    friend class Store;
    friend class Client;
    struct State;
    explicit Watch(std::shared_ptr<State> s) : state_(std::move(s)) {}
    std::shared_ptr<State> state_;
};

class Client;

class Store {
public:
    explicit Store(sim::EventLoop& loop, std::string name = "etcd");
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    Client client(std::string name);

    const std::string& name() const { return name_; }
    Revision revision() const { return revision_; }
    sim::EventLoop& loop() { return loop_; }

    /// Store-wide partition: every client loses access.
    void partition(bool on);
    void partition(ClientId client, bool on);
    bool reachable(ClientId client) const;

    /// Discards history at or below `upto`; watches may not start there afterwards.
    void compact(Revision upto);

    // Introspection, not subject to partitions.
    std::vector<KvEntry> snapshot() const;
    const std::vector<WatchEvent>& history() const { return log_; }
    std::optional<Lease> lease(LeaseId id) const;
    std::optional<LeaseId> lease_of(const std::string& key) const;
    const std::string& client_name(ClientId id) const { return clients_.at(id); }

private:
    friend class Client;
    friend class Watch;

    struct LeaseState {
        Lease lease;
        ClientId owner = 0;
        sim::TimerId timer = 0;
        std::set<std::string> keys;
    };
    struct Waiter {
        ClientId client;
        LeaseId session;
        std::function<void(LockGuard)> on_acquired;
    };
    struct LockState {
        std::optional<LockGuard> holder;
        std::deque<Waiter> waiters;
    };

    void require(ClientId c) const;
    Revision apply(const std::vector<TxnOp>& ops);
    void put_locked(const std::string& key, const std::string& value, std::optional<LeaseId> lease, Revision rev);
    bool erase_locked(const std::string& key, Revision rev);
    void publish(WatchEvent ev);
    void schedule_notify(const std::shared_ptr<Watch::State>& w);
    void expire_lease(LeaseId id);
    void release_lock(const std::string& name);
    void grant_next(const std::string& name);
    bool lease_alive(LeaseId id) const { return leases_.count(id) != 0; }

    sim::EventLoop& loop_;
    std::string name_;
    Revision revision_ = 0;
    Revision compacted_ = 0;
    LeaseId next_lease_ = 1;
    std::map<std::string, KvEntry> data_;
    std::map<LeaseId, LeaseState> leases_;
    std::map<std::string, LockState> locks_;
    std::vector<WatchEvent> log_;
    std::vector<std::shared_ptr<Watch::State>> watches_;
    std::vector<std::string> clients_;
    std::set<ClientId> partitioned_;
    bool partition_all_ = false;
    std::shared_ptr<bool> alive_;
};

/// Lightweight handle identifying one store client. Copyable.
class Client {
public:
    Client() = default;

    ClientId id() const { return id_; }
    Store& store() const { return *store_; }
    bool valid() const { return store_ != nullptr; }
    bool available() const;

    Revision put(const std::string& key, const std::string& value, std::optional<LeaseId> lease = std::nullopt);
    std::optional<KvEntry> get(const std::string& key) const;
    bool erase(const std::string& key);
    /// Live keys under `prefix`, key-sorted.
    std::vector<KvEntry> get_prefix(const std::string& prefix) const;
    Watch watch_prefix(const std::string& prefix, std::optional<Revision> from_revision = std::nullopt);

    Lease grant_lease(sim::Duration ttl);
    sim::Time keepalive(LeaseId id);
    void revoke(LeaseId id);

    /// FIFO lock tied to a session lease; `on_acquired` runs from the event loop.
    void lock(const std::string& name, LeaseId session, std::function<void(LockGuard)> on_acquired);
    void unlock(const LockGuard& guard);

    TxnResult txn(const Txn& t);

private:
    friend class Store;
    Client(Store* s, ClientId id) : store_(s), id_(id) {}
    Store* store_ = nullptr;
    ClientId id_ = 0;
};

} // namespace ruta::kv
