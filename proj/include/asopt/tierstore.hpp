// SPDX-License-Identifier: Apache-2.0
//
// Keyed tensor store across three tiers: Hot (training-path-resident),
// Host (worker-accessible), Cold (file-backed). Byte-accurate residency
// accounting, asynchronous prefetch with a dedicated transfer worker,
// least-recently-touched eviction, and explicit reclamation.
//
// Cold tier format (little-endian, fixed width):
//   header:  8-byte magic "ASTRCOLD", u32 record version (1)
//   record:  u64 key hash (FNV-1a of "block_id/role"),
//            u64 payload length, u64 payload checksum (FNV-1a), payload
// Records are append-managed; an in-memory index points at the live record
// per key. Checksummed reads fail loudly.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "asopt/errors.hpp"
#include "asopt/tiers.hpp"

namespace asopt {

struct StoreConfig {
    std::uint64_t hot_capacity_bytes = 1ull << 30;
    std::uint64_t host_capacity_bytes = 1ull << 30;
    std::string cold_path;  // required; the harness resolves empty paths
    double transfer_bandwidth_bytes_per_sec = 0.0;  // 0 = unthrottled
    std::uint64_t transfer_latency_us = 0;
};

struct ResidencyGauges {
    std::uint64_t hot_bytes = 0;
    std::uint64_t host_bytes = 0;
    std::uint64_t cold_bytes = 0;  // live payload bytes in the cold file
};

struct IoCounters {
    std::uint64_t file_writes = 0;
    std::uint64_t file_reads = 0;
    std::uint64_t write_skips = 0;  // clean demotions that skipped the flush
    std::uint64_t page_ins = 0;
    std::uint64_t evictions = 0;
    std::uint64_t prefetch_requests = 0;
    std::uint64_t transfers_started = 0;
    std::uint64_t transfers_coalesced = 0;
    std::uint64_t transfers_completed = 0;
    std::uint64_t transfers_dropped = 0;
    std::uint64_t drains_installed = 0;
};

struct EntryView {
    TierTag tier = TierTag::Cold;
    std::uint64_t bytes = 0;
    bool dirty = false;
    bool pinned = false;
    std::int64_t last_touch_step = 0;
    bool staged_pending = false;
    bool staged_ready = false;
};

class TierStore {
  public:
    explicit TierStore(StoreConfig cfg);
    ~TierStore();
    TierStore(const TierStore&) = delete;
    TierStore& operator=(const TierStore&) = delete;

    EntryView put(const TierKey& key, std::span<const std::byte> bytes, TierTag tier);
    std::pair<std::vector<std::byte>, TierTag> get(const TierKey& key);

    void demote(const TierKey& key, TierTag to);
    void promote(const TierKey& key, TierTag to);

    /// Releases the in-memory buffer of a clean, cold-persisted entry.
    /// Returns the freed byte count.
    std::uint64_t reclaim(const TierKey& key);

    /// Persists a dirty entry to the cold file without moving it.
    void flush(const TierKey& key);

    void pin(const TierKey& key);
    void unpin(const TierKey& key);

    /// Asynchronous tier move; returns immediately with a ticket. Duplicate
    /// requests for a key with a transfer in flight coalesce.
    std::uint64_t prefetch(const TierKey& key, TierTag to);

    /// Installs at most max_items completed transfers; never blocks on
    /// incomplete ones. Returns the number installed.
    int drain_ready(int max_items);

    void advance_step(std::int64_t step);

    bool contains(const TierKey& key) const;
    EntryView inspect(const TierKey& key) const;
    ResidencyGauges gauges() const;
    IoCounters counters() const;
    const StoreConfig& config() const { return cfg_; }

    /// Recomputes gauges from entry metadata and checks capacity; throws
    /// AuditError on any mismatch.
    void audit() const;

  private:
    struct Entry {
        std::vector<std::byte> buffer;  // resident bytes (Hot/Host)
        TierTag tier = TierTag::Cold;
        std::uint64_t bytes = 0;
        bool dirty = false;
        bool pinned = false;
        std::int64_t last_touch_step = 0;
        std::uint64_t touch_seq = 0;
        std::uint64_t generation = 0;  // bumped on every content change
        bool in_flight = false;        // excluded from eviction while moving
        bool cold_valid = false;
        std::uint64_t cold_offset = 0;
        std::uint64_t cold_length = 0;
        std::uint64_t cold_checksum = 0;
    };

    struct TransferJob {
        std::uint64_t ticket = 0;
        TierKey key;
        TierTag to = TierTag::Host;
        std::uint64_t bytes = 0;
    };

    struct Staged {
        std::uint64_t ticket = 0;
        TierTag to = TierTag::Host;
        std::vector<std::byte> bytes;
        std::uint64_t generation = 0;
    };

    using Map = std::unordered_map<TierKey, Entry, TierKeyHash>;

    void touch(Entry& e);
    std::uint64_t& gauge_of(TierTag t);
    static int tier_rank(TierTag t) { return t == TierTag::Hot ? 2 : t == TierTag::Host ? 1 : 0; }

    // All *_locked members require mu_ held.
    void ensure_capacity_locked(TierTag tier, std::uint64_t need);
    void demote_locked(Map::iterator it, TierTag to, bool eviction);
    void write_cold_locked(const TierKey& key, Entry& e);
    std::vector<std::byte> read_cold_locked(const TierKey& key, const Entry& e);
    Map::iterator find_or_throw(const TierKey& key);
    EntryView view_of(const TierKey& key, const Entry& e) const;
    void install_staged_locked(const TierKey& key, Staged&& staged);

    void transfer_worker();

    StoreConfig cfg_;
    mutable std::mutex mu_;
    Map entries_;
    ResidencyGauges gauges_;
    IoCounters counters_;
    std::fstream cold_file_;
    std::uint64_t cold_tail_ = 0;
    std::uint64_t touch_counter_ = 0;
    std::int64_t current_step_ = 0;
    std::uint64_t next_ticket_ = 1;

    std::deque<TransferJob> jobs_;
    std::unordered_map<TierKey, std::uint64_t, TierKeyHash> pending_;  // key -> ticket
    std::unordered_map<TierKey, Staged, TierKeyHash> staged_;
    std::deque<TierKey> ready_;
    std::condition_variable worker_cv_;
    bool stop_ = false;
    std::thread worker_;
};

}  // namespace asopt
