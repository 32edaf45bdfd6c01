// SPDX-License-Identifier: Apache-2.0
#include "asopt/tierstore.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>

#include "asopt/bytes.hpp"

namespace asopt {

namespace {
constexpr char kMagic[8] = {'A', 'S', 'T', 'R', 'C', 'O', 'L', 'D'};
constexpr std::uint32_t kRecordVersion = 1;
constexpr std::uint64_t kRecordHeaderBytes = 24;  // key hash + length + checksum

struct InFlightGuard {
    bool* flag;
    explicit InFlightGuard(bool* f) : flag(f) { *flag = true; }
    ~InFlightGuard() { *flag = false; }
};
}  // namespace

TierStore::TierStore(StoreConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.cold_path.empty()) throw ConfigInvalidError("tierstore: cold_path is empty");
    const auto parent = std::filesystem::path(cfg_.cold_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    cold_file_.open(cfg_.cold_path, std::ios::binary | std::ios::in | std::ios::out |
                                        std::ios::trunc);
    if (!cold_file_) throw IoError("tierstore: cannot open cold file " + cfg_.cold_path);
    std::vector<std::byte> header;
    header.reserve(12);
    for (char c : kMagic) header.push_back(static_cast<std::byte>(c));
    append_u32_le(header, kRecordVersion);
    cold_file_.write(reinterpret_cast<const char*>(header.data()),
                     static_cast<std::streamsize>(header.size()));
    cold_file_.flush();
    cold_tail_ = header.size();
    worker_ = std::thread([this] { transfer_worker(); });
}

TierStore::~TierStore() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    worker_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void TierStore::touch(Entry& e) {
    e.touch_seq = ++touch_counter_;
    e.last_touch_step = current_step_;
}

std::uint64_t& TierStore::gauge_of(TierTag t) {
    return t == TierTag::Hot ? gauges_.hot_bytes : gauges_.host_bytes;
}

TierStore::Map::iterator TierStore::find_or_throw(const TierKey& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw MissingKeyError("tierstore: missing key " + key.display());
    return it;
}

EntryView TierStore::view_of(const TierKey& key, const Entry& e) const {
    EntryView v;
    v.tier = e.tier;
    v.bytes = e.bytes;
    v.dirty = e.dirty;
    v.pinned = e.pinned;
    v.last_touch_step = e.last_touch_step;
    auto pit = pending_.find(key);
    v.staged_pending = pit != pending_.end();
    v.staged_ready = staged_.find(key) != staged_.end();
    return v;
}

void TierStore::write_cold_locked(const TierKey& key, Entry& e) {
    std::vector<std::byte> header;
    header.reserve(kRecordHeaderBytes);
    append_u64_le(header, fnv1a64(key.display()));
    append_u64_le(header, e.buffer.size());
    append_u64_le(header, fnv1a64(std::span<const std::byte>(e.buffer)));
    cold_file_.clear();
    cold_file_.seekp(static_cast<std::streamoff>(cold_tail_));
    cold_file_.write(reinterpret_cast<const char*>(header.data()),
                     static_cast<std::streamsize>(header.size()));
    cold_file_.write(reinterpret_cast<const char*>(e.buffer.data()),
                     static_cast<std::streamsize>(e.buffer.size()));
    cold_file_.flush();
    if (!cold_file_) throw IoError("tierstore: cold write failed for " + key.display());
    if (e.cold_valid) gauges_.cold_bytes -= e.cold_length;
    e.cold_offset = cold_tail_ + kRecordHeaderBytes;
    e.cold_length = e.buffer.size();
    e.cold_checksum = read_u64_le(header.data() + 16);
    e.cold_valid = true;
    cold_tail_ += kRecordHeaderBytes + e.buffer.size();
    gauges_.cold_bytes += e.cold_length;
    counters_.file_writes += 1;
}

std::vector<std::byte> TierStore::read_cold_locked(const TierKey& key, const Entry& e) {
    if (!e.cold_valid) throw IoError("tierstore: no cold copy for " + key.display());
    std::vector<std::byte> record(kRecordHeaderBytes + e.cold_length);
    cold_file_.clear();
    cold_file_.seekg(static_cast<std::streamoff>(e.cold_offset - kRecordHeaderBytes));
    cold_file_.read(reinterpret_cast<char*>(record.data()),
                    static_cast<std::streamsize>(record.size()));
    if (!cold_file_) throw IoError("tierstore: cold read failed for " + key.display());
    counters_.file_reads += 1;
    const std::uint64_t hash = read_u64_le(record.data());
    const std::uint64_t length = read_u64_le(record.data() + 8);
    const std::uint64_t checksum = read_u64_le(record.data() + 16);
    if (hash != fnv1a64(key.display()) || length != e.cold_length)
        throw IoError("tierstore: record header mismatch for " + key.display());
    std::vector<std::byte> payload(record.begin() + kRecordHeaderBytes, record.end());
    if (fnv1a64(std::span<const std::byte>(payload)) != checksum || checksum != e.cold_checksum)
        throw IoError("tierstore: checksum mismatch for " + key.display());
    return payload;
}

void TierStore::demote_locked(Map::iterator it, TierTag to, bool eviction) {
    Entry& e = it->second;
    if (e.pinned) throw PinnedEntryError("tierstore: entry pinned: " + it->first.display());
    if (tier_rank(to) >= tier_rank(e.tier))
        throw LayoutMismatchError("tierstore: demote must move to a lower tier");
    InFlightGuard guard(&e.in_flight);
    if (to == TierTag::Cold) {
        if (e.dirty) {
            write_cold_locked(it->first, e);
            e.dirty = false;
        } else {
            counters_.write_skips += 1;
        }
        gauge_of(e.tier) -= e.bytes;
        e.buffer.clear();
        e.buffer.shrink_to_fit();
        e.tier = TierTag::Cold;
    } else {
        // Hot -> Host keeps the buffer; make room below first.
        ensure_capacity_locked(to, e.bytes);
        gauge_of(e.tier) -= e.bytes;
        e.tier = to;
        gauge_of(to) += e.bytes;
    }
    if (eviction) counters_.evictions += 1;
}

void TierStore::ensure_capacity_locked(TierTag tier, std::uint64_t need) {
    if (tier == TierTag::Cold) return;
    const std::uint64_t cap =
        tier == TierTag::Hot ? cfg_.hot_capacity_bytes : cfg_.host_capacity_bytes;
    while (gauge_of(tier) + need > cap) {
        Map::iterator victim = entries_.end();
        for (auto it = entries_.begin(); it != entries_.end(); ++it) {
            if (it->second.tier != tier || it->second.pinned || it->second.in_flight) continue;
            if (victim == entries_.end() || it->second.touch_seq < victim->second.touch_seq)
                victim = it;
        }
        if (victim == entries_.end())
            throw CapacityExhaustedError("tierstore: cannot make room in tier " +
                                         std::string(to_string(tier)));
        demote_locked(victim, tier == TierTag::Hot ? TierTag::Host : TierTag::Cold,
                      /*eviction=*/true);
    }
}

EntryView TierStore::put(const TierKey& key, std::span<const std::byte> bytes, TierTag tier) {
    if (bytes.empty()) throw ShapeMismatchError("tierstore: empty payload for " + key.display());
    std::lock_guard lk(mu_);
    if (tier != TierTag::Cold) {
        // Make room before mutating anything so a capacity failure leaves
        // the old entry intact. The entry being replaced both credits its
        // own bytes and is shielded from the eviction scan.
        auto eit = entries_.find(key);
        std::uint64_t credit = 0;
        if (eit != entries_.end() && eit->second.tier == tier) credit = eit->second.bytes;
        if (eit != entries_.end()) {
            InFlightGuard guard(&eit->second.in_flight);
            ensure_capacity_locked(tier, bytes.size() > credit ? bytes.size() - credit : 0);
        } else {
            ensure_capacity_locked(tier, bytes.size());
        }
    }
    Entry& e = entries_[key];
    InFlightGuard guard(&e.in_flight);
    if (e.bytes > 0 && (e.tier == TierTag::Hot || e.tier == TierTag::Host))
        gauge_of(e.tier) -= e.bytes;
    if (e.cold_valid) {
        gauges_.cold_bytes -= e.cold_length;  // old record is now orphaned
        e.cold_valid = false;
    }
    e.generation += 1;
    e.bytes = bytes.size();
    e.dirty = false;
    touch(e);
    if (tier == TierTag::Cold) {
        e.buffer.assign(bytes.begin(), bytes.end());
        write_cold_locked(key, e);
        e.buffer.clear();
        e.buffer.shrink_to_fit();
        e.tier = TierTag::Cold;
    } else {
        e.buffer.assign(bytes.begin(), bytes.end());
        e.tier = tier;
        e.dirty = true;
        gauge_of(tier) += e.bytes;
    }
    return view_of(key, e);
}

std::pair<std::vector<std::byte>, TierTag> TierStore::get(const TierKey& key) {
    std::lock_guard lk(mu_);
    auto it = find_or_throw(key);
    Entry& e = it->second;
    touch(e);
    if (e.tier == TierTag::Cold) {
        // Synchronous page-in promotes to Host.
        std::vector<std::byte> payload = read_cold_locked(key, e);
        ensure_capacity_locked(TierTag::Host, payload.size());
        e.buffer = std::move(payload);
        e.tier = TierTag::Host;
        e.dirty = false;
        gauges_.host_bytes += e.bytes;
        counters_.page_ins += 1;
    }
    return {e.buffer, e.tier};
}

void TierStore::demote(const TierKey& key, TierTag to) {
    std::lock_guard lk(mu_);
    demote_locked(find_or_throw(key), to, /*eviction=*/false);
}

void TierStore::promote(const TierKey& key, TierTag to) {
    std::lock_guard lk(mu_);
    auto it = find_or_throw(key);
    Entry& e = it->second;
    if (tier_rank(to) <= tier_rank(e.tier))
        throw LayoutMismatchError("tierstore: promote must move to a higher tier");
    InFlightGuard guard(&e.in_flight);
    touch(e);
    if (e.tier == TierTag::Cold) {
        std::vector<std::byte> payload = read_cold_locked(key, e);
        ensure_capacity_locked(to, payload.size());
        e.buffer = std::move(payload);
        e.dirty = false;
        gauge_of(to) += e.bytes;
    } else {
        ensure_capacity_locked(to, e.bytes);
        gauge_of(e.tier) -= e.bytes;
        gauge_of(to) += e.bytes;
    }
    e.tier = to;
}

std::uint64_t TierStore::reclaim(const TierKey& key) {
    std::lock_guard lk(mu_);
    auto it = find_or_throw(key);
    Entry& e = it->second;
    if (e.tier == TierTag::Cold) return 0;
    if (e.dirty || !e.cold_valid)
        throw DirtyNotPersistedError("tierstore: reclaim of unpersisted entry " + key.display());
    const std::uint64_t freed = e.bytes;
    gauge_of(e.tier) -= freed;
    e.buffer.clear();
    e.buffer.shrink_to_fit();
    e.tier = TierTag::Cold;
    return freed;
}

void TierStore::flush(const TierKey& key) {
    std::lock_guard lk(mu_);
    auto it = find_or_throw(key);
    Entry& e = it->second;
    if (e.tier == TierTag::Cold || !e.dirty) return;
    write_cold_locked(key, e);
    e.dirty = false;
}

void TierStore::pin(const TierKey& key) {
    std::lock_guard lk(mu_);
    find_or_throw(key)->second.pinned = true;
}

void TierStore::unpin(const TierKey& key) {
    std::lock_guard lk(mu_);
    find_or_throw(key)->second.pinned = false;
}

std::uint64_t TierStore::prefetch(const TierKey& key, TierTag to) {
    std::lock_guard lk(mu_);
    auto it = find_or_throw(key);
    counters_.prefetch_requests += 1;
    auto pit = pending_.find(key);
    if (pit != pending_.end()) {
        counters_.transfers_coalesced += 1;
        return pit->second;
    }
    const std::uint64_t ticket = next_ticket_++;
    pending_.emplace(key, ticket);
    jobs_.push_back(TransferJob{ticket, key, to, it->second.bytes});
    worker_cv_.notify_one();
    return ticket;
}

void TierStore::transfer_worker() {
    std::unique_lock lk(mu_);
    while (true) {
        worker_cv_.wait(lk, [&] { return stop_ || !jobs_.empty(); });
        if (stop_) return;
        TransferJob job = jobs_.front();
        jobs_.pop_front();
        counters_.transfers_started += 1;

        // Injected link delay happens outside the lock; enqueue latency on
        // the training thread stays independent of transfer size.
        std::uint64_t delay_us = cfg_.transfer_latency_us;
        if (cfg_.transfer_bandwidth_bytes_per_sec > 0.0)
            delay_us += static_cast<std::uint64_t>(
                1e6 * static_cast<double>(job.bytes) / cfg_.transfer_bandwidth_bytes_per_sec);
        if (delay_us > 0) {
            worker_cv_.wait_until(lk,
                                  std::chrono::system_clock::now() +
                                      std::chrono::microseconds(delay_us),
                                  [&] { return stop_; });
            if (stop_) return;
        }

        auto it = entries_.find(job.key);
        if (it == entries_.end() || it->second.tier == job.to) {
            pending_.erase(job.key);
            counters_.transfers_dropped += 1;
            continue;
        }
        Entry& e = it->second;
        Staged staged;
        staged.ticket = job.ticket;
        staged.to = job.to;
        staged.generation = e.generation;
        if (e.tier == TierTag::Cold) {
            try {
                staged.bytes = read_cold_locked(job.key, e);
            } catch (const IoError&) {
                pending_.erase(job.key);
                counters_.transfers_dropped += 1;
                continue;  // surfaces on the next get
            }
        } else {
            staged.bytes = e.buffer;
        }
        staged_[job.key] = std::move(staged);
        ready_.push_back(job.key);
        counters_.transfers_completed += 1;
    }
}

void TierStore::install_staged_locked(const TierKey& key, Staged&& staged) {
    auto it = entries_.find(key);
    pending_.erase(key);
    if (it == entries_.end()) {
        counters_.transfers_dropped += 1;
        return;
    }
    Entry& e = it->second;
    if (e.generation != staged.generation || e.tier == staged.to) {
        counters_.transfers_dropped += 1;
        return;
    }
    InFlightGuard guard(&e.in_flight);
    try {
        if (staged.to == TierTag::Cold) {
            if (e.dirty) {
                write_cold_locked(key, e);
                e.dirty = false;
            }
            gauge_of(e.tier) -= e.bytes;
            e.buffer.clear();
            e.buffer.shrink_to_fit();
            e.tier = TierTag::Cold;
        } else {
            ensure_capacity_locked(staged.to, staged.bytes.size());
            if (e.tier != TierTag::Cold) gauge_of(e.tier) -= e.bytes;
            else e.dirty = false;
            e.buffer = std::move(staged.bytes);
            e.tier = staged.to;
            gauge_of(staged.to) += e.bytes;
        }
        counters_.drains_installed += 1;
    } catch (const CapacityExhaustedError&) {
        counters_.transfers_dropped += 1;  // surfaces on the next get
    }
}

int TierStore::drain_ready(int max_items) {
    std::lock_guard lk(mu_);
    int installed = 0;
    while (installed < max_items && !ready_.empty()) {
        TierKey key = ready_.front();
        ready_.pop_front();
        auto sit = staged_.find(key);
        if (sit == staged_.end()) continue;
        Staged staged = std::move(sit->second);
        staged_.erase(sit);
        const std::uint64_t drops_before = counters_.transfers_dropped;
        install_staged_locked(key, std::move(staged));
        if (counters_.transfers_dropped == drops_before) installed += 1;
    }
    return installed;
}

void TierStore::advance_step(std::int64_t step) {
    std::lock_guard lk(mu_);
    current_step_ = step;
}

bool TierStore::contains(const TierKey& key) const {
    std::lock_guard lk(mu_);
    return entries_.count(key) > 0;
}

EntryView TierStore::inspect(const TierKey& key) const {
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) throw MissingKeyError("tierstore: missing key " + key.display());
    return view_of(key, it->second);
}

ResidencyGauges TierStore::gauges() const {
    std::lock_guard lk(mu_);
    return gauges_;
}

IoCounters TierStore::counters() const {
    std::lock_guard lk(mu_);
    return counters_;
}

void TierStore::audit() const {
    std::lock_guard lk(mu_);
    std::uint64_t hot = 0, host = 0, cold = 0;
    for (const auto& [key, e] : entries_) {
        if (e.tier == TierTag::Hot) hot += e.bytes;
        if (e.tier == TierTag::Host) host += e.bytes;
        if (e.cold_valid) cold += e.cold_length;
        if (e.tier != TierTag::Cold && e.buffer.size() != e.bytes)
            throw AuditError("tierstore: buffer size mismatch for " + key.display());
        if (e.tier == TierTag::Cold && e.dirty)
            throw AuditError("tierstore: dirty entry resident in Cold: " + key.display());
    }
    if (hot != gauges_.hot_bytes || host != gauges_.host_bytes || cold != gauges_.cold_bytes)
        throw AuditError("tierstore: residency gauges out of sync");
    if (hot > cfg_.hot_capacity_bytes || host > cfg_.host_capacity_bytes)
        throw AuditError("tierstore: capacity exceeded");
}

}  // namespace asopt
