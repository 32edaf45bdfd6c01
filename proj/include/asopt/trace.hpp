// SPDX-License-Identifier: Apache-2.0
//
// Run trace: JSON lines, one object per event.
//   runtime event: {"step":N,"worker":N,"event":"...","block_id":"...",
//                   "version":N,"t_micros":N}
//   coherence row: {"step":N,"block_id":"...","action":"hit"|"sync",
//                   "intra_bytes":N,"inter_bytes":N}
// Events are buffered per rank without locking and merged into one
// canonical order at write time, so equal runs produce byte-equal files.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace asopt {

enum class TraceEventKind {
    Dispatch,
    JobStart,
    JobDone,
    Install,
    BarrierWaitBegin,
    BarrierWaitEnd,
    Prefetch,
    Drain,
};

const char* to_string(TraceEventKind k);
TraceEventKind trace_event_from_string(const std::string& s);

struct TraceEvent {
    std::int64_t step = 0;
    int worker = 0;
    TraceEventKind event = TraceEventKind::Dispatch;
    std::string block_id;
    std::uint64_t version = 0;
    std::int64_t t_micros = 0;
    std::uint64_t seq = 0;  // per-worker emission order
};

struct SyncTraceRow {
    std::int64_t step = 0;
    std::string block_id;
    bool hit = false;
    std::uint64_t intra_bytes = 0;
    std::uint64_t inter_bytes = 0;
};

/// Per-rank event sink; owned by exactly one thread.
class TraceBuffer {
  public:
    explicit TraceBuffer(int worker) : worker_(worker) {}

    void emit(std::int64_t step, TraceEventKind kind, const std::string& block_id,
              std::uint64_t version, double t_micros);

    const std::vector<TraceEvent>& events() const { return events_; }
    int worker() const { return worker_; }

  private:
    int worker_;
    std::uint64_t seq_ = 0;
    std::vector<TraceEvent> events_;
};

struct TraceFile {
    std::vector<TraceEvent> events;
    std::vector<SyncTraceRow> sync_rows;
};

/// Canonical order: by step, runtime events before sync rows; events by
/// (worker, seq); sync rows in emission order.
void write_trace_file(const std::string& path, const std::vector<const TraceBuffer*>& buffers,
                      const std::vector<SyncTraceRow>& sync_rows);

TraceFile parse_trace_file(const std::string& path);

}  // namespace asopt
