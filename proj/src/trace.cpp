// SPDX-License-Identifier: Apache-2.0
#include "asopt/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "asopt/errors.hpp"

namespace asopt {

const char* to_string(TraceEventKind k) {
    switch (k) {
        case TraceEventKind::Dispatch: return "dispatch";
        case TraceEventKind::JobStart: return "job_start";
        case TraceEventKind::JobDone: return "job_done";
        case TraceEventKind::Install: return "install";
        case TraceEventKind::BarrierWaitBegin: return "barrier_wait_begin";
        case TraceEventKind::BarrierWaitEnd: return "barrier_wait_end";
        case TraceEventKind::Prefetch: return "prefetch";
        default: return "drain";
    }
}

TraceEventKind trace_event_from_string(const std::string& s) {
    if (s == "dispatch") return TraceEventKind::Dispatch;
    if (s == "job_start") return TraceEventKind::JobStart;
    if (s == "job_done") return TraceEventKind::JobDone;
    if (s == "install") return TraceEventKind::Install;
    if (s == "barrier_wait_begin") return TraceEventKind::BarrierWaitBegin;
    if (s == "barrier_wait_end") return TraceEventKind::BarrierWaitEnd;
    if (s == "prefetch") return TraceEventKind::Prefetch;
    if (s == "drain") return TraceEventKind::Drain;
    throw ConfigInvalidError("trace: unknown event kind " + s);
}

void TraceBuffer::emit(std::int64_t step, TraceEventKind kind, const std::string& block_id,
                       std::uint64_t version, double t_micros) {
    TraceEvent e;
    e.step = step;
    e.worker = worker_;
    e.event = kind;
    e.block_id = block_id;
    e.version = version;
    e.t_micros = static_cast<std::int64_t>(std::llround(t_micros));
    e.seq = seq_++;
    events_.push_back(std::move(e));
}

namespace {

void format_event(std::string& out, const TraceEvent& e) {
    out += "{\"step\":";
    out += std::to_string(e.step);
    out += ",\"worker\":";
    out += std::to_string(e.worker);
    out += ",\"event\":\"";
    out += to_string(e.event);
    out += "\",\"block_id\":\"";
    out += e.block_id;
    out += "\",\"version\":";
    out += std::to_string(e.version);
    out += ",\"t_micros\":";
    out += std::to_string(e.t_micros);
    out += "}\n";
}

void format_sync_row(std::string& out, const SyncTraceRow& r) {
    out += "{\"step\":";
    out += std::to_string(r.step);
    out += ",\"block_id\":\"";
    out += r.block_id;
    out += "\",\"action\":\"";
    out += r.hit ? "hit" : "sync";
    out += "\",\"intra_bytes\":";
    out += std::to_string(r.intra_bytes);
    out += ",\"inter_bytes\":";
    out += std::to_string(r.inter_bytes);
    out += "}\n";
}

}  // namespace

void write_trace_file(const std::string& path, const std::vector<const TraceBuffer*>& buffers,
                      const std::vector<SyncTraceRow>& sync_rows) {
    std::vector<const TraceEvent*> all;
    for (const TraceBuffer* b : buffers)
        for (const TraceEvent& e : b->events()) all.push_back(&e);
    std::stable_sort(all.begin(), all.end(), [](const TraceEvent* a, const TraceEvent* b) {
        if (a->step != b->step) return a->step < b->step;
        if (a->worker != b->worker) return a->worker < b->worker;
        return a->seq < b->seq;
    });

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("trace: cannot open " + path);
    std::string out;
    size_t sync_idx = 0;
    auto flush_sync_until = [&](std::int64_t step) {
        while (sync_idx < sync_rows.size() && sync_rows[sync_idx].step < step)
            format_sync_row(out, sync_rows[sync_idx++]);
    };
    std::int64_t current = all.empty() ? 0 : all.front()->step;
    for (const TraceEvent* e : all) {
        if (e->step != current) {
            flush_sync_until(e->step);
            current = e->step;
        }
        format_event(out, *e);
    }
    while (sync_idx < sync_rows.size()) format_sync_row(out, sync_rows[sync_idx++]);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

TraceFile parse_trace_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("trace: cannot open " + path);
    TraceFile out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("action")) {
            SyncTraceRow r;
            r.step = j.at("step").get<std::int64_t>();
            r.block_id = j.at("block_id").get<std::string>();
            r.hit = j.at("action").get<std::string>() == "hit";
            r.intra_bytes = j.at("intra_bytes").get<std::uint64_t>();
            r.inter_bytes = j.at("inter_bytes").get<std::uint64_t>();
            out.sync_rows.push_back(std::move(r));
        } else {
            TraceEvent e;
            e.step = j.at("step").get<std::int64_t>();
            e.worker = j.at("worker").get<int>();
            e.event = trace_event_from_string(j.at("event").get<std::string>());
            e.block_id = j.at("block_id").get<std::string>();
            e.version = j.at("version").get<std::uint64_t>();
            e.t_micros = j.at("t_micros").get<std::int64_t>();
            out.events.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace asopt
