#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/types.hpp"

namespace loglin {

// Spike-train ingestion: events are (neuron label, time in ms); recordings
// come with a set of half-open stationary segments. Each segment is cut into
// consecutive fixed-width windows (a trailing partial window is dropped,
// and window alignment restarts at each segment boundary); a neuron is
// active in a window when it spikes at least spike_threshold times inside
// it. One configuration per window.

struct SpikeEvent {
    std::string neuron;
    std::uint64_t time_ms = 0;
};

struct Segment {
    std::uint64_t start_ms = 0;
    std::uint64_t end_ms = 0;  // exclusive
};

struct BinningConfig {
    std::uint64_t window_ms = 40;
    std::vector<std::string> neurons;  // ordered selection; position = node index
    std::uint64_t spike_threshold = 1;
};

// CSV "neuron,time_ms".
inline std::vector<SpikeEvent> read_spike_events(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty spike file", 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "neuron,time_ms") throw ParseError("expected header 'neuron,time_ms'", lineno);
    std::vector<SpikeEvent> events;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || comma == 0) throw ParseError("expected 'neuron,time_ms'", lineno);
        SpikeEvent e;
        e.neuron = line.substr(0, comma);
        try {
            e.time_ms = detail::parse_u64(line.substr(comma + 1));
        } catch (const InvalidArgumentError& err) {
            throw ParseError(err.what(), lineno);
        }
        events.push_back(std::move(e));
    }
    return events;
}

// CSV "start_ms,end_ms" of half-open intervals; must be non-overlapping.
inline std::vector<Segment> read_segments(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty segments file", 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "start_ms,end_ms") throw ParseError("expected header 'start_ms,end_ms'", lineno);
    std::vector<Segment> segments;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("expected 'start_ms,end_ms'", lineno);
        Segment s;
        try {
            s.start_ms = detail::parse_u64(line.substr(0, comma));
            s.end_ms = detail::parse_u64(line.substr(comma + 1));
        } catch (const InvalidArgumentError& err) {
            throw ParseError(err.what(), lineno);
        }
        if (s.start_ms >= s.end_ms) throw ParseError("segment start must precede end", lineno);
        segments.push_back(s);
    }
    std::sort(segments.begin(), segments.end(), [](Segment a, Segment b) { return a.start_ms < b.start_ms; });
    for (std::size_t i = 1; i < segments.size(); ++i)
        if (segments[i].start_ms < segments[i - 1].end_ms)
            throw InvalidArgumentError("segments overlap at t=" + std::to_string(segments[i].start_ms));
    return segments;
}

inline ConfigCounts bin_spikes(const std::vector<SpikeEvent>& events, const std::vector<Segment>& segments,
                               const BinningConfig& cfg, std::vector<std::string>* warnings = nullptr) {
    if (cfg.window_ms < 1) throw InvalidArgumentError("window_ms must be >= 1");
    if (cfg.spike_threshold < 1) throw InvalidArgumentError("spike_threshold must be >= 1");
    if (cfg.neurons.empty() || cfg.neurons.size() > 64)
        throw InvalidArgumentError("neuron selection must name between 1 and 64 neurons");
    std::map<std::string, int> node_of;
    for (std::size_t i = 0; i < cfg.neurons.size(); ++i)
        if (!node_of.emplace(cfg.neurons[i], static_cast<int>(i)).second)
            throw InvalidArgumentError("duplicate neuron label '" + cfg.neurons[i] + "'");
    const int k = static_cast<int>(cfg.neurons.size());

    std::vector<Segment> segs = segments;
    std::sort(segs.begin(), segs.end(), [](Segment a, Segment b) { return a.start_ms < b.start_ms; });
    std::vector<std::uint64_t> first_window(segs.size() + 1, 0);
    for (std::size_t i = 0; i < segs.size(); ++i)
        first_window[i + 1] = first_window[i] + (segs[i].end_ms - segs[i].start_ms) / cfg.window_ms;
    const std::uint64_t n_windows = first_window.back();
    if (n_windows == 0) throw EmptyDataError("segments contain no complete window");

    // Spike counts per (window, node).
    std::vector<std::uint32_t> hits(n_windows * static_cast<std::uint64_t>(k), 0);
    std::vector<bool> seen(cfg.neurons.size(), false);
    for (const SpikeEvent& e : events) {
        const auto sel = node_of.find(e.neuron);
        if (sel == node_of.end()) continue;
        seen[static_cast<std::size_t>(sel->second)] = true;
        // Last segment starting at or before the event.
        auto it = std::upper_bound(segs.begin(), segs.end(), e.time_ms,
                                   [](std::uint64_t t, Segment s) { return t < s.start_ms; });
        if (it == segs.begin()) continue;
        const std::size_t si = static_cast<std::size_t>(it - segs.begin()) - 1;
        if (e.time_ms >= segs[si].end_ms) continue;
        const std::uint64_t w = (e.time_ms - segs[si].start_ms) / cfg.window_ms;
        if (w >= first_window[si + 1] - first_window[si]) continue;  // trailing partial window
        ++hits[(first_window[si] + w) * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(sel->second)];
    }
    if (warnings) {
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i])
                warnings->push_back("neuron '" + cfg.neurons[i] + "' has no spike events; its column is all zeros");
    }

    ConfigCounts out(k);
    for (std::uint64_t w = 0; w < n_windows; ++w) {
        std::uint64_t bits = 0;
        for (int i = 0; i < k; ++i)
            if (hits[w * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(i)] >= cfg.spike_threshold)
                bits |= std::uint64_t{1} << i;
        out.add(Config(bits));
    }
    return out;
}

}  // namespace loglin
