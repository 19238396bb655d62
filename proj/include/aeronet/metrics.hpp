#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "aeronet/common.hpp"
#include "aeronet/protocol.hpp"

namespace aeronet {

struct LatencySummary {
    // Epoch makespan: first InputVector send of the epoch to the last
    // WeightUpdateAck delivery of the epoch.
    std::vector<double> epoch_makespans_s;
    // Per sample, ascending sample id: input send to loss computation
    // (= LossReport send, computation itself costs zero simulated time).
    std::vector<double> sample_forward_latency_s;
    // Per sample: input send to the last weight-update acknowledgment.
    std::vector<double> sample_cycle_latency_s;
    std::map<std::string, std::size_t> message_counts;
    std::map<std::string, std::size_t> message_bytes;
    std::size_t total_messages = 0;
    std::size_t total_bytes = 0;
    std::size_t protocol_errors = 0;
    double last_delivery_s = 0.0;
};

struct DatacenterBaseline {
    double uplink_bandwidth_bps = 1e6;
    double downlink_bandwidth_bps = 1e6;
    double round_trip_time_s = 0.05;
    double per_sample_compute_time_s = 0.0;
};

inline double baseline_latency(const DatacenterBaseline& baseline, std::size_t sample_bytes,
                               std::size_t result_bytes) {
    return baseline.round_trip_time_s +
           8.0 * static_cast<double>(sample_bytes) / baseline.uplink_bandwidth_bps +
           8.0 * static_cast<double>(result_bytes) / baseline.downlink_bandwidth_bps +
           baseline.per_sample_compute_time_s;
}

struct ParsedTrace {
    std::vector<Envelope> envelopes;
    std::size_t protocol_errors = 0;
};

// Parses one trace line per entry; protocol-error event lines are counted
// rather than decoded. Parse failures carry 1-based line numbers.
inline ParsedTrace parse_trace(const std::vector<std::string>& lines) {
    ParsedTrace parsed;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            const auto j = nlohmann::ordered_json::parse(lines[i]);
            if (j.contains("variant") && j.at("variant") == "protocol_error") {
                ++parsed.protocol_errors;
                continue;
            }
            parsed.envelopes.push_back(decode_trace_record(lines[i]));
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError("trace line " + std::to_string(i + 1) +
                                ": not valid JSON: " + e.what());
        } catch (const ProtocolError& e) {
            throw ProtocolError("trace line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return parsed;
}

// Pure aggregation; insensitive to envelope order.
inline LatencySummary summarize_envelopes(const std::vector<Envelope>& envelopes,
                                          std::size_t protocol_errors = 0) {
    LatencySummary summary;
    summary.protocol_errors = protocol_errors;

    int max_epoch = -1;
    std::set<int> sample_ids;
    std::map<int, double> first_input_send;
    std::map<int, double> loss_send;
    std::map<int, double> last_ack_deliver;

    for (const auto& envelope : envelopes) {
        const auto name = variant_name(envelope.payload);
        summary.message_counts[name] += 1;
        summary.message_bytes[name] += envelope.size_bytes;
        summary.total_messages += 1;
        summary.total_bytes += envelope.size_bytes;
        summary.last_delivery_s = std::max(summary.last_delivery_s, envelope.deliver_time);

        if (const auto* input = std::get_if<InputVector>(&envelope.payload)) {
            sample_ids.insert(input->sample_id);
            auto [it, fresh] = first_input_send.try_emplace(input->sample_id, envelope.send_time);
            if (!fresh) it->second = std::min(it->second, envelope.send_time);
        } else if (const auto* loss = std::get_if<LossReport>(&envelope.payload)) {
            loss_send[loss->sample_id] = envelope.send_time;
        } else if (const auto* ack = std::get_if<WeightUpdateAck>(&envelope.payload)) {
            auto [it, fresh] = last_ack_deliver.try_emplace(ack->sample_id, envelope.deliver_time);
            if (!fresh) it->second = std::max(it->second, envelope.deliver_time);
        } else if (const auto* barrier = std::get_if<EpochBarrier>(&envelope.payload)) {
            max_epoch = std::max(max_epoch, barrier->epoch);
        }
    }

    for (const auto& [sid, t0] : first_input_send) {
        auto loss = loss_send.find(sid);
        if (loss != loss_send.end()) summary.sample_forward_latency_s.push_back(loss->second - t0);
        auto ack = last_ack_deliver.find(sid);
        if (ack != last_ack_deliver.end()) summary.sample_cycle_latency_s.push_back(ack->second - t0);
    }

    const int epochs = max_epoch + 1;
    if (epochs > 0 && !sample_ids.empty()) {
        const int samples_per_epoch = static_cast<int>(sample_ids.size()) / epochs;
        summary.epoch_makespans_s.assign(epochs, 0.0);
        std::vector<double> start(epochs, std::numeric_limits<double>::infinity());
        std::vector<double> finish(epochs, -std::numeric_limits<double>::infinity());
        for (const auto& [sid, t0] : first_input_send) {
            const int epoch = samples_per_epoch > 0 ? sid / samples_per_epoch : 0;
            if (epoch >= epochs) continue;
            start[epoch] = std::min(start[epoch], t0);
        }
        for (const auto& [sid, t1] : last_ack_deliver) {
            const int epoch = samples_per_epoch > 0 ? sid / samples_per_epoch : 0;
            if (epoch >= epochs) continue;
            finish[epoch] = std::max(finish[epoch], t1);
        }
        for (int e = 0; e < epochs; ++e)
            summary.epoch_makespans_s[e] =
                finish[e] > start[e] ? finish[e] - start[e] : 0.0;
    }
    return summary;
}

inline LatencySummary summarize_trace(const std::vector<std::string>& lines) {
    const auto parsed = parse_trace(lines);
    return summarize_envelopes(parsed.envelopes, parsed.protocol_errors);
}

// Delimiter-separated per-epoch latency table for external plotting.
inline std::string epoch_latency_tsv(const LatencySummary& summary) {
    std::string out = "epoch\tmakespan_s\n";
    for (std::size_t e = 0; e < summary.epoch_makespans_s.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu\t%.9f\n", e, summary.epoch_makespans_s[e]);
        out += buf;
    }
    return out;
}

}  // namespace aeronet
