#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "aeronet/simulator.hpp"

using namespace aeronet;

namespace {

ExperimentConfig xor_config(int epochs) {
    ExperimentConfig config;
    config.spec.layer_sizes = {2, 2, 1};
    config.spec.activations = {ActivationKind::Sigmoid, ActivationKind::Sigmoid};
    config.spec.loss = LossKind::MeanSquaredError;
    config.spec.epochs = epochs;
    config.spec.seed = 42;
    config.spec.optimizer.learning_rate = 0.5;
    config.design = AssignmentDesign::grouped(2);
    return config;
}

std::vector<TrainingSample> xor_data() {
    return {{{0, 0}, {0}}, {{0, 1}, {1}}, {{1, 0}, {1}}, {{1, 1}, {0}}};
}

}  // namespace

TEST_CASE("baseline latency follows the published formula") {
    DatacenterBaseline baseline;  // 1e6 bps both ways, RTT 0.05 s, no compute
    CHECK(baseline_latency(baseline, 1000, 100) ==
          Catch::Approx(0.0588).margin(1e-12));

    SECTION("zero-size payloads cost exactly RTT plus compute") {
        baseline.per_sample_compute_time_s = 0.25;
        CHECK(baseline_latency(baseline, 0, 0) == 0.05 + 0.25);
    }
}

TEST_CASE("summarizing an empty trace yields zeroes") {
    const auto summary = summarize_trace({});
    CHECK(summary.epoch_makespans_s.empty());
    CHECK(summary.sample_forward_latency_s.empty());
    CHECK(summary.message_counts.empty());
    CHECK(summary.total_messages == 0);
    CHECK(summary.total_bytes == 0);
}

TEST_CASE("trace summary matches the in-memory report") {
    Simulation sim(xor_config(2), xor_data());
    const auto report = sim.run();
    const auto summary = summarize_trace(sim.trace_lines());

    CHECK(summary.message_counts == report.message_counts);
    CHECK(summary.message_bytes == report.message_bytes);
    CHECK(summary.epoch_makespans_s == report.epoch_makespans_s);
    CHECK(summary.protocol_errors == 0);
    CHECK(summary.last_delivery_s == report.total_simulated_time_s);
    CHECK(summary.total_messages == sim.trace_lines().size());

    std::size_t bytes = 0;
    for (const auto& line : sim.trace_lines())
        bytes += nlohmann::ordered_json::parse(line).at("size_bytes").get<std::size_t>();
    CHECK(summary.total_bytes == bytes);
}

TEST_CASE("aggregation is insensitive to trace line order") {
    Simulation sim(xor_config(1), xor_data());
    sim.run();
    auto lines = sim.trace_lines();
    const auto ordered = summarize_trace(lines);

    std::mt19937 shuffle_rng(123);
    std::shuffle(lines.begin(), lines.end(), shuffle_rng);
    const auto shuffled = summarize_trace(lines);

    CHECK(shuffled.message_counts == ordered.message_counts);
    CHECK(shuffled.message_bytes == ordered.message_bytes);
    CHECK(shuffled.epoch_makespans_s == ordered.epoch_makespans_s);
    CHECK(shuffled.sample_forward_latency_s == ordered.sample_forward_latency_s);
    CHECK(shuffled.sample_cycle_latency_s == ordered.sample_cycle_latency_s);
    CHECK(shuffled.last_delivery_s == ordered.last_delivery_s);
}

TEST_CASE("malformed trace lines are rejected with their line number") {
    Simulation sim(xor_config(1), xor_data());
    sim.run();
    auto lines = sim.trace_lines();
    lines[4] = "{ not json";
    REQUIRE_THROWS_WITH(summarize_trace(lines), Catch::Matchers::ContainsSubstring("line 5"));

    lines[4] = R"({"send_time":0,"deliver_time":0,"src":"a","dst":"b","variant":"Nope","size_bytes":0,"payload":{}})";
    REQUIRE_THROWS_AS(summarize_trace(lines), ProtocolError);
}

TEST_CASE("protocol error events are counted, not decoded") {
    auto config = xor_config(1);
    Simulation sim(config, xor_data());
    sim.inject(0.001, "intruder", "neuron-l1-d0", ForwardActivation{0, 0, 0, 1.0});
    const auto report = sim.run();
    REQUIRE(report.protocol_errors == 1);

    const auto summary = summarize_trace(sim.trace_lines());
    CHECK(summary.protocol_errors == 1);
    CHECK(summary.total_messages == sim.trace_lines().size() - 1);
}

TEST_CASE("forward latency grows with wireless per-hop overhead") {
    double previous = -1.0;
    for (double overhead : {1e-4, 1e-3, 5e-3}) {
        auto config = xor_config(1);
        config.link = LinkMode::wireless();
        config.link.per_hop_overhead_s = overhead;
        Simulation sim(config, xor_data());
        sim.run();
        const auto summary = summarize_trace(sim.trace_lines());
        REQUIRE(!summary.sample_forward_latency_s.empty());
        double mean = 0.0;
        for (double v : summary.sample_forward_latency_s) mean += v;
        mean /= static_cast<double>(summary.sample_forward_latency_s.size());
        CAPTURE(overhead);
        CHECK(mean > previous);
        previous = mean;
    }
}

TEST_CASE("per-epoch latency table lists one row per epoch") {
    Simulation sim(xor_config(3), xor_data());
    const auto report = sim.run();
    const auto tsv = epoch_latency_tsv(summarize_trace(sim.trace_lines()));

    std::size_t rows = std::count(tsv.begin(), tsv.end(), '\n');
    CHECK(rows == report.epoch_makespans_s.size() + 1);  // header included
    CHECK(tsv.rfind("epoch\tmakespan_s\n", 0) == 0);
}

TEST_CASE("airborne cycle beats a slow datacenter and loses to a fast one") {
    Simulation sim(xor_config(1), xor_data());
    sim.run();
    const auto summary = summarize_trace(sim.trace_lines());
    REQUIRE(!summary.sample_cycle_latency_s.empty());
    double mean = 0.0;
    for (double v : summary.sample_cycle_latency_s) mean += v;
    mean /= static_cast<double>(summary.sample_cycle_latency_s.size());

    DatacenterBaseline slow;  // defaults: 50 ms RTT dominates the wired fleet
    CHECK(mean < baseline_latency(slow, 16, 8));

    DatacenterBaseline fast;
    fast.round_trip_time_s = 1e-9;
    fast.uplink_bandwidth_bps = 1e12;
    fast.downlink_bandwidth_bps = 1e12;
    CHECK_FALSE(mean < baseline_latency(fast, 16, 8));
}
