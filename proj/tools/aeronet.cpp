// Command-line front end: formation planning, config validation, simulation
// runs, and trace re-summarizing. Exit codes: 0 success, 2 config error,
// 3 connectivity error, 4 runtime invariant violation.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aeronet/config.hpp"
#include "aeronet/metrics.hpp"
#include "aeronet/simulator.hpp"
#include "aeronet/topology.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Flags {
    std::string config_path;
    std::string out_dir = ".";
    std::string trace_path;
    std::uint64_t seed = 0;
    int design = 0;
    std::string sparse;
    std::string link;
};

void add_run_flags(CLI::App* sub, Flags& flags) {
    sub->add_option("--config", flags.config_path, "experiment config file (JSON)")->required();
    sub->add_option("--out", flags.out_dir, "output directory, created if missing (default .)");
    sub->add_option("--seed", flags.seed, "override network.seed");
    sub->add_option("--design", flags.design, "override design.kind")->check(CLI::Range(1, 3));
    sub->add_option("--sparse", flags.sparse, "override sparse_forwarding")
        ->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--link", flags.link, "override link.mode")
        ->check(CLI::IsMember({"wired", "wireless"}));
}

// Loads the config and applies command-line overrides. A relative dataset
// path is resolved against the config file's directory and rewritten to its
// absolute form, so the echoed config reproduces the run from anywhere.
aeronet::ExperimentConfig effective_config(const Flags& flags, const CLI::App* sub) {
    auto config = aeronet::load_experiment(flags.config_path);
    if (sub->count("--seed") > 0) config.spec.seed = flags.seed;
    if (sub->count("--design") > 0) {
        switch (flags.design) {
            case 1: config.design.kind = aeronet::AssignmentDesign::Kind::OneNeuronPerDevice; break;
            case 2: config.design.kind = aeronet::AssignmentDesign::Kind::LayerGrouped; break;
            case 3:
                config.design.kind = aeronet::AssignmentDesign::Kind::LayerGroupedWithController;
                break;
        }
    }
    if (sub->count("--sparse") > 0) config.sparse_forwarding = flags.sparse == "on";
    if (sub->count("--link") > 0)
        config.link.kind = flags.link == "wired" ? aeronet::LinkMode::Kind::Wired
                                                 : aeronet::LinkMode::Kind::Wireless;
    if (!config.dataset_path.empty()) {
        fs::path dataset(config.dataset_path);
        if (dataset.is_relative())
            dataset = fs::path(flags.config_path).parent_path() / dataset;
        config.dataset_path = fs::weakly_canonical(dataset).string();
    }
    return config;
}

std::vector<aeronet::TrainingSample> load_samples(const aeronet::ExperimentConfig& config) {
    if (config.dataset_path.empty()) return {};
    return aeronet::load_dataset(config.dataset_path, config.spec.input_size(),
                                 config.spec.output_size());
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.flush();
    if (!out.good()) throw aeronet::ConfigError("cannot write " + path.string());
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw aeronet::ConfigError("cannot open trace file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

ordered_json summary_json(const aeronet::LatencySummary& summary) {
    ordered_json j;
    j["message_counts"] = summary.message_counts;
    j["message_bytes"] = summary.message_bytes;
    j["total_messages"] = summary.total_messages;
    j["total_bytes"] = summary.total_bytes;
    j["protocol_errors"] = summary.protocol_errors;
    j["last_delivery_s"] = summary.last_delivery_s;
    j["epoch_makespans_s"] = summary.epoch_makespans_s;
    j["sample_forward_latency_s"] = summary.sample_forward_latency_s;
    j["sample_cycle_latency_s"] = summary.sample_cycle_latency_s;
    return j;
}

ordered_json report_json(const aeronet::ExperimentConfig& config,
                         const aeronet::TrainingReport& result,
                         const aeronet::LatencySummary& summary) {
    ordered_json j;
    j["config"] = aeronet::experiment_to_json(config);
    j["device_count"] = result.device_count;
    j["epoch_losses"] = result.epoch_losses;
    j["epoch_makespans_s"] = result.epoch_makespans_s;
    j["message_counts"] = result.message_counts;
    j["message_bytes"] = result.message_bytes;
    j["total_messages"] = summary.total_messages;
    j["total_bytes"] = summary.total_bytes;
    j["protocol_errors"] = result.protocol_errors;
    j["total_simulated_time_s"] = result.total_simulated_time_s;
    j["trace_hash"] = result.trace_hash;
    j["final_parameters"]["weights"] = result.final_params.weights;
    j["final_parameters"]["biases"] = result.final_params.biases;
    if (config.baseline && !summary.sample_cycle_latency_s.empty()) {
        const auto& cycles = summary.sample_cycle_latency_s;
        const double mean_cycle =
            std::accumulate(cycles.begin(), cycles.end(), 0.0) / static_cast<double>(cycles.size());
        const auto sample_bytes = static_cast<std::size_t>(8 * config.spec.input_size());
        const auto result_bytes = static_cast<std::size_t>(8 * config.spec.output_size());
        const double remote =
            aeronet::baseline_latency(*config.baseline, sample_bytes, result_bytes);
        auto& comparison = j["baseline_comparison"];
        comparison["sample_bytes"] = sample_bytes;
        comparison["result_bytes"] = result_bytes;
        comparison["datacenter_latency_s"] = remote;
        comparison["mean_sample_cycle_latency_s"] = mean_cycle;
        comparison["airborne_faster"] = mean_cycle < remote;
    }
    return j;
}

int cmd_plan(const aeronet::ExperimentConfig& config, const fs::path& out_dir) {
    const auto assignment = aeronet::assign_neurons(config.spec, config.design);
    const auto plan =
        aeronet::plan_formation(assignment, config.spec, config.layer_spacing_m,
                                config.lateral_spacing_m, config.link, config.altitude_m);
    fs::create_directories(out_dir);
    write_file(out_dir / "formation.tsv", aeronet::formation_tsv(plan, assignment));
    std::printf("formation: %s (%zu devices)\n", (out_dir / "formation.tsv").c_str(),
                assignment.device_count());
    return 0;
}

int cmd_validate(const aeronet::ExperimentConfig& config) {
    const auto samples = load_samples(config);
    aeronet::Simulation sim(config, samples);
    std::printf("ok: %zu devices, %zu samples, %d epochs\n", sim.assignment().device_count(),
                samples.size(), config.spec.epochs);
    return 0;
}

int cmd_simulate(const aeronet::ExperimentConfig& config, const fs::path& out_dir) {
    const auto samples = load_samples(config);
    aeronet::Simulation sim(config, samples);
    const auto result = sim.run();
    const auto summary = aeronet::summarize_trace(sim.trace_lines());

    fs::create_directories(out_dir);
    std::string trace;
    for (const auto& line : sim.trace_lines()) {
        trace += line;
        trace += '\n';
    }
    write_file(out_dir / "trace.jsonl", trace);
    write_file(out_dir / "report.json", report_json(config, result, summary).dump(2) + "\n");
    write_file(out_dir / "formation.tsv", aeronet::formation_tsv(sim.plan(), sim.assignment()));
    write_file(out_dir / "epoch_latency.tsv", aeronet::epoch_latency_tsv(summary));

    AERONET_LOG_INFO("simulated %zu events, %zu protocol errors", sim.trace_lines().size(),
                     result.protocol_errors);
    std::printf("trace: %s (%zu events)\n", (out_dir / "trace.jsonl").c_str(),
                sim.trace_lines().size());
    std::printf("report: %s\n", (out_dir / "report.json").c_str());
    if (result.epoch_losses.empty()) {
        std::printf("no training epochs; trace hash %s\n", result.trace_hash.c_str());
    } else {
        std::printf("final epoch loss %.17g; trace hash %s\n", result.epoch_losses.back(),
                    result.trace_hash.c_str());
    }
    return 0;
}

int cmd_report(const std::string& trace_path, const fs::path& out_dir) {
    const auto summary = aeronet::summarize_trace(read_lines(trace_path));
    fs::create_directories(out_dir);
    write_file(out_dir / "summary.json", summary_json(summary).dump(2) + "\n");
    write_file(out_dir / "epoch_latency.tsv", aeronet::epoch_latency_tsv(summary));
    std::printf("summary: %s (%zu messages, %zu epochs)\n", (out_dir / "summary.json").c_str(),
                summary.total_messages, summary.epoch_makespans_s.size());
    return 0;
}

void print_error(const char* kind, const std::string& message) {
    ordered_json j;
    j["error"]["kind"] = kind;
    j["error"]["message"] = message;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"airborne feed-forward network: formation planning and distributed training"};
    app.require_subcommand(1);
    Flags flags;

    auto* plan = app.add_subcommand("plan", "compute the formation and export it");
    add_run_flags(plan, flags);
    auto* validate =
        app.add_subcommand("validate", "check config, dataset and connectivity; no simulation");
    add_run_flags(validate, flags);
    auto* simulate =
        app.add_subcommand("simulate", "run the full training simulation and write artifacts");
    add_run_flags(simulate, flags);
    auto* report = app.add_subcommand("report", "re-summarize an existing trace file");
    report->add_option("--trace", flags.trace_path, "trace file (JSON lines)")->required();
    report->add_option("--out", flags.out_dir, "output directory, created if missing (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(report)) return cmd_report(flags.trace_path, flags.out_dir);
        const CLI::App* sub = app.get_subcommands().front();
        const auto config = effective_config(flags, sub);
        if (app.got_subcommand(plan)) return cmd_plan(config, flags.out_dir);
        if (app.got_subcommand(validate)) return cmd_validate(config);
        return cmd_simulate(config, flags.out_dir);
    } catch (const aeronet::ConfigError& e) {
        print_error("config", e.what());
        return 2;
    } catch (const aeronet::ConnectivityError& e) {
        print_error("connectivity", e.what());
        return 3;
    } catch (const std::exception& e) {
        print_error("invariant", e.what());
        return 4;
    }
}
