#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "aeronet/common.hpp"
#include "aeronet/core_nn.hpp"
#include "aeronet/metrics.hpp"
#include "aeronet/topology.hpp"

namespace aeronet {

enum class Preprocessing { None, MinMaxNormalize };

struct ExperimentConfig {
    NetworkSpec spec;
    AssignmentDesign design;
    double layer_spacing_m = 100.0;
    double lateral_spacing_m = 50.0;
    double altitude_m = 100.0;
    LinkMode link;
    bool sparse_forwarding = false;
    std::string auth_token = "shared-secret";
    std::string dataset_path;
    Preprocessing preprocessing = Preprocessing::None;
    std::optional<DatacenterBaseline> baseline;
};

namespace detail {

inline ActivationKind activation_from_config(const std::string& name,
                                             std::vector<std::string>& errors) {
    if (name == "relu") return ActivationKind::ReLU;
    if (name == "sigmoid") return ActivationKind::Sigmoid;
    if (name == "softmax") return ActivationKind::Softmax;
    if (name == "identity") return ActivationKind::Identity;
    errors.push_back("unknown activation \"" + name + "\"");
    return ActivationKind::Identity;
}

template <typename T>
T field_or(const nlohmann::ordered_json& j, const char* key, T fallback,
           std::vector<std::string>& errors) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        errors.push_back(std::string("field \"") + key + "\" has the wrong type");
        return fallback;
    }
}

inline void reject_unknown_keys(const nlohmann::ordered_json& j,
                                std::initializer_list<const char*> known, const char* scope,
                                std::vector<std::string>& errors) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool found = false;
        for (const char* k : known)
            if (key == k) found = true;
        if (!found) errors.push_back(std::string("unknown key \"") + key + "\" in " + scope);
    }
}

}  // namespace detail

// Parses and fully validates an experiment file, reporting every problem in
// one ConfigError instead of stopping at the first.
inline ExperimentConfig parse_experiment(const std::string& text, const std::string& origin) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(origin + ": not valid JSON: " + e.what());
    }

    std::vector<std::string> errors;
    ExperimentConfig config;

    detail::reject_unknown_keys(j,
                                {"network", "design", "formation", "link", "sparse_forwarding",
                                 "auth_token", "dataset", "preprocessing", "baseline"},
                                "config root", errors);

    if (!j.contains("network")) {
        errors.push_back("missing required section \"network\"");
    } else {
        const auto& net = j.at("network");
        detail::reject_unknown_keys(
            net, {"layer_sizes", "activations", "loss", "epochs", "seed", "optimizer"}, "network",
            errors);
        config.spec.layer_sizes =
            detail::field_or<std::vector<int>>(net, "layer_sizes", {}, errors);
        for (const auto& name :
             detail::field_or<std::vector<std::string>>(net, "activations", {}, errors))
            config.spec.activations.push_back(detail::activation_from_config(name, errors));
        const auto loss = detail::field_or<std::string>(net, "loss", "mse", errors);
        if (loss == "mse") {
            config.spec.loss = LossKind::MeanSquaredError;
        } else if (loss == "cross_entropy") {
            config.spec.loss = LossKind::CrossEntropy;
        } else {
            errors.push_back("unknown loss \"" + loss + "\"");
        }
        config.spec.epochs = detail::field_or<int>(net, "epochs", 1, errors);
        config.spec.seed = detail::field_or<std::uint64_t>(net, "seed", 1, errors);
        if (net.contains("optimizer")) {
            const auto& opt = net.at("optimizer");
            detail::reject_unknown_keys(
                opt, {"kind", "learning_rate", "beta1", "beta2", "epsilon"}, "optimizer", errors);
            const auto kind = detail::field_or<std::string>(opt, "kind", "sgd", errors);
            if (kind == "sgd") {
                config.spec.optimizer.kind = OptimizerConfig::Kind::Sgd;
            } else if (kind == "adam") {
                config.spec.optimizer.kind = OptimizerConfig::Kind::Adam;
            } else {
                errors.push_back("unknown optimizer kind \"" + kind + "\"");
            }
            config.spec.optimizer.learning_rate =
                detail::field_or<double>(opt, "learning_rate", 0.1, errors);
            config.spec.optimizer.beta1 = detail::field_or<double>(opt, "beta1", 0.9, errors);
            config.spec.optimizer.beta2 = detail::field_or<double>(opt, "beta2", 0.999, errors);
            config.spec.optimizer.epsilon = detail::field_or<double>(opt, "epsilon", 1e-8, errors);
        }
        for (const auto& problem : validate_spec(config.spec)) errors.push_back(problem);
    }

    if (j.contains("design")) {
        const auto& design = j.at("design");
        detail::reject_unknown_keys(design, {"kind", "neurons_per_device"}, "design", errors);
        const int kind = detail::field_or<int>(design, "kind", 1, errors);
        switch (kind) {
            case 1: config.design.kind = AssignmentDesign::Kind::OneNeuronPerDevice; break;
            case 2: config.design.kind = AssignmentDesign::Kind::LayerGrouped; break;
            case 3: config.design.kind = AssignmentDesign::Kind::LayerGroupedWithController; break;
            default: errors.push_back("design.kind must be 1, 2 or 3"); break;
        }
        config.design.neurons_per_device =
            detail::field_or<int>(design, "neurons_per_device", 1, errors);
        if (config.design.neurons_per_device < 1)
            errors.push_back("design.neurons_per_device must be >= 1");
    }

    if (j.contains("formation")) {
        const auto& formation = j.at("formation");
        detail::reject_unknown_keys(formation,
                                    {"layer_spacing_m", "lateral_spacing_m", "altitude_m"},
                                    "formation", errors);
        config.layer_spacing_m =
            detail::field_or<double>(formation, "layer_spacing_m", 100.0, errors);
        config.lateral_spacing_m =
            detail::field_or<double>(formation, "lateral_spacing_m", 50.0, errors);
        config.altitude_m = detail::field_or<double>(formation, "altitude_m", 100.0, errors);
        if (config.layer_spacing_m <= 0) errors.push_back("formation.layer_spacing_m must be > 0");
        if (config.lateral_spacing_m <= 0)
            errors.push_back("formation.lateral_spacing_m must be > 0");
    }

    if (j.contains("link")) {
        const auto& link = j.at("link");
        detail::reject_unknown_keys(link,
                                    {"mode", "bandwidth_bps", "per_hop_latency_s", "range_m",
                                     "propagation_mps", "per_hop_overhead_s"},
                                    "link", errors);
        const auto mode = detail::field_or<std::string>(link, "mode", "wired", errors);
        if (mode == "wired") {
            config.link = LinkMode::wired();
        } else if (mode == "wireless") {
            config.link = LinkMode::wireless();
        } else {
            errors.push_back("link.mode must be \"wired\" or \"wireless\"");
        }
        config.link.bandwidth_bps =
            detail::field_or<double>(link, "bandwidth_bps", config.link.bandwidth_bps, errors);
        config.link.per_hop_latency_s = detail::field_or<double>(
            link, "per_hop_latency_s", config.link.per_hop_latency_s, errors);
        config.link.range_m = detail::field_or<double>(link, "range_m", config.link.range_m, errors);
        config.link.propagation_mps =
            detail::field_or<double>(link, "propagation_mps", config.link.propagation_mps, errors);
        config.link.per_hop_overhead_s = detail::field_or<double>(
            link, "per_hop_overhead_s", config.link.per_hop_overhead_s, errors);
        if (config.link.bandwidth_bps <= 0) errors.push_back("link.bandwidth_bps must be > 0");
        if (config.link.per_hop_latency_s <= 0 && config.link.kind == LinkMode::Kind::Wired)
            errors.push_back("link.per_hop_latency_s must be > 0");
        if (config.link.kind == LinkMode::Kind::Wireless) {
            if (config.link.range_m <= 0) errors.push_back("link.range_m must be > 0");
            if (config.link.propagation_mps <= 0)
                errors.push_back("link.propagation_mps must be > 0");
            if (config.link.per_hop_overhead_s < 0)
                errors.push_back("link.per_hop_overhead_s must be >= 0");
        }
    }

    config.sparse_forwarding = detail::field_or<bool>(j, "sparse_forwarding", false, errors);
    config.auth_token = detail::field_or<std::string>(j, "auth_token", "shared-secret", errors);
    config.dataset_path = detail::field_or<std::string>(j, "dataset", "", errors);
    const auto preprocessing = detail::field_or<std::string>(j, "preprocessing", "none", errors);
    if (preprocessing == "none") {
        config.preprocessing = Preprocessing::None;
    } else if (preprocessing == "min_max") {
        config.preprocessing = Preprocessing::MinMaxNormalize;
    } else {
        errors.push_back("preprocessing must be \"none\" or \"min_max\"");
    }

    if (j.contains("baseline")) {
        const auto& baseline = j.at("baseline");
        detail::reject_unknown_keys(baseline,
                                    {"uplink_bandwidth_bps", "downlink_bandwidth_bps",
                                     "round_trip_time_s", "per_sample_compute_time_s"},
                                    "baseline", errors);
        DatacenterBaseline b;
        b.uplink_bandwidth_bps =
            detail::field_or<double>(baseline, "uplink_bandwidth_bps", 1e6, errors);
        b.downlink_bandwidth_bps =
            detail::field_or<double>(baseline, "downlink_bandwidth_bps", 1e6, errors);
        b.round_trip_time_s = detail::field_or<double>(baseline, "round_trip_time_s", 0.05, errors);
        b.per_sample_compute_time_s =
            detail::field_or<double>(baseline, "per_sample_compute_time_s", 0.0, errors);
        if (b.uplink_bandwidth_bps <= 0 || b.downlink_bandwidth_bps <= 0 ||
            b.round_trip_time_s <= 0 || b.per_sample_compute_time_s < 0)
            errors.push_back("baseline parameters must be positive (compute time >= 0)");
        config.baseline = b;
    }

    if (!errors.empty()) {
        std::string joined = origin + ": invalid experiment config:";
        for (const auto& problem : errors) joined += "\n  - " + problem;
        throw ConfigError(joined);
    }
    return config;
}

inline ExperimentConfig load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment(buffer.str(), path);
}

// Serializes the effective config (defaults applied) back out. Loading the
// echo reproduces the run exactly.
inline nlohmann::ordered_json experiment_to_json(const ExperimentConfig& config) {
    nlohmann::ordered_json j;
    auto& net = j["network"];
    net["layer_sizes"] = config.spec.layer_sizes;
    std::vector<std::string> activations;
    for (auto kind : config.spec.activations) activations.emplace_back(to_string(kind));
    net["activations"] = activations;
    net["loss"] = to_string(config.spec.loss);
    net["epochs"] = config.spec.epochs;
    net["seed"] = config.spec.seed;
    auto& opt = net["optimizer"];
    opt["kind"] = config.spec.optimizer.kind == OptimizerConfig::Kind::Sgd ? "sgd" : "adam";
    opt["learning_rate"] = config.spec.optimizer.learning_rate;
    opt["beta1"] = config.spec.optimizer.beta1;
    opt["beta2"] = config.spec.optimizer.beta2;
    opt["epsilon"] = config.spec.optimizer.epsilon;
    auto& design = j["design"];
    switch (config.design.kind) {
        case AssignmentDesign::Kind::OneNeuronPerDevice: design["kind"] = 1; break;
        case AssignmentDesign::Kind::LayerGrouped: design["kind"] = 2; break;
        case AssignmentDesign::Kind::LayerGroupedWithController: design["kind"] = 3; break;
    }
    design["neurons_per_device"] = config.design.neurons_per_device;
    auto& formation = j["formation"];
    formation["layer_spacing_m"] = config.layer_spacing_m;
    formation["lateral_spacing_m"] = config.lateral_spacing_m;
    formation["altitude_m"] = config.altitude_m;
    auto& link = j["link"];
    link["mode"] = config.link.kind == LinkMode::Kind::Wired ? "wired" : "wireless";
    link["bandwidth_bps"] = config.link.bandwidth_bps;
    link["per_hop_latency_s"] = config.link.per_hop_latency_s;
    link["range_m"] = config.link.range_m;
    link["propagation_mps"] = config.link.propagation_mps;
    link["per_hop_overhead_s"] = config.link.per_hop_overhead_s;
    j["sparse_forwarding"] = config.sparse_forwarding;
    j["auth_token"] = config.auth_token;
    j["dataset"] = config.dataset_path;
    j["preprocessing"] = config.preprocessing == Preprocessing::None ? "none" : "min_max";
    if (config.baseline) {
        auto& baseline = j["baseline"];
        baseline["uplink_bandwidth_bps"] = config.baseline->uplink_bandwidth_bps;
        baseline["downlink_bandwidth_bps"] = config.baseline->downlink_bandwidth_bps;
        baseline["round_trip_time_s"] = config.baseline->round_trip_time_s;
        baseline["per_sample_compute_time_s"] = config.baseline->per_sample_compute_time_s;
    }
    return j;
}

// CSV with a header row; each data row holds input_dims feature cells then
// target_dims target cells. Errors carry 1-based file line numbers.
inline std::vector<TrainingSample> load_dataset(const std::string& path, int input_dims,
                                                int target_dims) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open dataset file: " + path);

    std::vector<TrainingSample> samples;
    std::string line;
    int line_no = 0;
    const int expected = input_dims + target_dims;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) continue;  // header names the columns
        if (line.empty()) continue;

        std::vector<double> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            std::size_t used = 0;
            double value = 0.0;
            try {
                value = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw ConfigError(path + " line " + std::to_string(line_no) +
                                  ": non-numeric cell \"" + cell + "\"");
            }
            while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                ++used;
            if (used != cell.size())
                throw ConfigError(path + " line " + std::to_string(line_no) +
                                  ": non-numeric cell \"" + cell + "\"");
            cells.push_back(value);
        }
        if (static_cast<int>(cells.size()) != expected)
            throw ConfigError(path + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(expected) + " fields, found " +
                              std::to_string(cells.size()));

        TrainingSample sample;
        sample.input.assign(cells.begin(), cells.begin() + input_dims);
        sample.target.assign(cells.begin() + input_dims, cells.end());
        samples.push_back(std::move(sample));
    }
    return samples;
}

// Min-max feature scaling to [0,1], parameters taken from the dataset itself.
// Targets are left untouched; constant columns map to 0.
inline std::vector<TrainingSample> apply_preprocessing(std::vector<TrainingSample> samples,
                                                       Preprocessing preprocessing) {
    if (preprocessing == Preprocessing::None || samples.empty()) return samples;
    const std::size_t dims = samples.front().input.size();
    std::vector<double> lo(dims, 1e300), hi(dims, -1e300);
    for (const auto& sample : samples)
        for (std::size_t d = 0; d < dims; ++d) {
            lo[d] = std::min(lo[d], sample.input[d]);
            hi[d] = std::max(hi[d], sample.input[d]);
        }
    for (auto& sample : samples)
        for (std::size_t d = 0; d < dims; ++d)
            sample.input[d] = hi[d] > lo[d] ? (sample.input[d] - lo[d]) / (hi[d] - lo[d]) : 0.0;
    return samples;
}

}  // namespace aeronet
