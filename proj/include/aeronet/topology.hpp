#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aeronet/common.hpp"
#include "aeronet/core_nn.hpp"
#include "aeronet/protocol.hpp"

namespace aeronet {

enum class DeviceKind {
    Drone,
    HotAirBalloon,
    Helicopter,
    Airplane,
    Satellite,
    Rocket,
    MannedAerialVehicle,
    UnmannedAerialVehicle,
};

inline const char* to_string(DeviceKind kind) {
    switch (kind) {
        case DeviceKind::Drone: return "drone";
        case DeviceKind::HotAirBalloon: return "hot_air_balloon";
        case DeviceKind::Helicopter: return "helicopter";
        case DeviceKind::Airplane: return "airplane";
        case DeviceKind::Satellite: return "satellite";
        case DeviceKind::Rocket: return "rocket";
        case DeviceKind::MannedAerialVehicle: return "manned_aerial_vehicle";
        case DeviceKind::UnmannedAerialVehicle: return "unmanned_aerial_vehicle";
    }
    return "?";
}

struct AssignmentDesign {
    enum class Kind { OneNeuronPerDevice, LayerGrouped, LayerGroupedWithController };

    Kind kind = Kind::OneNeuronPerDevice;
    int neurons_per_device = 1;

    static AssignmentDesign one_per_device() { return {Kind::OneNeuronPerDevice, 1}; }
    static AssignmentDesign grouped(int k) { return {Kind::LayerGrouped, k}; }
    static AssignmentDesign grouped_with_controller(int k) {
        return {Kind::LayerGroupedWithController, k};
    }
};

// Link parameters. Wired links ignore geometry (constant per-hop cable
// latency); wireless links pay propagation delay and enforce a range.
struct LinkMode {
    enum class Kind { Wired, Wireless };

    Kind kind = Kind::Wired;
    double bandwidth_bps = 1e8;
    double per_hop_latency_s = 1e-4;     // wired only
    double range_m = 500.0;              // wireless only
    double propagation_mps = 3e8;        // wireless only
    double per_hop_overhead_s = 1e-3;    // wireless only

    static LinkMode wired() { return {}; }
    static LinkMode wireless() {
        LinkMode mode;
        mode.kind = Kind::Wireless;
        return mode;
    }
};

// One hosting device and the (ascending, same-layer) neurons living on it.
struct HostAssignment {
    DeviceId device;
    int layer = 0;
    std::vector<int> neuron_indices;
};

struct Assignment {
    std::vector<HostAssignment> hosts;
    std::map<int, DeviceId> controllers;
    DeviceId master;
    DeviceId input_provider;
    DeviceId output_receiver;
    std::map<DeviceId, DeviceKind> fleet;

    std::size_t device_count() const { return fleet.size(); }

    const HostAssignment& host_of(int layer, int neuron) const {
        for (const auto& host : hosts) {
            if (host.layer != layer) continue;
            for (int idx : host.neuron_indices)
                if (idx == neuron) return host;
        }
        throw InvariantError("no device hosts layer " + std::to_string(layer) + " neuron " +
                             std::to_string(neuron));
    }

    std::vector<const HostAssignment*> layer_hosts(int layer) const {
        std::vector<const HostAssignment*> result;
        for (const auto& host : hosts)
            if (host.layer == layer) result.push_back(&host);
        return result;
    }
};

// Packs neurons onto devices in ascending index order, k per device. Design 1
// is the k=1 packing with dedicated controller devices; Design 3 folds each
// layer's controller onto that layer's first hosting device.
inline Assignment assign_neurons(const NetworkSpec& spec, const AssignmentDesign& design) {
    if (design.neurons_per_device < 1)
        throw ConfigError("assignment: neurons_per_device must be >= 1");
    const int k = design.kind == AssignmentDesign::Kind::OneNeuronPerDevice
                      ? 1
                      : design.neurons_per_device;

    Assignment assignment;
    assignment.master = "master";
    assignment.input_provider = "input-provider";
    assignment.output_receiver = "output-receiver";
    assignment.fleet[assignment.master] = DeviceKind::Helicopter;
    assignment.fleet[assignment.input_provider] = DeviceKind::Airplane;
    assignment.fleet[assignment.output_receiver] = DeviceKind::Airplane;

    for (int layer = 0; layer < spec.layer_count(); ++layer) {
        const int n = spec.layer_sizes[layer];
        for (int begin = 0, device = 0; begin < n; begin += k, ++device) {
            HostAssignment host;
            host.device = "neuron-l" + std::to_string(layer) + "-d" + std::to_string(device);
            host.layer = layer;
            for (int idx = begin; idx < std::min(begin + k, n); ++idx)
                host.neuron_indices.push_back(idx);
            assignment.fleet[host.device] = DeviceKind::Drone;
            assignment.hosts.push_back(std::move(host));
        }
    }

    for (int layer = 1; layer < spec.layer_count(); ++layer) {
        if (design.kind == AssignmentDesign::Kind::LayerGroupedWithController) {
            assignment.controllers[layer] = assignment.layer_hosts(layer).front()->device;
        } else {
            const DeviceId id = "controller-l" + std::to_string(layer);
            assignment.controllers[layer] = id;
            assignment.fleet[id] = DeviceKind::UnmannedAerialVehicle;
        }
    }
    return assignment;
}

struct FormationPlan {
    std::map<DeviceId, Position> positions;
    LinkMode link_mode;
};

// Layer-major grid at constant altitude: layer l flies at x = l * spacing,
// devices within a layer line up along y in neuron order (centered on 0),
// controllers sit past the last hosting device of their layer, and the
// master/input provider trail the input layer while the output receiver
// leads the output layer.
inline FormationPlan plan_formation(const Assignment& assignment, const NetworkSpec& spec,
                                    double layer_spacing_m = 100.0,
                                    double lateral_spacing_m = 50.0,
                                    LinkMode link_mode = LinkMode::wired(),
                                    double altitude_m = 100.0) {
    if (layer_spacing_m <= 0 || lateral_spacing_m <= 0)
        throw ConfigError("formation: spacings must be positive");

    FormationPlan plan;
    plan.link_mode = link_mode;

    for (int layer = 0; layer < spec.layer_count(); ++layer) {
        const auto hosts = assignment.layer_hosts(layer);
        const double x = layer * layer_spacing_m;
        const double mid = (static_cast<double>(hosts.size()) - 1.0) / 2.0;
        for (std::size_t i = 0; i < hosts.size(); ++i) {
            const double y = (static_cast<double>(i) - mid) * lateral_spacing_m;
            plan.positions[hosts[i]->device] = {x, y, altitude_m};
        }
        auto controller = assignment.controllers.find(layer);
        if (controller != assignment.controllers.end() &&
            !plan.positions.count(controller->second)) {
            const double y_last = (static_cast<double>(hosts.size() - 1) - mid) * lateral_spacing_m;
            plan.positions[controller->second] = {x, y_last + lateral_spacing_m, altitude_m};
        }
    }

    const double x_max = (spec.layer_count() - 1) * layer_spacing_m;
    plan.positions[assignment.input_provider] = {-layer_spacing_m, 0.0, altitude_m};
    plan.positions[assignment.master] = {-layer_spacing_m, lateral_spacing_m, altitude_m};
    plan.positions[assignment.output_receiver] = {x_max + layer_spacing_m, 0.0, altitude_m};
    return plan;
}

inline double link_latency(const LinkMode& mode, const Position& src, const Position& dst,
                           std::size_t size_bytes) {
    const double serialization = 8.0 * static_cast<double>(size_bytes) / mode.bandwidth_bps;
    if (mode.kind == LinkMode::Kind::Wired) return mode.per_hop_latency_s + serialization;
    const double d = distance(src, dst);
    if (d > mode.range_m) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "wireless link out of range: distance %.3f m > range %.3f m",
                      d, mode.range_m);
        throw ConnectivityError(buf);
    }
    return mode.per_hop_overhead_s + d / mode.propagation_mps + serialization;
}

// Every communication edge the training protocol uses. Pairs are unordered
// (latency is symmetric); ids are emitted in flow direction for readability.
inline std::vector<std::pair<DeviceId, DeviceId>> required_edges(const Assignment& assignment,
                                                                 const NetworkSpec& spec) {
    std::vector<std::pair<DeviceId, DeviceId>> edges;
    auto add = [&](const DeviceId& a, const DeviceId& b) {
        if (a != b) edges.emplace_back(a, b);
    };

    add(assignment.master, assignment.input_provider);
    for (const auto* host : assignment.layer_hosts(0)) add(assignment.input_provider, host->device);
    for (int layer = 0; layer + 1 < spec.layer_count(); ++layer)
        for (const auto* src : assignment.layer_hosts(layer))
            for (const auto* dst : assignment.layer_hosts(layer + 1)) add(src->device, dst->device);
    for (const auto& [layer, controller] : assignment.controllers) {
        for (const auto* host : assignment.layer_hosts(layer)) add(host->device, controller);
        add(controller, assignment.master);
    }
    for (const auto* host : assignment.layer_hosts(spec.layer_count() - 1))
        add(host->device, assignment.output_receiver);
    add(assignment.output_receiver, assignment.master);
    return edges;
}

inline std::vector<std::string> check_connectivity(const FormationPlan& plan,
                                                   const Assignment& assignment,
                                                   const NetworkSpec& spec) {
    std::vector<std::string> violations;
    if (plan.link_mode.kind == LinkMode::Kind::Wired) return violations;
    for (const auto& [src, dst] : required_edges(assignment, spec)) {
        const double d = distance(plan.positions.at(src), plan.positions.at(dst));
        if (d > plan.link_mode.range_m) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s -> %s: distance %.3f m exceeds range %.3f m",
                          src.c_str(), dst.c_str(), d, plan.link_mode.range_m);
            violations.emplace_back(buf);
        }
    }
    return violations;
}

// Tab-separated formation dump for plotting: device, roles, kind, x, y, z.
inline std::string formation_tsv(const FormationPlan& plan, const Assignment& assignment) {
    std::map<DeviceId, std::vector<std::string>> roles;
    roles[assignment.master].push_back("master");
    roles[assignment.input_provider].push_back("input_provider");
    roles[assignment.output_receiver].push_back("output_receiver");
    for (const auto& host : assignment.hosts) roles[host.device].push_back("neuron_host");
    for (const auto& [layer, controller] : assignment.controllers) {
        (void)layer;
        roles[controller].push_back("layer_controller");
    }

    std::string out = "device_id\troles\tkind\tx\ty\tz\n";
    for (const auto& [device, position] : plan.positions) {
        std::string joined;
        for (const auto& role : roles[device]) {
            if (!joined.empty()) joined += "+";
            joined += role;
        }
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%.3f\t%.3f\t%.3f\n", device.c_str(),
                      joined.c_str(), to_string(assignment.fleet.at(device)), position.x,
                      position.y, position.z);
        out += buf;
    }
    return out;
}

}  // namespace aeronet
