#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "aeronet/common.hpp"
#include "aeronet/core_nn.hpp"

namespace aeronet {

using DeviceId = std::string;

enum class RoleKind { Master, LayerController, NeuronHost, InputProvider, OutputReceiver };

inline const char* to_string(RoleKind kind) {
    switch (kind) {
        case RoleKind::Master: return "master";
        case RoleKind::LayerController: return "layer_controller";
        case RoleKind::NeuronHost: return "neuron_host";
        case RoleKind::InputProvider: return "input_provider";
        case RoleKind::OutputReceiver: return "output_receiver";
    }
    return "?";
}

// layer_index counts from 0 (the input layer). LayerControllers manage a
// contiguous half-open span [range_begin, range_end) of their layer;
// NeuronHosts own an explicit index list.
struct Role {
    RoleKind kind = RoleKind::Master;
    int layer_index = 0;
    std::vector<int> neuron_indices;
    int range_begin = 0;
    int range_end = 0;

    bool operator==(const Role&) const = default;

    static Role master() { return {}; }
    static Role input_provider() { return {RoleKind::InputProvider, 0, {}, 0, 0}; }
    static Role output_receiver() { return {RoleKind::OutputReceiver, 0, {}, 0, 0}; }
    static Role controller(int layer, int begin, int end) {
        return {RoleKind::LayerController, layer, {}, begin, end};
    }
    static Role host(int layer, std::vector<int> indices) {
        return {RoleKind::NeuronHost, layer, std::move(indices), 0, 0};
    }
};

inline bool role_valid_for(const Role& role, const NetworkSpec& spec) {
    const int layers = spec.layer_count();
    switch (role.kind) {
        case RoleKind::Master:
        case RoleKind::InputProvider:
        case RoleKind::OutputReceiver:
            return true;
        case RoleKind::LayerController:
            return role.layer_index >= 1 && role.layer_index < layers &&
                   role.range_begin >= 0 && role.range_begin < role.range_end &&
                   role.range_end <= spec.layer_sizes[role.layer_index];
        case RoleKind::NeuronHost: {
            if (role.layer_index < 0 || role.layer_index >= layers) return false;
            if (role.neuron_indices.empty()) return false;
            std::vector<bool> seen(spec.layer_sizes[role.layer_index], false);
            for (int idx : role.neuron_indices) {
                if (idx < 0 || idx >= spec.layer_sizes[role.layer_index]) return false;
                if (seen[idx]) return false;
                seen[idx] = true;
            }
            return true;
        }
    }
    return false;
}

// ---- Message variants ------------------------------------------------------

struct RegisterRequest {
    DeviceId device_id;
    Role role;
    std::string auth_token;
    std::string device_kind;
    bool operator==(const RegisterRequest&) const = default;
};

struct RegisterResponse {
    bool admitted = false;
    std::string reason;
    bool operator==(const RegisterResponse&) const = default;
};

struct NavigationInstruction {
    DeviceId device_id;
    Position position;
    bool operator==(const NavigationInstruction&) const = default;
};

struct NeuronConfig {
    int layer_index = 0;
    int neuron_index = 0;
    std::vector<double> incoming_weights;
    double bias = 0.0;
    ActivationKind activation = ActivationKind::Identity;
    bool operator==(const NeuronConfig&) const = default;
};

struct ForwardActivation {
    int sample_id = 0;
    int layer_index = 0;
    int neuron_index = 0;
    double value = 0.0;
    bool operator==(const ForwardActivation&) const = default;
};

struct InputVector {
    int sample_id = 0;
    std::vector<double> values;
    bool operator==(const InputVector&) const = default;
};

struct OutputVector {
    int sample_id = 0;
    std::vector<double> values;
    bool operator==(const OutputVector&) const = default;
};

struct LossReport {
    int epoch = 0;
    int sample_id = 0;
    double loss_value = 0.0;
    std::vector<double> output_delta_vector;
    bool operator==(const LossReport&) const = default;
};

struct BackwardDelta {
    int sample_id = 0;
    int layer_index = 0;
    int neuron_index = 0;
    double delta_value = 0.0;
    bool operator==(const BackwardDelta&) const = default;
};

struct GradientReport {
    int layer_index = 0;
    int neuron_index = 0;
    std::vector<double> weight_grads;
    double bias_grad = 0.0;
    int sample_id = 0;
    bool operator==(const GradientReport&) const = default;
};

struct WeightUpdate {
    int layer_index = 0;
    int neuron_index = 0;
    std::vector<double> new_weights;
    double new_bias = 0.0;
    bool operator==(const WeightUpdate&) const = default;
};

struct EpochBarrier {
    int epoch = 0;
    bool operator==(const EpochBarrier&) const = default;
};

// Sparse mode: replaces the ForwardActivation of a neuron whose activation is
// exactly zero. Carries no value, so it is cheaper on the wire.
struct SparseSkip {
    int sample_id = 0;
    int layer_index = 0;
    int neuron_index = 0;
    bool operator==(const SparseSkip&) const = default;
};

// A LayerController's consolidated gradient forward to the master: one entry
// per neuron it manages, in ascending neuron order.
struct GradientBatch {
    int sample_id = 0;
    int layer_index = 0;
    std::vector<GradientReport> reports;
    bool operator==(const GradientBatch&) const = default;
};

// Confirms a WeightUpdate was applied; the master holds the next sample until
// every neuron acknowledged, which keeps training lock-step.
struct WeightUpdateAck {
    int sample_id = 0;
    int layer_index = 0;
    int neuron_index = 0;
    bool operator==(const WeightUpdateAck&) const = default;
};

// Master -> InputProvider: permission to emit the next sample.
struct SampleRelease {
    int sample_id = 0;
    bool operator==(const SampleRelease&) const = default;
};

using Message =
    std::variant<RegisterRequest, RegisterResponse, NavigationInstruction, NeuronConfig,
                 ForwardActivation, InputVector, OutputVector, LossReport, BackwardDelta,
                 GradientReport, WeightUpdate, EpochBarrier, SparseSkip, GradientBatch,
                 WeightUpdateAck, SampleRelease>;

inline const char* variant_name(const Message& msg) {
    struct Namer {
        const char* operator()(const RegisterRequest&) { return "RegisterRequest"; }
        const char* operator()(const RegisterResponse&) { return "RegisterResponse"; }
        const char* operator()(const NavigationInstruction&) { return "NavigationInstruction"; }
        const char* operator()(const NeuronConfig&) { return "NeuronConfig"; }
        const char* operator()(const ForwardActivation&) { return "ForwardActivation"; }
        const char* operator()(const InputVector&) { return "InputVector"; }
        const char* operator()(const OutputVector&) { return "OutputVector"; }
        const char* operator()(const LossReport&) { return "LossReport"; }
        const char* operator()(const BackwardDelta&) { return "BackwardDelta"; }
        const char* operator()(const GradientReport&) { return "GradientReport"; }
        const char* operator()(const WeightUpdate&) { return "WeightUpdate"; }
        const char* operator()(const EpochBarrier&) { return "EpochBarrier"; }
        const char* operator()(const SparseSkip&) { return "SparseSkip"; }
        const char* operator()(const GradientBatch&) { return "GradientBatch"; }
        const char* operator()(const WeightUpdateAck&) { return "WeightUpdateAck"; }
        const char* operator()(const SampleRelease&) { return "SampleRelease"; }
    };
    return std::visit(Namer{}, msg);
}

// ---- Wire size -------------------------------------------------------------
//
// Every message costs a fixed 32-byte header, plus 8 bytes per real value,
// 8 bytes per integer-like field (indices, counters, booleans, enums), plus
// the byte length of each text field. GradientBatch nests its reports without
// repeating their headers.

inline std::size_t message_size(const Message& msg) {
    constexpr std::size_t header = 32;
    constexpr std::size_t word = 8;
    struct Sizer {
        std::size_t operator()(const RegisterRequest& m) {
            std::size_t role_bytes = word;  // role kind
            switch (m.role.kind) {
                case RoleKind::LayerController: role_bytes += 3 * word; break;
                case RoleKind::NeuronHost:
                    role_bytes += word + word * m.role.neuron_indices.size();
                    break;
                default: break;
            }
            return header + m.device_id.size() + m.auth_token.size() + m.device_kind.size() +
                   role_bytes;
        }
        std::size_t operator()(const RegisterResponse& m) {
            return header + word + m.reason.size();
        }
        std::size_t operator()(const NavigationInstruction& m) {
            return header + m.device_id.size() + 3 * word;
        }
        std::size_t operator()(const NeuronConfig& m) {
            return header + 3 * word + word * m.incoming_weights.size() + word;
        }
        std::size_t operator()(const ForwardActivation&) { return header + 4 * word; }
        std::size_t operator()(const InputVector& m) {
            return header + word + word * m.values.size();
        }
        std::size_t operator()(const OutputVector& m) {
            return header + word + word * m.values.size();
        }
        std::size_t operator()(const LossReport& m) {
            return header + 3 * word + word * m.output_delta_vector.size();
        }
        std::size_t operator()(const BackwardDelta&) { return header + 4 * word; }
        std::size_t operator()(const GradientReport& m) {
            return header + 4 * word + word * m.weight_grads.size();
        }
        std::size_t operator()(const WeightUpdate& m) {
            return header + 3 * word + word * m.new_weights.size();
        }
        std::size_t operator()(const EpochBarrier&) { return header + word; }
        std::size_t operator()(const SparseSkip&) { return header + 3 * word; }
        std::size_t operator()(const GradientBatch& m) {
            std::size_t total = header + 2 * word;
            for (const auto& report : m.reports)
                total += 4 * word + word * report.weight_grads.size();
            return total;
        }
        std::size_t operator()(const WeightUpdateAck&) { return header + 3 * word; }
        std::size_t operator()(const SampleRelease&) { return header + word; }
    };
    return std::visit(Sizer{}, msg);
}

// ---- Admission -------------------------------------------------------------

enum class AdmissionStatus { Pending, Admitted, Rejected };

// The master's view of the fleet. Conflict bookkeeping (neuron ownership,
// controller spans) only advances on admission, so a rejected attempt can be
// retried under the same id.
struct AdmissionRegistry {
    struct Entry {
        Role role;
        AdmissionStatus status = AdmissionStatus::Pending;
        std::string device_kind;
    };

    std::map<DeviceId, Entry> entries;
    std::map<std::pair<int, int>, DeviceId> neuron_owner;
    std::map<int, std::vector<std::pair<int, int>>> controller_spans;
    bool has_master = false;

    bool is_admitted(const DeviceId& id) const {
        auto it = entries.find(id);
        return it != entries.end() && it->second.status == AdmissionStatus::Admitted;
    }
};

inline RegisterResponse verify_registration(AdmissionRegistry& registry,
                                            const RegisterRequest& request,
                                            const std::string& expected_token,
                                            const NetworkSpec& spec) {
    auto reject = [&](const char* reason) {
        if (!registry.is_admitted(request.device_id) && !request.device_id.empty())
            registry.entries[request.device_id] = {request.role, AdmissionStatus::Rejected,
                                                   request.device_kind};
        return RegisterResponse{false, reason};
    };

    if (request.auth_token != expected_token) return reject("auth_failed");
    if (request.device_id.empty()) return reject("invalid_id");
    if (registry.is_admitted(request.device_id)) return RegisterResponse{false, "duplicate_id"};
    if (!role_valid_for(request.role, spec)) return reject("invalid_role");

    const Role& role = request.role;
    if (role.kind == RoleKind::Master && registry.has_master) return reject("role_conflict");
    if (role.kind == RoleKind::NeuronHost) {
        for (int idx : role.neuron_indices)
            if (registry.neuron_owner.count({role.layer_index, idx}))
                return reject("role_conflict");
    }
    if (role.kind == RoleKind::LayerController) {
        for (const auto& [begin, end] : registry.controller_spans[role.layer_index])
            if (role.range_begin < end && begin < role.range_end) return reject("role_conflict");
    }

    registry.entries[request.device_id] = {role, AdmissionStatus::Admitted, request.device_kind};
    if (role.kind == RoleKind::Master) registry.has_master = true;
    if (role.kind == RoleKind::NeuronHost)
        for (int idx : role.neuron_indices)
            registry.neuron_owner[{role.layer_index, idx}] = request.device_id;
    if (role.kind == RoleKind::LayerController)
        registry.controller_spans[role.layer_index].emplace_back(role.range_begin, role.range_end);
    return RegisterResponse{true, "ok"};
}

// ---- Envelope and trace codec ----------------------------------------------

struct Envelope {
    DeviceId src;
    DeviceId dst;
    double send_time = 0.0;
    double deliver_time = 0.0;
    Message payload;
    std::size_t size_bytes = 0;

    bool operator==(const Envelope&) const = default;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson role_to_json(const Role& role) {
    ojson j;
    j["kind"] = to_string(role.kind);
    if (role.kind == RoleKind::LayerController) {
        j["layer_index"] = role.layer_index;
        j["range_begin"] = role.range_begin;
        j["range_end"] = role.range_end;
    } else if (role.kind == RoleKind::NeuronHost) {
        j["layer_index"] = role.layer_index;
        j["neuron_indices"] = role.neuron_indices;
    }
    return j;
}

inline Role role_from_json(const ojson& j) {
    const std::string kind = j.at("kind");
    if (kind == "master") return Role::master();
    if (kind == "input_provider") return Role::input_provider();
    if (kind == "output_receiver") return Role::output_receiver();
    if (kind == "layer_controller")
        return Role::controller(j.at("layer_index"), j.at("range_begin"), j.at("range_end"));
    if (kind == "neuron_host")
        return Role::host(j.at("layer_index"), j.at("neuron_indices").get<std::vector<int>>());
    throw ProtocolError("unknown role kind: " + kind);
}

inline ActivationKind activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationKind::ReLU;
    if (name == "sigmoid") return ActivationKind::Sigmoid;
    if (name == "softmax") return ActivationKind::Softmax;
    if (name == "identity") return ActivationKind::Identity;
    throw ProtocolError("unknown activation: " + name);
}

inline ojson gradient_report_to_json(const GradientReport& m) {
    ojson p;
    p["layer_index"] = m.layer_index;
    p["neuron_index"] = m.neuron_index;
    p["weight_grads"] = m.weight_grads;
    p["bias_grad"] = m.bias_grad;
    p["sample_id"] = m.sample_id;
    return p;
}

inline GradientReport gradient_report_from_json(const ojson& p) {
    GradientReport m;
    m.layer_index = p.at("layer_index");
    m.neuron_index = p.at("neuron_index");
    m.weight_grads = p.at("weight_grads").get<std::vector<double>>();
    m.bias_grad = p.at("bias_grad");
    m.sample_id = p.at("sample_id");
    return m;
}

inline ojson payload_to_json(const Message& msg) {
    struct Encoder {
        ojson operator()(const RegisterRequest& m) {
            ojson p;
            p["device_id"] = m.device_id;
            p["role"] = role_to_json(m.role);
            p["auth_token"] = m.auth_token;
            p["device_kind"] = m.device_kind;
            return p;
        }
        ojson operator()(const RegisterResponse& m) {
            ojson p;
            p["admitted"] = m.admitted;
            p["reason"] = m.reason;
            return p;
        }
        ojson operator()(const NavigationInstruction& m) {
            ojson p;
            p["device_id"] = m.device_id;
            p["position"] = {m.position.x, m.position.y, m.position.z};
            return p;
        }
        ojson operator()(const NeuronConfig& m) {
            ojson p;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            p["incoming_weights"] = m.incoming_weights;
            p["bias"] = m.bias;
            p["activation"] = to_string(m.activation);
            return p;
        }
        ojson operator()(const ForwardActivation& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            p["value"] = m.value;
            return p;
        }
        ojson operator()(const InputVector& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["values"] = m.values;
            return p;
        }
        ojson operator()(const OutputVector& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["values"] = m.values;
            return p;
        }
        ojson operator()(const LossReport& m) {
            ojson p;
            p["epoch"] = m.epoch;
            p["sample_id"] = m.sample_id;
            p["loss_value"] = m.loss_value;
            p["output_delta_vector"] = m.output_delta_vector;
            return p;
        }
        ojson operator()(const BackwardDelta& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            p["delta_value"] = m.delta_value;
            return p;
        }
        ojson operator()(const GradientReport& m) { return gradient_report_to_json(m); }
        ojson operator()(const WeightUpdate& m) {
            ojson p;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            p["new_weights"] = m.new_weights;
            p["new_bias"] = m.new_bias;
            return p;
        }
        ojson operator()(const EpochBarrier& m) {
            ojson p;
            p["epoch"] = m.epoch;
            return p;
        }
        ojson operator()(const SparseSkip& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            return p;
        }
        ojson operator()(const GradientBatch& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["layer_index"] = m.layer_index;
            ojson reports = ojson::array();
            for (const auto& report : m.reports) reports.push_back(gradient_report_to_json(report));
            p["reports"] = std::move(reports);
            return p;
        }
        ojson operator()(const WeightUpdateAck& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            p["layer_index"] = m.layer_index;
            p["neuron_index"] = m.neuron_index;
            return p;
        }
        ojson operator()(const SampleRelease& m) {
            ojson p;
            p["sample_id"] = m.sample_id;
            return p;
        }
    };
    return std::visit(Encoder{}, msg);
}

inline Message payload_from_json(const std::string& variant, const ojson& p) {
    if (variant == "RegisterRequest")
        return RegisterRequest{p.at("device_id"), role_from_json(p.at("role")), p.at("auth_token"),
                               p.at("device_kind")};
    if (variant == "RegisterResponse") return RegisterResponse{p.at("admitted"), p.at("reason")};
    if (variant == "NavigationInstruction") {
        const auto& pos = p.at("position");
        return NavigationInstruction{p.at("device_id"), Position{pos.at(0), pos.at(1), pos.at(2)}};
    }
    if (variant == "NeuronConfig")
        return NeuronConfig{p.at("layer_index"), p.at("neuron_index"),
                            p.at("incoming_weights").get<std::vector<double>>(), p.at("bias"),
                            activation_from_name(p.at("activation"))};
    if (variant == "ForwardActivation")
        return ForwardActivation{p.at("sample_id"), p.at("layer_index"), p.at("neuron_index"),
                                 p.at("value")};
    if (variant == "InputVector")
        return InputVector{p.at("sample_id"), p.at("values").get<std::vector<double>>()};
    if (variant == "OutputVector")
        return OutputVector{p.at("sample_id"), p.at("values").get<std::vector<double>>()};
    if (variant == "LossReport")
        return LossReport{p.at("epoch"), p.at("sample_id"), p.at("loss_value"),
                          p.at("output_delta_vector").get<std::vector<double>>()};
    if (variant == "BackwardDelta")
        return BackwardDelta{p.at("sample_id"), p.at("layer_index"), p.at("neuron_index"),
                             p.at("delta_value")};
    if (variant == "GradientReport") return gradient_report_from_json(p);
    if (variant == "WeightUpdate")
        return WeightUpdate{p.at("layer_index"), p.at("neuron_index"),
                            p.at("new_weights").get<std::vector<double>>(), p.at("new_bias")};
    if (variant == "EpochBarrier") return EpochBarrier{p.at("epoch")};
    if (variant == "SparseSkip")
        return SparseSkip{p.at("sample_id"), p.at("layer_index"), p.at("neuron_index")};
    if (variant == "GradientBatch") {
        GradientBatch m;
        m.sample_id = p.at("sample_id");
        m.layer_index = p.at("layer_index");
        for (const auto& report : p.at("reports")) m.reports.push_back(gradient_report_from_json(report));
        return m;
    }
    if (variant == "WeightUpdateAck")
        return WeightUpdateAck{p.at("sample_id"), p.at("layer_index"), p.at("neuron_index")};
    if (variant == "SampleRelease") return SampleRelease{p.at("sample_id")};
    throw ProtocolError("unknown message variant: " + variant);
}

}  // namespace detail

// One delivered envelope as one JSON line, stable key order. The double
// fields round-trip bit-exactly through the shortest-representation dump.
inline std::string encode_trace_record(const Envelope& envelope) {
    detail::ojson j;
    j["send_time"] = envelope.send_time;
    j["deliver_time"] = envelope.deliver_time;
    j["src"] = envelope.src;
    j["dst"] = envelope.dst;
    j["variant"] = variant_name(envelope.payload);
    j["size_bytes"] = envelope.size_bytes;
    j["payload"] = detail::payload_to_json(envelope.payload);
    return j.dump();
}

inline Envelope decode_trace_record(const std::string& line) {
    detail::ojson j;
    try {
        j = detail::ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("trace line is not valid JSON: ") + e.what());
    }
    try {
        Envelope envelope;
        envelope.send_time = j.at("send_time");
        envelope.deliver_time = j.at("deliver_time");
        envelope.src = j.at("src");
        envelope.dst = j.at("dst");
        envelope.payload = detail::payload_from_json(j.at("variant"), j.at("payload"));
        envelope.size_bytes = j.at("size_bytes");
        return envelope;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("trace line missing fields: ") + e.what());
    }
}

}  // namespace aeronet
