#pragma once

#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aeronet/common.hpp"
#include "aeronet/config.hpp"
#include "aeronet/core_nn.hpp"
#include "aeronet/metrics.hpp"
#include "aeronet/protocol.hpp"
#include "aeronet/topology.hpp"

namespace aeronet {

struct SimEvent {
    double time = 0.0;
    std::uint64_t sequence = 0;
    Envelope envelope;
};

struct TrainingReport {
    std::vector<double> epoch_losses;
    std::vector<double> epoch_makespans_s;
    std::map<std::string, std::size_t> message_counts;
    std::map<std::string, std::size_t> message_bytes;
    ParameterSet final_params;
    std::string trace_hash;
    std::size_t device_count = 0;
    std::size_t protocol_errors = 0;
    double total_simulated_time_s = 0.0;
};

// Deterministic discrete-event execution of the distributed training
// protocol. One logical event loop: envelopes delivered in (time, sequence)
// order, device state machines share nothing and communicate only through
// posted envelopes. Computation costs zero simulated time; only links do.
//
// The numeric path is engineered to be bitwise-identical to train_reference:
// every accumulation runs in ascending index order, every scalar product is
// rounded at the sending device exactly where the reference rounds it, and
// the master applies the exact same optimizer_step on gradients reassembled
// in reference layout.
class Simulation {
  public:
    Simulation(ExperimentConfig config, std::vector<TrainingSample> dataset)
        : config_(std::move(config)) {
        const auto problems = validate_spec(config_.spec);
        if (!problems.empty()) {
            std::string joined = "invalid network spec:";
            for (const auto& p : problems) joined += "\n  - " + p;
            throw ConfigError(joined);
        }
        dataset_ = apply_preprocessing(std::move(dataset), config_.preprocessing);
        if (config_.spec.epochs > 0 && dataset_.empty())
            throw ConfigError("training requires a non-empty dataset");
        for (const auto& sample : dataset_) {
            if (static_cast<int>(sample.input.size()) != config_.spec.input_size() ||
                static_cast<int>(sample.target.size()) != config_.spec.output_size())
                throw ConfigError("dataset arity does not match the network spec");
        }

        assignment_ = assign_neurons(config_.spec, config_.design);
        plan_ = plan_formation(assignment_, config_.spec, config_.layer_spacing_m,
                               config_.lateral_spacing_m, config_.link, config_.altitude_m);
        const auto violations = check_connectivity(plan_, assignment_, config_.spec);
        if (!violations.empty()) {
            std::string joined = "formation violates link range:";
            for (const auto& v : violations) joined += "\n  - " + v;
            throw ConnectivityError(joined);
        }
        build_devices();
    }

    const Assignment& assignment() const { return assignment_; }
    const FormationPlan& plan() const { return plan_; }

    // Schedules an out-of-band message (e.g. from a rogue device). The
    // sender has no planned position, so the flight-time term is zero.
    void inject(double time, const DeviceId& src, const DeviceId& dst, Message msg) {
        post(src, dst, std::move(msg), time, true);
    }

    TrainingReport run() {
        if (ran_) throw InvariantError("run() called twice");
        ran_ = true;

        schedule_registrations();
        while (!queue_.empty()) {
            const SimEvent event = queue_.top();
            queue_.pop();
            deliver(event);
        }
        return finish();
    }

    const std::vector<std::string>& trace_lines() const { return trace_lines_; }

  private:
    // ---- per-device state -------------------------------------------------

    struct HostDevice {
        DeviceId id;
        int layer = 0;
        std::vector<int> hosted;
        int fan_in = 0;    // 0 for the input layer
        int fan_out = 0;   // 0 for the output layer
        ActivationKind activation = ActivationKind::Identity;

        std::vector<std::vector<double>> weights;  // per hosted slot
        std::vector<double> biases;
        std::vector<bool> configured;
        int configured_count = 0;

        struct SampleState {
            std::vector<double> fanin;
            std::vector<bool> fanin_seen;
            int fanin_count = 0;
            int input_cursor = 0;
            bool fired = false;
            std::vector<double> z, a;
            std::vector<std::vector<double>> contrib;
            std::vector<std::vector<bool>> contrib_seen;
            std::vector<int> contrib_count;
            std::map<int, int> bd_cursor;
            int backward_done = 0;
            int absorbed = 0;
        };
        std::map<int, SampleState> samples;
        int last_backward_sid = -1;

        SampleState& sample(int sid) {
            auto [it, fresh] = samples.try_emplace(sid);
            if (fresh) {
                auto& s = it->second;
                s.fanin.assign(fan_in, 0.0);
                s.fanin_seen.assign(fan_in, false);
                s.z.assign(hosted.size(), 0.0);
                s.a.assign(hosted.size(), 0.0);
                s.contrib.assign(hosted.size(), std::vector<double>(fan_out, 0.0));
                s.contrib_seen.assign(hosted.size(), std::vector<bool>(fan_out, false));
                s.contrib_count.assign(hosted.size(), 0);
            }
            return it->second;
        }
    };

    struct ControllerDevice {
        DeviceId id;
        int layer = 0;
        int layer_size = 0;
        std::vector<DeviceId> layer_devices;  // distinct host devices, ascending
        std::map<int, std::map<int, GradientReport>> pending;  // sid -> neuron -> report
    };

    struct MasterDevice {
        AdmissionRegistry registry;
        ParameterSet params;
        std::optional<AdamState> adam;
        std::size_t expected_registrations = 0;
        std::size_t admitted = 0;
        bool phase2_started = false;

        struct SampleState {
            std::map<std::pair<int, int>, GradientReport> grads;
            bool loss_seen = false;
            double loss = 0.0;
            int acks = 0;
            bool stepped = false;
        };
        std::map<int, SampleState> samples;
        std::vector<double> current_epoch_losses;
        std::vector<double> epoch_losses;
        int current_epoch = 0;
        int completed_samples = 0;
    };

    struct OutputDevice {
        struct SampleState {
            std::vector<double> z;
            std::vector<bool> seen;
            int count = 0;
            std::map<DeviceId, int> cursor;
        };
        std::map<int, SampleState> samples;
        std::map<DeviceId, std::vector<int>> host_outputs;
    };

    // ---- construction -----------------------------------------------------

    void build_devices() {
        const auto& spec = config_.spec;
        master_.params = init_parameters(spec);
        if (spec.optimizer.kind == OptimizerConfig::Kind::Adam)
            master_.adam = make_adam_state(master_.params);
        master_.expected_registrations = assignment_.fleet.size() - 1;

        RegisterRequest self;
        self.device_id = assignment_.master;
        self.role = Role::master();
        self.auth_token = config_.auth_token;
        self.device_kind = to_string(assignment_.fleet.at(assignment_.master));
        verify_registration(master_.registry, self, config_.auth_token, spec);

        host_device_of_.assign(spec.layer_count(), {});
        for (int layer = 0; layer < spec.layer_count(); ++layer)
            host_device_of_[layer].assign(spec.layer_sizes[layer], "");

        for (const auto& host : assignment_.hosts) {
            HostDevice device;
            device.id = host.device;
            device.layer = host.layer;
            device.hosted = host.neuron_indices;
            device.fan_in = host.layer > 0 ? spec.layer_sizes[host.layer - 1] : 0;
            device.fan_out =
                host.layer + 1 < spec.layer_count() ? spec.layer_sizes[host.layer + 1] : 0;
            if (host.layer > 0) device.activation = spec.activations[host.layer - 1];
            device.weights.assign(device.hosted.size(), {});
            device.biases.assign(device.hosted.size(), 0.0);
            device.configured.assign(device.hosted.size(), host.layer == 0);
            device.configured_count = host.layer == 0 ? static_cast<int>(device.hosted.size()) : 0;
            for (int idx : host.neuron_indices) host_device_of_[host.layer][idx] = host.device;
            hosts_.emplace(host.device, std::move(device));
        }

        for (const auto& [layer, id] : assignment_.controllers) {
            ControllerDevice controller;
            controller.id = id;
            controller.layer = layer;
            controller.layer_size = spec.layer_sizes[layer];
            for (const auto* host : assignment_.layer_hosts(layer))
                controller.layer_devices.push_back(host->device);
            controllers_.emplace(id, std::move(controller));
            controller_of_layer_[layer] = id;
        }

        for (const auto* host : assignment_.layer_hosts(spec.layer_count() - 1))
            output_.host_outputs[host->device] = host->neuron_indices;

        samples_per_epoch_ = static_cast<int>(dataset_.size());
        total_noninput_ = spec.non_input_neuron_count();
    }

    // Canonical device order for registration and navigation: auxiliaries,
    // standalone controllers by layer, then hosting devices layer-major.
    std::vector<DeviceId> canonical_devices() const {
        std::vector<DeviceId> order{assignment_.input_provider, assignment_.output_receiver};
        for (const auto& [layer, id] : assignment_.controllers) {
            (void)layer;
            if (!hosts_.count(id)) order.push_back(id);
        }
        for (const auto& host : assignment_.hosts) order.push_back(host.device);
        return order;
    }

    Role role_for(const DeviceId& id) const {
        if (id == assignment_.input_provider) return Role::input_provider();
        if (id == assignment_.output_receiver) return Role::output_receiver();
        for (const auto& [layer, controller] : assignment_.controllers)
            if (controller == id && !hosts_.count(id))
                return Role::controller(layer, 0, config_.spec.layer_sizes[layer]);
        const auto& host = hosts_.at(id);
        return Role::host(host.layer, host.hosted);
    }

    void schedule_registrations() {
        for (const auto& id : canonical_devices()) {
            RegisterRequest request;
            request.device_id = id;
            request.role = role_for(id);
            request.auth_token = config_.auth_token;
            request.device_kind = to_string(assignment_.fleet.at(id));
            post(id, assignment_.master, request, 0.0, true);
        }
    }

    // ---- network ----------------------------------------------------------

    // at_distance_zero models exchanges that happen before the fleet reaches
    // formation (registration, navigation) and injected out-of-band traffic.
    void post(const DeviceId& src, const DeviceId& dst, Message msg, double now,
              bool at_distance_zero = false) {
        const std::size_t size = message_size(msg);
        double latency = 0.0;
        if (src != dst) {
            const auto& mode = plan_.link_mode;
            const double serialization = 8.0 * static_cast<double>(size) / mode.bandwidth_bps;
            if (mode.kind == LinkMode::Kind::Wired) {
                latency = mode.per_hop_latency_s + serialization;
            } else if (at_distance_zero) {
                latency = mode.per_hop_overhead_s + serialization;
            } else {
                latency = link_latency(mode, plan_.positions.at(src), plan_.positions.at(dst), size);
            }
        }

        Envelope envelope;
        envelope.src = src;
        envelope.dst = dst;
        envelope.send_time = now;
        envelope.deliver_time = now + latency;
        envelope.payload = std::move(msg);
        envelope.size_bytes = size;

        // FIFO per ordered link: a message never overtakes an earlier one.
        auto& last = last_deliver_[{src, dst}];
        if (envelope.deliver_time < last) envelope.deliver_time = last;
        last = envelope.deliver_time;

        queue_.push(SimEvent{envelope.deliver_time, next_sequence_++, std::move(envelope)});
    }

    void record(const Envelope& envelope) {
        const auto line = encode_trace_record(envelope);
        hash_.update(line);
        hash_.update("\n");
        trace_lines_.push_back(line);
        envelopes_.push_back(envelope);
    }

    void record_protocol_error(const Envelope& envelope, const char* reason) {
        detail::ojson j;
        j["send_time"] = envelope.send_time;
        j["deliver_time"] = envelope.deliver_time;
        j["src"] = envelope.src;
        j["dst"] = envelope.dst;
        j["variant"] = "protocol_error";
        j["size_bytes"] = 0;
        j["payload"] = {{"reason", reason}, {"dropped_variant", variant_name(envelope.payload)}};
        const auto line = j.dump();
        hash_.update(line);
        hash_.update("\n");
        trace_lines_.push_back(line);
        ++protocol_errors_;
        AERONET_LOG_INFO("protocol error: %s (%s -> %s)", reason, envelope.src.c_str(),
                         envelope.dst.c_str());
    }

    bool known_device(const DeviceId& id) const { return assignment_.fleet.count(id) > 0; }

    void deliver(const SimEvent& event) {
        const Envelope& envelope = event.envelope;
        record(envelope);
        const double now = envelope.deliver_time;

        // Registration traffic is exempt from admission checks; everything
        // else requires an admitted sender and a known recipient.
        if (std::holds_alternative<RegisterRequest>(envelope.payload)) {
            if (envelope.dst != assignment_.master) {
                record_protocol_error(envelope, "misdirected_registration");
                return;
            }
            handle_register(envelope, now);
            return;
        }
        if (std::holds_alternative<RegisterResponse>(envelope.payload)) return;

        if (!known_device(envelope.dst)) {
            record_protocol_error(envelope, "unknown_recipient");
            return;
        }
        if (!master_.registry.is_admitted(envelope.src)) {
            record_protocol_error(envelope, "unadmitted_sender");
            return;
        }

        if (envelope.dst == assignment_.master) {
            handle_master(envelope, now);
        } else if (envelope.dst == assignment_.input_provider) {
            handle_input_provider(envelope, now);
        } else if (envelope.dst == assignment_.output_receiver) {
            handle_output_receiver(envelope, now);
        } else {
            handle_node(envelope, now);
        }
    }

    TrainingReport finish() {
        const auto& spec = config_.spec;
        const int expected = spec.epochs * samples_per_epoch_;
        if (master_.completed_samples != expected) {
            std::string detail = "training incomplete: finished " +
                                 std::to_string(master_.completed_samples) + " of " +
                                 std::to_string(expected) + " sample cycles";
            for (const auto& [sid, state] : master_.samples) {
                detail += "; sample " + std::to_string(sid) + " has " +
                          std::to_string(state.grads.size()) + "/" +
                          std::to_string(total_noninput_) + " gradients, " +
                          std::to_string(state.acks) + " acks" +
                          (state.loss_seen ? "" : ", no loss report");
            }
            throw InvariantError(detail);
        }
        if (static_cast<int>(master_.epoch_losses.size()) != spec.epochs)
            throw InvariantError("epoch loss record does not match the configured epoch count");

        TrainingReport report;
        report.epoch_losses = master_.epoch_losses;
        report.final_params = master_.params;
        report.trace_hash = hash_.hex();
        report.device_count = assignment_.fleet.size();
        report.protocol_errors = protocol_errors_;
        const auto summary = summarize_envelopes(envelopes_, protocol_errors_);
        report.epoch_makespans_s = summary.epoch_makespans_s;
        report.message_counts = summary.message_counts;
        report.message_bytes = summary.message_bytes;
        report.total_simulated_time_s = summary.last_delivery_s;
        return report;
    }

    // ---- master -----------------------------------------------------------

    void handle_register(const Envelope& envelope, double now) {
        const auto& request = std::get<RegisterRequest>(envelope.payload);
        const auto response =
            verify_registration(master_.registry, request, config_.auth_token, config_.spec);
        post(assignment_.master, envelope.src, response, now, true);
        if (!response.admitted) return;
        ++master_.admitted;
        if (!master_.phase2_started && master_.admitted == master_.expected_registrations)
            start_phase2(now);
    }

    void start_phase2(double now) {
        master_.phase2_started = true;

        for (const auto& id : canonical_devices()) {
            NavigationInstruction nav{id, plan_.positions.at(id)};
            post(assignment_.master, id, nav, now, true);
        }

        const auto& spec = config_.spec;
        for (int layer = 1; layer < spec.layer_count(); ++layer) {
            const auto& controller = controller_of_layer_.at(layer);
            for (int i = 0; i < spec.layer_sizes[layer]; ++i) {
                NeuronConfig cfg{layer, i, master_.params.weights[layer - 1][i],
                                 master_.params.biases[layer - 1][i], spec.activations[layer - 1]};
                post(assignment_.master, controller, cfg, now);
            }
        }

        if (spec.epochs > 0) post(assignment_.master, assignment_.input_provider, SampleRelease{0}, now);
    }

    void handle_master(const Envelope& envelope, double now) {
        if (const auto* batch = std::get_if<GradientBatch>(&envelope.payload)) {
            auto& state = master_.samples[batch->sample_id];
            for (const auto& report : batch->reports)
                state.grads[{report.layer_index, report.neuron_index}] = report;
            try_optimizer_step(batch->sample_id, now);
        } else if (const auto* loss = std::get_if<LossReport>(&envelope.payload)) {
            auto& state = master_.samples[loss->sample_id];
            state.loss_seen = true;
            state.loss = loss->loss_value;
            try_optimizer_step(loss->sample_id, now);
        } else if (const auto* ack = std::get_if<WeightUpdateAck>(&envelope.payload)) {
            auto& state = master_.samples[ack->sample_id];
            ++state.acks;
            if (state.stepped && state.acks == total_noninput_) complete_sample(ack->sample_id, now);
        }
    }

    void try_optimizer_step(int sid, double now) {
        auto& state = master_.samples[sid];
        if (state.stepped || !state.loss_seen ||
            static_cast<int>(state.grads.size()) != total_noninput_)
            return;
        state.stepped = true;

        GradientSet grads = zero_like(master_.params);
        for (const auto& [key, report] : state.grads) {
            grads.weights[key.first - 1][key.second] = report.weight_grads;
            grads.biases[key.first - 1][key.second] = report.bias_grad;
        }
        optimizer_step(config_.spec.optimizer, master_.adam ? &*master_.adam : nullptr,
                       master_.params, grads);
        master_.current_epoch_losses.push_back(state.loss);

        const auto& spec = config_.spec;
        for (int layer = 1; layer < spec.layer_count(); ++layer) {
            const auto& controller = controller_of_layer_.at(layer);
            for (int i = 0; i < spec.layer_sizes[layer]; ++i) {
                WeightUpdate update{layer, i, master_.params.weights[layer - 1][i],
                                    master_.params.biases[layer - 1][i]};
                post(assignment_.master, controller, update, now);
            }
        }
    }

    void complete_sample(int sid, double now) {
        master_.samples.erase(sid);
        ++master_.completed_samples;

        const bool epoch_done = (sid + 1) % samples_per_epoch_ == 0;
        if (!epoch_done) {
            post(assignment_.master, assignment_.input_provider, SampleRelease{sid + 1}, now);
            return;
        }

        master_.epoch_losses.push_back(mean_ordered(master_.current_epoch_losses));
        master_.current_epoch_losses.clear();
        const EpochBarrier barrier{master_.current_epoch};
        post(assignment_.master, assignment_.input_provider, barrier, now);
        post(assignment_.master, assignment_.output_receiver, barrier, now);
        for (const auto& [layer, controller] : controller_of_layer_) {
            (void)layer;
            post(assignment_.master, controller, barrier, now);
        }
        ++master_.current_epoch;
        if (master_.current_epoch < config_.spec.epochs)
            post(assignment_.master, assignment_.input_provider, SampleRelease{sid + 1}, now);
    }

    // ---- input provider ---------------------------------------------------

    void handle_input_provider(const Envelope& envelope, double now) {
        const auto* release = std::get_if<SampleRelease>(&envelope.payload);
        if (!release) return;  // navigation, barrier: placement/bookkeeping only
        const auto& sample = dataset_[release->sample_id % samples_per_epoch_];
        for (int j = 0; j < config_.spec.input_size(); ++j) {
            InputVector input{release->sample_id, {sample.input[j]}};
            post(assignment_.input_provider, host_device_of_[0][j], input, now);
        }
    }

    // ---- output receiver --------------------------------------------------

    void handle_output_receiver(const Envelope& envelope, double now) {
        const auto* output = std::get_if<OutputVector>(&envelope.payload);
        if (!output) return;
        const auto& spec = config_.spec;
        const int n_out = spec.output_size();
        auto [it, fresh] = output_.samples.try_emplace(output->sample_id);
        auto& state = it->second;
        if (fresh) {
            state.z.assign(n_out, 0.0);
            state.seen.assign(n_out, false);
        }

        // Per-link FIFO demux: the k-th OutputVector from one device carries
        // that device's k-th hosted output neuron.
        const auto& hosted = output_.host_outputs.at(envelope.src);
        const int slot = state.cursor[envelope.src]++;
        const int neuron = hosted.at(slot);
        if (state.seen[neuron]) throw InvariantError("duplicate output for neuron");
        state.seen[neuron] = true;
        state.z[neuron] = output->values.at(0);
        if (++state.count != n_out) return;

        const int sid = output->sample_id;
        const auto& target = dataset_[sid % samples_per_epoch_].target;
        const auto prediction = activate(spec.output_activation(), state.z);
        const double loss = compute_loss(spec.loss, prediction, target);
        const auto delta = output_delta(spec.loss, spec.output_activation(), prediction, state.z, target);

        LossReport report{sid / samples_per_epoch_, sid, loss, delta};
        post(assignment_.output_receiver, assignment_.master, report, now);

        const int out_layer = spec.layer_count() - 1;
        for (int i = 0; i < n_out; ++i) {
            BackwardDelta bd{sid, out_layer, i, delta[i]};
            post(assignment_.output_receiver, host_device_of_[out_layer][i], bd, now);
        }
        output_.samples.erase(sid);
    }

    // ---- hosting devices (and colocated controllers) -----------------------

    void handle_node(const Envelope& envelope, double now) {
        // A Design-3 device carries both a controller and a neuron host; the
        // (variant, src) pair decides which state machine consumes it.
        const auto controller = controllers_.find(envelope.dst);
        const auto host = hosts_.find(envelope.dst);
        const bool is_controller = controller != controllers_.end();
        const bool is_host = host != hosts_.end();
        const bool from_master = envelope.src == assignment_.master;
        auto unroutable = [&] { record_protocol_error(envelope, "unroutable_message"); };

        if (const auto* cfg = std::get_if<NeuronConfig>(&envelope.payload)) {
            if (from_master && is_controller)
                relay_config(controller->second, *cfg, now);
            else if (is_host)
                apply_config(host->second, *cfg, now);
            else
                unroutable();
        } else if (const auto* update = std::get_if<WeightUpdate>(&envelope.payload)) {
            if (from_master && is_controller)
                post(controller->second.id, host_device_of_[update->layer_index][update->neuron_index],
                     *update, now);
            else if (is_host)
                apply_weight_update(host->second, *update, now);
            else
                unroutable();
        } else if (const auto* report = std::get_if<GradientReport>(&envelope.payload)) {
            if (is_controller)
                buffer_gradient(controller->second, *report, now);
            else
                unroutable();
        } else if (const auto* ack = std::get_if<WeightUpdateAck>(&envelope.payload)) {
            if (is_controller)
                post(controller->second.id, assignment_.master, *ack, now);
            else
                unroutable();
        } else if (const auto* barrier = std::get_if<EpochBarrier>(&envelope.payload)) {
            if (from_master && is_controller)
                for (const auto& device : controller->second.layer_devices)
                    post(controller->second.id, device, *barrier, now);
        } else if (const auto* input = std::get_if<InputVector>(&envelope.payload)) {
            if (is_host && host->second.layer == 0)
                handle_input_value(host->second, *input, now);
            else
                unroutable();
        } else if (const auto* fa = std::get_if<ForwardActivation>(&envelope.payload)) {
            if (is_host)
                handle_forward(host->second, fa->neuron_index, fa->value, fa->sample_id, now);
            else
                unroutable();
        } else if (const auto* skip = std::get_if<SparseSkip>(&envelope.payload)) {
            if (is_host)
                handle_forward(host->second, skip->neuron_index, 0.0, skip->sample_id, now);
            else
                unroutable();
        } else if (const auto* bd = std::get_if<BackwardDelta>(&envelope.payload)) {
            if (is_host)
                handle_backward_delta(host->second, envelope.src, *bd, now);
            else
                unroutable();
        }
    }

    void relay_config(ControllerDevice& controller, const NeuronConfig& cfg, double now) {
        post(controller.id, host_device_of_[cfg.layer_index][cfg.neuron_index], cfg, now);
    }

    void apply_config(HostDevice& host, const NeuronConfig& cfg, double now) {
        const int slot = hosted_slot(host, cfg.neuron_index);
        host.weights[slot] = cfg.incoming_weights;
        host.biases[slot] = cfg.bias;
        if (!host.configured[slot]) {
            host.configured[slot] = true;
            ++host.configured_count;
        }
        // Inputs may already be buffered for the first sample.
        for (auto& [sid, state] : host.samples) {
            (void)state;
            try_fire(host, sid, now);
        }
    }

    void apply_weight_update(HostDevice& host, const WeightUpdate& update, double now) {
        const int slot = hosted_slot(host, update.neuron_index);
        host.weights[slot] = update.new_weights;
        host.biases[slot] = update.new_bias;
        WeightUpdateAck ack{host.last_backward_sid, update.layer_index, update.neuron_index};
        post(host.id, controller_of_layer_.at(host.layer), ack, now);
    }

    void buffer_gradient(ControllerDevice& controller, const GradientReport& report, double now) {
        auto& pending = controller.pending[report.sample_id];
        pending[report.neuron_index] = report;
        if (static_cast<int>(pending.size()) != controller.layer_size) return;
        GradientBatch batch;
        batch.sample_id = report.sample_id;
        batch.layer_index = controller.layer;
        for (auto& [neuron, entry] : pending) {
            (void)neuron;
            batch.reports.push_back(std::move(entry));
        }
        controller.pending.erase(report.sample_id);
        post(controller.id, assignment_.master, std::move(batch), now);
    }

    void handle_input_value(HostDevice& host, const InputVector& input, double now) {
        auto& state = host.sample(input.sample_id);
        const int slot = state.input_cursor++;
        const int neuron = host.hosted.at(slot);
        state.a[slot] = input.values.at(0);
        // Input-layer neurons relay their value as their activation.
        forward_neuron(host, slot, neuron, state.a[slot], input.sample_id, now);
        if (state.input_cursor == static_cast<int>(host.hosted.size())) state.fired = true;
    }

    void handle_forward(HostDevice& host, int src_neuron, double value, int sid, double now) {
        auto& state = host.sample(sid);
        if (state.fanin_seen[src_neuron]) return;  // duplicate copy for a sibling neuron
        state.fanin_seen[src_neuron] = true;
        state.fanin[src_neuron] = value;
        ++state.fanin_count;
        try_fire(host, sid, now);
    }

    void try_fire(HostDevice& host, int sid, double now) {
        auto& state = host.samples.at(sid);
        if (state.fired || host.layer == 0) return;
        if (state.fanin_count != host.fan_in) return;
        if (host.configured_count != static_cast<int>(host.hosted.size())) return;
        state.fired = true;

        const bool output_layer = host.layer == config_.spec.layer_count() - 1;
        for (std::size_t slot = 0; slot < host.hosted.size(); ++slot) {
            const double z = weighted_sum(host.weights[slot], state.fanin, host.biases[slot]);
            state.z[slot] = z;
            if (output_layer) {
                // Raw pre-activations travel to the receiver, which owns the
                // output activation (Softmax needs the whole vector anyway).
                state.a[slot] = z;
                OutputVector out{sid, {z}};
                post(host.id, assignment_.output_receiver, out, now);
            } else {
                state.a[slot] = activate_one(host.activation, z);
                forward_neuron(host, static_cast<int>(slot), host.hosted[slot], state.a[slot], sid,
                               now);
            }
        }
    }

    void forward_neuron(HostDevice& host, int slot, int neuron, double value, int sid, double now) {
        (void)slot;
        const int next_layer = host.layer + 1;
        if (next_layer >= config_.spec.layer_count()) return;
        const int n_next = config_.spec.layer_sizes[next_layer];
        if (config_.sparse_forwarding && value == 0.0) {
            // One skip notice per downstream device replaces the per-edge
            // fan-out; receivers substitute zero for the suppressed value.
            const DeviceId* previous = nullptr;
            for (int m = 0; m < n_next; ++m) {
                const DeviceId& target = host_device_of_[next_layer][m];
                if (previous && *previous == target) continue;
                previous = &target;
                post(host.id, target, SparseSkip{sid, host.layer, neuron}, now);
            }
            return;
        }
        for (int m = 0; m < n_next; ++m) {
            ForwardActivation fa{sid, host.layer, neuron, value};
            post(host.id, host_device_of_[next_layer][m], fa, now);
        }
    }

    void handle_backward_delta(HostDevice& host, const DeviceId& src, const BackwardDelta& bd,
                               double now) {
        auto& state = host.sample(bd.sample_id);

        if (host.layer == 0) {
            // Input-layer hosts terminate the backward wave.
            ++state.absorbed;
            if (state.absorbed ==
                static_cast<int>(host.hosted.size()) * config_.spec.layer_sizes[1])
                host.samples.erase(bd.sample_id);
            return;
        }

        if (src == assignment_.output_receiver) {
            // Direct addressing: neuron_index is this host's neuron and the
            // delta is already dLoss/dz.
            const int slot = hosted_slot(host, bd.neuron_index);
            finish_backward(host, slot, bd.neuron_index, bd.delta_value, bd.sample_id, now);
            return;
        }

        // Positional demux: the sender walks our hosted neurons in ascending
        // order, so the k-th delta from downstream neuron i belongs to our
        // k-th neuron. The payload's neuron_index identifies the sender.
        const int sender_neuron = bd.neuron_index;
        const int slot = state.bd_cursor[sender_neuron]++;
        if (state.contrib_seen.at(slot).at(sender_neuron))
            throw InvariantError("duplicate backward delta");
        state.contrib_seen[slot][sender_neuron] = true;
        state.contrib[slot][sender_neuron] = bd.delta_value;
        if (++state.contrib_count[slot] != host.fan_out) return;

        // All downstream contributions present: reduce in ascending
        // downstream order, exactly like the reference loop.
        double acc = 0.0;
        for (int m = 0; m < host.fan_out; ++m) acc += state.contrib[slot][m];
        const double delta =
            acc * activation_derivative_one(host.activation, state.z[slot], state.a[slot]);
        finish_backward(host, slot, host.hosted[slot], delta, bd.sample_id, now);
    }

    void finish_backward(HostDevice& host, int slot, int neuron, double delta, int sid,
                         double now) {
        auto& state = host.samples.at(sid);
        if (!state.fired) throw InvariantError("backward delta before forward fire");
        host.last_backward_sid = sid;

        GradientReport report;
        report.layer_index = host.layer;
        report.neuron_index = neuron;
        report.weight_grads.resize(host.fan_in);
        for (int j = 0; j < host.fan_in; ++j) report.weight_grads[j] = delta * state.fanin[j];
        report.bias_grad = delta;
        report.sample_id = sid;
        post(host.id, controller_of_layer_.at(host.layer), std::move(report), now);

        for (int j = 0; j < host.fan_in; ++j) {
            BackwardDelta bd{sid, host.layer, neuron, host.weights[slot][j] * delta};
            post(host.id, host_device_of_[host.layer - 1][j], bd, now);
        }

        if (++state.backward_done == static_cast<int>(host.hosted.size()))
            host.samples.erase(sid);
    }

    int hosted_slot(const HostDevice& host, int neuron) const {
        for (std::size_t slot = 0; slot < host.hosted.size(); ++slot)
            if (host.hosted[slot] == neuron) return static_cast<int>(slot);
        throw InvariantError(host.id + " does not host neuron " + std::to_string(neuron));
    }

    // ---- state ------------------------------------------------------------

    ExperimentConfig config_;
    std::vector<TrainingSample> dataset_;
    Assignment assignment_;
    FormationPlan plan_;

    MasterDevice master_;
    std::map<DeviceId, HostDevice> hosts_;
    std::map<DeviceId, ControllerDevice> controllers_;
    std::map<int, DeviceId> controller_of_layer_;
    OutputDevice output_;
    std::vector<std::vector<DeviceId>> host_device_of_;  // [layer][neuron]
    int samples_per_epoch_ = 0;
    int total_noninput_ = 0;

    struct EventOrder {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.sequence > b.sequence;
        }
    };
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
    std::map<std::pair<DeviceId, DeviceId>, double> last_deliver_;
    std::uint64_t next_sequence_ = 0;
    bool ran_ = false;

    std::vector<std::string> trace_lines_;
    std::vector<Envelope> envelopes_;
    Fnv1a64 hash_;
    std::size_t protocol_errors_ = 0;
};

// Convenience wrapper matching the one-call workflow: load nothing, run one
// experiment on an in-memory dataset.
inline TrainingReport run_simulation(const ExperimentConfig& config,
                                     const std::vector<TrainingSample>& dataset,
                                     std::vector<std::string>* trace_out = nullptr) {
    Simulation sim(config, dataset);
    auto report = sim.run();
    if (trace_out) *trace_out = sim.trace_lines();
    return report;
}

}  // namespace aeronet
