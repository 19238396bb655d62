// Minimal library walkthrough: train XOR on a simulated airborne fleet and
// check the distributed run against the in-process reference trainer.

#include <cstdio>

#include "aeronet/core_nn.hpp"
#include "aeronet/simulator.hpp"

int main() {
    aeronet::ExperimentConfig config;
    config.spec.layer_sizes = {2, 2, 1};
    config.spec.activations = {aeronet::ActivationKind::Sigmoid, aeronet::ActivationKind::Sigmoid};
    config.spec.loss = aeronet::LossKind::MeanSquaredError;
    config.spec.optimizer.kind = aeronet::OptimizerConfig::Kind::Sgd;
    config.spec.optimizer.learning_rate = 0.5;
    config.spec.epochs = 500;
    config.spec.seed = 42;
    config.design = aeronet::AssignmentDesign::grouped(2);

    const std::vector<aeronet::TrainingSample> xor_dataset = {
        {{0.0, 0.0}, {0.0}},
        {{0.0, 1.0}, {1.0}},
        {{1.0, 0.0}, {1.0}},
        {{1.0, 1.0}, {0.0}},
    };

    const auto report = aeronet::run_simulation(config, xor_dataset);
    const auto reference = aeronet::train_reference(config.spec, xor_dataset);

    std::printf("devices: %zu\n", report.device_count);
    std::printf("trace hash: %s\n", report.trace_hash.c_str());
    for (std::size_t e = 0; e < report.epoch_losses.size(); e += 100)
        std::printf("epoch %4zu: loss %.9f (makespan %.6f s)\n", e, report.epoch_losses[e],
                    report.epoch_makespans_s[e]);
    std::printf("epoch %4zu: loss %.9f\n", report.epoch_losses.size() - 1,
                report.epoch_losses.back());

    const bool losses_match = report.epoch_losses == reference.epoch_losses;
    const bool params_match = report.final_params.weights == reference.params.weights &&
                              report.final_params.biases == reference.params.biases;
    std::printf("matches centralized reference: %s\n",
                losses_match && params_match ? "yes, bitwise" : "NO");
    return losses_match && params_match ? 0 : 1;
}
