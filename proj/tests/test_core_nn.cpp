#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "aeronet/core_nn.hpp"
#include "helpers/oracles.hpp"

using namespace aeronet;

namespace {

NetworkSpec make_spec(std::vector<int> sizes, std::vector<ActivationKind> acts,
                      LossKind loss = LossKind::MeanSquaredError) {
    NetworkSpec spec;
    spec.layer_sizes = std::move(sizes);
    spec.activations = std::move(acts);
    spec.loss = loss;
    return spec;
}

ParameterSet random_params(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkSpec copy = spec;
    copy.seed = seed;
    return init_parameters(copy);
}

// Central differences are meaningless where the loss is non-differentiable,
// so gradcheck inputs must keep every ReLU pre-activation away from its kink.
bool away_from_relu_kinks(const NetworkSpec& spec, const ForwardRecord& record) {
    for (std::size_t l = 1; l < record.z.size(); ++l) {
        if (spec.activations[l - 1] != ActivationKind::ReLU) continue;
        for (double z : record.z[l])
            if (std::abs(z) < 1e-3) return false;
    }
    return true;
}

double max_relative_error(const GradientSet& got, const GradientSet& want) {
    double worst = 0.0;
    for (std::size_t k = 0; k < got.weights.size(); ++k) {
        for (std::size_t i = 0; i < got.weights[k].size(); ++i) {
            for (std::size_t j = 0; j < got.weights[k][i].size(); ++j) {
                const double denom = std::max(1.0, std::abs(want.weights[k][i][j]));
                worst = std::max(worst, std::abs(got.weights[k][i][j] - want.weights[k][i][j]) / denom);
            }
            const double denom = std::max(1.0, std::abs(want.biases[k][i]));
            worst = std::max(worst, std::abs(got.biases[k][i] - want.biases[k][i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("validate_spec collects every violation") {
    auto good = make_spec({4, 6, 3}, {ActivationKind::ReLU, ActivationKind::Softmax},
                          LossKind::CrossEntropy);
    CHECK(validate_spec(good).empty());

    NetworkSpec bad;
    bad.layer_sizes = {3};
    bad.activations = {ActivationKind::Softmax, ActivationKind::ReLU};
    bad.loss = LossKind::MeanSquaredError;
    bad.epochs = -1;
    bad.optimizer.learning_rate = 0.0;
    const auto problems = validate_spec(bad);
    CHECK(problems.size() >= 4);

    auto softmax_inside = make_spec({2, 2, 2}, {ActivationKind::Softmax, ActivationKind::Identity});
    CHECK_FALSE(validate_spec(softmax_inside).empty());

    auto ce_identity = make_spec({2, 2}, {ActivationKind::Identity}, LossKind::CrossEntropy);
    CHECK_FALSE(validate_spec(ce_identity).empty());

    auto mse_softmax = make_spec({2, 2}, {ActivationKind::Softmax}, LossKind::MeanSquaredError);
    CHECK_FALSE(validate_spec(mse_softmax).empty());
}

TEST_CASE("weighted_sum basics") {
    CHECK(weighted_sum({0.5, -1.0}, {0.0, 0.0}, 0.3) == 0.3);
    CHECK(weighted_sum({1, 1, 1}, {1, 2, 3}, 0.0) == 6.0);

    // Frozen from the independent multiply-add oracle.
    const std::vector<double> w{0.2, -0.4, 0.1};
    const std::vector<double> x{1.5, 2.0, -1.0};
    const double expected = oracles::dot_plus_bias(w, x, 0.05);
    CHECK(expected == Catch::Approx(-0.55).epsilon(1e-12));
    CHECK(weighted_sum(w, x, 0.05) == expected);
}

TEST_CASE("weighted_sum errors") {
    CHECK_THROWS_AS(weighted_sum({1.0}, {1.0, 2.0}, 0.0), ShapeError);
    const double huge = 1e308;
    CHECK_THROWS_AS(weighted_sum({huge, huge}, {huge, huge}, 0.0), NumericError);
}

TEST_CASE("activate elementwise kinds") {
    CHECK(activate(ActivationKind::ReLU, {-2, 0, 3}) == std::vector<double>{0, 0, 3});
    CHECK(activate(ActivationKind::Sigmoid, {0})[0] == 0.5);
    CHECK(activate(ActivationKind::Identity, {-1.5, 2.5}) == std::vector<double>{-1.5, 2.5});
    CHECK_THROWS_AS(activate(ActivationKind::ReLU, {std::nan("")}), NumericError);
}

TEST_CASE("softmax symmetry and normalization") {
    const auto quarter = activate(ActivationKind::Softmax, {3.7, 3.7, 3.7, 3.7});
    for (double v : quarter) CHECK(v == Catch::Approx(0.25).margin(1e-15));

    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(1 + trial % 6);
        for (auto& v : z) v = dist(gen);
        const auto a = activate(ActivationKind::Softmax, z);
        double sum = 0;
        for (double v : a) {
            CHECK(v > 0.0);
            CHECK(v < 1.0 + 1e-12);
            sum += v;
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));

        // Shift invariance.
        std::vector<double> shifted = z;
        const double c = dist(gen) / 10;
        for (auto& v : shifted) v += c;
        const auto b = activate(ActivationKind::Softmax, shifted);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == Catch::Approx(a[i]).margin(1e-12));
    }
}

TEST_CASE("activation derivatives") {
    CHECK(activation_derivative(ActivationKind::ReLU, {2}, {2}) == std::vector<double>{1});
    CHECK(activation_derivative(ActivationKind::ReLU, {0}, {0}) == std::vector<double>{0});
    CHECK(activation_derivative(ActivationKind::Sigmoid, {0}, {0.5}) == std::vector<double>{0.25});
    CHECK(activation_derivative(ActivationKind::Identity, {9}, {9}) == std::vector<double>{1});
    CHECK_THROWS_AS(activation_derivative(ActivationKind::Softmax, {1}, {1}), ConfigError);

    const double z = 1.3;
    const double a = activate_one(ActivationKind::Sigmoid, z);
    const double numeric = oracles::central_difference(
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, z);
    CHECK(activation_derivative_one(ActivationKind::Sigmoid, z, a) ==
          Catch::Approx(numeric).margin(1e-6));
}

TEST_CASE("compute_loss") {
    CHECK(compute_loss(LossKind::MeanSquaredError, {0.2, 0.8}, {0.2, 0.8}) == 0.0);
    CHECK(compute_loss(LossKind::CrossEntropy, {1.0}, {1.0}) == 0.0);
    CHECK(compute_loss(LossKind::MeanSquaredError, {0.5}, {1.0}) == 0.25);
    CHECK_THROWS_AS(compute_loss(LossKind::MeanSquaredError, {0.5}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(compute_loss(LossKind::CrossEntropy, {0.0}, {1.0}), NumericError);
    CHECK_THROWS_AS(compute_loss(LossKind::CrossEntropy, {-0.5}, {0.0}), NumericError);
}

TEST_CASE("output_delta closed forms") {
    const auto zero = output_delta(LossKind::CrossEntropy, ActivationKind::Softmax, {0.1, 0.9},
                                   {0.0, 2.1972245773362196}, {0.1, 0.9});
    CHECK(zero == std::vector<double>{0.0, 0.0});

    const auto mse = output_delta(LossKind::MeanSquaredError, ActivationKind::Identity, {1.0}, {1.0},
                                  {0.0});
    CHECK(mse == std::vector<double>{2.0});

    CHECK_THROWS_AS(output_delta(LossKind::MeanSquaredError, ActivationKind::Softmax, {1.0}, {1.0},
                                 {0.0}),
                    ConfigError);
    CHECK_THROWS_AS(output_delta(LossKind::CrossEntropy, ActivationKind::Identity, {1.0}, {1.0},
                                 {1.0}),
                    ConfigError);
    CHECK_THROWS_AS(output_delta(LossKind::CrossEntropy, ActivationKind::Sigmoid, {0.5, 0.5},
                                 {0.0, 0.0}, {1.0, 0.0}),
                    ConfigError);
}

TEST_CASE("output_delta matches finite differences of the composed loss") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);

    // MSE x Sigmoid.
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(3);
        for (auto& v : z) v = dist(gen);
        std::vector<double> target(3);
        for (auto& v : target) v = dist(gen) / 4 + 0.5;
        const auto pred = activate(ActivationKind::Sigmoid, z);
        const auto delta = output_delta(LossKind::MeanSquaredError, ActivationKind::Sigmoid, pred, z,
                                        target);
        for (std::size_t i = 0; i < z.size(); ++i) {
            auto loss_of = [&](double zi) {
                std::vector<double> probe = z;
                probe[i] = zi;
                return compute_loss(LossKind::MeanSquaredError, activate(ActivationKind::Sigmoid, probe),
                                    target);
            };
            CHECK(delta[i] == Catch::Approx(oracles::central_difference(loss_of, z[i])).margin(1e-6));
        }
    }

    // CrossEntropy x Softmax.
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(4);
        for (auto& v : z) v = dist(gen);
        std::vector<double> target{0.1, 0.2, 0.3, 0.4};
        const auto pred = activate(ActivationKind::Softmax, z);
        const auto delta = output_delta(LossKind::CrossEntropy, ActivationKind::Softmax, pred, z,
                                        target);
        for (std::size_t i = 0; i < z.size(); ++i) {
            auto loss_of = [&](double zi) {
                std::vector<double> probe = z;
                probe[i] = zi;
                return compute_loss(LossKind::CrossEntropy, activate(ActivationKind::Softmax, probe),
                                    target);
            };
            CHECK(delta[i] == Catch::Approx(oracles::central_difference(loss_of, z[i])).margin(1e-6));
        }
    }

    // CrossEntropy x scalar Sigmoid.
    for (int trial = 0; trial < 20; ++trial) {
        const double z = dist(gen);
        const double t = 0.25 * (trial % 5);
        const auto pred = activate(ActivationKind::Sigmoid, {z});
        const auto delta = output_delta(LossKind::CrossEntropy, ActivationKind::Sigmoid, pred, {z}, {t});
        auto loss_of = [&](double zi) {
            return compute_loss(LossKind::CrossEntropy, activate(ActivationKind::Sigmoid, {zi}), {t});
        };
        CHECK(delta[0] == Catch::Approx(oracles::central_difference(loss_of, z)).margin(1e-6));
    }
}

TEST_CASE("forward_reference closed forms") {
    auto spec = make_spec({2, 2, 1}, {ActivationKind::Sigmoid, ActivationKind::Sigmoid});
    ParameterSet zeros;
    zeros.weights = {{{0, 0}, {0, 0}}, {{0, 0}}};
    zeros.biases = {{0, 0}, {0}};
    const auto record = forward_reference(spec, zeros, {0.7, -0.3});
    CHECK(record.a[1] == std::vector<double>{0.5, 0.5});

    auto single = make_spec({2, 1}, {ActivationKind::Identity});
    ParameterSet p;
    p.weights = {{{1, 1}}};
    p.biases = {{0}};
    CHECK(forward_reference(single, p, {3, 4}).prediction() == std::vector<double>{7});
}

TEST_CASE("forward_reference equals the brute-force triple loop") {
    auto spec = make_spec({2, 3, 2}, {ActivationKind::Sigmoid, ActivationKind::Identity});
    const auto params = random_params(spec, 99);
    const std::vector<double> input{0.25, -1.5};
    const auto record = forward_reference(spec, params, input);
    CHECK(record.prediction() == oracles::brute_forward(spec, params, input));

    auto softmax_spec = make_spec({3, 4, 3}, {ActivationKind::ReLU, ActivationKind::Softmax},
                                  LossKind::CrossEntropy);
    const auto sp = random_params(softmax_spec, 5);
    const std::vector<double> in3{0.5, -0.25, 1.0};
    CHECK(forward_reference(softmax_spec, sp, in3).prediction() ==
          oracles::brute_forward(softmax_spec, sp, in3));
}

TEST_CASE("backward_reference closed forms") {
    // Perfect softmax prediction: every gradient is zero.
    auto spec = make_spec({2, 2}, {ActivationKind::Softmax}, LossKind::CrossEntropy);
    ParameterSet p;
    p.weights = {{{0, 0}, {0, 0}}};
    p.biases = {{0, 0}};
    const auto record = forward_reference(spec, p, {1.0, 2.0});
    const auto grads = backward_reference(spec, p, record, {0.5, 0.5});
    CHECK(grads.weights[0] == std::vector<std::vector<double>>{{0, 0}, {0, 0}});
    CHECK(grads.biases[0] == std::vector<double>{0, 0});

    // 1-1 identity network: dW = 2(wx - t) * x.
    auto tiny = make_spec({1, 1}, {ActivationKind::Identity});
    ParameterSet q;
    q.weights = {{{0.8}}};
    q.biases = {{0.0}};
    const double x = 1.7, t = -0.4;
    const auto rec = forward_reference(tiny, q, {x});
    const auto g = backward_reference(tiny, q, rec, {t});
    CHECK(g.weights[0][0][0] == 2.0 * (0.8 * x - t) * x);
}

TEST_CASE("backward_reference matches finite differences on random networks") {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> layer_count(2, 4);
    std::uniform_int_distribution<int> width(1, 5);
    std::uniform_real_distribution<double> value(-1.0, 1.0);

    for (int trial = 0; trial < 12; ++trial) {
        std::vector<int> sizes(layer_count(gen));
        for (auto& s : sizes) s = width(gen);
        std::vector<ActivationKind> acts(sizes.size() - 1, ActivationKind::Sigmoid);
        if (trial % 2 == 1)
            for (std::size_t k = 0; k + 1 < acts.size(); ++k) acts[k] = ActivationKind::ReLU;
        auto spec = make_spec(sizes, acts);
        const auto params = random_params(spec, 1000 + trial);

        std::vector<double> input(sizes.front());
        ForwardRecord record;
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (auto& v : input) v = value(gen);
            record = forward_reference(spec, params, input);
            if (away_from_relu_kinks(spec, record)) break;
        }
        REQUIRE(away_from_relu_kinks(spec, record));
        std::vector<double> target(sizes.back());
        for (auto& v : target) v = value(gen);

        const auto grads = backward_reference(spec, params, record, target);
        const auto fd = oracles::finite_difference_gradients(spec, params, input, target);
        CHECK(max_relative_error(grads, fd) < 1e-5);
    }
}

TEST_CASE("optimizer_step sgd") {
    ParameterSet p;
    p.weights = {{{1.0}}};
    p.biases = {{0.0}};
    GradientSet g = p;
    g.weights[0][0][0] = 0.5;
    g.biases[0][0] = 0.0;
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::Sgd;
    opt.learning_rate = 0.1;
    optimizer_step(opt, nullptr, p, g);
    CHECK(p.weights[0][0][0] == 0.95);

    GradientSet bad = g;
    bad.weights[0][0] = {0.5, 0.5};
    CHECK_THROWS_AS(optimizer_step(opt, nullptr, p, bad), ShapeError);
}

TEST_CASE("sgd linearity is exact on dyadic values") {
    std::mt19937_64 gen(31);
    std::uniform_int_distribution<int> num(-64, 64);
    for (int trial = 0; trial < 100; ++trial) {
        const double lr = std::ldexp(1.0, -(trial % 4 + 1));
        const double p0 = num(gen) / 16.0;
        const double g1 = num(gen) / 32.0;
        const double g2 = num(gen) / 32.0;
        const double combined = p0 - lr * (g1 + g2);
        const double stepped = (p0 - lr * g1) - lr * g2;
        CHECK(combined == stepped);
    }
}

TEST_CASE("adam first step moves by about lr") {
    ParameterSet p;
    p.weights = {{{1.0}}};
    p.biases = {{0.0}};
    GradientSet g = zero_like(p);
    g.weights[0][0][0] = 3.7;
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::Adam;
    opt.learning_rate = 0.01;
    AdamState state = make_adam_state(p);
    optimizer_step(opt, &state, p, g);
    CHECK(state.step == 1);
    CHECK(p.weights[0][0][0] == Catch::Approx(1.0 - 0.01).margin(1e-9));
}

TEST_CASE("adam three steps match the hand recurrence") {
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ParameterSet p;
    p.weights = {{{0.5}}};
    p.biases = {{0.25}};
    GradientSet g = zero_like(p);
    g.weights[0][0][0] = 1.0;
    g.biases[0][0] = 1.0;
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::Adam;
    opt.learning_rate = lr;
    opt.beta1 = b1;
    opt.beta2 = b2;
    opt.epsilon = eps;
    AdamState state = make_adam_state(p);

    const auto weight_track = oracles::adam_hand_steps(0.5, 1.0, 3, lr, b1, b2, eps);
    const auto bias_track = oracles::adam_hand_steps(0.25, 1.0, 3, lr, b1, b2, eps);
    for (int t = 0; t < 3; ++t) {
        optimizer_step(opt, &state, p, g);
        CHECK(p.weights[0][0][0] == Catch::Approx(weight_track[t].p).margin(1e-12));
        CHECK(p.biases[0][0] == Catch::Approx(bias_track[t].p).margin(1e-12));
        CHECK(state.first_moment.weights[0][0][0] == Catch::Approx(weight_track[t].m).margin(1e-12));
        CHECK(state.second_moment.weights[0][0][0] == Catch::Approx(weight_track[t].v).margin(1e-12));
    }
    CHECK(state.step == 3);
}

TEST_CASE("init_parameters determinism and bounds") {
    auto spec = make_spec({2, 3, 1}, {ActivationKind::ReLU, ActivationKind::Identity});
    spec.seed = 123456789;
    const auto a = init_parameters(spec);
    const auto b = init_parameters(spec);
    CHECK(a == b);

    const double bound = std::sqrt(6.0 / 5.0);
    for (const auto& row : a.weights[0])
        for (double w : row) {
            CHECK(w >= -bound);
            CHECK(w <= bound);
        }
    for (const auto& layer : a.biases)
        for (double v : layer) CHECK(v == 0.0);

    spec.seed = 987;
    CHECK_FALSE(init_parameters(spec) == a);
}

TEST_CASE("train_reference epochs=0 returns initialization") {
    auto spec = make_spec({2, 2, 1}, {ActivationKind::Sigmoid, ActivationKind::Sigmoid});
    spec.epochs = 0;
    spec.seed = 42;
    const std::vector<TrainingSample> data{{{0, 0}, {0}}, {{1, 1}, {0}}};
    const auto result = train_reference(spec, data);
    CHECK(result.epoch_losses.empty());
    CHECK(result.params == init_parameters(spec));
}

TEST_CASE("train_reference scalar quadratic descent is non-increasing") {
    auto spec = make_spec({1, 1}, {ActivationKind::Identity});
    spec.epochs = 50;
    spec.seed = 7;
    spec.optimizer.learning_rate = 0.05;
    const std::vector<TrainingSample> data{{{1.0}, {2.0}}};
    const auto result = train_reference(spec, data);
    REQUIRE(result.epoch_losses.size() == 50);
    for (std::size_t e = 1; e < result.epoch_losses.size(); ++e)
        CHECK(result.epoch_losses[e] <= result.epoch_losses[e - 1]);
}

TEST_CASE("train_reference is bitwise deterministic") {
    auto spec = make_spec({2, 3, 2}, {ActivationKind::ReLU, ActivationKind::Softmax},
                          LossKind::CrossEntropy);
    spec.epochs = 12;
    spec.seed = 77;
    spec.optimizer.kind = OptimizerConfig::Kind::Adam;
    spec.optimizer.learning_rate = 0.02;
    const std::vector<TrainingSample> data{
        {{0.1, 0.9}, {1, 0}}, {{0.8, 0.3}, {0, 1}}, {{0.4, 0.4}, {1, 0}}};
    const auto a = train_reference(spec, data);
    const auto b = train_reference(spec, data);
    CHECK(a.params == b.params);
    CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("xor training reproduces the frozen loss trace") {
    NetworkSpec spec = make_spec({2, 2, 1}, {ActivationKind::Sigmoid, ActivationKind::Sigmoid});
    spec.epochs = 2000;
    spec.seed = 42;
    spec.optimizer.kind = OptimizerConfig::Kind::Sgd;
    spec.optimizer.learning_rate = 0.5;
    const std::vector<TrainingSample> xor_data{
        {{0, 0}, {0}}, {{0, 1}, {1}}, {{1, 0}, {1}}, {{1, 1}, {0}}};
    const auto result = train_reference(spec, xor_data);
    REQUIRE(result.epoch_losses.size() == 2000);
    CHECK(result.epoch_losses.back() < 0.05);

    std::ifstream golden(std::string(AERONET_SOURCE_DIR) + "/tests/golden/xor_epoch_losses.txt");
    REQUIRE(golden.good());
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(golden, line)) {
        REQUIRE(line_no < result.epoch_losses.size());
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", result.epoch_losses[line_no]);
        CHECK(line == buf);
        ++line_no;
    }
    CHECK(line_no == result.epoch_losses.size());
}
