#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "miaudit/net.hpp"

namespace miaudit::tinynn {

struct TrainConfig {
    double learning_rate = 0.1;
    double decay_factor = 0.1;
    std::vector<std::size_t> decay_epochs = {50, 75};
    std::size_t epochs = 90;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochStats {
    double learning_rate;
    double train_loss;
    double train_accuracy;          // accumulated over the epoch's minibatches
    double eval_accuracy;           // NaN when no eval set was given
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

// Exact backpropagation of the mean cross-entropy over the batch.
ParamGrads param_gradients(const DenseNet& net, const Matrix& batch, std::span<const int> labels);

// Exact backpropagation of mean squared error against row targets,
// averaged over batch rows and output dimensions (identity output layer).
ParamGrads param_gradients_mse(const DenseNet& net, const Matrix& batch, const Matrix& targets);

// Seeded minibatch SGD with a step-decay schedule. The shuffle permutation is
// regenerated each epoch from a stream keyed on (seed, epoch), so a run is a
// pure function of (net init, data, config). Throws DivergenceError on a
// non-finite loss.
TrainLog train_sgd(DenseNet& net, const Matrix& samples, std::span<const int> labels, const TrainConfig& cfg,
                   const Matrix* eval_samples = nullptr, std::span<const int> eval_labels = {});

// Same driver for the regression objective (used by the decoder).
TrainLog train_sgd_mse(DenseNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg);

} // namespace miaudit::tinynn
