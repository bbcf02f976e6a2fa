#include "miaudit/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::tinynn {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (decay_factor <= 0.0 || decay_factor > 1.0) throw ConfigError("TrainConfig: decay_factor must be in (0, 1]");
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be >= 1");
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
        if (decay_epochs[i] >= epochs) throw ConfigError("TrainConfig: decay epoch beyond schedule");
        if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
            throw ConfigError("TrainConfig: decay_epochs must be strictly increasing");
    }
}

namespace {

struct BackpropScratch {
    ParamGrads grads;
    double batch_loss = 0.0;
    std::size_t batch_correct = 0;
};

// Shared backward pass. `delta` on entry is dJ/d(output of the final affine
// layer), averaged however the objective demands.
ParamGrads backward(const DenseNet& net, const std::vector<Matrix>& acts, Matrix delta) {
    ParamGrads g;
    g.weights.resize(net.num_layers());
    g.biases.resize(net.num_layers());
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        g.weights[l] = matmul_at_b(acts[l], delta);
        g.biases[l].assign(delta.cols(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            auto r = delta.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) g.biases[l][j] += r[j];
        }
        if (l == 0) break;
        delta = matmul_a_bt(delta, net.weights[l]);
        const Matrix& act = acts[l];
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            auto dr = delta.row(i);
            auto ar = act.row(i);
            for (std::size_t j = 0; j < dr.size(); ++j)
                if (ar[j] <= 0.0) dr[j] = 0.0;
        }
    }
    return g;
}

BackpropScratch ce_backprop(const DenseNet& net, const Matrix& batch, std::span<const int> labels) {
    auto acts = forward_hidden(net, batch);
    Matrix logits = matmul(acts.back(), net.weights.back());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += net.biases.back()[j];
    }

    std::size_t n = batch.rows();
    double inv_n = 1.0 / static_cast<double>(n);
    BackpropScratch s;
    Matrix delta(n, logits.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto lr = logits.row(i);
        auto dr = delta.row(i);
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
            throw DimensionError("train: label out of range");
        double mx = *std::max_element(lr.begin(), lr.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < lr.size(); ++j) {
            dr[j] = std::exp(lr[j] - mx);
            sum += dr[j];
        }
        std::size_t argmax = 0;
        for (std::size_t j = 0; j < lr.size(); ++j) {
            dr[j] /= sum;
            if (lr[j] > lr[argmax]) argmax = j;
        }
        s.batch_loss += -std::log(dr[static_cast<std::size_t>(y)] + kLossFloor);
        if (argmax == static_cast<std::size_t>(y)) ++s.batch_correct;
        dr[static_cast<std::size_t>(y)] -= 1.0;
        for (std::size_t j = 0; j < lr.size(); ++j) dr[j] *= inv_n;
    }
    s.batch_loss *= inv_n;
    s.grads = backward(net, acts, std::move(delta));
    return s;
}

BackpropScratch mse_backprop(const DenseNet& net, const Matrix& batch, const Matrix& targets) {
    auto acts = forward_hidden(net, batch);
    Matrix out = matmul(acts.back(), net.weights.back());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += net.biases.back()[j];
    }
    std::size_t n = batch.rows();
    double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(out.cols()));
    BackpropScratch s;
    Matrix delta(n, out.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto orow = out.row(i);
        auto trow = targets.row(i);
        auto drow = delta.row(i);
        for (std::size_t j = 0; j < orow.size(); ++j) {
            double diff = orow[j] - trow[j];
            s.batch_loss += diff * diff;
            drow[j] = scale * diff;
        }
    }
    s.batch_loss /= static_cast<double>(n) * static_cast<double>(out.cols());
    s.grads = backward(net, acts, std::move(delta));
    return s;
}

void apply_sgd_step(DenseNet& net, const ParamGrads& g, double lr) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& w = net.weights[l].data();
        const auto& gw = g.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
        for (std::size_t j = 0; j < net.biases[l].size(); ++j) net.biases[l][j] -= lr * g.biases[l][j];
    }
}

template <typename BatchStep, typename EvalFn>
TrainLog sgd_driver(DenseNet& net, std::size_t n, const TrainConfig& cfg, BatchStep step, EvalFn eval) {
    cfg.validate();
    net.validate();
    if (n == 0) throw ConfigError("train: empty training set");

    TrainLog log;
    double lr = cfg.learning_rate;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch) != cfg.decay_epochs.end())
            lr *= cfg.decay_factor;

        Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;
        for (std::size_t beg = 0; beg < n; beg += cfg.batch_size) {
            std::size_t end = std::min(n, beg + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + beg, end - beg);
            BackpropScratch s = step(idx);
            if (!std::isfinite(s.batch_loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(beg / cfg.batch_size));
            epoch_loss += s.batch_loss * static_cast<double>(idx.size());
            epoch_correct += s.batch_correct;
            apply_sgd_step(net, s.grads, lr);
        }
        EpochStats es;
        es.learning_rate = lr;
        es.train_loss = epoch_loss / static_cast<double>(n);
        es.train_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(n);
        es.eval_accuracy = eval();
        log.epochs.push_back(es);
    }
    return log;
}

} // namespace

ParamGrads param_gradients(const DenseNet& net, const Matrix& batch, std::span<const int> labels) {
    return ce_backprop(net, batch, labels).grads;
}

ParamGrads param_gradients_mse(const DenseNet& net, const Matrix& batch, const Matrix& targets) {
    return mse_backprop(net, batch, targets).grads;
}

TrainLog train_sgd(DenseNet& net, const Matrix& samples, std::span<const int> labels, const TrainConfig& cfg,
                   const Matrix* eval_samples, std::span<const int> eval_labels) {
    if (samples.rows() != labels.size()) throw DimensionError("train_sgd: label count mismatch");
    return sgd_driver(
        net, samples.rows(), cfg,
        [&](std::span<const std::size_t> idx) {
            Matrix batch = samples.select_rows(idx);
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) y[i] = labels[idx[i]];
            return ce_backprop(net, batch, y);
        },
        [&]() {
            if (eval_samples == nullptr) return std::numeric_limits<double>::quiet_NaN();
            return accuracy(net, *eval_samples, eval_labels);
        });
}

TrainLog train_sgd_mse(DenseNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg) {
    if (inputs.rows() != targets.rows()) throw DimensionError("train_sgd_mse: target count mismatch");
    return sgd_driver(
        net, inputs.rows(), cfg,
        [&](std::span<const std::size_t> idx) {
            Matrix batch = inputs.select_rows(idx);
            Matrix tgt = targets.select_rows(idx);
            return mse_backprop(net, batch, tgt);
        },
        []() { return std::numeric_limits<double>::quiet_NaN(); });
}

} // namespace miaudit::tinynn
