#include "miaudit/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::tinynn {

void DenseNet::validate() const {
    if (layer_dims.size() < 3)
        throw DimensionError("DenseNet: need at least one hidden layer");
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
        throw DimensionError("DenseNet: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1])
            throw DimensionError("DenseNet: weight shape mismatch at layer " + std::to_string(l));
        if (biases[l].size() != layer_dims[l + 1])
            throw DimensionError("DenseNet: bias shape mismatch at layer " + std::to_string(l));
        weights[l].require_finite("DenseNet weights");
    }
}

DenseNet make_net(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 3)
        throw DimensionError("make_net: need at least one hidden layer");
    DenseNet net;
    net.layer_dims = layer_dims;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        Rng rng(derive_seed(seed, "init", l));
        double lim = std::sqrt(6.0 / static_cast<double>(layer_dims[l] + layer_dims[l + 1]));
        Matrix w(layer_dims[l], layer_dims[l + 1]);
        for (double& v : w.data()) v = rng.uniform(-lim, lim);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(layer_dims[l + 1], 0.0);
    }
    return net;
}

namespace {

void affine_into(const Matrix& in, const Matrix& w, const std::vector<double>& b, Matrix& out) {
    out = matmul(in, w);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
    }
}

void relu_inplace(Matrix& m) {
    for (double& v : m.data())
        if (v < 0.0) v = 0.0;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto in = logits.row(i);
        auto out = probs.row(i);
        double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        for (std::size_t j = 0; j < in.size(); ++j) out[j] /= sum;
    }
    return probs;
}

} // namespace

std::vector<Matrix> forward_hidden(const DenseNet& net, const Matrix& batch) {
    if (batch.cols() != net.input_dim())
        throw DimensionError("forward: batch has " + std::to_string(batch.cols()) + " features, net expects " +
                             std::to_string(net.input_dim()));
    std::vector<Matrix> acts;
    acts.reserve(net.num_layers());
    acts.push_back(batch);
    for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
        Matrix h;
        affine_into(acts.back(), net.weights[l], net.biases[l], h);
        relu_inplace(h);
        acts.push_back(std::move(h));
    }
    return acts;
}

ForwardResult forward(const DenseNet& net, const Matrix& batch) {
    auto acts = forward_hidden(net, batch);
    ForwardResult r;
    r.latent = std::move(acts.back());
    affine_into(r.latent, net.weights.back(), net.biases.back(), r.logits);
    r.logits.require_finite("forward logits");
    r.probs = softmax_rows(r.logits);
    return r;
}

Matrix encode(const DenseNet& net, const Matrix& batch) {
    auto acts = forward_hidden(net, batch);
    return std::move(acts.back());
}

std::vector<double> cross_entropy(const Matrix& probs, std::span<const int> labels) {
    if (labels.size() != probs.rows())
        throw DimensionError("cross_entropy: label count mismatch");
    std::vector<double> losses(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
            throw DimensionError("cross_entropy: label " + std::to_string(y) + " out of range");
        losses[i] = -std::log(probs(i, static_cast<std::size_t>(y)) + kLossFloor);
    }
    return losses;
}

std::vector<double> sample_losses(const DenseNet& net, const Matrix& batch, std::span<const int> labels) {
    return cross_entropy(forward(net, batch).probs, labels);
}

std::vector<int> predict(const DenseNet& net, const Matrix& batch) {
    Matrix probs = forward(net, batch).probs;
    std::vector<int> out(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto r = probs.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

double accuracy(const DenseNet& net, const Matrix& batch, std::span<const int> labels) {
    auto preds = predict(net, batch);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<double> grad_wrt_input(const DenseNet& net, std::span<const double> x,
                                   std::span<const double> target_latent) {
    if (x.size() != net.input_dim()) throw DimensionError("grad_wrt_input: input size mismatch");
    if (target_latent.size() != net.latent_dim())
        throw DimensionError("grad_wrt_input: target latent size mismatch");
    Matrix batch(1, x.size());
    std::copy(x.begin(), x.end(), batch.row(0).begin());
    auto acts = forward_hidden(net, batch);

    const Matrix& latent = acts.back();
    double inv_dim = 1.0 / static_cast<double>(target_latent.size());
    Matrix delta(1, latent.cols());
    for (std::size_t j = 0; j < latent.cols(); ++j)
        delta(0, j) = 2.0 * inv_dim * (latent(0, j) - target_latent[j]);

    // Backpropagate through the hidden stack only: E(x) excludes the final
    // affine layer.
    for (std::size_t l = net.num_layers() - 1; l-- > 0;) {
        // delta currently holds dJ/d(post-relu activation of layer l+1 in acts)
        const Matrix& act = acts[l + 1];
        for (std::size_t j = 0; j < delta.cols(); ++j)
            if (act(0, j) <= 0.0) delta(0, j) = 0.0;
        delta = matmul_a_bt(delta, net.weights[l]);
    }
    delta.require_finite("grad_wrt_input");
    return {delta.row(0).begin(), delta.row(0).end()};
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("TNN1: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("TNN1: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

void save_tnn(const DenseNet& net, const std::filesystem::path& path) {
    net.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out.write("TNN1", 4);
    put_u32(out, static_cast<std::uint32_t>(net.layer_dims.size()));
    for (std::size_t d : net.layer_dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        for (double v : net.weights[l].data()) put_f64(out, v);
        for (double v : net.biases[l]) put_f64(out, v);
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

DenseNet load_tnn(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TNN1", 4) != 0) throw FormatError("TNN1: bad magic in " + path.string());
    std::uint32_t n_dims = get_u32(in);
    if (n_dims < 3 || n_dims > 64) throw FormatError("TNN1: implausible layer count");
    DenseNet net;
    net.layer_dims.resize(n_dims);
    for (auto& d : net.layer_dims) d = get_u32(in);
    for (std::size_t l = 0; l + 1 < n_dims; ++l) {
        Matrix w(net.layer_dims[l], net.layer_dims[l + 1]);
        for (double& v : w.data()) v = get_f64(in);
        std::vector<double> b(net.layer_dims[l + 1]);
        for (double& v : b) v = get_f64(in);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    net.validate();
    return net;
}

} // namespace miaudit::tinynn
