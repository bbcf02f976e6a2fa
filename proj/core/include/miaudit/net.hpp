#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "miaudit/matrix.hpp"

namespace miaudit::tinynn {

using miaudit::Matrix;

// Fully connected classifier with rectifier hidden layers and an identity
// final layer. The latent representation E(x) is the activation of the last
// hidden layer; l(.) is the final affine map; Y(x) = softmax(l(E(x))).
struct DenseNet {
    std::vector<std::size_t> layer_dims;            // input, hidden..., classes
    std::vector<Matrix> weights;                    // weights[l]: dims[l] x dims[l+1]
    std::vector<std::vector<double>> biases;        // biases[l]: dims[l+1]

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t num_classes() const { return layer_dims.back(); }
    std::size_t latent_dim() const { return layer_dims[layer_dims.size() - 2]; }
    std::size_t num_layers() const { return weights.size(); }

    // Checks the shape chain and the one-hidden-layer minimum.
    void validate() const;
};

// Seeded uniform init in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
DenseNet make_net(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

struct ForwardResult {
    Matrix latent; // E(batch): last hidden activations
    Matrix logits; // l(latent)
    Matrix probs;  // row-wise softmax of logits
};

ForwardResult forward(const DenseNet& net, const Matrix& batch);

// All layer activations (index 0 = input, back() = latent). Training and
// input gradients need the intermediate states.
std::vector<Matrix> forward_hidden(const DenseNet& net, const Matrix& batch);

// Latent representations only.
Matrix encode(const DenseNet& net, const Matrix& batch);

// per-sample -log(probs[i, labels[i]] + eta) with eta = 1e-12
inline constexpr double kLossFloor = 1e-12;
std::vector<double> cross_entropy(const Matrix& probs, std::span<const int> labels);

// Convenience: forward + cross-entropy of a batch.
std::vector<double> sample_losses(const DenseNet& net, const Matrix& batch, std::span<const int> labels);

std::vector<int> predict(const DenseNet& net, const Matrix& batch);
double accuracy(const DenseNet& net, const Matrix& batch, std::span<const int> labels);

// d/dx of mean((E(x) - target)^2) over the latent dimensions.
std::vector<double> grad_wrt_input(const DenseNet& net, std::span<const double> x,
                                   std::span<const double> target_latent);

// Flat binary container: "TNN1", u32 layer count, u32 dims, then per layer
// weights (row-major f64) followed by biases, all little-endian.
void save_tnn(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_tnn(const std::filesystem::path& path);

} // namespace miaudit::tinynn
