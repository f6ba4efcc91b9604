#pragma once

// Encoder-only transformer that maps a window of 12 normalized 5-feature
// steps to one tanh-bounded scalar, the normalized grid id of the next fix.
//
//   input [L, F] -> linear embed -> + sinusoidal positions
//     -> n_layers x { x = norm(x + MHA(x)); x = norm(x + FFN_gelu(x)) }
//     -> mean over the L positions -> relu(linear -> head_hidden) -> tanh(linear -> 1)
//
// The norms are optional (use_layer_norm). Batches are processed as one
// [B*L, d_model] matrix; attention never crosses window boundaries.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgf/nn.hpp"

namespace cgf::model {

struct ModelConfig {
    std::size_t seq_len = 12;
    std::size_t in_features = 5;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t n_layers = 3;
    std::size_t ffn_hidden = 64;
    std::size_t head_hidden = 12;
    bool use_layer_norm = true;
    std::uint64_t seed = 7;

    /// Throws ConfigError on zero sizes or n_heads not dividing d_model.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
    std::string name;
    nn::Tensor value;
    bool trainable = true;  // the positional table is fixed
};

/// Every model tensor in a fixed order determined by the config alone.
struct ModelParams {
    std::vector<NamedTensor> entries;

    const nn::Tensor& get(std::string_view name) const;
    nn::Tensor& get(std::string_view name);
    std::size_t trainable_count() const;

    friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Trainable scalar count:
///   F*d + d
///   + layers * (4*d*d + d*H + H + H*d + d + (norm ? 4*d : 0))
///   + d*h + h + h + 1
/// with F inputs, d model width, H FFN width, h head width.
std::size_t parameter_count(const ModelConfig& config);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1,
/// positional table sinusoidal. Deterministic in config.seed.
ModelParams init_params(const ModelConfig& config);

enum class AttentionPath {
    fused,      // block_attention kernel
    reference,  // per-window, per-head composition of primitive ops
};

/// Tensors of one encoder layer bound to a tape.
struct LayerVars {
    nn::Var wq, wk, wv, wo;
    nn::Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    nn::Var norm1_gain, norm1_bias, norm2_gain, norm2_bias;  // unset without norms
};

/// All model tensors on a tape, in ModelParams order.
struct BoundParams {
    std::vector<nn::Var> vars;
    nn::Var embed_w, embed_b, positions;
    std::vector<LayerVars> layers;
    nn::Var head_w1, head_b1, head_w2, head_b2;
};

/// Trainable tensors become tape parameters when `with_grad` is set,
/// constants otherwise.
BoundParams bind(nn::Tape& tape, const ModelConfig& config, const ModelParams& params, bool with_grad);

/// x + concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) Wo over windows of
/// `seq` rows. `probs` (optional) receives [windows][heads][seq][seq].
nn::Var multi_head_attention(nn::Var x, const LayerVars& layer, std::size_t seq, std::size_t heads,
                             AttentionPath path = AttentionPath::fused, nn::Tensor* probs = nullptr);

/// Attention sublayer then GELU feed-forward sublayer, each residual and
/// followed by layer norm when enabled.
nn::Var encoder_layer(nn::Var x, const LayerVars& layer, const ModelConfig& config,
                      AttentionPath path = AttentionPath::fused, nn::Tensor* probs = nullptr);

struct ForwardOptions {
    AttentionPath attention = AttentionPath::fused;
    std::vector<nn::Tensor>* attention_probs = nullptr;  // one entry per layer
};

/// inputs: [B*seq_len, in_features] -> [B, 1].
nn::Var forward_graph(const ModelConfig& config, const BoundParams& bound, nn::Var inputs,
                      const ForwardOptions& options = {});

class Model {
public:
    Model(ModelConfig config, ModelParams params);
    explicit Model(const ModelConfig& config) : Model(config, init_params(config)) {}

    const ModelConfig& config() const { return config_; }
    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }

    /// One window, row-major seq_len x in_features. Result in [-1, 1].
    double forward(std::span<const double> window, const ForwardOptions& options = {}) const;

    /// `windows` holds n consecutive windows; returns n predictions.
    std::vector<double> forward_batch(std::span<const double> windows, std::size_t n,
                                      const ForwardOptions& options = {}) const;

private:
    ModelConfig config_;
    ModelParams params_;
};

}  // namespace cgf::model
