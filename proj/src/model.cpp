#include "cgf/model.hpp"

#include <cmath>

#include "cgf/error.hpp"
#include "cgf/random.hpp"

namespace cgf::model {
namespace {

using nn::Tensor;
using nn::Var;

Tensor uniform_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t({fan_in, fan_out});
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor sinusoidal_table(std::size_t len, std::size_t width) {
    Tensor t({len, width});
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
            const double angle = static_cast<double>(pos) * freq;
            t.at(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return t;
}

std::string layer_name(std::size_t l, std::string_view leaf) {
    return "layers." + std::to_string(l) + "." + std::string(leaf);
}

}  // namespace

void ModelConfig::validate() const {
    if (seq_len == 0 || in_features == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 || ffn_hidden == 0 ||
        head_hidden == 0) {
        throw ConfigError("model dimensions must all be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
    }
    if (use_layer_norm && d_model < 2) throw ConfigError("layer norm needs d_model >= 2");
}

const Tensor& ModelParams::get(std::string_view name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e.value;
    }
    throw ConfigError("no parameter named " + std::string(name));
}

Tensor& ModelParams::get(std::string_view name) {
    return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).get(name));
}

std::size_t ModelParams::trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.trainable) n += e.value.size();
    }
    return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const auto& x = a.entries[i];
        const auto& y = b.entries[i];
        if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
    }
    return true;
}

std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model, H = c.ffn_hidden, h = c.head_hidden;
    const std::size_t per_layer = 4 * d * d + d * H + H + H * d + d + (c.use_layer_norm ? 4 * d : 0);
    return c.in_features * d + d + c.n_layers * per_layer + d * h + h + h + 1;
}

ModelParams init_params(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const std::size_t d = config.d_model;
    ModelParams p;
    auto add = [&p](std::string name, Tensor value, bool trainable = true) {
        p.entries.push_back({std::move(name), std::move(value), trainable});
    };
    add("embed.weight", uniform_weight(rng, config.in_features, d));
    add("embed.bias", Tensor({d}));
    add("positions", sinusoidal_table(config.seq_len, d), false);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        add(layer_name(l, "attn.wq"), uniform_weight(rng, d, d));
        add(layer_name(l, "attn.wk"), uniform_weight(rng, d, d));
        add(layer_name(l, "attn.wv"), uniform_weight(rng, d, d));
        add(layer_name(l, "attn.wo"), uniform_weight(rng, d, d));
        if (config.use_layer_norm) {
            add(layer_name(l, "norm1.gain"), Tensor({d}, 1.0));
            add(layer_name(l, "norm1.bias"), Tensor({d}));
        }
        add(layer_name(l, "ffn.w1"), uniform_weight(rng, d, config.ffn_hidden));
        add(layer_name(l, "ffn.b1"), Tensor({config.ffn_hidden}));
        add(layer_name(l, "ffn.w2"), uniform_weight(rng, config.ffn_hidden, d));
        add(layer_name(l, "ffn.b2"), Tensor({d}));
        if (config.use_layer_norm) {
            add(layer_name(l, "norm2.gain"), Tensor({d}, 1.0));
            add(layer_name(l, "norm2.bias"), Tensor({d}));
        }
    }
    add("head.w1", uniform_weight(rng, d, config.head_hidden));
    add("head.b1", Tensor({config.head_hidden}));
    add("head.w2", uniform_weight(rng, config.head_hidden, 1));
    add("head.b2", Tensor({1}));
    return p;
}

BoundParams bind(nn::Tape& tape, const ModelConfig& config, const ModelParams& params, bool with_grad) {
    BoundParams b;
    for (const auto& e : params.entries) {
        b.vars.push_back(with_grad && e.trainable ? tape.parameter(e.value) : tape.constant(e.value));
    }
    auto at = [&](std::string_view name) {
        for (std::size_t i = 0; i < params.entries.size(); ++i) {
            if (params.entries[i].name == name) return b.vars[i];
        }
        throw ConfigError("parameters do not match the model config: missing " + std::string(name));
    };
    b.embed_w = at("embed.weight");
    b.embed_b = at("embed.bias");
    b.positions = at("positions");
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerVars lv;
        lv.wq = at(layer_name(l, "attn.wq"));
        lv.wk = at(layer_name(l, "attn.wk"));
        lv.wv = at(layer_name(l, "attn.wv"));
        lv.wo = at(layer_name(l, "attn.wo"));
        lv.ffn_w1 = at(layer_name(l, "ffn.w1"));
        lv.ffn_b1 = at(layer_name(l, "ffn.b1"));
        lv.ffn_w2 = at(layer_name(l, "ffn.w2"));
        lv.ffn_b2 = at(layer_name(l, "ffn.b2"));
        if (config.use_layer_norm) {
            lv.norm1_gain = at(layer_name(l, "norm1.gain"));
            lv.norm1_bias = at(layer_name(l, "norm1.bias"));
            lv.norm2_gain = at(layer_name(l, "norm2.gain"));
            lv.norm2_bias = at(layer_name(l, "norm2.bias"));
        }
        b.layers.push_back(lv);
    }
    b.head_w1 = at("head.w1");
    b.head_b1 = at("head.b1");
    b.head_w2 = at("head.w2");
    b.head_b2 = at("head.b2");
    return b;
}

Var multi_head_attention(Var x, const LayerVars& layer, std::size_t seq, std::size_t heads, AttentionPath path,
                         Tensor* probs) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || seq == 0 || xv.rows() % seq != 0) {
        throw ShapeError("attention input " + xv.shape_string() + " is not a stack of " + std::to_string(seq) + "-row windows");
    }
    const Var q = nn::matmul(x, layer.wq);
    const Var k = nn::matmul(x, layer.wk);
    const Var v = nn::matmul(x, layer.wv);

    Var attended;
    if (path == AttentionPath::fused) {
        attended = nn::block_attention(q, k, v, seq, heads, probs);
    } else {
        const std::size_t width = xv.cols();
        const std::size_t dh = width / heads;
        const std::size_t blocks = xv.rows() / seq;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        if (probs) *probs = Tensor({blocks * heads * seq, seq});
        std::vector<Var> block_out;
        for (std::size_t b = 0; b < blocks; ++b) {
            const Var qb = nn::slice_rows(q, b * seq, seq);
            const Var kb = nn::slice_rows(k, b * seq, seq);
            const Var vb = nn::slice_rows(v, b * seq, seq);
            std::vector<Var> head_out;
            for (std::size_t h = 0; h < heads; ++h) {
                const Var scores = nn::scale(nn::matmul_nt(nn::slice_cols(qb, h * dh, dh), nn::slice_cols(kb, h * dh, dh)), inv_sqrt);
                const Var weights = nn::softmax_rows(scores);
                if (probs) {
                    const auto src = weights.value().values();
                    std::copy(src.begin(), src.end(), probs->values().begin() + static_cast<std::ptrdiff_t>((b * heads + h) * seq * seq));
                }
                head_out.push_back(nn::matmul(weights, nn::slice_cols(vb, h * dh, dh)));
            }
            block_out.push_back(nn::concat_cols(head_out));
        }
        attended = nn::concat_rows(block_out);
    }
    return nn::add(x, nn::matmul(attended, layer.wo));
}

Var encoder_layer(Var x, const LayerVars& layer, const ModelConfig& config, AttentionPath path, Tensor* probs) {
    Var h = multi_head_attention(x, layer, config.seq_len, config.n_heads, path, probs);
    if (config.use_layer_norm) h = nn::layer_norm(h, layer.norm1_gain, layer.norm1_bias);
    const Var hidden = nn::gelu(nn::add_bias(nn::matmul(h, layer.ffn_w1), layer.ffn_b1));
    Var out = nn::add(h, nn::add_bias(nn::matmul(hidden, layer.ffn_w2), layer.ffn_b2));
    if (config.use_layer_norm) out = nn::layer_norm(out, layer.norm2_gain, layer.norm2_bias);
    return out;
}

Var forward_graph(const ModelConfig& config, const BoundParams& bound, Var inputs, const ForwardOptions& options) {
    const Tensor& iv = inputs.value();
    if (iv.rank() != 2 || iv.cols() != config.in_features || iv.rows() % config.seq_len != 0) {
        throw ShapeError("model input " + iv.shape_string() + " must be [B*" + std::to_string(config.seq_len) + ", " +
                         std::to_string(config.in_features) + "]");
    }
    Var h = nn::add_bias(nn::matmul(inputs, bound.embed_w), bound.embed_b);
    h = nn::add_tiled(h, bound.positions);
    if (options.attention_probs) options.attention_probs->assign(config.n_layers, Tensor{});
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        Tensor* probs = options.attention_probs ? &(*options.attention_probs)[l] : nullptr;
        h = encoder_layer(h, bound.layers[l], config, options.attention, probs);
    }
    const Var pooled = nn::mean_pool(h, config.seq_len);
    const Var hidden = nn::relu(nn::add_bias(nn::matmul(pooled, bound.head_w1), bound.head_b1));
    return nn::tanh(nn::add_bias(nn::matmul(hidden, bound.head_w2), bound.head_b2));
}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
    const auto expected = init_params(config_);
    if (expected.entries.size() != params_.entries.size()) {
        throw ConfigError("parameter set does not match the model config");
    }
    for (std::size_t i = 0; i < expected.entries.size(); ++i) {
        if (expected.entries[i].name != params_.entries[i].name ||
            expected.entries[i].value.shape() != params_.entries[i].value.shape()) {
            throw ConfigError("parameter " + params_.entries[i].name + " does not match the model config");
        }
    }
}

double Model::forward(std::span<const double> window, const ForwardOptions& options) const {
    return forward_batch(window, 1, options).front();
}

std::vector<double> Model::forward_batch(std::span<const double> windows, std::size_t n,
                                         const ForwardOptions& options) const {
    const std::size_t per_window = config_.seq_len * config_.in_features;
    if (windows.size() != n * per_window) {
        throw ShapeError("forward_batch expected " + std::to_string(n * per_window) + " values, got " +
                         std::to_string(windows.size()));
    }
    if (n == 0) return {};
    nn::Tape tape;
    const BoundParams bound = bind(tape, config_, params_, false);
    const Var x = tape.constant(Tensor({n * config_.seq_len, config_.in_features},
                                       std::vector<double>(windows.begin(), windows.end())));
    const Var y = forward_graph(config_, bound, x, options);
    const auto out = y.value().values();
    return {out.begin(), out.end()};
}

}  // namespace cgf::model
