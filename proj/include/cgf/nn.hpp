#pragma once

// Minimal dense tensors with tape-based reverse-mode differentiation.
//
// A Tape records every operation as a node holding its value, its parents
// and a rule that pushes the node's gradient onto the parents. Nodes are
// appended in evaluation order, so walking them backwards is a valid
// topological order. A tape can run backward once.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgf::nn {

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    /// Leading dimension; 0 for an empty tensor.
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    /// Product of the trailing dimensions (1 for vectors).
    std::size_t cols() const { return rows() == 0 ? 0 : size() / rows(); }

    double& operator[](std::size_t i) { return values_[i]; }
    const double& operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    const double& at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives no gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is collected by backward().
    Var parameter(Tensor value);

    /// Called by ops. Throws NumericError if `value` holds NaN/Inf. `fn`
    /// is dropped when no parent needs a gradient.
    Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn fn);
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
        return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
    }

    /// Accumulates d(loss)/d(node) into every node that needs it. The loss
    /// must hold exactly one element. Throws on a second call.
    void backward(Var loss);

    bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
    /// Gradient buffer of `v`, zero-initialized on first use.
    Tensor& grad_buffer(Var v);
    /// Gradient after backward(); a zero tensor if nothing flowed into `v`.
    Tensor grad(Var v) const;

    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::string_view op;
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool needs_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
    bool consumed_ = false;
};

// --- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
Var add(Var a, Var b);        // same shape
Var scale(Var a, double s);
/// x[m,n] + bias broadcast over rows; bias is [n] or [1,n].
Var add_bias(Var x, Var bias);
/// x[b*L, n] + table[L, n] repeated for every block of L rows.
Var add_tiled(Var x, Var table);

// --- elementwise -----------------------------------------------------------

/// Exact GELU: x * Phi(x) with the erf-based normal CDF.
Var gelu(Var x);
Var relu(Var x);
Var tanh(Var x);

// --- row-wise --------------------------------------------------------------

/// Max-shifted softmax over each row.
Var softmax_rows(Var x);
/// Per-row standardization (eps inside the square root) then gain/bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// [b*L, n] -> [b, n], mean over each block of L rows.
Var mean_pool(Var x, std::size_t block);

// --- reshaping -------------------------------------------------------------

Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);

// --- reductions and losses -------------------------------------------------

Var sum(Var x);
/// mean((pred - target)^2); shapes must hold the same number of elements.
Var mse_loss(Var pred, Var target);

// --- fused -----------------------------------------------------------------

/// Multi-head self-attention core, softmax(Q_h K_h^T / sqrt(d_h)) V_h per
/// head, over independent blocks of `seq` rows. Inputs are [blocks*seq,
/// width]. If `probs_out` is set it receives the attention weights laid
/// out [blocks][heads][seq][seq].
Var block_attention(Var q, Var k, Var v, std::size_t seq, std::size_t heads, Tensor* probs_out = nullptr);

}  // namespace cgf::nn
