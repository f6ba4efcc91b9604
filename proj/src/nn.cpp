#include "cgf/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cgf/error.hpp"
#include "cgf/kernels.hpp"

namespace cgf::nn {

// --- Tensor ----------------------------------------------------------------

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.size() != product(shape_)) {
        throw ShapeError("tensor of shape " + shape_string() + " given " + std::to_string(values_.size()) +
                         " values");
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

// --- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) { return record("constant", std::move(value), std::span<const Var>{}, nullptr); }

Var Tape::parameter(Tensor value) {
    Var v = record("parameter", std::move(value), std::span<const Var>{}, nullptr);
    nodes_.back().needs_grad = true;
    return v;
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn fn) {
    if (consumed_) throw Error("tape already ran backward; record a new tape");
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + " produced a non-finite value");
    }
    bool needs = false;
    for (const Var& p : parents) {
        assert(&p.tape() == this && p.id() < nodes_.size());
        needs = needs || nodes_[p.id()].needs_grad;
    }
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.needs_grad = needs;
    if (needs) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(Var v) {
    Node& n = nodes_[v.id()];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
    if (consumed_) throw Error("backward already ran on this tape");
    if (value(loss).size() != 1) {
        throw ShapeError("backward needs a scalar loss, got shape " + value(loss).shape_string());
    }
    consumed_ = true;
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, n.value, n.grad);
        if (!n.grad.all_finite()) throw NumericError(std::string(n.op) + " received a non-finite gradient");
    }
}

// --- ops -------------------------------------------------------------------

namespace {

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
    if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

std::size_t width_of(const Tensor& t) { return t.rank() == 1 ? t.size() : t.cols(); }

template <typename F, typename G>
Var elementwise(std::string_view op, Var x, F f, G dfdx) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return x.tape().record(op, std::move(out), {x}, [x, dfdx](Tape& t, const Tensor& y, const Tensor& g) {
        if (!t.needs_grad(x)) return;
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * dfdx(xv[i], y[i]);
    });
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(), "matmul", av, bv);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    kernels::matmul(av.values(), bv.values(), out.values(), m, k, n);
    return a.tape().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
        if (t.needs_grad(a)) kernels::matmul_nt(g.values(), t.value(b).values(), t.grad_buffer(a).values(), m, n, k, true);
        if (t.needs_grad(b)) kernels::matmul_tn(t.value(a).values(), g.values(), t.grad_buffer(b).values(), k, m, n, true);
    });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(), "matmul_nt", av, bv);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    Tensor out({m, n});
    kernels::matmul_nt(av.values(), bv.values(), out.values(), m, k, n);
    return a.tape().record("matmul_nt", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
        // C = A B^T: dA = dC B, dB = dC^T A
        if (t.needs_grad(a)) kernels::matmul(g.values(), t.value(b).values(), t.grad_buffer(a).values(), m, n, k, true);
        if (t.needs_grad(b)) kernels::matmul_tn(g.values(), t.value(a).values(), t.grad_buffer(b).values(), n, m, k, true);
    });
}

Var add(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.shape() == bv.shape(), "add", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
        for (Var p : {a, b}) {
            if (!t.needs_grad(p)) continue;
            Tensor& gp = t.grad_buffer(p);
            for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return a.tape().record("scale", std::move(out), {a}, [a, s](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var add_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require(xv.rank() == 2 && bv.size() == xv.cols(), "add_bias", xv, bv);
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    }
    return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias, m, n](Tape& t, const Tensor&, const Tensor& g) {
        if (t.needs_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(bias)) {
            Tensor& gb = t.grad_buffer(bias);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            }
        }
    });
}

Var add_tiled(Var x, Var table) {
    const Tensor& xv = x.value();
    const Tensor& tv = table.value();
    require(xv.rank() == 2 && tv.rank() == 2 && xv.cols() == tv.cols() && xv.rows() % tv.rows() == 0, "add_tiled", xv,
            tv);
    const std::size_t period = tv.size();
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i % period];
    return x.tape().record("add_tiled", std::move(out), {x, table}, [x, table, period](Tape& t, const Tensor&, const Tensor& g) {
        if (t.needs_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(table)) {
            Tensor& gt = t.grad_buffer(table);
            for (std::size_t i = 0; i < g.size(); ++i) gt[i % period] += g[i];
        }
    });
}

Var gelu(Var x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return elementwise(
        "gelu", x, [](double v) { return 0.5 * v * std::erfc(-v * inv_sqrt2); },
        [](double v, double) { return 0.5 * std::erfc(-v * inv_sqrt2) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Var relu(Var x) {
    return elementwise(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
    return elementwise(
        "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var softmax_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = width_of(xv);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* in = &xv[i * n];
        double* o = &out[i * n];
        const double mx = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    return x.tape().record("softmax_rows", std::move(out), {x}, [x, m, n](Tape& t, const Tensor& y, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), d = width_of(xv);
    if (d < 2) throw ShapeError("layer_norm needs rows of width >= 2");
    require(gain.value().size() == d && bias.value().size() == d, "layer_norm", xv, gain.value());
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();

    Tensor out(xv.shape());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &xv[i * d];
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mean) * inv_std[i];
            out[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
        }
    }
    return x.tape().record(
        "layer_norm", std::move(out), {x, gain, bias},
        [x, gain, bias, m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor&, const Tensor& g) {
            const Tensor& gv = t.value(gain);
            if (t.needs_grad(gain) || t.needs_grad(bias)) {
                Tensor& gg = t.grad_buffer(gain);
                Tensor& gb = t.grad_buffer(bias);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += g[i * d + j] * xhat[i * d + j];
                        gb[j] += g[i * d + j];
                    }
                }
            }
            if (!t.needs_grad(x)) return;
            Tensor& gx = t.grad_buffer(x);
            const auto dd = static_cast<double>(d);
            for (std::size_t i = 0; i < m; ++i) {
                double mean_dh = 0.0, mean_dh_xhat = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = g[i * d + j] * gv[j];
                    mean_dh += dh;
                    mean_dh_xhat += dh * xhat[i * d + j];
                }
                mean_dh /= dd;
                mean_dh_xhat /= dd;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = g[i * d + j] * gv[j];
                    gx[i * d + j] += inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_xhat);
                }
            }
        });
}

Var mean_pool(Var x, std::size_t block) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || block == 0 || xv.rows() % block != 0) {
        throw ShapeError("mean_pool: " + xv.shape_string() + " is not a whole number of blocks of " + std::to_string(block));
    }
    const std::size_t blocks = xv.rows() / block, n = xv.cols();
    const double inv = 1.0 / static_cast<double>(block);
    Tensor out({blocks, n});
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t r = 0; r < block; ++r) {
            for (std::size_t j = 0; j < n; ++j) out[b * n + j] += xv[(b * block + r) * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[b * n + j] *= inv;
    }
    return x.tape().record("mean_pool", std::move(out), {x}, [x, block, blocks, n, inv](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t b = 0; b < blocks; ++b) {
            for (std::size_t r = 0; r < block; ++r) {
                for (std::size_t j = 0; j < n; ++j) gx[(b * block + r) * n + j] += g[b * n + j] * inv;
            }
        }
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || count == 0 || begin + count > xv.cols()) {
        throw ShapeError("slice_cols out of range for " + xv.shape_string());
    }
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out({m, count});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(&xv[i * n + begin], count, &out[i * count]);
    }
    return x.tape().record("slice_cols", std::move(out), {x}, [x, begin, count, m, n](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols needs at least one input");
    const std::size_t m = parts[0].value().rows();
    std::size_t n = 0;
    for (const Var& p : parts) {
        require(p.value().rank() == 2 && p.value().rows() == m, "concat_cols", parts[0].value(), p.value());
        n += p.value().cols();
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const std::size_t w = pv.cols();
        for (std::size_t i = 0; i < m; ++i) std::copy_n(&pv[i * w], w, &out[i * n + off]);
        off += w;
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts[0].tape().record("concat_cols", std::move(out), parts, [inputs, m, n](Tape& t, const Tensor&, const Tensor& g) {
        std::size_t off = 0;
        for (const Var& p : inputs) {
            const std::size_t w = t.value(p).cols();
            if (t.needs_grad(p)) {
                Tensor& gp = t.grad_buffer(p);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + off + j];
                }
            }
            off += w;
        }
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || count == 0 || begin + count > xv.rows()) {
        throw ShapeError("slice_rows out of range for " + xv.shape_string());
    }
    const std::size_t n = xv.cols();
    Tensor out({count, n}, std::vector<double>(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                                               xv.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * n)));
    return x.tape().record("slice_rows", std::move(out), {x}, [x, begin, n](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows needs at least one input");
    const std::size_t n = parts[0].value().cols();
    std::size_t m = 0;
    for (const Var& p : parts) {
        require(p.value().rank() == 2 && p.value().cols() == n, "concat_rows", parts[0].value(), p.value());
        m += p.value().rows();
    }
    std::vector<double> values;
    values.reserve(m * n);
    for (const Var& p : parts) values.insert(values.end(), p.value().values().begin(), p.value().values().end());
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts[0].tape().record("concat_rows", Tensor({m, n}, std::move(values)), parts,
                                  [inputs](Tape& t, const Tensor&, const Tensor& g) {
                                      std::size_t off = 0;
                                      for (const Var& p : inputs) {
                                          const std::size_t len = t.value(p).size();
                                          if (t.needs_grad(p)) {
                                              Tensor& gp = t.grad_buffer(p);
                                              for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
                                          }
                                          off += len;
                                      }
                                  });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    Tensor out({1}, std::accumulate(xv.values().begin(), xv.values().end(), 0.0));
    return x.tape().record("sum", std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (auto& v : gx.values()) v += g[0];
    });
}

Var mse_loss(Var pred, Var target) {
    const Tensor& pv = pred.value();
    const Tensor& tv = target.value();
    require(pv.size() == tv.size() && pv.size() > 0, "mse_loss", pv, tv);
    const std::size_t n = pv.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (pv[i] - tv[i]) * (pv[i] - tv[i]);
    Tensor out({1}, acc / static_cast<double>(n));
    return pred.tape().record("mse_loss", std::move(out), {pred, target}, [pred, target, n](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& pv = t.value(pred);
        const Tensor& tv = t.value(target);
        const double c = 2.0 * g[0] / static_cast<double>(n);
        if (t.needs_grad(pred)) {
            Tensor& gp = t.grad_buffer(pred);
            for (std::size_t i = 0; i < n; ++i) gp[i] += c * (pv[i] - tv[i]);
        }
        if (t.needs_grad(target)) {
            Tensor& gt = t.grad_buffer(target);
            for (std::size_t i = 0; i < n; ++i) gt[i] -= c * (pv[i] - tv[i]);
        }
    });
}

Var block_attention(Var q, Var k, Var v, std::size_t seq, std::size_t heads, Tensor* probs_out) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    require(qv.shape() == kv.shape() && qv.shape() == vv.shape() && qv.rank() == 2, "block_attention", qv, kv);
    const std::size_t width = qv.cols();
    if (seq == 0 || qv.rows() % seq != 0 || heads == 0 || width % heads != 0) {
        throw ShapeError("block_attention: " + qv.shape_string() + " incompatible with seq " + std::to_string(seq) +
                         " and " + std::to_string(heads) + " heads");
    }
    const std::size_t blocks = qv.rows() / seq;
    Tensor out(qv.shape());
    Tensor probs({blocks * heads * seq, seq});
    kernels::attention_forward(qv.values(), kv.values(), vv.values(), out.values(), probs.values(), blocks, seq, width,
                               heads);
    if (probs_out) *probs_out = probs;
    return q.tape().record(
        "block_attention", std::move(out), {q, k, v},
        [q, k, v, seq, heads, blocks, width, probs = std::move(probs)](Tape& t, const Tensor&, const Tensor& g) {
            // The kernel writes all three; unused buffers are cheap scratch.
            Tensor scratch_q, scratch_k, scratch_v;
            auto target = [&t](Var x, Tensor& scratch) -> Tensor& {
                if (t.needs_grad(x)) return t.grad_buffer(x);
                scratch = Tensor(t.value(x).shape(), 0.0);
                return scratch;
            };
            Tensor& dq = target(q, scratch_q);
            Tensor& dk = target(k, scratch_k);
            Tensor& dv = target(v, scratch_v);
            kernels::attention_backward(t.value(q).values(), t.value(k).values(), t.value(v).values(), probs.values(),
                                        g.values(), dq.values(), dk.values(), dv.values(), blocks, seq, width, heads);
        });
}

}  // namespace cgf::nn
