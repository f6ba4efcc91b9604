#pragma once

// Dense row-major kernels used by the autodiff ops. The parallel versions
// split work over output rows only, so each output element is summed in the
// same order whatever the thread count and results are bit-identical to a
// single-threaded run. `reference` holds straightforward serial loops used
// by the tests and the benchmark.

#include <cstddef>
#include <span>

namespace cgf::kernels {

/// c[m,n] (+)= a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);

/// c[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

/// c[m,n] (+)= a[k,m]^T * b[k,n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

/// Multi-head self-attention over `blocks` independent sequences of `seq`
/// rows. q, k, v, out are [blocks*seq, width]; head h owns columns
/// [h*width/heads, (h+1)*width/heads). probs receives the softmax weights,
/// laid out [blocks][heads][seq][seq].
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, std::size_t blocks, std::size_t seq,
                       std::size_t width, std::size_t heads);

/// Gradients of attention_forward given the saved probabilities. dq, dk, dv
/// are accumulated into.
void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout, std::span<double> dq,
                        std::span<double> dk, std::span<double> dv, std::size_t blocks, std::size_t seq,
                        std::size_t width, std::size_t heads);

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, std::size_t blocks, std::size_t seq,
                       std::size_t width, std::size_t heads);

}  // namespace reference

/// Threads OpenMP would use for a parallel region (1 without OpenMP).
int max_threads();

}  // namespace cgf::kernels
