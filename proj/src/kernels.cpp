#include "cgf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cgf::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::int64_t;

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        double* crow = cp + i * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const double* arow = ap + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        const double* arow = ap + i * k;
        double* crow = cp + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bp + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
        double* crow = cp + i * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double api = ap[p * m + i];
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, std::size_t blocks, std::size_t seq,
                       std::size_t width, std::size_t heads) {
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
#pragma omp parallel for schedule(static) if (blocks * seq * seq * width >= kParallelWork)
    for (Index b = 0; b < static_cast<Index>(blocks); ++b) {
        const std::size_t row0 = static_cast<std::size_t>(b) * seq;
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs.data() + (static_cast<std::size_t>(b) * heads + h) * seq * seq;
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
                const double* qi = q.data() + (row0 + i) * width + col;
                double* pi = p + i * seq;
                double mx = -INFINITY;
                for (std::size_t j = 0; j < seq; ++j) {
                    const double* kj = k.data() + (row0 + j) * width + col;
                    double s = 0.0;
                    for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                    pi[j] = s * scale;
                    mx = std::max(mx, pi[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    pi[j] = std::exp(pi[j] - mx);
                    z += pi[j];
                }
                for (std::size_t j = 0; j < seq; ++j) pi[j] /= z;

                double* oi = out.data() + (row0 + i) * width + col;
                std::fill(oi, oi + dh, 0.0);
                for (std::size_t j = 0; j < seq; ++j) {
                    const double* vj = v.data() + (row0 + j) * width + col;
                    for (std::size_t d = 0; d < dh; ++d) oi[d] += pi[j] * vj[d];
                }
            }
        }
    }
}

void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout, std::span<double> dq,
                        std::span<double> dk, std::span<double> dv, std::size_t blocks, std::size_t seq,
                        std::size_t width, std::size_t heads) {
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
#pragma omp parallel for schedule(static) if (blocks * seq * seq * width >= kParallelWork)
    for (Index b = 0; b < static_cast<Index>(blocks); ++b) {
        std::vector<double> ds(seq * seq);
        const std::size_t row0 = static_cast<std::size_t>(b) * seq;
        for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (static_cast<std::size_t>(b) * heads + h) * seq * seq;
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
                const double* doi = dout.data() + (row0 + i) * width + col;
                const double* pi = p + i * seq;
                double* dsi = ds.data() + i * seq;
                double dot = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    const double* vj = v.data() + (row0 + j) * width + col;
                    double* dvj = dv.data() + (row0 + j) * width + col;
                    double dp = 0.0;
                    for (std::size_t d = 0; d < dh; ++d) {
                        dp += doi[d] * vj[d];
                        dvj[d] += pi[j] * doi[d];
                    }
                    dsi[j] = dp;
                    dot += pi[j] * dp;
                }
                for (std::size_t j = 0; j < seq; ++j) dsi[j] = pi[j] * (dsi[j] - dot) * scale;
            }
            for (std::size_t i = 0; i < seq; ++i) {
                const double* qi = q.data() + (row0 + i) * width + col;
                double* dqi = dq.data() + (row0 + i) * width + col;
                const double* dsi = ds.data() + i * seq;
                for (std::size_t j = 0; j < seq; ++j) {
                    const double* kj = k.data() + (row0 + j) * width + col;
                    double* dkj = dk.data() + (row0 + j) * width + col;
                    for (std::size_t d = 0; d < dh; ++d) {
                        dqi[d] += dsi[j] * kj[d];
                        dkj[d] += dsi[j] * qi[d];
                    }
                }
            }
        }
    }
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, std::size_t blocks, std::size_t seq,
                       std::size_t width, std::size_t heads) {
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scores(seq * seq);
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            auto at = [&](std::span<const double> m, std::size_t row, std::size_t d) {
                return m[(b * seq + row) * width + h * dh + d];
            };
            for (std::size_t i = 0; i < seq; ++i) {
                for (std::size_t j = 0; j < seq; ++j) {
                    double s = 0.0;
                    for (std::size_t d = 0; d < dh; ++d) s += at(q, i, d) * at(k, j, d);
                    scores[i * seq + j] = s * scale;
                }
            }
            double* p = probs.data() + (b * heads + h) * seq * seq;
            for (std::size_t i = 0; i < seq; ++i) {
                const double mx = *std::max_element(scores.begin() + i * seq, scores.begin() + (i + 1) * seq);
                double z = 0.0;
                for (std::size_t j = 0; j < seq; ++j) z += std::exp(scores[i * seq + j] - mx);
                for (std::size_t j = 0; j < seq; ++j) p[i * seq + j] = std::exp(scores[i * seq + j] - mx) / z;
            }
            for (std::size_t i = 0; i < seq; ++i) {
                for (std::size_t d = 0; d < dh; ++d) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < seq; ++j) s += p[i * seq + j] * at(v, j, d);
                    out[(b * seq + i) * width + h * dh + d] = s;
                }
            }
        }
    }
}

}  // namespace reference
}  // namespace cgf::kernels
