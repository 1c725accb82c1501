#include "eslm/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "eslm/error.hpp"

namespace eslm {

namespace {

// Two output rows per pass so each loaded B row feeds two accumulator sets.
// N is a compile-time width so the float64 accumulators stay in registers.
template <int N>
void kernel_fixed(const float* a, const float* b, float* out, int m, int k, bool accumulate) {
    int i = 0;
    for (; i + 1 < m; i += 2) {
        double acc0[N] = {};
        double acc1[N] = {};
        if (accumulate) {
            for (int j = 0; j < N; ++j) acc0[j] = out[static_cast<size_t>(i) * N + j];
            for (int j = 0; j < N; ++j) acc1[j] = out[static_cast<size_t>(i + 1) * N + j];
        }
        const float* a0 = a + static_cast<size_t>(i) * k;
        const float* a1 = a0 + k;
        for (int p = 0; p < k; ++p) {
            const double av0 = a0[p];
            const double av1 = a1[p];
            const float* brow = b + static_cast<size_t>(p) * N;
            for (int j = 0; j < N; ++j) {
                const double bv = brow[j];
                acc0[j] += av0 * bv;
                acc1[j] += av1 * bv;
            }
        }
        float* o0 = out + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) o0[j] = static_cast<float>(acc0[j]);
        for (int j = 0; j < N; ++j) o0[N + j] = static_cast<float>(acc1[j]);
    }
    if (i < m) {
        double acc[N] = {};
        if (accumulate) {
            for (int j = 0; j < N; ++j) acc[j] = out[static_cast<size_t>(i) * N + j];
        }
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b + static_cast<size_t>(p) * N;
            for (int j = 0; j < N; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        float* orow = out + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) orow[j] = static_cast<float>(acc[j]);
    }
}

void kernel_generic(const float* a, const float* b, float* out, int m, int k, int n,
                    bool accumulate, std::vector<double>& acc) {
    acc.resize(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
        float* orow = out + static_cast<size_t>(i) * n;
        if (accumulate) {
            for (int j = 0; j < n; ++j) acc[j] = orow[j];
        } else {
            for (int j = 0; j < n; ++j) acc[j] = 0.0;
        }
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (int j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j]);
    }
}

}  // namespace

namespace detail {

void matmul_raw(const float* a, int m, int k, const float* b, int n, float* out,
                bool accumulate) {
    switch (n) {
        case 16: kernel_fixed<16>(a, b, out, m, k, accumulate); return;
        case 32: kernel_fixed<32>(a, b, out, m, k, accumulate); return;
        case 48: kernel_fixed<48>(a, b, out, m, k, accumulate); return;
        case 64: kernel_fixed<64>(a, b, out, m, k, accumulate); return;
        case 96: kernel_fixed<96>(a, b, out, m, k, accumulate); return;
        case 128: kernel_fixed<128>(a, b, out, m, k, accumulate); return;
        case 256: kernel_fixed<256>(a, b, out, m, k, accumulate); return;
        default: {
            std::vector<double> acc;
            kernel_generic(a, b, out, m, k, n, accumulate, acc);
            return;
        }
    }
}

}  // namespace detail

namespace {

void matmul_dispatch(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    if (a.cols() != b.rows()) {
        throw ConfigError("matmul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
    }
    if (accumulate) {
        if (out.rows() != a.rows() || out.cols() != b.cols()) {
            throw ConfigError("matmul_add: output shape mismatch");
        }
    } else {
        out.resize(a.rows(), b.cols());
    }
    detail::matmul_raw(a.rows() > 0 ? a.row(0) : nullptr, a.rows(), a.cols(),
                       b.rows() > 0 ? b.row(0) : nullptr, b.cols(),
                       out.rows() > 0 ? out.row(0) : nullptr, accumulate);
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0f) {}

void Matrix::resize(int rows, int cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(static_cast<size_t>(rows) * cols);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    matmul_dispatch(a, b, out, /*accumulate=*/false);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul(a, b, out);
    return out;
}

void matmul_add(const Matrix& a, const Matrix& b, Matrix& out) {
    matmul_dispatch(a, b, out, /*accumulate=*/true);
}

std::vector<float> log_softmax_row(std::span<const float> logits) {
    if (logits.empty()) {
        throw ConfigError("log_softmax_row: empty input");
    }
    float max_v = logits[0];
    for (size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw NumericalError("log_softmax_row: non-finite logit at index " +
                                 std::to_string(i));
        }
        max_v = std::max(max_v, logits[i]);
    }
    double sum = 0.0;
    for (const float z : logits) {
        sum += std::exp(static_cast<double>(z) - max_v);
    }
    const double lse = std::log(sum);
    std::vector<float> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(logits[i]) - max_v - lse);
    }
    return out;
}

void rms_norm(std::span<const float> x, std::span<const float> gain, float eps,
              std::span<float> out) {
    if (x.size() != gain.size() || x.size() != out.size()) {
        throw ConfigError("rms_norm: length mismatch");
    }
    if (!(eps > 0.0f)) {
        throw ConfigError("rms_norm: eps must be positive");
    }
    double ss = 0.0;
    for (const float v : x) {
        ss += static_cast<double>(v) * v;
    }
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(gain[i] * (x[i] * inv));
    }
}

std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps) {
    std::vector<float> out(x.size());
    rms_norm(x, gain, eps, out);
    return out;
}

void rope_apply_inplace(Matrix& q_or_k, std::span<const int> positions, int head_dim,
                        float base) {
    if (head_dim <= 0 || head_dim % 2 != 0) {
        throw ConfigError("rope_apply: head_dim must be positive and even");
    }
    if (q_or_k.cols() % head_dim != 0) {
        throw ConfigError("rope_apply: cols not a multiple of head_dim");
    }
    if (static_cast<int>(positions.size()) != q_or_k.rows()) {
        throw ConfigError("rope_apply: positions length must equal rows");
    }
    const int half = head_dim / 2;
    const int blocks = q_or_k.cols() / head_dim;
    for (int r = 0; r < q_or_k.rows(); ++r) {
        float* row = q_or_k.row(r);
        const double pos = positions[r];
        for (int i = 0; i < half; ++i) {
            const double freq = std::pow(static_cast<double>(base),
                                         -2.0 * i / static_cast<double>(head_dim));
            const double angle = pos * freq;
            const float c = static_cast<float>(std::cos(angle));
            const float s = static_cast<float>(std::sin(angle));
            for (int blk = 0; blk < blocks; ++blk) {
                float* pair = row + blk * head_dim + 2 * i;
                const float x0 = pair[0];
                const float x1 = pair[1];
                pair[0] = x0 * c - x1 * s;
                pair[1] = x0 * s + x1 * c;
            }
        }
    }
}

Matrix rope_apply(const Matrix& q_or_k, std::span<const int> positions, int head_dim,
                  float base) {
    Matrix out = q_or_k;
    rope_apply_inplace(out, positions, head_dim, base);
    return out;
}

}  // namespace eslm
