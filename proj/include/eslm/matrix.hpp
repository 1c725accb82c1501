#pragma once

#include <span>
#include <vector>

namespace eslm {

// Dense row-major float32 matrix. Kernels accumulate in float64 and are
// deterministic: identical inputs give bit-identical outputs on one platform.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols);  // zero-filled

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    float* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const float* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

    float& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    float at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    // Reshapes without preserving contents; keeps capacity when possible.
    void resize(int rows, int cols);

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<float> data_;
};

// out = a * b. Requires a.cols == b.rows.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
Matrix matmul(const Matrix& a, const Matrix& b);

// out += a * b. Requires matching shapes; out must already be a.rows x b.cols.
void matmul_add(const Matrix& a, const Matrix& b, Matrix& out);

// Stabilized log-softmax of one logits row: out[v] = z_v - max - log(sum exp).
std::vector<float> log_softmax_row(std::span<const float> logits);

// out[i] = gain[i] * x[i] / sqrt(mean(x^2) + eps)
void rms_norm(std::span<const float> x, std::span<const float> gain, float eps,
              std::span<float> out);
std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps);

// Rotary position embedding. Each row r holds one or more head_dim-wide
// blocks; within a block, the pair (2i, 2i+1) is rotated by
// positions[r] * base^(-2i/head_dim) radians. head_dim must be even and
// divide cols; positions.size() must equal rows.
void rope_apply_inplace(Matrix& q_or_k, std::span<const int> positions, int head_dim,
                        float base);
Matrix rope_apply(const Matrix& q_or_k, std::span<const int> positions, int head_dim,
                  float base);

namespace detail {

// Kernel entry over raw row-major storage, so callers can multiply against
// weight slices living inside a larger flat vector without copying. Shapes
// are trusted; the Matrix overloads above do the checking.
void matmul_raw(const float* a, int m, int k, const float* b, int n, float* out,
                bool accumulate);

}  // namespace detail

}  // namespace eslm
