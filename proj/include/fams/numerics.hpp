#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fams {

// Dense row-major matrix of doubles. Immutable after construction by
// convention: every public operation returns a fresh matrix, so instances
// can be shared freely across threads.
class DenseMatrix {
  public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // Throws DataError if any entry is NaN/Inf.
    void ensure_finite(const char* what) const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Row-parallel matrix product; bitwise identical to matmul_serial.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Serial reference kept for testing and benchmarking.
DenseMatrix matmul_serial(const DenseMatrix& a, const DenseMatrix& b);

// Splittable counter-style generator (SplitMix64 core). Independent
// sub-streams are derived from the stream identity, so per-subgroup work
// can run in any order or in parallel without changing draws.
//
// Normal variates use Box-Muller on (0,1] uniforms; the second variate of
// each pair is cached, making the scalar sequence a deterministic function
// of the stream identity alone.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed);

    // Child stream for `stream_id`, independent of this stream's position.
    SeededRng split(std::uint64_t stream_id) const;

    std::uint64_t next_u64();
    // Uniform on (0, 1].
    double next_double();
    double next_normal();

    // n >= 1 i.i.d. standard normal draws; rejects n == 0.
    std::vector<double> standard_normal(std::size_t n);
    void normal_fill(std::span<double> out);

    std::uint64_t identity() const { return identity_; }

    friend std::uint64_t uniform_index(SeededRng& rng, std::uint64_t n);

  private:
    std::uint64_t identity_;  // immutable stream id, basis for split()
    std::uint64_t state_;
    std::uint64_t gamma_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Uniform integer in [0, n); rejection sampled, no modulo bias.
std::uint64_t uniform_index(SeededRng& rng, std::uint64_t n);

}  // namespace fams
