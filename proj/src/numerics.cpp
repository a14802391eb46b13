#include "fams/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fams/errors.hpp"
#include "fams/parallel.hpp"

namespace fams {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                         " != rows*cols " + std::to_string(rows_ * cols_));
    }
    ensure_finite("DenseMatrix construction");
}

void DenseMatrix::ensure_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw DataError(std::string(what) + ": non-finite entry");
        }
    }
}

namespace {

void check_matmul_shapes(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + " differ");
    }
}

// One output row; identical inner loop for the serial and parallel paths.
inline void matmul_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c,
                       std::size_t i) {
    const std::size_t n = a.cols();
    const std::size_t p = b.cols();
    for (std::size_t k = 0; k < n; ++k) {
        const double aik = a.at(i, k);
        for (std::size_t j = 0; j < p; ++j) {
            c.at(i, j) += aik * b.at(k, j);
        }
    }
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    check_matmul_shapes(a, b);
    DenseMatrix c(a.rows(), b.cols());
    par::parallel_for(static_cast<std::int64_t>(a.rows()),
                      [&](std::int64_t i) { matmul_row(a, b, c, static_cast<std::size_t>(i)); });
    c.ensure_finite("matmul");
    return c;
}

DenseMatrix matmul_serial(const DenseMatrix& a, const DenseMatrix& b) {
    check_matmul_shapes(a, b);
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
    c.ensure_finite("matmul_serial");
    return c;
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed)
    : identity_(seed),
      state_(mix64(seed + kGolden)),
      gamma_(mix64(seed ^ 0xD1B54A32D192ED03ULL) | 1ULL) {}

SeededRng SeededRng::split(std::uint64_t stream_id) const {
    return SeededRng(mix64(identity_ + kGolden) ^ mix64(stream_id * kGolden + 0x2545F4914F6CDD1DULL));
}

std::uint64_t SeededRng::next_u64() {
    state_ += gamma_;
    return mix64(state_);
}

double SeededRng::next_double() {
    // 53-bit mantissa, shifted into (0, 1].
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double SeededRng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

std::vector<double> SeededRng::standard_normal(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("standard_normal: n must be >= 1");
    }
    std::vector<double> out(n);
    normal_fill(out);
    return out;
}

void SeededRng::normal_fill(std::span<double> out) {
    for (double& v : out) v = next_normal();
}

std::uint64_t uniform_index(SeededRng& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng.next_u64();
    while (x >= limit) x = rng.next_u64();
    return x % n;
}

}  // namespace fams
