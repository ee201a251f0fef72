#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cardio/error.hpp"

namespace cardio::learn {

/// Dense row-major sample matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    explicit Matrix(const std::vector<std::vector<double>>& rs) : rows(rs.size()), cols(rs.empty() ? 0 : rs[0].size()) {
        data.reserve(rows * cols);
        for (const auto& r : rs) {
            require(r.size() == cols, Errc::InvalidArgument, "ragged matrix rows");
            data.insert(data.end(), r.begin(), r.end());
        }
    }

    [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    [[nodiscard]] std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
};

/// One probability row per sample.
using ProbRows = std::vector<std::vector<double>>;

namespace detail {

inline void check_training_set(const Matrix& x, const std::vector<int>& y, std::size_t classes, const char* who) {
    const std::string w(who);
    require(x.rows > 0 && x.cols > 0, Errc::InvalidArgument, w + ": empty training matrix");
    require(y.size() == x.rows, Errc::InvalidArgument, w + ": label count does not match rows");
    for (double v : x.data) require(std::isfinite(v), Errc::InvalidArgument, w + ": non-finite feature value");
    std::vector<std::size_t> seen(classes, 0);
    for (int c : y) {
        require(c >= 0 && static_cast<std::size_t>(c) < classes, Errc::InvalidArgument, w + ": label out of range");
        ++seen[static_cast<std::size_t>(c)];
    }
    std::size_t present = 0;
    for (auto n : seen) present += n > 0;
    require(present >= 2, Errc::DegenerateTraining, w + ": training labels contain fewer than 2 classes");
}

inline void check_width(const Matrix& x, std::size_t expected, const char* who) {
    require(x.cols == expected, Errc::Schema,
            std::string(who) + ": expected " + std::to_string(expected) + " features, got " + std::to_string(x.cols));
}

}  // namespace detail

inline std::size_t argmax_row(std::span<const double> p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

}  // namespace cardio::learn
