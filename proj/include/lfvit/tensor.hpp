#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfvit {

// Shape and argument violations. The CLI maps DimError, ConfigError, and
// IoError to exit code 1; any other exception exits with code 2.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<int>& shape);

// Dense row-major float32 tensor. Invariant: product(shape) == data.size().
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<float> d);

    static std::size_t count(const std::vector<int>& s);
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // 2D accessors; throw DimError on non-matrix tensors.
    int rows() const;
    int cols() const;
    float& at(int r, int c);
    float at(int r, int c) const;
    float* row(int r);
    const float* row(int r) const;

    std::string shape_str() const { return shape_to_string(shape); }
};

}  // namespace lfvit
