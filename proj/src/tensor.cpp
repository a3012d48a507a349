#include "lfvit/tensor.hpp"

namespace lfvit {

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

std::size_t Tensor::count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw DimError("negative dimension in shape " + shape_to_string(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0f) {}

Tensor::Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size()) {
        throw DimError("tensor shape " + shape_str() + " does not match data length " +
                       std::to_string(data.size()));
    }
}

int Tensor::rows() const {
    if (rank() != 2) throw DimError("expected a matrix, got shape " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw DimError("expected a matrix, got shape " + shape_str());
    return shape[1];
}

float& Tensor::at(int r, int c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) +
                static_cast<std::size_t>(c)];
}

float Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) +
                static_cast<std::size_t>(c)];
}

float* Tensor::row(int r) {
    return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]);
}

const float* Tensor::row(int r) const {
    return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]);
}

}  // namespace lfvit
