#pragma once

#include <cstddef>
#include <vector>

#include "mmf/error.hpp"

namespace mmf {

// Dense row-major tensor of 64-bit floats. Rank and shape are dynamic;
// scalars are represented as shape {1}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D / 3-D indexing helpers (no bounds checks beyond debug use).
    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double scalar_value() const;
    bool all_finite() const noexcept;
    bool is_binary() const noexcept;  // every element exactly 0.0 or 1.0

    void fill(double v);

    bool operator==(const Tensor& other) const noexcept {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

}  // namespace mmf
