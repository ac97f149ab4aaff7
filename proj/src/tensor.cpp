#include "mmf/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mmf {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::dimension: return "dimension";
        case ErrorCode::numeric: return "numeric";
        case ErrorCode::contract: return "contract";
        case ErrorCode::parse: return "parse";
        case ErrorCode::io: return "io";
        case ErrorCode::config: return "config";
        case ErrorCode::sampling: return "sampling";
        case ErrorCode::format: return "format";
        case ErrorCode::diverged: return "diverged";
    }
    return "unknown";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    data_.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape_ = {1};
    t.data_ = {v};
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    require(n == values.size(), ErrorCode::dimension,
            "tensor data size does not match shape product");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
}

double Tensor::scalar_value() const {
    require(data_.size() == 1, ErrorCode::contract, "tensor is not a scalar");
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

bool Tensor::is_binary() const noexcept {
    for (double v : data_)
        if (v != 0.0 && v != 1.0) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string shape_string(const Tensor& t) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (i) os << 'x';
        os << t.shape()[i];
    }
    os << ']';
    return os.str();
}

}  // namespace mmf
