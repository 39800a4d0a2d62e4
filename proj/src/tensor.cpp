#include "infotok/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace infotok::ad {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

namespace {

void validate_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: shape must be non-empty");
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("Tensor: shape entries must be positive");
    }
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str());
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

std::size_t Tensor::rows() const { return shape_.at(0); }

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("Tensor::cols: tensor is not rank 2");
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
}

std::vector<double>& Tensor::grad() {
    if (!grad_) throw std::logic_error("Tensor::grad: no gradient present");
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw std::logic_error("Tensor::grad: no gradient present");
    return *grad_;
}

void Tensor::set_grad(std::vector<double> g) {
    if (g.size() != data_.size()) {
        throw std::invalid_argument("Tensor::set_grad: gradient length must match data length");
    }
    grad_ = std::move(g);
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

} // namespace infotok::ad
