#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace infotok::ad {

// Dense row-major tensor of doubles with an optional gradient slot.
// Ranks 1 and 2 are what the graph ops accept; a scalar is shape {1}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor zeros(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool has_grad() const { return grad_.has_value(); }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void set_grad(std::vector<double> g);
    void clear_grad() { grad_.reset(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

} // namespace infotok::ad
