#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace crnn {

/// Dense row-major tensor of doubles with a dynamic shape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), data(count(shape), fill) {}
    Tensor(std::initializer_list<std::size_t> dims, double fill = 0.0)
        : Tensor(std::vector<std::size_t>(dims), fill) {}

    static std::size_t count(const std::vector<std::size_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// One time frame of a channels x frequency-bins activation.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t bins = 0;
    std::vector<double> values;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t f, double fill = 0.0)
        : channels(c), bins(f), values(c * f, fill) {}

    double& at(std::size_t c, std::size_t f) { return values[c * bins + f]; }
    double at(std::size_t c, std::size_t f) const { return values[c * bins + f]; }
    std::span<double> channel(std::size_t c) { return {values.data() + c * bins, bins}; }
    std::span<const double> channel(std::size_t c) const {
        return {values.data() + c * bins, bins};
    }
    std::size_t size() const { return values.size(); }
    bool same_shape(const FeatureMap& o) const { return channels == o.channels && bins == o.bins; }
    void zero() { std::fill(values.begin(), values.end(), 0.0); }

    FeatureMap& operator+=(const FeatureMap& o);

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

bool all_finite(std::span<const double> v);

}  // namespace crnn
