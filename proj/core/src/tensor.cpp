#include "crnn/tensor.hpp"

#include <cmath>

#include "crnn/error.hpp"

namespace crnn {

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

FeatureMap& FeatureMap::operator+=(const FeatureMap& o) {
    if (!same_shape(o)) throw ShapeError("FeatureMap += with mismatched shapes");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace crnn
