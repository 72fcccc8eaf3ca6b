#include "msens/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msens/error.hpp"

namespace msens {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape))
        throw InvalidArgument("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                              shape_str(shape));
}

void Tensor::fill(double v) {
    std::fill(data.begin(), data.end(), v);
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace msens
