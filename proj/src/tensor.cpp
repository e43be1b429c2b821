#include "sargan/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sargan {

std::size_t Tensor::count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor: non-positive extent");
        n *= static_cast<std::size_t>(d);
    }
    if (shape.size() > 4) throw DimensionError("tensor: rank > 4 not supported");
    return n;
}

bool Tensor::all_finite() const {
    for (Real v : values)
        if (!std::isfinite(v)) return false;
    for (Real g : grad)
        if (!std::isfinite(g)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << '}';
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
}

} // namespace sargan
