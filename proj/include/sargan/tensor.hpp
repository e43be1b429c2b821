#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sargan/errors.hpp"

namespace sargan {

#ifdef SARGAN_REAL32
using Real = float;
#else
using Real = double;
#endif

// Dense n-dimensional value grid, row-major, up to 4 axes (N, C, H, W).
// Images are rank-3 {C, H, W} with values in [0, 1]; network activations are
// rank-4. The grad buffer is empty until someone asks for it.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<Real> values;
    std::vector<Real> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape_in) : shape(std::move(shape_in)) {
        values.assign(count(shape), Real(0));
    }

    Tensor(std::vector<int> shape_in, std::vector<Real> values_in)
        : shape(std::move(shape_in)), values(std::move(values_in)) {
        if (values.size() != count(shape))
            throw DimensionError("tensor: value count does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, Real v) {
        Tensor t(std::move(shape));
        for (auto& x : t.values) x = v;
        return t;
    }

    static Tensor ones(std::vector<int> shape) { return full(std::move(shape), Real(1)); }

    std::size_t size() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int axis) const {
        if (axis < 0 || axis >= rank())
            throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range");
        return shape[static_cast<std::size_t>(axis)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool is_scalar() const { return values.size() == 1; }

    Real scalar() const {
        if (!is_scalar()) throw ContractError("tensor: scalar() on non-scalar tensor");
        return values[0];
    }

    // Rank-4 offset; lower ranks use the leading-axes overloads below.
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    Real& at(int n, int c, int h, int w) { return values[offset(n, c, h, w)]; }
    Real at(int n, int c, int h, int w) const { return values[offset(n, c, h, w)]; }

    Real& at(int c, int h, int w) {
        return values[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    Real at(int c, int h, int w) const {
        return values[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }

    Real& at(int i, int j) { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    Real at(int i, int j) const { return values[static_cast<std::size_t>(i) * shape[1] + j]; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), Real(0));
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(values.size(), Real(0));
    }

    bool all_finite() const;

    std::string shape_str() const;

    static std::size_t count(const std::vector<int>& shape);
};

// Throws DimensionError unless both tensors share a shape; `what` names the
// offending operation in the message.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace sargan
