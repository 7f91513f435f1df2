#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncst {

/// Dense row-major tensor. Rank is dynamic but in practice everything in this
/// project is a vector or a matrix. Real is float for training ("standard"
/// precision) and double for the gradient-check suite ("high" precision).
template <class Real>
struct TensorT {
    std::vector<int> shape;
    std::vector<Real> v;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), v(count(shape), Real(0)) {}
    TensorT(std::vector<int> s, std::vector<Real> data) : shape(std::move(s)), v(std::move(data)) {
        if (count(shape) != static_cast<int64_t>(v.size()))
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

    static TensorT vec(std::vector<Real> data) {
        int n = static_cast<int>(data.size());
        return TensorT({n}, std::move(data));
    }
    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
    static TensorT full(std::vector<int> s, Real x) {
        TensorT t(std::move(s));
        t.fill(x);
        return t;
    }
    static TensorT scalar(Real x) { return TensorT({1}, {x}); }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rows() const { return shape.at(0); }
    int cols() const { return shape.at(1); }

    Real& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    Real operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }
    Real& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
    Real at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

    Real* data() { return v.data(); }
    const Real* data() const { return v.data(); }

    void fill(Real x) {
        for (auto& e : v) e = x;
    }
    void zero() { fill(Real(0)); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real e : v)
            if (!std::isfinite(static_cast<double>(e))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensor = TensorT<float>;

template <class Real>
void add_into(TensorT<Real>& dst, const TensorT<Real>& src) {
    for (int64_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <class A, class B>
TensorT<B> cast_tensor(const TensorT<A>& t) {
    TensorT<B> out(t.shape);
    for (int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<B>(t[i]);
    return out;
}

}  // namespace ncst
