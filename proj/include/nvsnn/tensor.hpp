#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "nvsnn/common.hpp"

namespace nvsnn {

// Dense row-major tensor. Two element types are used throughout the project:
// double for oracles and gradient checks, float for training throughput.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(count(shape), T{}) {}
    Tensor(std::initializer_list<std::size_t> s) : Tensor(std::vector<std::size_t>(s)) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    // 2-D accessors (most of the math is [rows, cols])
    std::size_t rows() const {
        assert(ndim() == 2);
        return shape[0];
    }
    std::size_t cols() const {
        assert(ndim() == 2);
        return shape[1];
    }
    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
    T* row_ptr(std::size_t r) { return data.data() + r * shape[1]; }
    const T* row_ptr(std::size_t r) const { return data.data() + r * shape[1]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T{}); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T& v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

// Debug-mode NaN/Inf trap; compiled out of optimized builds.
#ifndef NDEBUG
template <typename T>
void debug_check_finite(const Tensor<T>& t, const char* what) {
    if (!all_finite(t)) fail(Errc::check_failed, std::string("non-finite values in ") + what);
}
#else
template <typename T>
void debug_check_finite(const Tensor<T>&, const char*) {}
#endif

}  // namespace nvsnn
