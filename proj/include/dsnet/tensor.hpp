#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "dsnet/error.hpp"
#include "dsnet/rng.hpp"

namespace dsnet {

using Shape = std::vector<long>;

inline std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long e : s) n *= e;
    return n;
}

inline void check_shape_valid(const Shape& s) {
    if (s.empty()) throw ShapeError("empty shape");
    for (long e : s) {
        if (e <= 0) {
            throw ShapeError("extent must be positive, got " +
                             shape_to_string(s));
        }
    }
}

// Dense N-dimensional array of doubles in row-major order. Plain value
// type: copying copies the data, and nothing mutates a tensor behind the
// caller's back, so const tensors are safe to share across threads.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        check_shape_valid(shape);
        data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, double value) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = value;
        return t;
    }

    static Tensor uniform(Shape s, double lo, double hi, RngState& rng) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = rng.uniform(lo, hi);
        return t;
    }

    static Tensor normal(Shape s, double mean, double stddev, RngState& rng) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = rng.normal(mean, stddev);
        return t;
    }

    static Tensor from_data(Shape s, std::vector<double> values) {
        check_shape_valid(s);
        if (shape_numel(s) != static_cast<long>(values.size())) {
            throw ShapeError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_to_string(s));
        }
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }
    long rank() const { return static_cast<long>(shape.size()); }

    long extent(long axis) const {
        if (axis < 0 || axis >= rank()) {
            throw ShapeError("axis " + std::to_string(axis) +
                             " out of range for " + shape_to_string(shape));
        }
        return shape[static_cast<std::size_t>(axis)];
    }

    // Row-major flat offset: element (i,j) of an [m,n] tensor lives at i*n+j.
    template <typename... Ix>
    long offset(Ix... idx) const {
        const long ix[] = {static_cast<long>(idx)...};
        const long r = static_cast<long>(sizeof...(idx));
        if (r != rank()) {
            throw ShapeError("indexing rank-" + std::to_string(rank()) +
                             " tensor with " + std::to_string(r) + " indices");
        }
        long flat = 0;
        for (long a = 0; a < r; ++a) {
            flat = flat * shape[static_cast<std::size_t>(a)] + ix[a];
        }
        return flat;
    }

    template <typename... Ix>
    double& at(Ix... idx) {
        return data[static_cast<std::size_t>(offset(idx...))];
    }

    template <typename... Ix>
    double at(Ix... idx) const {
        return data[static_cast<std::size_t>(offset(idx...))];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double x : data) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }

    Tensor reshaped(Shape s) const {
        check_shape_valid(s);
        if (shape_numel(s) != numel()) {
            throw ShapeError("cannot reshape " + shape_to_string(shape) +
                             " to " + shape_to_string(s));
        }
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " +
                         shape_to_string(a.shape) + " and " +
                         shape_to_string(b.shape) + " differ");
    }
}

// C[i,j] = sum_p A[i,p] * B[p,j] for rank-2 operands.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul needs rank-2 operands, got " +
                         shape_to_string(a.shape) + " x " +
                         shape_to_string(b.shape));
    }
    const long m = a.shape[0], k = a.shape[1];
    const long k2 = b.shape[0], n = b.shape[1];
    if (k != k2) {
        throw ShapeError("matmul inner extents differ: " +
                         shape_to_string(a.shape) + " x " +
                         shape_to_string(b.shape));
    }
    Tensor c({m, n});
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (long i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* crow = pc + i * n;
        for (long p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = pb + p * n;
            for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& x : c.data) x *= s;
    return c;
}

inline Tensor exp(const Tensor& a) {
    Tensor c = a;
    for (double& x : c.data) x = std::exp(x);
    return c;
}

inline Tensor max_with(const Tensor& a, double s) {
    Tensor c = a;
    for (double& x : c.data) x = std::max(x, s);
    return c;
}

}  // namespace dsnet
