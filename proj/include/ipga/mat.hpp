#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace ipga {

// Dense row-major matrix. Vectors are 1 x n or n x 1; scalars are 1 x 1.
template <class T>
struct Mat {
    int r = 0;
    int c = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int rows, int cols) : r(rows), c(cols), v(static_cast<std::size_t>(rows) * cols, T(0)) {}
    Mat(int rows, int cols, std::vector<T> data) : r(rows), c(cols), v(std::move(data)) {
        assert(v.size() == static_cast<std::size_t>(r) * c);
    }

    static Mat zeros(int rows, int cols) { return Mat(rows, cols); }
    static Mat full(int rows, int cols, T x) {
        Mat m(rows, cols);
        for (auto& e : m.v) e = x;
        return m;
    }
    static Mat scalar(T x) {
        Mat m(1, 1);
        m.v[0] = x;
        return m;
    }
    static Mat row(std::vector<T> data) {
        int n = static_cast<int>(data.size());
        return Mat(1, n, std::move(data));
    }

    std::size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T* row_ptr(int i) { return v.data() + static_cast<std::size_t>(i) * c; }
    const T* row_ptr(int i) const { return v.data() + static_cast<std::size_t>(i) * c; }
    T& at(int i, int j) { return v[static_cast<std::size_t>(i) * c + j]; }
    const T& at(int i, int j) const { return v[static_cast<std::size_t>(i) * c + j]; }

    bool same_shape(const Mat& o) const { return r == o.r && c == o.c; }

    template <class U>
    Mat<U> cast() const {
        Mat<U> m(r, c);
        for (std::size_t i = 0; i < v.size(); ++i) m.v[i] = static_cast<U>(v[i]);
        return m;
    }
};

} // namespace ipga
