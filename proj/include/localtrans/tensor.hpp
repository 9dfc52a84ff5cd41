#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "localtrans/core.hpp"

namespace localtrans {

// Live/peak accounting of tensor payload bytes. Drives the bench command's
// memory report and the local-vs-global attention memory comparison.
class AllocStats {
public:
    static std::int64_t live_bytes() { return live().load(std::memory_order_relaxed); }
    static std::int64_t peak_bytes() { return peak().load(std::memory_order_relaxed); }

    static void reset_peak() { peak().store(live().load()); }

    static void add(std::int64_t bytes) {
        std::int64_t now = live().fetch_add(bytes, std::memory_order_relaxed) + bytes;
        std::int64_t old = peak().load(std::memory_order_relaxed);
        while (now > old && !peak().compare_exchange_weak(old, now, std::memory_order_relaxed)) {
        }
    }

    static void sub(std::int64_t bytes) { live().fetch_sub(bytes, std::memory_order_relaxed); }

private:
    static std::atomic<std::int64_t>& live() {
        static std::atomic<std::int64_t> v{0};
        return v;
    }
    static std::atomic<std::int64_t>& peak() {
        static std::atomic<std::int64_t> v{0};
        return v;
    }
};

namespace detail {

struct TrackedBuffer {
    scalar* ptr = nullptr;
    std::size_t n = 0;

    TrackedBuffer() = default;
    explicit TrackedBuffer(std::size_t count) { allocate(count); }
    TrackedBuffer(const TrackedBuffer& o) {
        allocate(o.n, /*zero=*/false);
        if (n) std::memcpy(ptr, o.ptr, n * sizeof(scalar));
    }
    TrackedBuffer(TrackedBuffer&& o) noexcept : ptr(o.ptr), n(o.n) {
        o.ptr = nullptr;
        o.n = 0;
    }
    TrackedBuffer& operator=(TrackedBuffer o) noexcept {
        std::swap(ptr, o.ptr);
        std::swap(n, o.n);
        return *this;
    }
    ~TrackedBuffer() { release(); }

    void allocate(std::size_t count, bool zero = true) {
        release();
        if (count == 0) return;
        ptr = zero ? new scalar[count]() : new scalar[count];
        n = count;
        AllocStats::add(static_cast<std::int64_t>(count * sizeof(scalar)));
    }

    void release() {
        if (ptr) {
            AllocStats::sub(static_cast<std::int64_t>(n * sizeof(scalar)));
            delete[] ptr;
            ptr = nullptr;
            n = 0;
        }
    }
};

} // namespace detail

// Dense row-major tensor of rank 1..4. Features are [C,H,W], convolution
// kernels [out,in,kh,kw], local attention maps [H,W,2r+1,2r+1].
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::initializer_list<int> extents) { reset(std::vector<int>(extents)); }
    explicit Tensor(const std::vector<int>& extents) { reset(extents); }

    static Tensor zeros(std::initializer_list<int> extents) { return Tensor(extents); }

    static Tensor constant(std::initializer_list<int> extents, scalar v) {
        Tensor t(extents);
        t.fill(v);
        return t;
    }

    static Tensor scalar_value(scalar v) {
        Tensor t({1});
        t[0] = v;
        return t;
    }

    static Tensor from_data(std::initializer_list<int> extents, std::initializer_list<scalar> vals) {
        Tensor t(extents);
        if (vals.size() != t.size())
            throw ShapeError("from_data: element count does not match shape");
        std::size_t i = 0;
        for (scalar v : vals) t[i++] = v;
        return t;
    }

    void reset(const std::vector<int>& extents, bool zero = true) {
        if (extents.empty() || extents.size() > 4)
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(extents.size()));
        rank_ = static_cast<int>(extents.size());
        std::size_t total = 1;
        for (int i = 0; i < rank_; ++i) {
            if (extents[static_cast<std::size_t>(i)] <= 0)
                throw ShapeError("tensor extent must be positive");
            dims_[static_cast<std::size_t>(i)] = extents[static_cast<std::size_t>(i)];
            total *= static_cast<std::size_t>(extents[static_cast<std::size_t>(i)]);
        }
        for (int i = rank_; i < 4; ++i) dims_[static_cast<std::size_t>(i)] = 1;
        buf_.allocate(total, zero);
    }

    // For outputs that every element of gets written: skips the zero fill.
    static Tensor uninitialized(std::initializer_list<int> extents) {
        Tensor t;
        t.reset(std::vector<int>(extents), /*zero=*/false);
        return t;
    }
    static Tensor uninitialized(const std::vector<int>& extents) {
        Tensor t;
        t.reset(extents, /*zero=*/false);
        return t;
    }

    bool empty() const { return buf_.n == 0; }
    int rank() const { return rank_; }
    int extent(int d) const { return dims_[static_cast<std::size_t>(d)]; }
    std::size_t size() const { return buf_.n; }

    std::vector<int> shape() const {
        std::vector<int> s(static_cast<std::size_t>(rank_));
        for (int i = 0; i < rank_; ++i) s[static_cast<std::size_t>(i)] = dims_[static_cast<std::size_t>(i)];
        return s;
    }

    bool same_shape(const Tensor& o) const {
        return rank_ == o.rank_ && dims_ == o.dims_;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[static_cast<std::size_t>(i)]);
        }
        return s + "]";
    }

    scalar* data() { return buf_.ptr; }
    const scalar* data() const { return buf_.ptr; }

    scalar& operator[](std::size_t i) { return buf_.ptr[i]; }
    scalar operator[](std::size_t i) const { return buf_.ptr[i]; }

    scalar& at(int a) { return buf_.ptr[a]; }
    scalar& at(int a, int b) { return buf_.ptr[static_cast<std::size_t>(a) * dims_[1] + b]; }
    scalar& at(int a, int b, int c) {
        return buf_.ptr[(static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c];
    }
    scalar& at(int a, int b, int c, int d) {
        return buf_.ptr[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }
    const scalar& at(int a) const { return buf_.ptr[a]; }
    const scalar& at(int a, int b) const { return buf_.ptr[static_cast<std::size_t>(a) * dims_[1] + b]; }
    const scalar& at(int a, int b, int c) const {
        return buf_.ptr[(static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c];
    }
    const scalar& at(int a, int b, int c, int d) const {
        return buf_.ptr[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }

    void fill(scalar v) {
        for (std::size_t i = 0; i < buf_.n; ++i) buf_.ptr[i] = v;
    }

    void release() {
        buf_.release();
        rank_ = 0;
    }

    Tensor clone() const { return *this; }

private:
    detail::TrackedBuffer buf_;
    std::array<int, 4> dims_{1, 1, 1, 1};
    int rank_ = 0;
};

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// Module invariant: no op may hand back NaN/Inf silently. The check runs on
// the exponent bit pattern so it vectorizes as integer compares.
inline void ensure_finite(const Tensor& t, const char* op) {
    const scalar* p = t.data();
    const std::size_t n = t.size();
    if constexpr (sizeof(scalar) == 8) {
        const std::uint64_t exp_mask = 0x7FF0000000000000ull;
        std::uint64_t bad = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &p[i], 8);
            bad |= static_cast<std::uint64_t>((bits & exp_mask) == exp_mask);
        }
        if (bad) throw NumericError(std::string("non-finite value produced by ") + op);
    } else {
        const std::uint32_t exp_mask = 0x7F800000u;
        std::uint32_t bad = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &p[i], 4);
            bad |= static_cast<std::uint32_t>((bits & exp_mask) == exp_mask);
        }
        if (bad) throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(scalar)) == 0;
}

} // namespace localtrans
