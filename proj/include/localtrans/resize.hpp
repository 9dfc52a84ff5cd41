#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "localtrans/tensor.hpp"

namespace localtrans {

namespace detail {

// Catmull-Rom weights (bicubic, a = -0.5) for fractional offset t in [0,1),
// taps at source offsets -1, 0, +1, +2.
inline void catmull_rom_weights(double t, double w[4]) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    w[0] = -0.5 * t3 + t2 - 0.5 * t;
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
    w[3] = 0.5 * t3 - 0.5 * t2;
}

// Separable 1D pass along the last dimension of a [C, rows, len] view.
inline void resample_rows(const scalar* src, int C, int rows, int len_in, scalar* dst, int len_out) {
    const double scale = static_cast<double>(len_out) / static_cast<double>(len_in);
    std::vector<int> tap(static_cast<std::size_t>(len_out) * 4);
    std::vector<double> wgt(static_cast<std::size_t>(len_out) * 4);
    for (int o = 0; o < len_out; ++o) {
        const double s = (o + 0.5) / scale - 0.5;
        const double fl = std::floor(s);
        const int base = static_cast<int>(fl);
        double w[4];
        catmull_rom_weights(s - fl, w);
        for (int t = 0; t < 4; ++t) {
            tap[static_cast<std::size_t>(o) * 4 + t] =
                std::clamp(base - 1 + t, 0, len_in - 1); // edge clamp
            wgt[static_cast<std::size_t>(o) * 4 + t] = w[t];
        }
    }
    for (int c = 0; c < C; ++c) {
        for (int r = 0; r < rows; ++r) {
            const scalar* in = src + (static_cast<std::size_t>(c) * rows + r) * len_in;
            scalar* out = dst + (static_cast<std::size_t>(c) * rows + r) * len_out;
            for (int o = 0; o < len_out; ++o) {
                const int* tp = &tap[static_cast<std::size_t>(o) * 4];
                const double* wp = &wgt[static_cast<std::size_t>(o) * 4];
                out[o] = static_cast<scalar>(wp[0] * in[tp[0]] + wp[1] * in[tp[1]] +
                                             wp[2] * in[tp[2]] + wp[3] * in[tp[3]]);
            }
        }
    }
}

inline Tensor transpose_hw(const Tensor& t) {
    const int C = t.extent(0), H = t.extent(1), W = t.extent(2);
    Tensor out({C, W, H});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.at(c, x, y) = t.at(c, y, x);
    return out;
}

} // namespace detail

// Bicubic resize to an explicit output size, edge-clamped Catmull-Rom
// sampling with center-aligned coordinates. Scale 1 reproduces the input
// bit-exactly (weights collapse to (0,1,0,0)).
inline Tensor resize_bicubic_to(const Tensor& img, int out_h, int out_w) {
    require_shape(img.rank() == 3, "resize_bicubic: input must be [C,H,W]");
    require_shape(out_h >= 1 && out_w >= 1, "resize_bicubic: output extent must be >= 1");
    const int C = img.extent(0), H = img.extent(1), W = img.extent(2);
    Tensor horiz({C, H, out_w});
    detail::resample_rows(img.data(), C, H, W, horiz.data(), out_w);
    Tensor ht = detail::transpose_hw(horiz);
    Tensor vert({C, out_w, out_h});
    detail::resample_rows(ht.data(), C, out_w, H, vert.data(), out_h);
    return detail::transpose_hw(vert);
}

inline Tensor resize_bicubic(const Tensor& img, double scale) {
    require_shape(scale > 0, "resize_bicubic: scale must be positive");
    const int H = img.extent(1), W = img.extent(2);
    const int oh = std::max(1, static_cast<int>(std::lround(H * scale)));
    const int ow = std::max(1, static_cast<int>(std::lround(W * scale)));
    return resize_bicubic_to(img, oh, ow);
}

} // namespace localtrans
