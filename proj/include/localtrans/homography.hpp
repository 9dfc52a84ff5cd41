#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "localtrans/tensor.hpp"

namespace localtrans {

struct Point {
    double x = 0;
    double y = 0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }

using Corners = std::array<Point, 4>;

// Reference corners of a WxH pixel grid in the fixed order
// top-left, top-right, bottom-right, bottom-left. Pixel centers sit at
// integer coordinates, origin top-left, x rightward, y downward.
inline Corners rect_corners(int w, int h) {
    return {Point{0, 0}, Point{static_cast<double>(w - 1), 0},
            Point{static_cast<double>(w - 1), static_cast<double>(h - 1)},
            Point{0, static_cast<double>(h - 1)}};
}

// Displacements of the 4 reference corners, the network's output
// parameterization. offsets[i] moves base[i].
struct CornerOffsets {
    Corners base{};
    std::array<Point, 4> delta{};

    Corners displaced() const {
        Corners c;
        for (int i = 0; i < 4; ++i) c[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] + delta[static_cast<std::size_t>(i)];
        return c;
    }
};

// Normalized 3x3 projective matrix: m[2][2] == 1, det != 0.
class Homography {
public:
    Homography() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

    static Homography identity() { return Homography(); }

    static Homography from_matrix(const std::array<std::array<double, 3>, 3>& m) {
        Homography h;
        h.m_ = m;
        h.normalize();
        return h;
    }

    static Homography from_row_major(const double* v) {
        std::array<std::array<double, 3>, 3> m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = v[r * 3 + c];
        return from_matrix(m);
    }

    static Homography translation(double dx, double dy) {
        std::array<std::array<double, 3>, 3> m{{{1, 0, dx}, {0, 1, dy}, {0, 0, 1}}};
        return from_matrix(m);
    }

    double at(int r, int c) const { return m_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]; }

    void to_row_major(double* v) const {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) v[r * 3 + c] = m_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }

    double det() const {
        const auto& m = m_;
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }

private:
    void normalize() {
        const double s = m_[2][2];
        if (std::abs(s) < 1e-14) throw NumericError("homography: cannot normalize, m[2][2] ~ 0");
        for (auto& row : m_)
            for (double& v : row) v /= s;
        if (std::abs(det()) < 1e-14) throw NumericError("homography: degenerate matrix (det ~ 0)");
    }

    std::array<std::array<double, 3>, 3> m_;
};

inline Homography compose(const Homography& a, const Homography& b) {
    std::array<std::array<double, 3>, 3> m{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += a.at(r, k) * b.at(k, c);
            m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = s;
        }
    return Homography::from_matrix(m);
}

inline Homography invert(const Homography& h) {
    const double d = h.det();
    if (std::abs(d) < 1e-14) throw NumericError("invert: singular homography");
    std::array<std::array<double, 3>, 3> m;
    m[0][0] = (h.at(1, 1) * h.at(2, 2) - h.at(1, 2) * h.at(2, 1)) / d;
    m[0][1] = (h.at(0, 2) * h.at(2, 1) - h.at(0, 1) * h.at(2, 2)) / d;
    m[0][2] = (h.at(0, 1) * h.at(1, 2) - h.at(0, 2) * h.at(1, 1)) / d;
    m[1][0] = (h.at(1, 2) * h.at(2, 0) - h.at(1, 0) * h.at(2, 2)) / d;
    m[1][1] = (h.at(0, 0) * h.at(2, 2) - h.at(0, 2) * h.at(2, 0)) / d;
    m[1][2] = (h.at(0, 2) * h.at(1, 0) - h.at(0, 0) * h.at(1, 2)) / d;
    m[2][0] = (h.at(1, 0) * h.at(2, 1) - h.at(1, 1) * h.at(2, 0)) / d;
    m[2][1] = (h.at(0, 1) * h.at(2, 0) - h.at(0, 0) * h.at(2, 1)) / d;
    m[2][2] = (h.at(0, 0) * h.at(1, 1) - h.at(0, 1) * h.at(1, 0)) / d;
    return Homography::from_matrix(m);
}

inline Point apply(const Homography& h, Point p) {
    const double w = h.at(2, 0) * p.x + h.at(2, 1) * p.y + h.at(2, 2);
    if (std::abs(w) <= 1e-12) throw NumericError("apply: point maps to the line at infinity");
    return {(h.at(0, 0) * p.x + h.at(0, 1) * p.y + h.at(0, 2)) / w,
            (h.at(1, 0) * p.x + h.at(1, 1) * p.y + h.at(1, 2)) / w};
}

// 4-point DLT with the h33 = 1 gauge: an 8x8 linear system solved by
// partially pivoted Gaussian elimination.
inline Homography dlt(const Corners& src, const Corners& dst) {
    double A[8][9]; // augmented
    for (int i = 0; i < 4; ++i) {
        const double x = src[static_cast<std::size_t>(i)].x, y = src[static_cast<std::size_t>(i)].y;
        const double u = dst[static_cast<std::size_t>(i)].x, v = dst[static_cast<std::size_t>(i)].y;
        double* r0 = A[2 * i];
        double* r1 = A[2 * i + 1];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[3] = 0; r0[4] = 0; r0[5] = 0;
        r0[6] = -x * u; r0[7] = -y * u; r0[8] = u;
        r1[0] = 0; r1[1] = 0; r1[2] = 0; r1[3] = x; r1[4] = y; r1[5] = 1;
        r1[6] = -x * v; r1[7] = -y * v; r1[8] = v;
    }
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-12)
            throw NumericError("dlt: degenerate corner configuration");
        if (piv != col)
            for (int c = col; c < 9; ++c) std::swap(A[piv][c], A[col][c]);
        for (int r = col + 1; r < 8; ++r) {
            const double f = A[r][col] / A[col][col];
            if (f == 0) continue;
            for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
        }
    }
    double hvec[9];
    for (int r = 7; r >= 0; --r) {
        double s = A[r][8];
        for (int c = r + 1; c < 8; ++c) s -= A[r][c] * hvec[c];
        hvec[r] = s / A[r][r];
    }
    hvec[8] = 1;
    return Homography::from_row_major(hvec);
}

inline Homography homography_from_offsets(const CornerOffsets& o) {
    return dlt(o.base, o.displaced());
}

// Backward warping: output(x) = bilinear sample of `img` at apply(H, x).
// H maps OUTPUT coordinates to INPUT coordinates, so cascading warps
// composes left-to-right. Out-of-bounds samples are 0.
inline Tensor warp(const Tensor& img, const Homography& h, int out_h, int out_w) {
    require_shape(img.rank() == 3, "warp: image must be [C,H,W]");
    const int C = img.extent(0), H = img.extent(1), W = img.extent(2);
    Tensor out({C, out_h, out_w});
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double px = static_cast<double>(x), py = static_cast<double>(y);
            const double w = h.at(2, 0) * px + h.at(2, 1) * py + h.at(2, 2);
            if (std::abs(w) <= 1e-12) continue; // treated as out of frame
            const double sx = (h.at(0, 0) * px + h.at(0, 1) * py + h.at(0, 2)) / w;
            const double sy = (h.at(1, 0) * px + h.at(1, 1) * py + h.at(1, 2)) / w;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const double tx = sx - fx, ty = sy - fy;
            const double w00 = (1 - tx) * (1 - ty), w01 = tx * (1 - ty);
            const double w10 = (1 - tx) * ty, w11 = tx * ty;
            const bool i00 = x0 >= 0 && x0 < W && y0 >= 0 && y0 < H;
            const bool i01 = x0 + 1 >= 0 && x0 + 1 < W && y0 >= 0 && y0 < H;
            const bool i10 = x0 >= 0 && x0 < W && y0 + 1 >= 0 && y0 + 1 < H;
            const bool i11 = x0 + 1 >= 0 && x0 + 1 < W && y0 + 1 >= 0 && y0 + 1 < H;
            for (int c = 0; c < C; ++c) {
                double acc = 0;
                if (i00 && w00 != 0) acc += w00 * img.at(c, y0, x0);
                if (i01 && w01 != 0) acc += w01 * img.at(c, y0, x0 + 1);
                if (i10 && w10 != 0) acc += w10 * img.at(c, y0 + 1, x0);
                if (i11 && w11 != 0) acc += w11 * img.at(c, y0 + 1, x0 + 1);
                out.at(c, y, x) = static_cast<scalar>(acc);
            }
        }
    }
    return out;
}

inline Tensor warp(const Tensor& img, const Homography& h) {
    return warp(img, h, img.extent(1), img.extent(2));
}

// Mask of output pixels whose bilinear support is fully inside the input.
inline std::vector<std::uint8_t> warp_valid_mask(int in_h, int in_w, const Homography& h,
                                                 int out_h, int out_w) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(out_h) * out_w, 0);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const double px = x, py = y;
            const double w = h.at(2, 0) * px + h.at(2, 1) * py + h.at(2, 2);
            if (std::abs(w) <= 1e-12) continue;
            const double sx = (h.at(0, 0) * px + h.at(0, 1) * py + h.at(0, 2)) / w;
            const double sy = (h.at(1, 0) * px + h.at(1, 1) * py + h.at(1, 2)) / w;
            if (sx >= 0 && sy >= 0 && sx <= in_w - 1 && sy <= in_h - 1)
                mask[static_cast<std::size_t>(y) * out_w + x] = 1;
        }
    return mask;
}

// Mean Euclidean distance between the two mappings of the reference corners.
inline double corner_error(const Homography& est, const Homography& gt, const Corners& base) {
    double s = 0;
    for (const Point& c : base) {
        const Point a = apply(est, c);
        const Point b = apply(gt, c);
        s += std::hypot(a.x - b.x, a.y - b.y);
    }
    return s / 4.0;
}

// PSNR in dB for images in [0,1]; identical images report +infinity.
// An optional per-pixel mask (size H*W) restricts the comparison.
inline double psnr(const Tensor& a, const Tensor& b, const std::vector<std::uint8_t>* mask = nullptr) {
    require_shape(a.same_shape(b), "psnr: shape mismatch");
    const int C = a.extent(0);
    const std::size_t plane = a.size() / static_cast<std::size_t>(C);
    double mse = 0;
    std::size_t count = 0;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            if (mask && !(*mask)[i]) continue;
            const double d = static_cast<double>(a[c * plane + i]) - static_cast<double>(b[c * plane + i]);
            mse += d * d;
            ++count;
        }
    if (count == 0) throw DataError("psnr: empty mask");
    mse /= static_cast<double>(count);
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// computed over windows fully inside the image, averaged across channels.
inline double ssim(const Tensor& a, const Tensor& b) {
    require_shape(a.same_shape(b), "ssim: shape mismatch");
    const int C = a.extent(0), H = a.extent(1), W = a.extent(2);
    constexpr int R = 5; // 11x11
    require_shape(H >= 11 && W >= 11, "ssim: image smaller than the 11x11 window");
    double g[11];
    double gsum = 0;
    for (int i = -R; i <= R; ++i) {
        g[i + R] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
        gsum += g[i + R];
    }
    for (double& v : g) v /= gsum;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    auto blur = [&](const std::vector<double>& src, std::vector<double>& dst) {
        std::vector<double> tmp(static_cast<std::size_t>(H) * W);
        for (int y = 0; y < H; ++y)
            for (int x = R; x < W - R; ++x) {
                double s = 0;
                for (int t = -R; t <= R; ++t) s += g[t + R] * src[static_cast<std::size_t>(y) * W + x + t];
                tmp[static_cast<std::size_t>(y) * W + x] = s;
            }
        for (int y = R; y < H - R; ++y)
            for (int x = R; x < W - R; ++x) {
                double s = 0;
                for (int t = -R; t <= R; ++t) s += g[t + R] * tmp[static_cast<std::size_t>(y + t) * W + x];
                dst[static_cast<std::size_t>(y) * W + x] = s;
            }
    };

    double total = 0;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> xa(plane), xb(plane), aa(plane), bb(plane), ab(plane);
    std::vector<double> mx(plane), my(plane), mxx(plane), myy(plane), mxy(plane);
    for (int c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            xa[i] = a[c * plane + i];
            xb[i] = b[c * plane + i];
            aa[i] = xa[i] * xa[i];
            bb[i] = xb[i] * xb[i];
            ab[i] = xa[i] * xb[i];
        }
        blur(xa, mx);
        blur(xb, my);
        blur(aa, mxx);
        blur(bb, myy);
        blur(ab, mxy);
        double s = 0;
        std::size_t count = 0;
        for (int y = R; y < H - R; ++y)
            for (int x = R; x < W - R; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                const double vx = mxx[i] - mx[i] * mx[i];
                const double vy = myy[i] - my[i] * my[i];
                const double cv = mxy[i] - mx[i] * my[i];
                const double num = (2 * mx[i] * my[i] + c1) * (2 * cv + c2);
                const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
                s += num / den;
                ++count;
            }
        total += s / static_cast<double>(count);
    }
    return total / C;
}

} // namespace localtrans
