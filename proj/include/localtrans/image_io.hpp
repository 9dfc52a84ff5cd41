#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "localtrans/homography.hpp"
#include "localtrans/tensor.hpp"

namespace localtrans {

namespace detail {

struct PnmHeader {
    int magic = 0; // 5 or 6
    int width = 0;
    int height = 0;
    long payload_offset = 0;
};

inline PnmHeader read_pnm_header(std::ifstream& f, const std::string& path) {
    auto fail = [&](const std::string& what) -> PnmHeader {
        throw DataError(path + ": " + what + " (byte offset " +
                        std::to_string(static_cast<long>(f.tellg())) + ")");
    };
    auto skip_ws = [&] {
        int c = f.peek();
        while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else {
                f.get();
            }
            c = f.peek();
        }
    };
    PnmHeader h;
    char p = 0, m = 0;
    f.get(p);
    f.get(m);
    if (p != 'P' || (m != '5' && m != '6')) return fail("not a P5/P6 PNM file");
    h.magic = m - '0';
    int maxval = 0;
    skip_ws();
    if (!(f >> h.width)) return fail("missing width");
    skip_ws();
    if (!(f >> h.height)) return fail("missing height");
    skip_ws();
    if (!(f >> maxval)) return fail("missing maxval");
    if (h.width <= 0 || h.height <= 0) return fail("non-positive image size");
    if (maxval != 255) return fail("unsupported maxval " + std::to_string(maxval) + ", expected 255");
    f.get(); // single whitespace byte before payload
    h.payload_offset = static_cast<long>(f.tellg());
    return h;
}

} // namespace detail

// Reads a P6 (RGB -> [3,H,W]) or P5 (gray -> [1,H,W]) image, values in [0,1].
inline Tensor read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open");
    detail::PnmHeader h = detail::read_pnm_header(f, path);
    const int C = h.magic == 6 ? 3 : 1;
    const std::size_t n = static_cast<std::size_t>(C) * h.width * h.height;
    std::vector<std::uint8_t> raw(n);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f.gcount()) != n)
        throw DataError(path + ": truncated payload (byte offset " +
                        std::to_string(h.payload_offset + f.gcount()) + ")");
    Tensor img({C, h.height, h.width});
    const std::size_t plane = static_cast<std::size_t>(h.width) * h.height;
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < C; ++c)
            img[c * plane + i] = static_cast<scalar>(raw[i * C + c] / 255.0);
    return img;
}

// Writes PPM (P6) for [3,H,W] or PGM (P5) for [1,H,W]; 8-bit, round-to-nearest.
inline void write_image(const std::string& path, const Tensor& img) {
    require_shape(img.rank() == 3 && (img.extent(0) == 3 || img.extent(0) == 1),
                  "write_image: expected [3,H,W] or [1,H,W], got " + img.shape_str());
    const int C = img.extent(0), H = img.extent(1), W = img.extent(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for writing");
    f << (C == 3 ? "P6" : "P5") << "\n" << W << " " << H << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    std::vector<std::uint8_t> raw(plane * static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < C; ++c) {
            double v = static_cast<double>(img[c * plane + i]);
            v = v < 0 ? 0 : (v > 1 ? 1 : v);
            raw[i * C + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw DataError(path + ": write failed");
}

// Homography text format: 9 decimal numbers, row-major, one line, 17
// significant digits (round-trips doubles exactly).
inline std::string homography_to_line(const Homography& h) {
    double v[9];
    h.to_row_major(v);
    char buf[64];
    std::string line;
    for (int i = 0; i < 9; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        if (i) line += " ";
        line += buf;
    }
    return line;
}

inline Homography homography_from_line(const std::string& line, const std::string& context = "") {
    std::istringstream ss(line);
    double v[9];
    for (int i = 0; i < 9; ++i)
        if (!(ss >> v[i]))
            throw DataError(context + "homography line: expected 9 numbers, got " + std::to_string(i));
    return Homography::from_row_major(v);
}

inline void write_homography(const std::string& path, const Homography& h) {
    std::ofstream f(path);
    if (!f) throw DataError(path + ": cannot open for writing");
    f << homography_to_line(h) << "\n";
}

inline Homography read_homography(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError(path + ": cannot open");
    std::string line;
    std::getline(f, line);
    return homography_from_line(line, path + ": ");
}

} // namespace localtrans
