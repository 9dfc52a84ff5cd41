#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "localtrans/config.hpp"
#include "localtrans/homography.hpp"
#include "localtrans/image_io.hpp"
#include "localtrans/parallel.hpp"
#include "localtrans/resize.hpp"

namespace localtrans {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Deterministic RNG stream; the normal draw is hand-rolled Box-Muller so the
// sequence does not depend on the standard library's distribution choices.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) { // [0, n)
        return std::min(n - 1, static_cast<int>(uniform() * n));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0;
};

// ---------------------------------------------------------------------------
// Procedural source imagery: smooth gradients, feathered shapes, band-limited
// value noise. Everything is kept C1-smooth so that bilinear resampling
// round-trips cleanly.
// ---------------------------------------------------------------------------

namespace detail {

inline double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Soft coverage of the interval [lo, hi] with feather f.
inline double soft_interval(double t, double lo, double hi, double f) {
    const double a = smoothstep01((t - lo) / f + 0.5);
    const double b = smoothstep01((hi - t) / f + 0.5);
    return a * b;
}

inline void add_value_noise(Tensor& img, Rng& rng, int cell, double amplitude) {
    const int H = img.extent(1), W = img.extent(2);
    const int gh = H / cell + 3, gw = W / cell + 3;
    std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
    for (double& v : grid) v = rng.uniform(-1.0, 1.0);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double gy = static_cast<double>(y) / cell, gx = static_cast<double>(x) / cell;
            const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
            const double ty = smoothstep01(gy - iy), tx = smoothstep01(gx - ix);
            const double v00 = grid[static_cast<std::size_t>(iy) * gw + ix];
            const double v01 = grid[static_cast<std::size_t>(iy) * gw + ix + 1];
            const double v10 = grid[static_cast<std::size_t>(iy + 1) * gw + ix];
            const double v11 = grid[static_cast<std::size_t>(iy + 1) * gw + ix + 1];
            const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
            for (int c = 0; c < 3; ++c)
                img.data()[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * W + x] +=
                    static_cast<scalar>(amplitude * v);
        }
}

} // namespace detail

// Deterministic textured RGB image in [0,1]; same seed, same bytes.
inline Tensor procedural_image(std::uint64_t seed, int h, int w) {
    require_shape(h >= 8 && w >= 8, "procedural_image: size too small");
    Rng rng(seed);
    Tensor img({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rng.uniform(0.25, 0.75);
        gx[c] = rng.uniform(-0.35, 0.35);
        gy[c] = rng.uniform(-0.35, 0.35);
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / w, fy = static_cast<double>(y) / h;
            for (int c = 0; c < 3; ++c)
                img.data()[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * w + x] =
                    static_cast<scalar>(base[c] + gx[c] * fx + gy[c] * fy);
        }

    const int n_shapes = 12 + rng.uniform_int(8);
    const double feather = 5.0;
    for (int s = 0; s < n_shapes; ++s) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.05, 0.95) * w;
        const double cy = rng.uniform(0.05, 0.95) * h;
        const double rx = rng.uniform(0.03, 0.22) * w;
        const double ry = rng.uniform(0.03, 0.22) * h;
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = rng.uniform(0.0, 1.0);
        const double alpha = rng.uniform(0.35, 0.8);
        const int x0 = std::max(0, static_cast<int>(cx - rx - 3 * feather));
        const int x1 = std::min(w - 1, static_cast<int>(cx + rx + 3 * feather));
        const int y0 = std::max(0, static_cast<int>(cy - ry - 3 * feather));
        const int y1 = std::min(h - 1, static_cast<int>(cy + ry + 3 * feather));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double cov;
                if (ellipse) {
                    const double d = std::hypot((x - cx) / rx, (y - cy) / ry);
                    const double edge = std::min(rx, ry);
                    cov = detail::smoothstep01((1.0 - d) * edge / feather + 0.5);
                } else {
                    cov = detail::soft_interval(x, cx - rx, cx + rx, feather) *
                          detail::soft_interval(y, cy - ry, cy + ry, feather);
                }
                if (cov <= 0) continue;
                const double a = alpha * cov;
                for (int c = 0; c < 3; ++c) {
                    scalar& px = img.data()[static_cast<std::size_t>(c) * plane +
                                            static_cast<std::size_t>(y) * w + x];
                    px = static_cast<scalar>((1.0 - a) * px + a * color[c]);
                }
            }
    }

    detail::add_value_noise(img, rng, 16, 0.035);
    detail::add_value_noise(img, rng, 8, 0.018);

    // rescale instead of clipping: hard clamps would add C0 kinks that
    // resample poorly
    scalar mn = img[0], mx = img[0];
    for (std::size_t i = 0; i < img.size(); ++i) {
        mn = std::min(mn, img[i]);
        mx = std::max(mx, img[i]);
    }
    if (mn < scalar(0) || mx > scalar(1)) {
        const scalar lo = scalar(0.01), hi = scalar(0.99);
        const scalar gain = (hi - lo) / std::max(mx - mn, scalar(1e-6));
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = lo + (img[i] - mn) * gain;
    }
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = std::clamp(img[i], scalar(0), scalar(1));
    return img;
}

// ---------------------------------------------------------------------------
// Pair generation
// ---------------------------------------------------------------------------

struct AugmentRanges {
    double sigma_max = 0.02;
    double brightness_lo = 0.8, brightness_hi = 1.2;
    double contrast_lo = 0.8, contrast_hi = 1.2;
    double saturation_lo = 0.8, saturation_hi = 1.2;
};

struct GenConfig {
    int patch = 128;
    double rho_max = 32;
    int cross_res = 1; // s in {1,4,8,...}
    bool augment = true;
    AugmentRanges ranges;
    int source_size = 0; // 0 -> patch + 2*rho + 64
    std::string image_dir; // empty -> procedural source

    int effective_source_size() const {
        return source_size > 0 ? source_size : patch + 2 * static_cast<int>(std::ceil(rho_max)) + 64;
    }

    void validate() const {
        if (patch < 16) throw ConfigError("gen: patch size must be >= 16");
        if (rho_max < 0) throw ConfigError("gen: rho must be >= 0");
        if (cross_res < 1) throw ConfigError("gen: cross-res factor must be >= 1");
        const int src = effective_source_size();
        if (patch + 2 * rho_max > src)
            throw ConfigError("gen: patch + 2*rho exceeds source extent " + std::to_string(src));
    }
};

struct SamplePair {
    Tensor target;    // I_T [3,p,p]
    Tensor unaligned; // I_U [3,p,p]
    CornerOffsets gt_offsets;
    Homography gt_h; // warp(I_U, gt_h) ~ I_T
    int cross_res = 1;
    std::uint64_t seed = 0;
};

// Gaussian noise, then brightness, contrast about the image mean, saturation
// as a blend with per-pixel luma; clamp to [0,1] at the end.
inline Tensor augment(const Tensor& img, Rng& rng, const AugmentRanges& ranges) {
    Tensor out = img.clone();
    const int C = out.extent(0);
    const std::size_t n = out.size();
    const double sigma = rng.uniform(0.0, ranges.sigma_max);
    if (sigma > 0)
        for (std::size_t i = 0; i < n; ++i) out[i] += static_cast<scalar>(sigma * rng.normal());
    const double b = rng.uniform(ranges.brightness_lo, ranges.brightness_hi);
    for (std::size_t i = 0; i < n; ++i) out[i] *= static_cast<scalar>(b);
    const double con = rng.uniform(ranges.contrast_lo, ranges.contrast_hi);
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += out[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<scalar>((out[i] - mean) * con + mean);
    const double sat = rng.uniform(ranges.saturation_lo, ranges.saturation_hi);
    if (C == 3) {
        const std::size_t plane = n / 3;
        for (std::size_t i = 0; i < plane; ++i) {
            const double l = 0.299 * out[i] + 0.587 * out[plane + i] + 0.114 * out[2 * plane + i];
            for (int c = 0; c < 3; ++c) {
                scalar& v = out[static_cast<std::size_t>(c) * plane + i];
                v = static_cast<scalar>(l + sat * (v - l));
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(out[i], scalar(0), scalar(1));
    return out;
}

namespace detail {

inline bool quad_is_convex(const Corners& q) {
    // corners ordered TL,TR,BR,BL: consecutive edge cross products must share
    // sign and stay away from zero (guards the DLT)
    double sign = 0;
    for (int i = 0; i < 4; ++i) {
        const Point a = q[static_cast<std::size_t>(i)];
        const Point b = q[static_cast<std::size_t>((i + 1) % 4)];
        const Point c = q[static_cast<std::size_t>((i + 2) % 4)];
        const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (std::abs(cross) < 1e-6) return false;
        if (sign == 0) sign = cross;
        else if (sign * cross < 0) return false;
    }
    return true;
}

inline std::array<Point, 4> draw_corner_offsets(Rng& rng, double rho) {
    std::array<Point, 4> d;
    for (int i = 0; i < 4; ++i) {
        d[static_cast<std::size_t>(i)].x = rng.uniform(-rho, rho);
        d[static_cast<std::size_t>(i)].y = rng.uniform(-rho, rho);
    }
    return d;
}

} // namespace detail

// DeTone-style pair: crop I_T, perturb its corners by uniform offsets within
// [-rho, rho], synthesize I_U by warping the full source with the inverse
// ground-truth homography, then (optionally) degrade I_T through the
// cross-resolution cycle and augment both images independently.
inline SamplePair make_pair(const Tensor& source, const GenConfig& cfg, std::uint64_t sample_seed) {
    cfg.validate();
    const int p = cfg.patch;
    const int sh = source.extent(1), sw = source.extent(2);
    const int margin = static_cast<int>(std::ceil(cfg.rho_max));
    if (p + 2 * margin > std::min(sh, sw))
        throw ConfigError("make_pair: source image too small for patch + 2*rho");
    Rng rng(sample_seed);

    const int max_x = sw - p - 2 * margin;
    const int max_y = sh - p - 2 * margin;
    const int x0 = margin + (max_x > 0 ? rng.uniform_int(max_x + 1) : 0);
    const int y0 = margin + (max_y > 0 ? rng.uniform_int(max_y + 1) : 0);

    const Corners base = rect_corners(p, p);
    std::array<Point, 4> delta{};
    if (cfg.rho_max > 0) {
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            delta = detail::draw_corner_offsets(rng, cfg.rho_max);
            Corners dst;
            for (int i = 0; i < 4; ++i) dst[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] + delta[static_cast<std::size_t>(i)];
            ok = detail::quad_is_convex(dst);
        }
        if (!ok) throw DataError("make_pair: could not draw a convex corner perturbation");
    }

    CornerOffsets offs{base, delta};
    const Homography gt_h = homography_from_offsets(offs);

    SamplePair out;
    out.gt_offsets = offs;
    out.gt_h = gt_h;
    out.cross_res = cfg.cross_res;
    out.seed = sample_seed;

    // exact crop for the target
    out.target.reset({3, p, p});
    const std::size_t splane = static_cast<std::size_t>(sh) * sw;
    const std::size_t tplane = static_cast<std::size_t>(p) * p;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
                out.target.data()[static_cast<std::size_t>(c) * tplane + static_cast<std::size_t>(y) * p + x] =
                    source.data()[static_cast<std::size_t>(c) * splane +
                                  static_cast<std::size_t>(y + y0) * sw + (x + x0)];

    // I_U(x) = S(T_crop(inv(gt_h)(x))), sampled over the crop window
    const Homography to_source =
        compose(Homography::translation(x0, y0), invert(gt_h));
    out.unaligned = warp(source, to_source, p, p);

    if (cfg.cross_res > 1) {
        Tensor low = resize_bicubic(out.target, 1.0 / cfg.cross_res);
        out.target = resize_bicubic_to(low, p, p);
    }
    if (cfg.augment) {
        out.target = augment(out.target, rng, cfg.ranges);
        out.unaligned = augment(out.unaligned, rng, cfg.ranges);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence: one directory per sample holding target.ppm,
// unaligned.ppm and gt.txt (homography line, offsets line, "s seed" line).
// ---------------------------------------------------------------------------

namespace fs = std::filesystem;

inline std::string sample_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05d", index);
    return buf;
}

inline void write_sample(const std::string& dir, const SamplePair& s) {
    fs::create_directories(dir);
    write_image(dir + "/target.ppm", s.target);
    write_image(dir + "/unaligned.ppm", s.unaligned);
    std::ofstream f(dir + "/gt.txt");
    if (!f) throw DataError(dir + "/gt.txt: cannot open for writing");
    f << homography_to_line(s.gt_h) << "\n";
    char buf[64];
    for (int i = 0; i < 4; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g", s.gt_offsets.delta[static_cast<std::size_t>(i)].x,
                      s.gt_offsets.delta[static_cast<std::size_t>(i)].y);
        f << buf << (i == 3 ? "\n" : " ");
    }
    f << s.cross_res << " " << s.seed << "\n";
}

inline SamplePair read_sample(const std::string& dir) {
    SamplePair s;
    s.target = read_image(dir + "/target.ppm");
    s.unaligned = read_image(dir + "/unaligned.ppm");
    if (!s.target.same_shape(s.unaligned))
        throw DataError(dir + ": target and unaligned image sizes differ");
    const std::string gt_path = dir + "/gt.txt";
    std::ifstream f(gt_path);
    if (!f) throw DataError(gt_path + ": cannot open");
    std::string line;
    if (!std::getline(f, line)) throw DataError(gt_path + ": missing homography line");
    Homography h;
    try {
        h = homography_from_line(line, gt_path + ": ");
    } catch (const NumericError& e) {
        throw DataError(gt_path + ": invariant violation: " + e.what());
    }
    if (!std::getline(f, line)) throw DataError(gt_path + ": missing offsets line");
    {
        std::istringstream ss(line);
        static const char* kFields[8] = {"dx1", "dy1", "dx2", "dy2", "dx3", "dy3", "dx4", "dy4"};
        double v[8];
        for (int i = 0; i < 8; ++i)
            if (!(ss >> v[i]))
                throw DataError(gt_path + ": offsets line: missing field " + kFields[i]);
        for (int i = 0; i < 4; ++i)
            s.gt_offsets.delta[static_cast<std::size_t>(i)] = Point{v[2 * i], v[2 * i + 1]};
    }
    if (!std::getline(f, line)) throw DataError(gt_path + ": missing 's seed' line");
    {
        std::istringstream ss(line);
        if (!(ss >> s.cross_res)) throw DataError(gt_path + ": missing field s");
        if (!(ss >> s.seed)) throw DataError(gt_path + ": missing field seed");
    }
    s.gt_offsets.base = rect_corners(s.target.extent(2), s.target.extent(1));
    s.gt_h = h;
    // re-verify the stored matrix against the offset parameterization
    Homography from_offsets;
    try {
        from_offsets = homography_from_offsets(s.gt_offsets);
    } catch (const NumericError& e) {
        throw DataError(gt_path + ": invariant violation: " + e.what());
    }
    if (corner_error(h, from_offsets, s.gt_offsets.base) > 1e-8)
        throw DataError(gt_path + ": invariant violation: homography does not match corner offsets");
    return s;
}

struct DatasetManifest {
    int count = 0;
    std::uint64_t master_seed = 0;
    GenConfig cfg;
};

inline void write_manifest(const std::string& root, const DatasetManifest& m) {
    char seed_buf[32];
    std::snprintf(seed_buf, sizeof seed_buf, "%llu", static_cast<unsigned long long>(m.master_seed));
    auto fmt = [](double v) {
        char b[64];
        std::snprintf(b, sizeof b, "%.17g", v);
        return std::string(b);
    };
    write_key_values(root + "/manifest.txt",
                     {{"count", std::to_string(m.count)},
                      {"master_seed", seed_buf},
                      {"patch", std::to_string(m.cfg.patch)},
                      {"rho_max", fmt(m.cfg.rho_max)},
                      {"cross_res", std::to_string(m.cfg.cross_res)},
                      {"augment", m.cfg.augment ? "true" : "false"},
                      {"sigma_max", fmt(m.cfg.ranges.sigma_max)},
                      {"brightness_lo", fmt(m.cfg.ranges.brightness_lo)},
                      {"brightness_hi", fmt(m.cfg.ranges.brightness_hi)},
                      {"contrast_lo", fmt(m.cfg.ranges.contrast_lo)},
                      {"contrast_hi", fmt(m.cfg.ranges.contrast_hi)},
                      {"saturation_lo", fmt(m.cfg.ranges.saturation_lo)},
                      {"saturation_hi", fmt(m.cfg.ranges.saturation_hi)},
                      {"source_size", std::to_string(m.cfg.source_size)},
                      {"image_dir", m.cfg.image_dir}});
}

inline DatasetManifest read_manifest(const std::string& root) {
    KeyValueFile kv = KeyValueFile::load(root + "/manifest.txt");
    DatasetManifest m;
    m.count = static_cast<int>(kv.get_int("count", 0));
    m.master_seed = static_cast<std::uint64_t>(kv.get_int("master_seed", 0));
    m.cfg.patch = static_cast<int>(kv.get_int("patch", 128));
    m.cfg.rho_max = kv.get_double("rho_max", 32);
    m.cfg.cross_res = static_cast<int>(kv.get_int("cross_res", 1));
    m.cfg.augment = kv.get_bool("augment", true);
    m.cfg.ranges.sigma_max = kv.get_double("sigma_max", 0.02);
    m.cfg.ranges.brightness_lo = kv.get_double("brightness_lo", 0.8);
    m.cfg.ranges.brightness_hi = kv.get_double("brightness_hi", 1.2);
    m.cfg.ranges.contrast_lo = kv.get_double("contrast_lo", 0.8);
    m.cfg.ranges.contrast_hi = kv.get_double("contrast_hi", 1.2);
    m.cfg.ranges.saturation_lo = kv.get_double("saturation_lo", 0.8);
    m.cfg.ranges.saturation_hi = kv.get_double("saturation_hi", 1.2);
    m.cfg.source_size = static_cast<int>(kv.get_int("source_size", 0));
    m.cfg.image_dir = kv.get_string("image_dir", "");
    kv.reject_unconsumed();
    return m;
}

inline std::uint64_t sample_stream_seed(std::uint64_t master, int index) {
    return splitmix64(master ^ (0xA0761D6478BD642Full * static_cast<std::uint64_t>(index + 1)));
}

// Source image for sample `index`: fresh procedural content per sample, or a
// round-robin pick from an image directory.
inline Tensor sample_source(const GenConfig& cfg, std::uint64_t master, int index,
                            const std::vector<std::string>* dir_files) {
    if (cfg.image_dir.empty()) {
        const int sz = cfg.effective_source_size();
        return procedural_image(splitmix64(sample_stream_seed(master, index) ^ 0x517CC1B727220A95ull),
                                sz, sz);
    }
    if (!dir_files || dir_files->empty()) throw DataError(cfg.image_dir + ": no .ppm/.pgm images found");
    Tensor img = read_image((*dir_files)[static_cast<std::size_t>(index) % dir_files->size()]);
    if (img.extent(0) == 1) { // promote grayscale to RGB
        Tensor rgb({3, img.extent(1), img.extent(2)});
        const std::size_t plane = img.size();
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) rgb.data()[c * plane + i] = img[i];
        return rgb;
    }
    return img;
}

inline std::vector<std::string> list_image_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string ext = e.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline SamplePair generate_sample(const GenConfig& cfg, std::uint64_t master, int index,
                                  const std::vector<std::string>* dir_files = nullptr) {
    Tensor src = sample_source(cfg, master, index, dir_files);
    return make_pair(src, cfg, sample_stream_seed(master, index));
}

inline void write_dataset(const std::string& root, const GenConfig& cfg, std::uint64_t master,
                          int count) {
    cfg.validate();
    fs::create_directories(root);
    std::vector<std::string> files;
    if (!cfg.image_dir.empty()) files = list_image_files(cfg.image_dir);
    const std::vector<std::string>* fptr = cfg.image_dir.empty() ? nullptr : &files;
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        SamplePair s = generate_sample(cfg, master, static_cast<int>(i), fptr);
        write_sample(root + "/" + sample_dir_name(static_cast<int>(i)), s);
    });
    write_manifest(root, DatasetManifest{count, master, cfg});
}

inline std::vector<SamplePair> read_dataset(const std::string& root) {
    const DatasetManifest m = read_manifest(root);
    std::vector<SamplePair> out(static_cast<std::size_t>(m.count));
    parallel_for(static_cast<std::size_t>(m.count), [&](std::size_t i) {
        out[i] = read_sample(root + "/" + sample_dir_name(static_cast<int>(i)));
    });
    return out;
}

} // namespace localtrans
