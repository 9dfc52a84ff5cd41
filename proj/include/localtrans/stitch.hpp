#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "localtrans/homography.hpp"
#include "localtrans/resize.hpp"

namespace localtrans {

struct GridCell {
    int row = 0;
    int col = 0;
};

struct GridLayout {
    int rows = 0;
    int cols = 0;
    std::vector<CornerOffsets> cells; // row-major; smoothed canvas-space quads
};

struct StitchReport {
    std::vector<GridCell> fallback_cells; // estimator failed, identity used
};

// Estimator contract: given the (upsampled) target patch and the local image,
// return the homography mapping target coordinates to local coordinates
// (same convention as warp); throw on failure.
using CellEstimator = std::function<Homography(const Tensor& target_patch, const Tensor& local)>;

// Neighbor-averaged grid stitching. Each cell's alignment places the local
// image's corners on the shared canvas; grid nodes incident to several cells
// take the arithmetic mean of their estimates (single pass); each local image
// is then warped into its smoothed quad, later cells overwriting earlier
// ones where quads overlap.
inline Tensor grid_stitch(const Tensor& global_img, const std::vector<std::pair<Tensor, GridCell>>& locals,
                          int rows, int cols, const CellEstimator& estimator,
                          StitchReport* report = nullptr, GridLayout* layout_out = nullptr) {
    require_shape(global_img.rank() == 3, "grid_stitch: global image must be [C,H,W]");
    require_shape(rows >= 1 && cols >= 1, "grid_stitch: grid extents must be >= 1");
    const int C = global_img.extent(0);
    const int gh = global_img.extent(1), gw = global_img.extent(2);
    require_shape(gh % rows == 0 && gw % cols == 0,
                  "grid_stitch: grid must tile the global image exactly");
    const int cell_h = gh / rows, cell_w = gw / cols;
    require_shape(!locals.empty(), "grid_stitch: no local images");
    const int lh = locals[0].first.extent(1), lw = locals[0].first.extent(2);
    for (const auto& [img, cell] : locals) {
        require_shape(img.extent(1) == lh && img.extent(2) == lw,
                      "grid_stitch: local images must share one size");
        require_shape(cell.row >= 0 && cell.row < rows && cell.col >= 0 && cell.col < cols,
                      "grid_stitch: cell index out of range");
    }
    // uniform resolution gain of the locals over their cells
    const double sy = static_cast<double>(lh) / cell_h;
    const double sx = static_cast<double>(lw) / cell_w;
    const int canvas_h = static_cast<int>(std::lround(gh * sy));
    const int canvas_w = static_cast<int>(std::lround(gw * sx));

    // node estimates: grid node (i,j) at canvas position; accumulate means
    std::vector<Point> node_sum(static_cast<std::size_t>((rows + 1) * (cols + 1)));
    std::vector<int> node_cnt(static_cast<std::size_t>((rows + 1) * (cols + 1)), 0);
    auto node_index = [&](int i, int j) { return static_cast<std::size_t>(i * (cols + 1) + j); };

    struct CellEst {
        GridCell cell;
        const Tensor* local;
        std::array<Point, 4> canvas_corners; // TL,TR,BR,BL estimates
        bool fallback = false;
    };
    std::vector<CellEst> ests;
    ests.reserve(locals.size());

    // pixel-EDGE corners: adjacent cells then share their boundary nodes
    // exactly, so consistent estimates average to themselves
    const Corners local_rect{Point{-0.5, -0.5}, Point{lw - 0.5, -0.5}, Point{lw - 0.5, lh - 0.5},
                             Point{-0.5, lh - 0.5}};
    for (const auto& [img, cell] : locals) {
        // target patch: the cell crop, bicubically upsampled to the local size
        Tensor patch({C, cell_h, cell_w});
        const std::size_t gplane = static_cast<std::size_t>(gh) * gw;
        const std::size_t pplane = static_cast<std::size_t>(cell_h) * cell_w;
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < cell_h; ++y)
                for (int x = 0; x < cell_w; ++x)
                    patch.data()[static_cast<std::size_t>(c) * pplane + static_cast<std::size_t>(y) * cell_w + x] =
                        global_img.data()[static_cast<std::size_t>(c) * gplane +
                                          static_cast<std::size_t>(cell.row * cell_h + y) * gw +
                                          (cell.col * cell_w + x)];
        Tensor target = (lh == cell_h && lw == cell_w) ? std::move(patch)
                                                       : resize_bicubic_to(patch, lh, lw);
        CellEst est;
        est.cell = cell;
        est.local = &img;
        Homography h; // target -> local
        try {
            h = estimator(target, img);
        } catch (const Error&) {
            est.fallback = true; // scale-matched identity: patch is already local-sized
            if (report) report->fallback_cells.push_back(cell);
        }
        const Homography to_patch = est.fallback ? Homography::identity() : invert(h);
        const double ox = cell.col * cell_w * sx, oy = cell.row * cell_h * sy;
        for (int cidx = 0; cidx < 4; ++cidx) {
            const Point in_patch = apply(to_patch, local_rect[static_cast<std::size_t>(cidx)]);
            est.canvas_corners[static_cast<std::size_t>(cidx)] = Point{in_patch.x + ox, in_patch.y + oy};
        }
        // corner order TL,TR,BR,BL maps to grid nodes
        const int ni[4] = {cell.row, cell.row, cell.row + 1, cell.row + 1};
        const int nj[4] = {cell.col, cell.col + 1, cell.col + 1, cell.col};
        for (int cidx = 0; cidx < 4; ++cidx) {
            const std::size_t n = node_index(ni[cidx], nj[cidx]);
            node_sum[n] = node_sum[n] + est.canvas_corners[static_cast<std::size_t>(cidx)];
            node_cnt[n] += 1;
        }
        ests.push_back(std::move(est));
    }

    std::vector<Point> node_avg(node_sum.size());
    for (std::size_t i = 0; i < node_sum.size(); ++i)
        if (node_cnt[i] > 0)
            node_avg[i] = Point{node_sum[i].x / node_cnt[i], node_sum[i].y / node_cnt[i]};

    if (layout_out) {
        layout_out->rows = rows;
        layout_out->cols = cols;
        layout_out->cells.assign(static_cast<std::size_t>(rows) * cols, CornerOffsets{});
    }

    Tensor mosaic({C, canvas_h, canvas_w});
    const std::size_t mplane = static_cast<std::size_t>(canvas_h) * canvas_w;
    for (const CellEst& est : ests) {
        const int ni[4] = {est.cell.row, est.cell.row, est.cell.row + 1, est.cell.row + 1};
        const int nj[4] = {est.cell.col, est.cell.col + 1, est.cell.col + 1, est.cell.col};
        Corners quad;
        for (int cidx = 0; cidx < 4; ++cidx)
            quad[static_cast<std::size_t>(cidx)] = node_avg[node_index(ni[cidx], nj[cidx])];
        if (layout_out) {
            CornerOffsets& co = layout_out->cells[static_cast<std::size_t>(est.cell.row * cols + est.cell.col)];
            for (int cidx = 0; cidx < 4; ++cidx) {
                co.base[static_cast<std::size_t>(cidx)] =
                    Point{(est.cell.col + (cidx == 1 || cidx == 2 ? 1 : 0)) * cell_w * sx - 0.5,
                          (est.cell.row + (cidx >= 2 ? 1 : 0)) * cell_h * sy - 0.5};
                co.delta[static_cast<std::size_t>(cidx)] =
                    quad[static_cast<std::size_t>(cidx)] - co.base[static_cast<std::size_t>(cidx)];
            }
        }
        // canvas quad -> local rectangle; a point is inside the quad iff its
        // image lies inside the local rectangle
        Homography quad_to_local;
        try {
            quad_to_local = dlt(quad, local_rect);
        } catch (const NumericError&) {
            continue; // collapsed quad, skip the cell
        }
        double min_x = quad[0].x, max_x = quad[0].x, min_y = quad[0].y, max_y = quad[0].y;
        for (const Point& p : quad) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
        const int x1 = std::min(canvas_w - 1, static_cast<int>(std::ceil(max_x)));
        const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
        const int y1 = std::min(canvas_h - 1, static_cast<int>(std::ceil(max_y)));
        const Tensor& local = *est.local;
        const std::size_t lplane = static_cast<std::size_t>(lh) * lw;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                Point src;
                try {
                    src = apply(quad_to_local, Point{static_cast<double>(x), static_cast<double>(y)});
                } catch (const NumericError&) {
                    continue;
                }
                if (src.x < -0.5 || src.y < -0.5 || src.x > lw - 0.5 || src.y > lh - 0.5) continue;
                const double cx = std::clamp(src.x, 0.0, static_cast<double>(lw - 1));
                const double cy = std::clamp(src.y, 0.0, static_cast<double>(lh - 1));
                const int ix = static_cast<int>(cx), iy = static_cast<int>(cy);
                const double tx = cx - ix, ty = cy - iy;
                const int ix1 = std::min(ix + 1, lw - 1), iy1 = std::min(iy + 1, lh - 1);
                for (int c = 0; c < C; ++c) {
                    const scalar* p = local.data() + static_cast<std::size_t>(c) * lplane;
                    const double v = (1 - ty) * ((1 - tx) * p[static_cast<std::size_t>(iy) * lw + ix] +
                                                 tx * p[static_cast<std::size_t>(iy) * lw + ix1]) +
                                     ty * ((1 - tx) * p[static_cast<std::size_t>(iy1) * lw + ix] +
                                           tx * p[static_cast<std::size_t>(iy1) * lw + ix1]);
                    mosaic.data()[static_cast<std::size_t>(c) * mplane +
                                  static_cast<std::size_t>(y) * canvas_w + x] = static_cast<scalar>(v);
                }
            }
    }
    return mosaic;
}

} // namespace localtrans
