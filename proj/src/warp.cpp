#include "stab/warp.hpp"

#include <algorithm>
#include <cmath>

#include "stab/errors.hpp"

namespace stab {

namespace {

// Sub-micropixel tolerance on the sampling domain so that displacements that
// are zero up to rounding keep the full frame valid.
constexpr double kEdgeEps = 1e-6;

inline double sample_channel(const std::uint8_t* img, int w, int h, int channels, int ch,
                             double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > w - 2) x0 = w - 2;
    if (y0 > h - 2) y0 = h - 2;
    const double fx = x - x0;
    const double fy = y - y0;
    const size_t i = (static_cast<size_t>(y0) * w + x0) * channels + ch;
    const size_t stride = static_cast<size_t>(w) * channels;
    const double v00 = img[i], v10 = img[i + channels];
    const double v01 = img[i + stride], v11 = img[i + stride + channels];
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

DisplacementField displacement_at(const TrajectoryField& traj, const TrajectoryField& smoothed,
                                  int frame) {
    if (traj.frames != smoothed.frames || traj.rows != smoothed.rows ||
        traj.cols != smoothed.cols) {
        throw ShapeMismatch("displacement_at: trajectory shapes differ");
    }
    if (frame < 0 || frame >= traj.frames) throw OutOfBounds("displacement_at: bad frame index");
    DisplacementField disp;
    disp.frame_index = frame;
    disp.rows = traj.rows;
    disp.cols = traj.cols;
    disp.d.resize(traj.vertex_count());
    for (int v = 0; v < traj.vertex_count(); ++v) {
        disp.d[v] = smoothed.at(frame, v) - traj.at(frame, v);
    }
    return disp;
}

std::pair<Frame, ValidityMask> reproject(const Frame& frame, const DisplacementField& disp,
                                         const GridMesh& mesh) {
    if (disp.rows != mesh.vertex_rows() || disp.cols != mesh.vertex_cols()) {
        throw ShapeMismatch("reproject: displacement field does not match mesh");
    }
    for (const Vec2& v : disp.d) {
        if (!std::isfinite(v.dx) || !std::isfinite(v.dy)) {
            throw NonFiniteObjective("reproject: non-finite displacement");
        }
    }

    const int w = frame.width, h = frame.height;
    Frame out;
    out.index = frame.index;
    out.width = w;
    out.height = h;
    out.gray.assign(static_cast<size_t>(w) * h, 0);
    if (frame.has_rgb()) out.rgb.assign(static_cast<size_t>(w) * h * 3, 0);
    ValidityMask mask{w, h, std::vector<std::uint8_t>(static_cast<size_t>(w) * h, 0)};

    const double cw = mesh.cell_width();
    const double ch = mesh.cell_height();

    for (int y = 0; y < h; ++y) {
        const int cr = std::min(static_cast<int>(y / ch), mesh.rows - 1);
        const double fy = (y - cr * ch) / ch;
        for (int x = 0; x < w; ++x) {
            const int cc = std::min(static_cast<int>(x / cw), mesh.cols - 1);
            const double fx = (x - cc * cw) / cw;
            const Vec2& d1 = disp.at(cr, cc);
            const Vec2& d2 = disp.at(cr, cc + 1);
            const Vec2& d3 = disp.at(cr + 1, cc + 1);
            const Vec2& d4 = disp.at(cr + 1, cc);
            const double w1 = (1 - fx) * (1 - fy), w2 = fx * (1 - fy);
            const double w3 = fx * fy, w4 = (1 - fx) * fy;
            const double dx = w1 * d1.dx + w2 * d2.dx + w3 * d3.dx + w4 * d4.dx;
            const double dy = w1 * d1.dy + w2 * d2.dy + w3 * d3.dy + w4 * d4.dy;

            const double sx = x - dx;
            const double sy = y - dy;
            const size_t i = static_cast<size_t>(y) * w + x;
            if (sx < -kEdgeEps || sx > w - 1 + kEdgeEps || sy < -kEdgeEps ||
                sy > h - 1 + kEdgeEps) {
                continue;  // invalid, left black
            }
            mask.valid[i] = 1;
            out.gray[i] = to_u8(sample_channel(frame.gray.data(), w, h, 1, 0, sx, sy));
            if (frame.has_rgb()) {
                for (int c = 0; c < 3; ++c) {
                    out.rgb[3 * i + c] =
                        to_u8(sample_channel(frame.rgb.data(), w, h, 3, c, sx, sy));
                }
            }
        }
    }
    return {std::move(out), std::move(mask)};
}

CropRect common_crop(std::span<const ValidityMask> masks, double min_area_fraction) {
    if (masks.empty()) throw ShapeMismatch("common_crop: no masks");
    const int w = masks[0].width, h = masks[0].height;
    for (const auto& m : masks) {
        if (m.width != w || m.height != h) throw DimensionMismatch("common_crop: mask sizes differ");
    }

    // Intersection of all masks.
    std::vector<std::uint8_t> all(static_cast<size_t>(w) * h, 1);
    CropRect crop;
    crop.frame_valid_fraction.reserve(masks.size());
    for (const auto& m : masks) {
        size_t count = 0;
        for (size_t i = 0; i < all.size(); ++i) {
            all[i] &= m.valid[i];
            count += m.valid[i];
        }
        crop.frame_valid_fraction.push_back(static_cast<double>(count) / all.size());
    }

    const auto rect_valid = [&](int rw) {
        const int rh = std::max(1, static_cast<int>(std::lround(static_cast<double>(rw) * h / w)));
        if (rh > h) return false;
        const int x0 = (w - rw) / 2, y0 = (h - rh) / 2;
        for (int y = y0; y < y0 + rh; ++y) {
            const std::uint8_t* row = &all[static_cast<size_t>(y) * w];
            for (int x = x0; x < x0 + rw; ++x) {
                if (!row[x]) return false;
            }
        }
        return true;
    };

    // Largest valid centered width by binary search; validity is monotone in
    // the width because centered rectangles nest.
    int lo = 1, hi = w, best = 0;
    while (lo <= hi) {
        const int mid = (lo + hi) / 2;
        if (rect_valid(mid)) {
            best = mid;
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }

    if (best <= 0) throw MinimalCrop("common_crop: no valid centered rectangle");
    const int rw = best;
    const int rh = std::max(1, static_cast<int>(std::lround(static_cast<double>(rw) * h / w)));
    if (static_cast<double>(rw) * rh < min_area_fraction * w * h) {
        throw MinimalCrop("common_crop: valid rectangle below the minimum area fraction");
    }
    crop.x0 = (w - rw) / 2;
    crop.y0 = (h - rh) / 2;
    crop.x1 = crop.x0 + rw;
    crop.y1 = crop.y0 + rh;
    crop.scale = static_cast<double>(rw) / w;
    return crop;
}

Frame crop_resize(const Frame& frame, const CropRect& crop) {
    const int w = frame.width, h = frame.height;
    const int rw = crop.x1 - crop.x0, rh = crop.y1 - crop.y0;
    if (rw <= 0 || rh <= 0 || crop.x0 < 0 || crop.y0 < 0 || crop.x1 > w || crop.y1 > h) {
        throw OutOfBounds("crop_resize: rectangle outside frame");
    }
    Frame out;
    out.index = frame.index;
    out.width = w;
    out.height = h;
    out.gray.resize(static_cast<size_t>(w) * h);
    if (frame.has_rgb()) out.rgb.resize(static_cast<size_t>(w) * h * 3);

    if (rw == w && rh == h) return frame;  // full-frame crop is the identity

    const double sx_scale = static_cast<double>(rw) / w;
    const double sy_scale = static_cast<double>(rh) / h;
    for (int y = 0; y < h; ++y) {
        const double sy = crop.y0 + (y + 0.5) * sy_scale - 0.5;
        for (int x = 0; x < w; ++x) {
            const double sx = crop.x0 + (x + 0.5) * sx_scale - 0.5;
            const size_t i = static_cast<size_t>(y) * w + x;
            out.gray[i] = to_u8(sample_channel(frame.gray.data(), w, h, 1, 0, sx, sy));
            if (frame.has_rgb()) {
                for (int c = 0; c < 3; ++c) {
                    out.rgb[3 * i + c] =
                        to_u8(sample_channel(frame.rgb.data(), w, h, 3, c, sx, sy));
                }
            }
        }
    }
    return out;
}

}  // namespace stab
