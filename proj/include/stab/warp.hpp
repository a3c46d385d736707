#pragma once

#include <span>
#include <utility>
#include <vector>

#include "stab/frame.hpp"
#include "stab/geometry.hpp"
#include "stab/plane_init.hpp"
#include "stab/smoothing.hpp"

namespace stab {

// Per-vertex stabilizing displacement for one frame: smoothed minus original
// trajectory.
struct DisplacementField {
    int frame_index = 0;
    int rows = 0;
    int cols = 0;
    std::vector<Vec2> d;

    const Vec2& at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
};

DisplacementField displacement_at(const TrajectoryField& traj, const TrajectoryField& smoothed,
                                  int frame);

struct ValidityMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> valid;  // 1 = sampled inside the input

    bool at(int x, int y) const { return valid[static_cast<size_t>(y) * width + x] != 0; }
};

// Largest centered axis-aligned rectangle (frame aspect) valid in every
// frame, plus the linear scale it represents.
struct CropRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel bounds
    double scale = 1.0;                  // rect width / frame width
    std::vector<double> frame_valid_fraction;
};

// Backward warp: each output pixel samples the input at q - Bili(disp at q).
// Pixels whose source lands outside the input are marked invalid.
std::pair<Frame, ValidityMask> reproject(const Frame& frame, const DisplacementField& disp,
                                         const GridMesh& mesh);

// Throws MinimalCrop when no centered rectangle of at least min_area_fraction
// of the frame is valid in every mask.
CropRect common_crop(std::span<const ValidityMask> masks, double min_area_fraction = 0.10);

// Crop to the rect and bilinearly resize back to the original frame size.
Frame crop_resize(const Frame& frame, const CropRect& crop);

}  // namespace stab
