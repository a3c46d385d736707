#pragma once

#include <filesystem>

#include "stab/frame.hpp"

namespace stab {

struct FlowOptions {
    int levels = 4;          // pyramid levels
    int window_radius = 10;  // 21x21 window
    int iterations = 10;     // max per level; stops early once the update
                             // falls below epsilon
    double epsilon = 0.01;   // pixels
    double min_eigenvalue = 1e-4;  // texture floor for the 2x2 system; pixels
                                   // below it keep the upsampled estimate
};

// Dense coarse-to-fine pyramidal Lucas-Kanade. Low-texture pixels keep the
// value upsampled from the coarser level.
FlowField compute_flow(const Frame& a, const Frame& b, const FlowOptions& opts = {});

// "FLO2" little-endian flow file: magic, u32 width, u32 height, then
// width*height (f32 dx, f32 dy) row-major. Round-trips bit-exactly.
void write_flow_file(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow_file(const std::filesystem::path& path, int frame_index = 0);

}  // namespace stab
