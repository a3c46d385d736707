#pragma once

#include <cstdint>
#include <vector>

#include "stab/geometry.hpp"

namespace stab {

// One video frame: 8-bit grayscale intensities, plus an optional RGB buffer
// kept around for rendering. All frames of a sequence share dimensions.
struct Frame {
    int index = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> gray;  // width * height, row-major
    std::vector<std::uint8_t> rgb;   // empty, or width * height * 3

    bool has_rgb() const { return !rgb.empty(); }
    std::uint8_t at(int x, int y) const { return gray[static_cast<size_t>(y) * width + x]; }
};

using FrameSequence = std::vector<Frame>;

// Dense per-pixel motion from frame i to frame i+1, stored as interleaved
// float pairs to match the on-disk format bit for bit.
struct FlowField {
    int frame_index = 0;
    int width = 0;
    int height = 0;
    std::vector<float> data;  // 2 * width * height: dx, dy interleaved

    Vec2 at(int x, int y) const {
        const size_t i = 2 * (static_cast<size_t>(y) * width + x);
        return {data[i], data[i + 1]};
    }
    void set(int x, int y, float dx, float dy) {
        const size_t i = 2 * (static_cast<size_t>(y) * width + x);
        data[i] = dx;
        data[i + 1] = dy;
    }
    // Bilinear sample with border clamp.
    Vec2 sample(const Point2& p) const;
};

FlowField make_flow(int frame_index, int width, int height);

struct Keypoint {
    Point2 pos;
    double response = 0.0;
    Vec2 motion;
    bool occluded = false;
};

struct KeypointSet {
    int frame_index = 0;
    std::vector<Keypoint> points;  // sorted by descending response
};

}  // namespace stab
