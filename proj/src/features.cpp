#include "stab/features.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

namespace {

constexpr double kQualityLevel = 0.01;  // relative to the strongest response
constexpr double kAbsoluteFloor = 1e-7;

// Minimum eigenvalue of the 3x3-summed structure tensor at every pixel.
// Intensities are scaled to [0,1] so the floor is resolution-independent.
std::vector<float> corner_response(const Frame& f) {
    const int w = f.width, h = f.height;
    std::vector<float> ix(static_cast<size_t>(w) * h, 0.0f);
    std::vector<float> iy(static_cast<size_t>(w) * h, 0.0f);
    const double inv255 = 1.0 / 255.0;
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const auto px = [&](int xx, int yy) { return f.at(xx, yy) * inv255; };
            // Sobel
            ix[static_cast<size_t>(y) * w + x] = static_cast<float>(
                (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) -
                 px(x - 1, y - 1) - 2 * px(x - 1, y) - px(x - 1, y + 1)) *
                0.125);
            iy[static_cast<size_t>(y) * w + x] = static_cast<float>(
                (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) -
                 px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1)) *
                0.125);
        }
    }

    std::vector<float> resp(static_cast<size_t>(w) * h, 0.0f);
    for (int y = 2; y < h - 2; ++y) {
        for (int x = 2; x < w - 2; ++x) {
            double sxx = 0, sxy = 0, syy = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const size_t i = static_cast<size_t>(y + dy) * w + (x + dx);
                    sxx += static_cast<double>(ix[i]) * ix[i];
                    sxy += static_cast<double>(ix[i]) * iy[i];
                    syy += static_cast<double>(iy[i]) * iy[i];
                }
            }
            const double tr = sxx + syy;
            const double det_part = std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy);
            resp[static_cast<size_t>(y) * w + x] = static_cast<float>(0.5 * (tr - det_part));
        }
    }
    return resp;
}

}  // namespace

KeypointSet detect_keypoints(const Frame& frame, int max_count, double min_spacing) {
    if (frame.width < 8 || frame.height < 8) throw InvalidDimensions("detect_keypoints: frame too small");
    if (max_count < 4) throw InvalidDimensions("detect_keypoints: max_count must be >= 4");

    const int w = frame.width, h = frame.height;
    const std::vector<float> resp = corner_response(frame);

    float max_resp = 0.0f;
    for (float r : resp) max_resp = std::max(max_resp, r);
    const double floor_val = std::max(kAbsoluteFloor, kQualityLevel * static_cast<double>(max_resp));

    // 3x3 non-maximum suppression. Plateaus are broken toward the first pixel
    // in raster order: strictly greater than earlier neighbors, at least
    // equal to later ones.
    struct Cand {
        int x, y;
        float r;
    };
    std::vector<Cand> cands;
    for (int y = 2; y < h - 2; ++y) {
        for (int x = 2; x < w - 2; ++x) {
            const float r = resp[static_cast<size_t>(y) * w + x];
            if (r <= floor_val) continue;
            bool keep = true;
            for (int dy = -1; dy <= 1 && keep; ++dy) {
                for (int dx = -1; dx <= 1 && keep; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const float rn = resp[static_cast<size_t>(y + dy) * w + (x + dx)];
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (earlier ? (rn >= r) : (rn > r)) keep = false;
                }
            }
            if (keep) cands.push_back({x, y, r});
        }
    }
    if (static_cast<int>(cands.size()) < 4) {
        throw TooFewFeatures("detect_keypoints: fewer than 4 corners above the response floor");
    }

    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.r != b.r) return a.r > b.r;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    // Greedy spacing filter on a bucket grid.
    const double cell = std::max(1.0, min_spacing);
    const int gw = static_cast<int>(w / cell) + 1;
    const int gh = static_cast<int>(h / cell) + 1;
    std::vector<std::vector<int>> buckets(static_cast<size_t>(gw) * gh);
    const double spacing_sq = min_spacing * min_spacing;

    KeypointSet out;
    out.frame_index = frame.index;
    std::vector<Point2> accepted;
    for (const Cand& c : cands) {
        if (static_cast<int>(accepted.size()) >= max_count) break;
        const int bx = static_cast<int>(c.x / cell);
        const int by = static_cast<int>(c.y / cell);
        bool ok = true;
        for (int gy = std::max(0, by - 1); gy <= std::min(gh - 1, by + 1) && ok; ++gy) {
            for (int gx = std::max(0, bx - 1); gx <= std::min(gw - 1, bx + 1) && ok; ++gx) {
                for (int id : buckets[static_cast<size_t>(gy) * gw + gx]) {
                    const double ddx = accepted[id].x - c.x;
                    const double ddy = accepted[id].y - c.y;
                    if (ddx * ddx + ddy * ddy < spacing_sq) {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if (!ok) continue;
        buckets[static_cast<size_t>(by) * gw + bx].push_back(static_cast<int>(accepted.size()));
        accepted.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
        out.points.push_back({{static_cast<double>(c.x), static_cast<double>(c.y)},
                              static_cast<double>(c.r),
                              {},
                              false});
    }
    if (static_cast<int>(out.points.size()) < 4) {
        throw TooFewFeatures("detect_keypoints: fewer than 4 corners after spacing filter");
    }
    return out;
}

KeypointSet sample_motions(const KeypointSet& kps, const FlowField& flow) {
    if (kps.frame_index != flow.frame_index) {
        throw IndexMismatch("sample_motions: keypoints and flow refer to different frames");
    }
    KeypointSet out = kps;
    for (auto& kp : out.points) kp.motion = flow.sample(kp.pos);
    return out;
}

}  // namespace stab
