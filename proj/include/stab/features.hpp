#pragma once

#include "stab/frame.hpp"

namespace stab {

// Shi-Tomasi minimum-eigenvalue corners with 3x3 non-maximum suppression and
// a greedy pairwise spacing constraint. Deterministic for identical input.
// Throws TooFewFeatures when fewer than 4 corners clear the response floor.
KeypointSet detect_keypoints(const Frame& frame, int max_count, double min_spacing = 8.0);

// Attach motions: bilinear interpolation of the flow at each keypoint.
KeypointSet sample_motions(const KeypointSet& kps, const FlowField& flow);

}  // namespace stab
