#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stab/frame.hpp"
#include "stab/geometry.hpp"
#include "stab/smoothing.hpp"

namespace stab {

struct FrameMetrics {
    int frame = 0;
    double distortion = 1.0;
    double cropping = 1.0;
    double distance = 0.0;
};

struct StabilizationReport {
    double stability = 0.0;
    double distortion = 1.0;     // minimum over frames
    double cropping = 1.0;       // mean over frames
    double distance_mean = 0.0;  // mean Frobenius distance to identity
    std::vector<FrameMetrics> per_frame;
    bool negative_determinant_warning = false;

    std::string to_json() const;
};

struct NoiseSpec {
    enum class Kind { gaussian, salt_pepper, blank };
    Kind kind = Kind::gaussian;
    double fraction = 0.10;  // of pixels, in (0, 1]
    double sigma = 0.10;     // gaussian std as a fraction of the max flow magnitude
    std::uint64_t seed = 0;
};

// Fraction of spectral energy of the per-frame trajectory increments that
// falls in the 2nd..6th non-DC frequency bins, averaged over vertices and
// dimensions. Static trajectories score 1 by convention.
double stability_score(const TrajectoryField& traj);

// Per-frame homography between corresponding input and output frames,
// estimated from tracked keypoints.
std::vector<Homography> frame_pair_homographies(const FrameSequence& in, const FrameSequence& out,
                                                int max_keypoints = 512, std::uint64_t seed = 0);

// Anisotropy of the affine part: smaller over larger singular value, reported
// as the minimum over frames.
double distortion_score(const FrameSequence& in, const FrameSequence& out,
                        std::vector<double>* per_frame = nullptr);
double distortion_from_homographies(const std::vector<Homography>& hs,
                                    std::vector<double>* per_frame = nullptr);

// Linear content scale of the transform folded to [0,1], averaged over
// frames. Negative determinants clamp to zero and raise the warning flag.
double cropping_score(const FrameSequence& in, const FrameSequence& out,
                      std::vector<double>* per_frame = nullptr, bool* warning = nullptr);
double cropping_from_homographies(const std::vector<Homography>& hs,
                                  std::vector<double>* per_frame = nullptr,
                                  bool* warning = nullptr);

// Frobenius norm of (h - I).
double homography_distance(const Homography& h);

// Seeded noise over contiguous random rectangles covering exactly
// round(fraction * pixels) pixels.
FlowField inject_noise(const FlowField& flow, const NoiseSpec& spec);

}  // namespace stab
