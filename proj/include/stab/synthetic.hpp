#pragma once

#include <filesystem>
#include <string>

#include "stab/frame.hpp"
#include "stab/smoothing.hpp"

namespace stab {

// Parametric shaky-camera sequence: a sinusoidal smooth path per axis plus
// seeded Gaussian jitter, rendered by translating a viewport over a base
// image. Optionally splits the frame into two planes where the right plane
// drifts with an extra per-frame velocity.
struct SyntheticSpec {
    std::string base;  // image path, or "procedural:WxH"
    int frames = 0;
    int width = 640;
    int height = 480;
    double amp_x = 0.0, period_x = 100.0, phase_x = 0.0;
    double amp_y = 0.0, period_y = 100.0, phase_y = 0.0;
    double jitter_sigma = 0.0;
    std::uint64_t seed = 0;
    double plane_split = -1.0;  // x fraction in (0,1); negative disables
    Vec2 plane_velocity;        // extra per-frame motion of the right plane
};

struct SyntheticResult {
    FrameSequence frames;
    TrajectoryField smooth_truth;    // 1x1 vertices: the global smooth path
    TrajectoryField unstable_truth;  // smooth path plus jitter
};

// Deterministic textured base image: multi-octave value noise with scattered
// high-contrast patches.
Frame make_procedural_base(int width, int height, std::uint64_t seed);

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const Frame& base);

// Resolves spec.base (file path or procedural) and generates.
SyntheticResult generate_synthetic(const SyntheticSpec& spec);

// Flat key=value spec file.
SyntheticSpec parse_synthetic_spec(const std::filesystem::path& path);

}  // namespace stab
