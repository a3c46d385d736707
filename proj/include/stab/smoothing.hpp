#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stab/frame.hpp"
#include "stab/geometry.hpp"
#include "stab/plane_init.hpp"

namespace stab {

// Cumulative per-vertex positions over time. Frame 0 is anchored at (0,0).
struct TrajectoryField {
    int frames = 0;
    int rows = 0;  // vertex rows
    int cols = 0;  // vertex cols
    std::vector<Vec2> t;  // frames * rows * cols, frame-major then row-major

    int vertex_count() const { return rows * cols; }
    Vec2& at(int i, int v) { return t[static_cast<size_t>(i) * vertex_count() + v]; }
    const Vec2& at(int i, int v) const { return t[static_cast<size_t>(i) * vertex_count() + v]; }
};

inline constexpr int kTemporalRadius = 3;
inline constexpr int kKernelWeights = 12;  // 6 neighbors x 2 dimensions

// Per-vertex, per-time balance term and neighbor weights. Weight layout per
// (frame, vertex): 6 x-weights then 6 y-weights for temporal offsets
// {-3,-2,-1,+1,+2,+3}; out-of-range offsets carry weight 0.
struct SmoothingKernel {
    int frames = 0;
    int rows = 0;
    int cols = 0;
    std::vector<float> lambda;   // frames * rows * cols
    std::vector<float> weights;  // frames * rows * cols * 12

    int vertex_count() const { return rows * cols; }
    float lambda_at(int i, int v) const {
        return lambda[static_cast<size_t>(i) * vertex_count() + v];
    }
    const float* weights_at(int i, int v) const {
        return &weights[(static_cast<size_t>(i) * vertex_count() + v) * kKernelWeights];
    }
};

enum class KernelMode { uniform, bilateral, external };

struct SmoothingConfig {
    int iterations = 15;
    double lambda = 15.0;
    double lambda_shape = 40.0;
    double lambda_content = 20.0;
    KernelMode mode = KernelMode::bilateral;
    double sigma_time = 1.5;    // frames
    double sigma_motion = 5.0;  // pixels
    std::string kernel_file;    // external mode
};

// Prefix sums of per-frame vertex motions; E-1 motion fields yield E frames.
TrajectoryField accumulate(std::span<const GridMotionField> motions);

// Kernel heuristics standing in for a learned predictor. Uniform: unit
// weights. Bilateral: temporal Gaussian times a motion-similarity Gaussian
// against the locally-linear prediction, rescaled so the total weight mass
// matches the temporal-only kernel. External: loaded from kernel_file.
SmoothingKernel predict_kernel(const TrajectoryField& traj, const SmoothingConfig& cfg);

// One Jacobi update of T^t = (T + lambda * sum w T^{t-1}) / (1 + lambda * sum w),
// evaluated per dimension with that dimension's weights.
TrajectoryField smooth_step(const TrajectoryField& original, const TrajectoryField& current,
                            const SmoothingKernel& kernel);

// cfg.iterations Jacobi updates starting from the input trajectory.
TrajectoryField smooth(const TrajectoryField& traj, const SmoothingConfig& cfg);

// Diagnostic objective: distance + weighted local smoothness, plus
// shape-preserving and content-preserving terms on the displaced vertices.
double ts_objective(const TrajectoryField& traj, const TrajectoryField& smoothed,
                    const SmoothingKernel& kernel, std::span<const KeypointSet> kps,
                    const GridMesh& mesh, const SmoothingConfig& cfg);

// "DUTK" little-endian kernel file: magic, u32 frames/rows/cols, then per
// (frame, vertex): f32 lambda and 12 f32 weights.
void write_kernel_file(const std::filesystem::path& path, const SmoothingKernel& kernel);
SmoothingKernel read_kernel_file(const std::filesystem::path& path);

}  // namespace stab
