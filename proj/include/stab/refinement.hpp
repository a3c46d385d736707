#pragma once

#include <vector>

#include "stab/frame.hpp"
#include "stab/geometry.hpp"
#include "stab/plane_init.hpp"

namespace stab {

// Per-keypoint reliability flags; true means the keypoint participates in
// the refinement objective.
struct OcclusionMask {
    int frame_index = 0;
    std::vector<bool> reliable;
};

struct RefinementConfig {
    double lambda_motion = 10.0;  // L1 keypoint-consistency weight
    double lambda_vertex = 40.0;  // quadratic reprojection weight
    double lambda_shape = 40.0;   // cell shape-preservation weight
    double huber_delta = 1.0;     // pixels; smoothing of the L1 term
    int max_iterations = 50;
    double tolerance = 1e-6;      // gradient infinity-norm stop
    double radius = 200.0;        // vertex neighborhood for the L1 term
};

// Residual between each keypoint's observed target and its own plane's
// homography image: p + m - H_c(p).
std::vector<Vec2> residual_motions(const KeypointSet& kps, const PlaneSegmentation& seg);

// Dense flow implied by the vertex motions (bilinear over the mesh).
FlowField reconstruct_flow(const GridMotionField& motion, const GridMesh& mesh, int width,
                           int height);

// Forward-consistency occlusion test evaluated at the keypoints:
// |OF - w(OF_hat)|^2 < a1 (|OF|^2 - |w(OF_hat)|^2) + a2, with the
// reconstructed flow sampled at the flow-displaced position.
OcclusionMask occlusion_mask(const FlowField& flow, const FlowField& reconstructed,
                             const KeypointSet& kps, double alpha1 = 0.01, double alpha2 = 0.5);

// Cell-shape penalty: for each cell with displaced vertices v^ (clockwise
// top-left, top-right, bottom-right), the deviation of
// v^3 - (v^2 + R90(v^1 - v^2)) from its rest-pose value. Zero for any rigid
// translation of the mesh, on cells of any aspect ratio.
double shape_loss(const GridMotionField& motion, const GridMesh& mesh);

double mr_objective(const GridMotionField& motion, const KeypointSet& kps,
                    const OcclusionMask& mask, const GridMesh& mesh,
                    const RefinementConfig& cfg);

// Exact gradient of mr_objective with respect to the vertex motions.
std::vector<Vec2> mr_objective_gradient(const GridMotionField& motion, const KeypointSet& kps,
                                        const OcclusionMask& mask, const GridMesh& mesh,
                                        const RefinementConfig& cfg);

// Damped Gauss-Newton / IRLS minimization of mr_objective starting from the
// initialized field. The objective never increases across accepted steps.
GridMotionField refine(const GridMotionField& initial, const KeypointSet& kps,
                       const OcclusionMask& mask, const GridMesh& mesh,
                       const RefinementConfig& cfg);

}  // namespace stab
