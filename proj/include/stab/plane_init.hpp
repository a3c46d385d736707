#pragma once

#include <array>
#include <vector>

#include "stab/frame.hpp"
#include "stab/geometry.hpp"

namespace stab {

// Per-frame plane decomposition of the keypoint motions: cluster labels,
// per-vertex plane assignment, and one homography per plane.
struct PlaneSegmentation {
    int frame_index = 0;
    int cluster_count = 1;               // 1 or 2
    std::vector<int> point_labels;       // per keypoint, 0 or 1
    std::array<int, 2> cluster_sizes{};  // members per cluster
    std::vector<int> vertex_labels;      // per mesh vertex; empty until assigned
    std::vector<Homography> homographies;  // per cluster; empty until fitted
    std::vector<std::vector<bool>> homography_inliers;  // per cluster, per keypoint of cluster
};

// Per-vertex motion field for one frame pair.
struct GridMotionField {
    enum class Stage { initialized, refined };
    int frame_index = 0;
    int rows = 0;  // vertex rows
    int cols = 0;  // vertex cols
    Stage stage = Stage::initialized;
    std::vector<Vec2> motions;  // rows*cols, row-major

    Vec2& at(int r, int c) { return motions[static_cast<size_t>(r) * cols + c]; }
    const Vec2& at(int r, int c) const { return motions[static_cast<size_t>(r) * cols + c]; }
};

// K-means (k=2, k-means++ seeding, 10 restarts) on the 2D motion vectors,
// followed by the master-cluster merge rule: a cluster smaller than
// merge_fraction * L is absorbed into the larger one.
PlaneSegmentation cluster_motions(const KeypointSet& kps, std::uint64_t seed,
                                  double merge_fraction = 0.2);

// Label every mesh vertex with the majority cluster among keypoints within
// the given radius; ties and empty neighborhoods fall back to the larger
// cluster.
PlaneSegmentation assign_grids(const PlaneSegmentation& seg, const KeypointSet& kps,
                               const GridMesh& mesh, double radius);

// Fit one homography per cluster over (p, p + m) correspondences.
PlaneSegmentation fit_plane_homographies(const PlaneSegmentation& seg, const KeypointSet& kps,
                                         const RansacConfig& ransac);

// Vertex motion from the assigned plane's homography displacement.
GridMotionField init_vertex_motion(const PlaneSegmentation& seg, const GridMesh& mesh);

}  // namespace stab
