#include "stab/plane_init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stab/errors.hpp"

namespace stab {

namespace {

struct KmeansResult {
    std::vector<int> labels;
    std::array<Vec2, 2> centers;
    double inertia = std::numeric_limits<double>::infinity();
};

double sqdist(const Vec2& a, const Vec2& b) {
    const double dx = a.dx - b.dx, dy = a.dy - b.dy;
    return dx * dx + dy * dy;
}

KmeansResult kmeans2(const std::vector<Vec2>& pts, std::uint64_t seed) {
    const int n = static_cast<int>(pts.size());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    KmeansResult res;
    res.centers[0] = pts[pick(rng)];

    // k-means++ second center: proportional to squared distance.
    std::vector<double> d2(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        d2[i] = sqdist(pts[i], res.centers[0]);
        total += d2[i];
    }
    if (total <= 0.0) {
        // all motions identical: degenerate second center, everything lands
        // in cluster 0 and the merge rule collapses to one cluster
        res.centers[1] = res.centers[0];
    } else {
        std::uniform_real_distribution<double> ur(0.0, total);
        double target = ur(rng);
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            target -= d2[i];
            if (target <= 0.0) {
                chosen = i;
                break;
            }
        }
        res.centers[1] = pts[chosen];
    }

    res.labels.assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        std::array<int, 2> count{0, 0};
        for (int i = 0; i < n; ++i) {
            const int l = sqdist(pts[i], res.centers[0]) <= sqdist(pts[i], res.centers[1]) ? 0 : 1;
            if (l != res.labels[i]) {
                res.labels[i] = l;
                changed = true;
            }
            ++count[l];
        }
        std::array<Vec2, 2> mean{};
        for (int i = 0; i < n; ++i) {
            mean[res.labels[i]].dx += pts[i].dx;
            mean[res.labels[i]].dy += pts[i].dy;
        }
        for (int c = 0; c < 2; ++c) {
            if (count[c] > 0) {
                res.centers[c] = {mean[c].dx / count[c], mean[c].dy / count[c]};
            } else {
                // empty cluster: restart it at the point farthest from the
                // surviving center
                int far_idx = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sqdist(pts[i], res.centers[1 - c]);
                    if (d > far_d) {
                        far_d = d;
                        far_idx = i;
                    }
                }
                res.centers[c] = pts[far_idx];
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
    }

    res.inertia = 0.0;
    for (int i = 0; i < n; ++i) res.inertia += sqdist(pts[i], res.centers[res.labels[i]]);
    return res;
}

}  // namespace

PlaneSegmentation cluster_motions(const KeypointSet& kps, std::uint64_t seed,
                                  double merge_fraction) {
    const int n = static_cast<int>(kps.points.size());
    if (n < 8) throw TooFewPoints("cluster_motions: need at least 8 keypoints");

    std::vector<Vec2> motions(n);
    for (int i = 0; i < n; ++i) motions[i] = kps.points[i].motion;

    KmeansResult best;
    for (int restart = 0; restart < 10; ++restart) {
        KmeansResult r = kmeans2(motions, derive_seed(seed, 11, restart));
        if (r.inertia < best.inertia) best = r;
    }

    PlaneSegmentation seg;
    seg.frame_index = kps.frame_index;
    seg.point_labels = best.labels;
    std::array<int, 2> sizes{0, 0};
    for (int l : best.labels) ++sizes[l];

    // Canonical order: cluster 0 is the larger (master) cluster.
    if (sizes[1] > sizes[0]) {
        for (int& l : seg.point_labels) l = 1 - l;
        std::swap(sizes[0], sizes[1]);
    }

    const int threshold = static_cast<int>(std::floor(merge_fraction * n));
    if (sizes[1] < threshold) {
        std::fill(seg.point_labels.begin(), seg.point_labels.end(), 0);
        seg.cluster_count = 1;
        seg.cluster_sizes = {n, 0};
    } else {
        seg.cluster_count = 2;
        seg.cluster_sizes = sizes;
    }
    return seg;
}

PlaneSegmentation assign_grids(const PlaneSegmentation& seg, const KeypointSet& kps,
                               const GridMesh& mesh, double radius) {
    if (radius <= 0.0) throw InvalidDimensions("assign_grids: radius must be positive");
    if (seg.point_labels.size() != kps.points.size()) {
        throw IndexMismatch("assign_grids: segmentation and keypoints disagree");
    }
    PlaneSegmentation out = seg;
    out.vertex_labels.assign(mesh.vertex_count(), 0);
    if (seg.cluster_count == 1) return out;

    const int master = seg.cluster_sizes[1] > seg.cluster_sizes[0] ? 1 : 0;
    const double r2 = radius * radius;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Point2& p = mesh.vertices[v];
        std::array<int, 2> votes{0, 0};
        for (size_t j = 0; j < kps.points.size(); ++j) {
            const double dx = kps.points[j].pos.x - p.x;
            const double dy = kps.points[j].pos.y - p.y;
            if (dx * dx + dy * dy <= r2) ++votes[seg.point_labels[j]];
        }
        if (votes[0] == votes[1]) {
            out.vertex_labels[v] = master;
        } else {
            out.vertex_labels[v] = votes[1] > votes[0] ? 1 : 0;
        }
    }
    return out;
}

PlaneSegmentation fit_plane_homographies(const PlaneSegmentation& seg, const KeypointSet& kps,
                                         const RansacConfig& ransac) {
    PlaneSegmentation out = seg;
    out.homographies.clear();
    out.homography_inliers.clear();
    for (int c = 0; c < seg.cluster_count; ++c) {
        std::vector<Point2> src, dst;
        for (size_t j = 0; j < kps.points.size(); ++j) {
            if (seg.point_labels[j] == c) {
                src.push_back(kps.points[j].pos);
                dst.push_back(kps.points[j].pos + kps.points[j].motion);
            }
        }
        if (src.size() < 4) {
            throw InsufficientPoints("fit_plane_homographies: cluster " + std::to_string(c) +
                                     " has fewer than 4 keypoints");
        }
        RansacConfig cfg = ransac;
        cfg.seed = derive_seed(ransac.seed, 13, static_cast<std::uint64_t>(c));
        HomographyFit fit = fit_homography(src, dst, cfg);
        out.homographies.push_back(fit.h);
        out.homography_inliers.push_back(fit.inliers);
    }
    return out;
}

GridMotionField init_vertex_motion(const PlaneSegmentation& seg, const GridMesh& mesh) {
    if (seg.homographies.empty() ||
        static_cast<int>(seg.homographies.size()) < seg.cluster_count) {
        throw Error("init_vertex_motion: plane homographies not fitted");
    }
    if (static_cast<int>(seg.vertex_labels.size()) != mesh.vertex_count()) {
        throw ShapeMismatch("init_vertex_motion: vertex labels missing or wrong size");
    }
    GridMotionField field;
    field.frame_index = seg.frame_index;
    field.rows = mesh.vertex_rows();
    field.cols = mesh.vertex_cols();
    field.stage = GridMotionField::Stage::initialized;
    field.motions.resize(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Homography& h = seg.homographies[seg.vertex_labels[v]];
        const Point2 mapped = h.apply(mesh.vertices[v]);
        field.motions[v] = mapped - mesh.vertices[v];
    }
    return field;
}

}  // namespace stab
