#include "stab/refinement.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

namespace {

// Huberized absolute value: quadratic inside delta, linear outside. C1.
inline double huber(double t, double delta) {
    const double a = std::abs(t);
    return a <= delta ? t * t / (2.0 * delta) : a - 0.5 * delta;
}

inline double huber_grad(double t, double delta) {
    return std::abs(t) <= delta ? t / delta : (t > 0 ? 1.0 : -1.0);
}

inline double huber_curvature(double t, double delta) {
    const double a = std::abs(t);
    return a <= delta ? 1.0 / delta : 1.0 / a;
}

// 90-degree rotation fixing the square-cell identity v3 = v2 + R90(v1 - v2)
// for clockwise vertices.
inline Vec2 rot90(const Vec2& v) { return {v.dy, -v.dx}; }

struct Problem {
    const GridMesh* mesh;
    const KeypointSet* kps;
    const OcclusionMask* mask;
    const RefinementConfig* cfg;
    std::vector<std::vector<int>> omega;      // per vertex: keypoint ids within radius
    std::vector<BilinearWeights> kp_weights;  // per keypoint
};

Problem build_problem(const KeypointSet& kps, const OcclusionMask& mask, const GridMesh& mesh,
                      const RefinementConfig& cfg) {
    if (mask.reliable.size() != kps.points.size()) {
        throw IndexMismatch("refinement: occlusion mask length differs from keypoint count");
    }
    Problem p{&mesh, &kps, &mask, &cfg, {}, {}};
    p.omega.resize(mesh.vertex_count());
    const double r2 = cfg.radius * cfg.radius;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Point2& vp = mesh.vertices[v];
        for (size_t j = 0; j < kps.points.size(); ++j) {
            const double dx = kps.points[j].pos.x - vp.x;
            const double dy = kps.points[j].pos.y - vp.y;
            if (dx * dx + dy * dy <= r2) p.omega[v].push_back(static_cast<int>(j));
        }
    }
    p.kp_weights.reserve(kps.points.size());
    for (const auto& kp : kps.points) {
        Point2 pos{std::clamp(kp.pos.x, 0.0, mesh.width), std::clamp(kp.pos.y, 0.0, mesh.height)};
        p.kp_weights.push_back(bilinear_weights(mesh, pos));
    }
    return p;
}

double objective(const Problem& p, const std::vector<Vec2>& n) {
    const auto& kps = p.kps->points;
    const auto& rel = p.mask->reliable;
    const RefinementConfig& cfg = *p.cfg;

    double term_motion = 0.0;
    for (int v = 0; v < p.mesh->vertex_count(); ++v) {
        for (int j : p.omega[v]) {
            if (!rel[j]) continue;
            term_motion += huber(n[v].dx - kps[j].motion.dx, cfg.huber_delta) +
                           huber(n[v].dy - kps[j].motion.dy, cfg.huber_delta);
        }
    }

    double term_vertex = 0.0;
    for (size_t j = 0; j < kps.size(); ++j) {
        if (!rel[j]) continue;
        const BilinearWeights& bw = p.kp_weights[j];
        double rx = kps[j].pos.x + kps[j].motion.dx;
        double ry = kps[j].pos.y + kps[j].motion.dy;
        for (int o = 0; o < 4; ++o) {
            const int vi = bw.vertex[o];
            rx -= bw.w[o] * (p.mesh->vertices[vi].x + n[vi].dx);
            ry -= bw.w[o] * (p.mesh->vertices[vi].y + n[vi].dy);
        }
        term_vertex += rx * rx + ry * ry;
    }

    double term_shape = 0.0;
    const GridMesh& mesh = *p.mesh;
    for (int cr = 0; cr < mesh.rows; ++cr) {
        for (int cc = 0; cc < mesh.cols; ++cc) {
            const Vec2& n1 = n[mesh.vertex_index(cr, cc)];
            const Vec2& n2 = n[mesh.vertex_index(cr, cc + 1)];
            const Vec2& n3 = n[mesh.vertex_index(cr + 1, cc + 1)];
            const Vec2 r = (n3 - n2) - rot90(n1 - n2);
            term_shape += squared_norm(r);
        }
    }

    return cfg.lambda_motion * term_motion + cfg.lambda_vertex * term_vertex +
           cfg.lambda_shape * term_shape;
}

std::vector<Vec2> gradient(const Problem& p, const std::vector<Vec2>& n) {
    const auto& kps = p.kps->points;
    const auto& rel = p.mask->reliable;
    const RefinementConfig& cfg = *p.cfg;
    std::vector<Vec2> g(n.size());

    for (int v = 0; v < p.mesh->vertex_count(); ++v) {
        for (int j : p.omega[v]) {
            if (!rel[j]) continue;
            g[v].dx += cfg.lambda_motion * huber_grad(n[v].dx - kps[j].motion.dx, cfg.huber_delta);
            g[v].dy += cfg.lambda_motion * huber_grad(n[v].dy - kps[j].motion.dy, cfg.huber_delta);
        }
    }

    for (size_t j = 0; j < kps.size(); ++j) {
        if (!rel[j]) continue;
        const BilinearWeights& bw = p.kp_weights[j];
        double rx = kps[j].pos.x + kps[j].motion.dx;
        double ry = kps[j].pos.y + kps[j].motion.dy;
        for (int o = 0; o < 4; ++o) {
            const int vi = bw.vertex[o];
            rx -= bw.w[o] * (p.mesh->vertices[vi].x + n[vi].dx);
            ry -= bw.w[o] * (p.mesh->vertices[vi].y + n[vi].dy);
        }
        for (int o = 0; o < 4; ++o) {
            const int vi = bw.vertex[o];
            g[vi].dx -= 2.0 * cfg.lambda_vertex * bw.w[o] * rx;
            g[vi].dy -= 2.0 * cfg.lambda_vertex * bw.w[o] * ry;
        }
    }

    const GridMesh& mesh = *p.mesh;
    for (int cr = 0; cr < mesh.rows; ++cr) {
        for (int cc = 0; cc < mesh.cols; ++cc) {
            const int i1 = mesh.vertex_index(cr, cc);
            const int i2 = mesh.vertex_index(cr, cc + 1);
            const int i3 = mesh.vertex_index(cr + 1, cc + 1);
            const Vec2 r = (n[i3] - n[i2]) - rot90(n[i1] - n[i2]);
            const double s = 2.0 * cfg.lambda_shape;
            // r.dx = n3x - n2x - (n1y - n2y), r.dy = n3y - n2y + (n1x - n2x)
            g[i3].dx += s * r.dx;
            g[i3].dy += s * r.dy;
            g[i2].dx += s * (-r.dx - r.dy);
            g[i2].dy += s * (r.dx - r.dy);
            g[i1].dx += s * r.dy;
            g[i1].dy += s * (-r.dx);
        }
    }
    return g;
}

}  // namespace

std::vector<Vec2> residual_motions(const KeypointSet& kps, const PlaneSegmentation& seg) {
    if (seg.point_labels.size() != kps.points.size() || seg.homographies.empty()) {
        throw IndexMismatch("residual_motions: segmentation does not match keypoints");
    }
    std::vector<Vec2> out(kps.points.size());
    for (size_t j = 0; j < kps.points.size(); ++j) {
        const Homography& h = seg.homographies[seg.point_labels[j]];
        const Point2 target = kps.points[j].pos + kps.points[j].motion;
        const Point2 mapped = h.apply(kps.points[j].pos);
        out[j] = target - mapped;
    }
    return out;
}

FlowField reconstruct_flow(const GridMotionField& motion, const GridMesh& mesh, int width,
                           int height) {
    FlowField flow = make_flow(motion.frame_index, width, height);
    const double cw = mesh.cell_width();
    const double ch = mesh.cell_height();
    for (int y = 0; y < height; ++y) {
        const int cr = std::min(static_cast<int>(y / ch), mesh.rows - 1);
        const double fy = (y - cr * ch) / ch;
        for (int x = 0; x < width; ++x) {
            const int cc = std::min(static_cast<int>(x / cw), mesh.cols - 1);
            const double fx = (x - cc * cw) / cw;
            const Vec2& n1 = motion.at(cr, cc);
            const Vec2& n2 = motion.at(cr, cc + 1);
            const Vec2& n3 = motion.at(cr + 1, cc + 1);
            const Vec2& n4 = motion.at(cr + 1, cc);
            const double w1 = (1 - fx) * (1 - fy), w2 = fx * (1 - fy);
            const double w3 = fx * fy, w4 = (1 - fx) * fy;
            flow.set(x, y, static_cast<float>(w1 * n1.dx + w2 * n2.dx + w3 * n3.dx + w4 * n4.dx),
                     static_cast<float>(w1 * n1.dy + w2 * n2.dy + w3 * n3.dy + w4 * n4.dy));
        }
    }
    return flow;
}

OcclusionMask occlusion_mask(const FlowField& flow, const FlowField& reconstructed,
                             const KeypointSet& kps, double alpha1, double alpha2) {
    if (flow.width != reconstructed.width || flow.height != reconstructed.height) {
        throw DimensionMismatch("occlusion_mask: flow fields differ in size");
    }
    OcclusionMask mask;
    mask.frame_index = kps.frame_index;
    mask.reliable.resize(kps.points.size());
    for (size_t j = 0; j < kps.points.size(); ++j) {
        const Vec2 of = flow.sample(kps.points[j].pos);
        const Vec2 rec = reconstructed.sample(kps.points[j].pos + of);
        const Vec2 diff = of - rec;
        mask.reliable[j] =
            squared_norm(diff) < alpha1 * (squared_norm(of) - squared_norm(rec)) + alpha2;
    }
    return mask;
}

double shape_loss(const GridMotionField& motion, const GridMesh& mesh) {
    if (motion.rows != mesh.vertex_rows() || motion.cols != mesh.vertex_cols()) {
        throw ShapeMismatch("shape_loss: motion field does not match mesh");
    }
    double total = 0.0;
    for (int cr = 0; cr < mesh.rows; ++cr) {
        for (int cc = 0; cc < mesh.cols; ++cc) {
            const Vec2& n1 = motion.at(cr, cc);
            const Vec2& n2 = motion.at(cr, cc + 1);
            const Vec2& n3 = motion.at(cr + 1, cc + 1);
            const Vec2 r = (n3 - n2) - rot90(n1 - n2);
            total += squared_norm(r);
        }
    }
    return total;
}

double mr_objective(const GridMotionField& motion, const KeypointSet& kps,
                    const OcclusionMask& mask, const GridMesh& mesh,
                    const RefinementConfig& cfg) {
    const Problem p = build_problem(kps, mask, mesh, cfg);
    return objective(p, motion.motions);
}

std::vector<Vec2> mr_objective_gradient(const GridMotionField& motion, const KeypointSet& kps,
                                        const OcclusionMask& mask, const GridMesh& mesh,
                                        const RefinementConfig& cfg) {
    const Problem p = build_problem(kps, mask, mesh, cfg);
    return gradient(p, motion.motions);
}

GridMotionField refine(const GridMotionField& initial, const KeypointSet& kps,
                       const OcclusionMask& mask, const GridMesh& mesh,
                       const RefinementConfig& cfg) {
    if (initial.rows != mesh.vertex_rows() || initial.cols != mesh.vertex_cols()) {
        throw ShapeMismatch("refine: motion field does not match mesh");
    }
    const Problem p = build_problem(kps, mask, mesh, cfg);
    const int nv = mesh.vertex_count();
    const int dim = 2 * nv;

    std::vector<Vec2> n = initial.motions;
    double f = objective(p, n);
    if (!std::isfinite(f)) throw NonFiniteObjective("refine: objective is not finite at the input");

    const auto& pts = kps.points;
    const auto& rel = mask.reliable;
    double mu = 1e-4;

    for (int outer = 0; outer < cfg.max_iterations; ++outer) {
        const std::vector<Vec2> g = gradient(p, n);
        double gmax = 0.0;
        for (const Vec2& gv : g) gmax = std::max({gmax, std::abs(gv.dx), std::abs(gv.dy)});
        if (gmax < cfg.tolerance) break;

        // Gauss-Newton / IRLS surrogate Hessian.
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<size_t>(nv) * 8 + pts.size() * 64 +
                      static_cast<size_t>(mesh.rows) * mesh.cols * 20);

        for (int v = 0; v < nv; ++v) {
            double wx = 0.0, wy = 0.0;
            for (int j : p.omega[v]) {
                if (!rel[j]) continue;
                wx += cfg.lambda_motion *
                      huber_curvature(n[v].dx - pts[j].motion.dx, cfg.huber_delta);
                wy += cfg.lambda_motion *
                      huber_curvature(n[v].dy - pts[j].motion.dy, cfg.huber_delta);
            }
            if (wx > 0.0) trips.emplace_back(2 * v, 2 * v, wx);
            if (wy > 0.0) trips.emplace_back(2 * v + 1, 2 * v + 1, wy);
        }

        for (size_t j = 0; j < pts.size(); ++j) {
            if (!rel[j]) continue;
            const BilinearWeights& bw = p.kp_weights[j];
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    const double h = 2.0 * cfg.lambda_vertex * bw.w[a] * bw.w[b];
                    if (h == 0.0) continue;
                    trips.emplace_back(2 * bw.vertex[a], 2 * bw.vertex[b], h);
                    trips.emplace_back(2 * bw.vertex[a] + 1, 2 * bw.vertex[b] + 1, h);
                }
            }
        }

        for (int cr = 0; cr < mesh.rows; ++cr) {
            for (int cc = 0; cc < mesh.cols; ++cc) {
                const int i1 = mesh.vertex_index(cr, cc);
                const int i2 = mesh.vertex_index(cr, cc + 1);
                const int i3 = mesh.vertex_index(cr + 1, cc + 1);
                // r_x touches (n1y:-1, n2x:-1, n2y:+1, n3x:+1);
                // r_y touches (n1x:+1, n2x:-1, n2y:-1, n3y:+1)
                const std::array<std::pair<int, double>, 4> row_x{
                    std::pair{2 * i1 + 1, -1.0}, std::pair{2 * i2, -1.0},
                    std::pair{2 * i2 + 1, 1.0}, std::pair{2 * i3, 1.0}};
                const std::array<std::pair<int, double>, 4> row_y{
                    std::pair{2 * i1, 1.0}, std::pair{2 * i2, -1.0},
                    std::pair{2 * i2 + 1, -1.0}, std::pair{2 * i3 + 1, 1.0}};
                for (const auto& row : {row_x, row_y}) {
                    for (const auto& [ia, ca] : row) {
                        for (const auto& [ib, cb] : row) {
                            trips.emplace_back(ia, ib, 2.0 * cfg.lambda_shape * ca * cb);
                        }
                    }
                }
            }
        }

        Eigen::SparseMatrix<double> a(dim, dim);
        a.setFromTriplets(trips.begin(), trips.end());

        Eigen::VectorXd rhs(dim);
        for (int v = 0; v < nv; ++v) {
            rhs(2 * v) = -g[v].dx;
            rhs(2 * v + 1) = -g[v].dy;
        }

        Eigen::VectorXd diag(dim);
        for (int i = 0; i < dim; ++i) diag(i) = std::max(a.coeff(i, i), 1e-12);

        bool accepted = false;
        for (int inner = 0; inner < 25; ++inner) {
            Eigen::SparseMatrix<double> damped = a;
            for (int i = 0; i < dim; ++i) damped.coeffRef(i, i) += mu * diag(i);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
            if (solver.info() != Eigen::Success) {
                mu *= 4.0;
                continue;
            }
            const Eigen::VectorXd step = solver.solve(rhs);
            std::vector<Vec2> cand(n);
            for (int v = 0; v < nv; ++v) {
                cand[v].dx += step(2 * v);
                cand[v].dy += step(2 * v + 1);
            }
            const double fc = objective(p, cand);
            if (std::isfinite(fc) && fc < f) {
                n = std::move(cand);
                f = fc;
                mu = std::max(mu / 3.0, 1e-10);
                accepted = true;
                break;
            }
            mu *= 4.0;
            if (mu > 1e14) break;
        }
        if (!accepted) break;  // no descent direction left at numeric precision
    }

    GridMotionField out = initial;
    out.motions = std::move(n);
    out.stage = GridMotionField::Stage::refined;
    return out;
}

}  // namespace stab
