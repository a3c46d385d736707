#include "stab/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace stab {

namespace {

constexpr double kSingularEps = 1e-12;
constexpr double kProjectionEps = 1e-9;

// Hartley conditioning: translate centroid to origin, scale mean distance
// to sqrt(2). Returns the conditioning transform as a 3x3 matrix.
Eigen::Matrix3d normalize_points(std::span<const Point2> pts, std::vector<Point2>& out) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());

    double mean_dist = 0.0;
    for (const auto& p : pts) {
        mean_dist += std::hypot(p.x - cx, p.y - cy);
    }
    mean_dist /= static_cast<double>(pts.size());

    const double scale = mean_dist > kSingularEps ? std::sqrt(2.0) / mean_dist : 1.0;

    out.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        out[i].x = scale * (pts[i].x - cx);
        out[i].y = scale * (pts[i].y - cy);
    }

    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
    t(0, 0) = scale;
    t(1, 1) = scale;
    t(0, 2) = -scale * cx;
    t(1, 2) = -scale * cy;
    return t;
}

// Unnormalized DLT on pre-conditioned points. Throws DegenerateConfiguration
// when the constraint matrix is rank-deficient.
Eigen::Matrix3d dlt_core(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
    const int n = static_cast<int>(src.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (int i = 0; i < n; ++i) {
        const double x = src[i].x, y = src[i].y;
        const double u = dst[i].x, v = dst[i].y;
        a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // Rank 8 is required for a unique solution; collinear or duplicated
    // points drop it below that.
    if (sv(7) < kSingularEps * std::max(1.0, sv(0))) {
        throw DegenerateConfiguration("homography DLT: degenerate point configuration");
    }
    Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return m;
}

Homography homography_from_eigen(const Eigen::Matrix3d& m) {
    std::array<double, 9> a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r * 3 + c] = m(r, c);
    return Homography::from_matrix(a);
}

double reprojection_error(const Homography& h, const Point2& s, const Point2& d) {
    const double w = h.at(2, 0) * s.x + h.at(2, 1) * s.y + 1.0;
    if (std::abs(w) < kProjectionEps) return std::numeric_limits<double>::infinity();
    const double u = (h.at(0, 0) * s.x + h.at(0, 1) * s.y + h.at(0, 2)) / w;
    const double v = (h.at(1, 0) * s.x + h.at(1, 1) * s.y + h.at(1, 2)) / w;
    return std::hypot(u - d.x, v - d.y);
}

bool sample_degenerate(std::span<const Point2> pts, const std::array<int, 4>& idx) {
    // Any three collinear (or coincident) points in the sample make the
    // minimal DLT ill-posed.
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            for (int c = b + 1; c < 4; ++c) {
                const Point2& p = pts[idx[a]];
                const Point2& q = pts[idx[b]];
                const Point2& r = pts[idx[c]];
                const double cross = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
                if (std::abs(cross) < 1e-9) return true;
            }
        }
    }
    return false;
}

bool all_collinear(std::span<const Point2> pts) {
    if (pts.size() < 3) return true;
    const Point2& p = pts[0];
    // Find a second distinct point, then test the rest against that line.
    size_t j = 1;
    while (j < pts.size() && std::hypot(pts[j].x - p.x, pts[j].y - p.y) < 1e-12) ++j;
    if (j == pts.size()) return true;
    const Point2& q = pts[j];
    for (size_t k = 0; k < pts.size(); ++k) {
        const double cross = (q.x - p.x) * (pts[k].y - p.y) - (q.y - p.y) * (pts[k].x - p.x);
        if (std::abs(cross) > 1e-7 * (1.0 + std::hypot(q.x - p.x, q.y - p.y))) return false;
    }
    return true;
}

int adaptive_iterations(int sample_size, double confidence, double inlier_ratio, int cap) {
    if (inlier_ratio >= 1.0) return 1;
    if (inlier_ratio <= 0.0) return cap;
    const double denom = std::log(1.0 - std::pow(inlier_ratio, sample_size));
    if (!(denom < 0.0)) return cap;
    const double need = std::log(1.0 - confidence) / denom;
    if (need >= static_cast<double>(cap)) return cap;
    return std::max(1, static_cast<int>(std::ceil(need)));
}

}  // namespace

double norm(const Vec2& v) { return std::hypot(v.dx, v.dy); }
double squared_norm(const Vec2& v) { return v.dx * v.dx + v.dy * v.dy; }

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography Homography::identity() { return Homography(); }

Homography Homography::translation(double tx, double ty) {
    Homography h;
    h.m_[2] = tx;
    h.m_[5] = ty;
    return h;
}

Homography Homography::from_matrix(const std::array<double, 9>& row_major) {
    const double w = row_major[8];
    double max_abs = 0.0;
    for (double v : row_major) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs <= 0.0 || std::abs(w) < kSingularEps * max_abs) {
        throw DegenerateConfiguration("homography: bottom-right entry vanishes under normalization");
    }
    Homography h;
    for (int i = 0; i < 9; ++i) h.m_[i] = row_major[i] / w;
    h.m_[8] = 1.0;
    if (std::abs(h.determinant()) <= kSingularEps) {
        throw DegenerateConfiguration("homography: singular matrix");
    }
    return h;
}

double Homography::determinant() const {
    const auto& m = m_;
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Point2 Homography::apply(const Point2& p) const {
    const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
    if (std::abs(w) < kProjectionEps) {
        throw DegenerateProjection("homography application: projective denominator below threshold");
    }
    return {(m_[0] * p.x + m_[1] * p.y + m_[2]) / w, (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
}

Homography Homography::inverse() const {
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = m_[r * 3 + c];
    Eigen::Matrix3d inv = m.inverse();
    std::array<double, 9> a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r * 3 + c] = inv(r, c);
    return from_matrix(a);
}

Point2 apply_homography(const Homography& h, const Point2& p) { return h.apply(p); }

Homography fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
    if (src.size() != dst.size()) throw DimensionMismatch("DLT: size mismatch");
    if (src.size() < 4) throw InsufficientPoints("DLT: need at least 4 correspondences");
    std::vector<Point2> ns, nd;
    const Eigen::Matrix3d ts = normalize_points(src, ns);
    const Eigen::Matrix3d td = normalize_points(dst, nd);
    const Eigen::Matrix3d hn = dlt_core(ns, nd);
    const Eigen::Matrix3d h = td.inverse() * hn * ts;
    return homography_from_eigen(h);
}

HomographyFit fit_homography(std::span<const Point2> src, std::span<const Point2> dst,
                             const RansacConfig& cfg) {
    if (src.size() != dst.size()) throw DimensionMismatch("fit_homography: size mismatch");
    const int n = static_cast<int>(src.size());
    if (n < 4) throw InsufficientPoints("fit_homography: need at least 4 correspondences");
    if (all_collinear(src) || all_collinear(dst)) {
        throw DegenerateConfiguration("fit_homography: all points collinear");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    std::vector<bool> best_mask(n, false);
    int best_count = 0;
    int iterations = cfg.max_iterations;

    for (int it = 0; it < iterations; ++it) {
        std::array<int, 4> idx{};
        for (int k = 0; k < 4;) {
            const int cand = pick(rng);
            bool dup = false;
            for (int j = 0; j < k; ++j) dup |= (idx[j] == cand);
            if (!dup) idx[k++] = cand;
        }
        if (sample_degenerate(src, idx) || sample_degenerate(dst, idx)) continue;

        const std::vector<Point2> s4{src[idx[0]], src[idx[1]], src[idx[2]], src[idx[3]]};
        const std::vector<Point2> d4{dst[idx[0]], dst[idx[1]], dst[idx[2]], dst[idx[3]]};
        Homography h;
        try {
            h = fit_homography_dlt(s4, d4);
        } catch (const Error&) {
            continue;
        }

        int count = 0;
        std::vector<bool> mask(n, false);
        for (int i = 0; i < n; ++i) {
            if (reprojection_error(h, src[i], dst[i]) < cfg.threshold) {
                mask[i] = true;
                ++count;
            }
        }
        if (count > best_count) {
            best_count = count;
            best_mask = mask;
            iterations = std::min(
                iterations,
                it + 1 + adaptive_iterations(4, cfg.confidence,
                                             static_cast<double>(count) / n, cfg.max_iterations));
        }
    }

    if (best_count < 4) throw NoConsensus("fit_homography: consensus below 4 inliers");

    // Refit on the consensus set and re-evaluate the mask; one more round of
    // refitting lets the inlier set settle.
    HomographyFit fit;
    fit.inliers = best_mask;
    for (int round = 0; round < 2; ++round) {
        std::vector<Point2> s, d;
        for (int i = 0; i < n; ++i) {
            if (fit.inliers[i]) {
                s.push_back(src[i]);
                d.push_back(dst[i]);
            }
        }
        if (static_cast<int>(s.size()) < 4) throw NoConsensus("fit_homography: consensus collapsed");
        fit.h = fit_homography_dlt(s, d);
        for (int i = 0; i < n; ++i) {
            fit.inliers[i] = reprojection_error(fit.h, src[i], dst[i]) < cfg.threshold;
        }
    }
    fit.inlier_count = static_cast<int>(std::count(fit.inliers.begin(), fit.inliers.end(), true));
    if (fit.inlier_count < 4) throw NoConsensus("fit_homography: consensus below 4 inliers");
    return fit;
}

GridMesh build_grid(double width, double height, int rows, int cols) {
    if (!(width > 0.0) || !(height > 0.0)) throw InvalidDimensions("build_grid: non-positive frame size");
    if (rows < 2 || cols < 2) throw InvalidDimensions("build_grid: need at least 2x2 cells");
    GridMesh mesh;
    mesh.rows = rows;
    mesh.cols = cols;
    mesh.width = width;
    mesh.height = height;
    mesh.vertices.resize(static_cast<size_t>(rows + 1) * (cols + 1));
    for (int r = 0; r <= rows; ++r) {
        for (int c = 0; c <= cols; ++c) {
            mesh.vertices[mesh.vertex_index(r, c)] = {c * width / cols, r * height / rows};
        }
    }
    return mesh;
}

BilinearWeights bilinear_weights(const GridMesh& mesh, const Point2& p) {
    if (p.x < 0.0 || p.x > mesh.width || p.y < 0.0 || p.y > mesh.height) {
        throw OutOfBounds("bilinear_weights: point outside frame");
    }
    const double cw = mesh.cell_width();
    const double ch = mesh.cell_height();
    int cc = std::min(static_cast<int>(p.x / cw), mesh.cols - 1);
    int cr = std::min(static_cast<int>(p.y / ch), mesh.rows - 1);
    const double fx = (p.x - cc * cw) / cw;
    const double fy = (p.y - cr * ch) / ch;

    BilinearWeights bw;
    bw.cell_row = cr;
    bw.cell_col = cc;
    // Clockwise: top-left, top-right, bottom-right, bottom-left.
    bw.vertex = {mesh.vertex_index(cr, cc), mesh.vertex_index(cr, cc + 1),
                 mesh.vertex_index(cr + 1, cc + 1), mesh.vertex_index(cr + 1, cc)};
    bw.w = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), fx * fy, (1.0 - fx) * fy};
    return bw;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1) + 0xbf58476d1ce4e5b9ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace stab
