#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Vec2 {
    double dx = 0.0;
    double dy = 0.0;
};

inline Point2 operator+(const Point2& p, const Vec2& v) { return {p.x + v.dx, p.y + v.dy}; }
inline Vec2 operator-(const Point2& a, const Point2& b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.dx + b.dx, a.dy + b.dy}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.dx - b.dx, a.dy - b.dy}; }
inline Vec2 operator*(double s, const Vec2& v) { return {s * v.dx, s * v.dy}; }
inline Vec2 operator-(const Vec2& v) { return {-v.dx, -v.dy}; }

double norm(const Vec2& v);
double squared_norm(const Vec2& v);

// 3x3 projective transform, normalized so the bottom-right entry is 1.
class Homography {
public:
    Homography();  // identity

    // Normalizes by the bottom-right entry; rejects singular or
    // non-normalizable matrices.
    static Homography from_matrix(const std::array<double, 9>& row_major);
    static Homography identity();
    static Homography translation(double tx, double ty);

    double at(int row, int col) const { return m_[row * 3 + col]; }
    const std::array<double, 9>& data() const { return m_; }

    Point2 apply(const Point2& p) const;
    Homography inverse() const;
    double determinant() const;

private:
    std::array<double, 9> m_;
};

// Uniform axis-aligned lattice of (rows+1) x (cols+1) vertices covering a
// rows x cols cell grid over the frame.
struct GridMesh {
    int rows = 0;   // cell rows (M)
    int cols = 0;   // cell cols (N)
    double width = 0.0;
    double height = 0.0;
    std::vector<Point2> vertices;  // (rows+1)*(cols+1), row-major

    int vertex_rows() const { return rows + 1; }
    int vertex_cols() const { return cols + 1; }
    int vertex_count() const { return vertex_rows() * vertex_cols(); }
    int vertex_index(int r, int c) const { return r * vertex_cols() + c; }
    const Point2& vertex(int r, int c) const { return vertices[vertex_index(r, c)]; }
    double cell_width() const { return width / cols; }
    double cell_height() const { return height / rows; }
};

struct RansacConfig {
    double threshold = 3.0;       // inlier reprojection threshold in pixels
    int max_iterations = 2000;
    double confidence = 0.995;
    std::uint64_t seed = 0;
};

struct HomographyFit {
    Homography h;
    std::vector<bool> inliers;
    int inlier_count = 0;
};

Point2 apply_homography(const Homography& h, const Point2& p);

// Robust fit via RANSAC over normalized-DLT minimal samples, refit on the
// consensus set. Throws InsufficientPoints, DegenerateConfiguration, or
// NoConsensus.
HomographyFit fit_homography(std::span<const Point2> src, std::span<const Point2> dst,
                             const RansacConfig& cfg);

// Least-squares DLT over all given correspondences (Hartley-normalized).
Homography fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst);

GridMesh build_grid(double width, double height, int rows, int cols);

// Result of locating a point inside the mesh: its cell and the bilinear
// weights of the cell's four vertices in clockwise order
// (top-left, top-right, bottom-right, bottom-left).
struct BilinearWeights {
    int cell_row = 0;
    int cell_col = 0;
    std::array<double, 4> w{};
    std::array<int, 4> vertex{};  // vertex indices into the mesh
};

BilinearWeights bilinear_weights(const GridMesh& mesh, const Point2& p);

// Deterministic seed derivation for sub-stages (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

}  // namespace stab
