#include "stab/smoothing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "stab/errors.hpp"

namespace stab {

namespace {

constexpr std::array<int, 6> kOffsets{-3, -2, -1, 1, 2, 3};

void check_shape(const TrajectoryField& a, const TrajectoryField& b, const char* what) {
    if (a.frames != b.frames || a.rows != b.rows || a.cols != b.cols) {
        throw ShapeMismatch(std::string(what) + ": trajectory shapes differ");
    }
}

}  // namespace

TrajectoryField accumulate(std::span<const GridMotionField> motions) {
    if (motions.empty()) throw ShapeMismatch("accumulate: no motion fields");
    const int rows = motions[0].rows;
    const int cols = motions[0].cols;
    for (const auto& m : motions) {
        if (m.rows != rows || m.cols != cols) {
            throw ShapeMismatch("accumulate: motion field shapes differ");
        }
    }
    TrajectoryField traj;
    traj.frames = static_cast<int>(motions.size()) + 1;
    traj.rows = rows;
    traj.cols = cols;
    traj.t.assign(static_cast<size_t>(traj.frames) * rows * cols, Vec2{});
    for (int i = 1; i < traj.frames; ++i) {
        const auto& m = motions[i - 1].motions;
        for (int v = 0; v < rows * cols; ++v) {
            traj.at(i, v) = traj.at(i - 1, v) + m[v];
        }
    }
    return traj;
}

SmoothingKernel predict_kernel(const TrajectoryField& traj, const SmoothingConfig& cfg) {
    if (cfg.mode == KernelMode::external) {
        SmoothingKernel k = read_kernel_file(cfg.kernel_file);
        if (k.frames != traj.frames || k.rows != traj.rows || k.cols != traj.cols) {
            throw BadKernelFile("predict_kernel: external kernel shape does not match trajectory");
        }
        return k;
    }

    SmoothingKernel k;
    k.frames = traj.frames;
    k.rows = traj.rows;
    k.cols = traj.cols;
    const int nv = traj.vertex_count();
    k.lambda.assign(static_cast<size_t>(k.frames) * nv, static_cast<float>(cfg.lambda));
    k.weights.assign(static_cast<size_t>(k.frames) * nv * kKernelWeights, 0.0f);

    const int e = traj.frames;
    for (int i = 0; i < e; ++i) {
        for (int v = 0; v < nv; ++v) {
            float* w = &k.weights[(static_cast<size_t>(i) * nv + v) * kKernelWeights];
            if (cfg.mode == KernelMode::uniform) {
                for (int o = 0; o < 6; ++o) {
                    const int j = i + kOffsets[o];
                    if (j < 0 || j >= e) continue;
                    w[o] = 1.0f;      // x
                    w[o + 6] = 1.0f;  // y
                }
                continue;
            }

            // bilateral: per dimension, temporal Gaussian times similarity to
            // the locally-linear prediction, rescaled to the temporal mass
            for (int dim = 0; dim < 2; ++dim) {
                const auto coord = [&](int frame) {
                    const Vec2& t = traj.at(frame, v);
                    return dim == 0 ? t.dx : t.dy;
                };
                // windowed mean one-step increment around i
                double mean_inc = 0.0;
                int inc_count = 0;
                for (int m = std::max(0, i - kTemporalRadius);
                     m <= std::min(e - 2, i + kTemporalRadius - 1); ++m) {
                    mean_inc += coord(m + 1) - coord(m);
                    ++inc_count;
                }
                if (inc_count > 0) mean_inc /= inc_count;

                double temporal_mass = 0.0;
                double raw_mass = 0.0;
                std::array<double, 6> raw{};
                for (int o = 0; o < 6; ++o) {
                    const int off = kOffsets[o];
                    const int j = i + off;
                    if (j < 0 || j >= e) continue;
                    const double tw =
                        std::exp(-static_cast<double>(off) * off / (2.0 * cfg.sigma_time * cfg.sigma_time));
                    const double dev = (coord(i) - coord(j)) - (-off) * mean_inc;
                    const double mw =
                        std::exp(-dev * dev / (2.0 * cfg.sigma_motion * cfg.sigma_motion));
                    raw[o] = tw * mw;
                    temporal_mass += tw;
                    raw_mass += raw[o];
                }
                const double scale = raw_mass > 0.0 ? temporal_mass / raw_mass : 0.0;
                for (int o = 0; o < 6; ++o) {
                    w[o + 6 * dim] = static_cast<float>(raw[o] * scale);
                }
            }
        }
    }
    return k;
}

TrajectoryField smooth_step(const TrajectoryField& original, const TrajectoryField& current,
                            const SmoothingKernel& kernel) {
    check_shape(original, current, "smooth_step");
    if (kernel.frames != original.frames || kernel.rows != original.rows ||
        kernel.cols != original.cols) {
        throw ShapeMismatch("smooth_step: kernel shape does not match trajectory");
    }
    const int e = original.frames;
    const int nv = original.vertex_count();
    TrajectoryField out = original;

    for (int i = 0; i < e; ++i) {
        for (int v = 0; v < nv; ++v) {
            const float* w = kernel.weights_at(i, v);
            const double lambda = kernel.lambda_at(i, v);
            const Vec2 ti = original.at(i, v);
            double sum_wx = 0.0, sum_wy = 0.0;
            double dev_x = 0.0, dev_y = 0.0;
            for (int o = 0; o < 6; ++o) {
                const int j = i + kOffsets[o];
                if (j < 0 || j >= e) continue;
                const Vec2& tj = current.at(j, v);
                sum_wx += w[o];
                sum_wy += w[o + 6];
                dev_x += w[o] * (tj.dx - ti.dx);
                dev_y += w[o + 6] * (tj.dy - ti.dy);
            }
            // T + lambda*sum w (T^_j - T) / (1 + lambda*sum w): identical to
            // the direct Jacobi ratio, and exact on constant trajectories.
            out.at(i, v) = {ti.dx + lambda * dev_x / (1.0 + lambda * sum_wx),
                            ti.dy + lambda * dev_y / (1.0 + lambda * sum_wy)};
        }
    }
    return out;
}

TrajectoryField smooth(const TrajectoryField& traj, const SmoothingConfig& cfg) {
    if (cfg.iterations < 1) throw InvalidDimensions("smooth: iterations must be >= 1");
    const SmoothingKernel kernel = predict_kernel(traj, cfg);
    TrajectoryField current = traj;
    for (int it = 0; it < cfg.iterations; ++it) {
        current = smooth_step(traj, current, kernel);
    }
    return current;
}

namespace {

// Exact homography through four point correspondences (h33 fixed at 1).
bool cell_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst,
                     Eigen::Matrix3d& h) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y;
        const double u = dst[i].x, v = dst[i].y;
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        b(2 * i) = u;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (!lu.isInvertible()) return false;
    const Eigen::Matrix<double, 8, 1> sol = lu.solve(b);
    h << sol(0), sol(1), sol(2), sol(3), sol(4), sol(5), sol(6), sol(7), 1.0;
    return true;
}

}  // namespace

double ts_objective(const TrajectoryField& traj, const TrajectoryField& smoothed,
                    const SmoothingKernel& kernel, std::span<const KeypointSet> kps,
                    const GridMesh& mesh, const SmoothingConfig& cfg) {
    check_shape(traj, smoothed, "ts_objective");
    const int e = traj.frames;
    const int nv = traj.vertex_count();
    if (nv != mesh.vertex_count()) throw ShapeMismatch("ts_objective: mesh does not match");

    double l_ts = 0.0;
    for (int i = 0; i < e; ++i) {
        for (int v = 0; v < nv; ++v) {
            const Vec2 d = smoothed.at(i, v) - traj.at(i, v);
            l_ts += squared_norm(d);
            const float* w = kernel.weights_at(i, v);
            const double lambda = kernel.lambda_at(i, v);
            for (int o = 0; o < 6; ++o) {
                const int j = i + kOffsets[o];
                if (j < 0 || j >= e) continue;
                const Vec2 diff = smoothed.at(i, v) - smoothed.at(j, v);
                l_ts += lambda * (w[o] * diff.dx * diff.dx + w[o + 6] * diff.dy * diff.dy);
            }
        }
    }

    double l_sp = 0.0;
    double l_cp = 0.0;
    for (int i = 0; i < e; ++i) {
        GridMotionField disp;
        disp.frame_index = i;
        disp.rows = traj.rows;
        disp.cols = traj.cols;
        disp.motions.resize(nv);
        for (int v = 0; v < nv; ++v) disp.motions[v] = smoothed.at(i, v) - traj.at(i, v);
        l_sp += shape_loss(disp, mesh);

        const KeypointSet* frame_kps = nullptr;
        for (const auto& set : kps) {
            if (set.frame_index == i) {
                frame_kps = &set;
                break;
            }
        }
        if (!frame_kps) continue;

        std::unordered_map<int, Eigen::Matrix3d> cell_h;
        for (const auto& kp : frame_kps->points) {
            Point2 pos{std::clamp(kp.pos.x, 0.0, mesh.width), std::clamp(kp.pos.y, 0.0, mesh.height)};
            const BilinearWeights bw = bilinear_weights(mesh, pos);
            const int cell_id = bw.cell_row * mesh.cols + bw.cell_col;

            auto it = cell_h.find(cell_id);
            if (it == cell_h.end()) {
                std::array<Point2, 4> src, dst;
                for (int o = 0; o < 4; ++o) {
                    const int vi = bw.vertex[o];
                    src[o] = mesh.vertices[vi];
                    dst[o] = mesh.vertices[vi] + disp.motions[vi];
                }
                Eigen::Matrix3d h;
                if (!cell_homography(src, dst, h)) continue;
                it = cell_h.emplace(cell_id, h).first;
            }

            Point2 bili = pos;
            for (int o = 0; o < 4; ++o) {
                bili.x += bw.w[o] * disp.motions[bw.vertex[o]].dx;
                bili.y += bw.w[o] * disp.motions[bw.vertex[o]].dy;
            }
            const Eigen::Matrix3d& h = it->second;
            const double wd = h(2, 0) * pos.x + h(2, 1) * pos.y + h(2, 2);
            if (std::abs(wd) < 1e-9) continue;
            const double hx = (h(0, 0) * pos.x + h(0, 1) * pos.y + h(0, 2)) / wd;
            const double hy = (h(1, 0) * pos.x + h(1, 1) * pos.y + h(1, 2)) / wd;
            l_cp += (bili.x - hx) * (bili.x - hx) + (bili.y - hy) * (bili.y - hy);
        }
    }

    return l_ts + cfg.lambda_shape * l_sp + cfg.lambda_content * l_cp;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_kernel_file(const std::filesystem::path& path, const SmoothingKernel& kernel) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_kernel_file: cannot open " + path.string());
    os.write("DUTK", 4);
    write_u32(os, static_cast<std::uint32_t>(kernel.frames));
    write_u32(os, static_cast<std::uint32_t>(kernel.rows));
    write_u32(os, static_cast<std::uint32_t>(kernel.cols));
    const size_t nv = static_cast<size_t>(kernel.frames) * kernel.vertex_count();
    for (size_t i = 0; i < nv; ++i) {
        std::uint32_t u;
        std::memcpy(&u, &kernel.lambda[i], 4);
        write_u32(os, u);
        for (int o = 0; o < kKernelWeights; ++o) {
            std::memcpy(&u, &kernel.weights[i * kKernelWeights + o], 4);
            write_u32(os, u);
        }
    }
    if (!os) throw IoError("write_kernel_file: write failed for " + path.string());
}

SmoothingKernel read_kernel_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw BadKernelFile("read_kernel_file: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DUTK", 4) != 0) {
        throw BadKernelFile("read_kernel_file: bad magic in " + path.string());
    }
    SmoothingKernel k;
    k.frames = static_cast<int>(read_u32(is));
    k.rows = static_cast<int>(read_u32(is));
    k.cols = static_cast<int>(read_u32(is));
    if (!is || k.frames <= 0 || k.rows <= 0 || k.cols <= 0 || k.frames > (1 << 20) ||
        k.rows > (1 << 12) || k.cols > (1 << 12)) {
        throw BadKernelFile("read_kernel_file: bad dimensions in " + path.string());
    }
    const size_t n = static_cast<size_t>(k.frames) * k.vertex_count();
    k.lambda.resize(n);
    k.weights.resize(n * kKernelWeights);
    for (size_t i = 0; i < n; ++i) {
        std::uint32_t u = read_u32(is);
        std::memcpy(&k.lambda[i], &u, 4);
        for (int o = 0; o < kKernelWeights; ++o) {
            u = read_u32(is);
            std::memcpy(&k.weights[i * kKernelWeights + o], &u, 4);
        }
    }
    if (!is) throw BadKernelFile("read_kernel_file: truncated file " + path.string());

    for (size_t i = 0; i < n; ++i) {
        if (!(k.lambda[i] >= 0.0f)) throw BadKernelFile("read_kernel_file: negative lambda");
        const int frame = static_cast<int>(i / k.vertex_count());
        for (int o = 0; o < kKernelWeights; ++o) {
            const float w = k.weights[i * kKernelWeights + o];
            if (!(w >= 0.0f)) throw BadKernelFile("read_kernel_file: negative weight");
            const int j = frame + kOffsets[o % 6];
            if ((j < 0 || j >= k.frames) && w != 0.0f) {
                throw BadKernelFile("read_kernel_file: nonzero weight outside the sequence");
            }
        }
    }
    return k;
}

}  // namespace stab
