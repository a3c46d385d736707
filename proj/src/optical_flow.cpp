#include "stab/optical_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

namespace {

struct Level {
    int w = 0, h = 0;
    std::vector<float> img;
    std::vector<float> gx, gy;          // gradients of the source image
    std::vector<double> ixx, ixy, iyy;  // integral images of gradient products
};

std::vector<float> to_float(const Frame& f) {
    std::vector<float> out(static_cast<size_t>(f.width) * f.height);
    const float s = 1.0f / 255.0f;
    for (size_t i = 0; i < out.size(); ++i) out[i] = f.gray[i] * s;
    return out;
}

void downsample(const std::vector<float>& src, int sw, int sh, std::vector<float>& dst, int dw,
                int dh) {
    dst.resize(static_cast<size_t>(dw) * dh);
    for (int y = 0; y < dh; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(2 * y + 1, sh - 1);
        for (int x = 0; x < dw; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(2 * x + 1, sw - 1);
            dst[static_cast<size_t>(y) * dw + x] =
                0.25f * (src[static_cast<size_t>(y0) * sw + x0] + src[static_cast<size_t>(y0) * sw + x1] +
                         src[static_cast<size_t>(y1) * sw + x0] + src[static_cast<size_t>(y1) * sw + x1]);
        }
    }
}

void compute_gradients(Level& lv) {
    const int w = lv.w, h = lv.h;
    lv.gx.assign(static_cast<size_t>(w) * h, 0.0f);
    lv.gy.assign(static_cast<size_t>(w) * h, 0.0f);
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            lv.gx[i] = 0.5f * (lv.img[i + 1] - lv.img[i - 1]);
            lv.gy[i] = 0.5f * (lv.img[i + w] - lv.img[i - w]);
        }
    }
}

// Summed-area tables of gradient products; lets the 2x2 normal matrix of any
// window come out in constant time, with correct truncation at the borders.
void compute_integrals(Level& lv) {
    const int w = lv.w, h = lv.h;
    const size_t n = static_cast<size_t>(w + 1) * (h + 1);
    lv.ixx.assign(n, 0.0);
    lv.ixy.assign(n, 0.0);
    lv.iyy.assign(n, 0.0);
    for (int y = 0; y < h; ++y) {
        double rxx = 0, rxy = 0, ryy = 0;
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            rxx += static_cast<double>(lv.gx[i]) * lv.gx[i];
            rxy += static_cast<double>(lv.gx[i]) * lv.gy[i];
            ryy += static_cast<double>(lv.gy[i]) * lv.gy[i];
            const size_t j = static_cast<size_t>(y + 1) * (w + 1) + (x + 1);
            lv.ixx[j] = lv.ixx[j - (w + 1)] + rxx;
            lv.ixy[j] = lv.ixy[j - (w + 1)] + rxy;
            lv.iyy[j] = lv.iyy[j - (w + 1)] + ryy;
        }
    }
}

inline double box_sum(const std::vector<double>& s, int stride, int x0, int y0, int x1, int y1) {
    // rectangle [x0,x1] x [y0,y1], inclusive
    return s[static_cast<size_t>(y1 + 1) * stride + (x1 + 1)] -
           s[static_cast<size_t>(y0) * stride + (x1 + 1)] -
           s[static_cast<size_t>(y1 + 1) * stride + x0] + s[static_cast<size_t>(y0) * stride + x0];
}

std::vector<Level> build_pyramid(const Frame& f, int levels) {
    std::vector<Level> pyr(levels);
    pyr[0].w = f.width;
    pyr[0].h = f.height;
    pyr[0].img = to_float(f);
    for (int l = 1; l < levels; ++l) {
        pyr[l].w = pyr[l - 1].w / 2;
        pyr[l].h = pyr[l - 1].h / 2;
        downsample(pyr[l - 1].img, pyr[l - 1].w, pyr[l - 1].h, pyr[l].img, pyr[l].w, pyr[l].h);
    }
    return pyr;
}

inline float sample_clamped(const std::vector<float>& img, int w, int h, float x, float y) {
    x = std::min(std::max(x, 0.0f), static_cast<float>(w - 1));
    y = std::min(std::max(y, 0.0f), static_cast<float>(h - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > w - 2) x0 = w - 2;
    if (y0 > h - 2) y0 = h - 2;
    const float fx = x - x0;
    const float fy = y - y0;
    const size_t i = static_cast<size_t>(y0) * w + x0;
    return (1 - fx) * (1 - fy) * img[i] + fx * (1 - fy) * img[i + 1] + (1 - fx) * fy * img[i + w] +
           fx * fy * img[i + w + 1];
}

}  // namespace

FlowField compute_flow(const Frame& a, const Frame& b, const FlowOptions& opts) {
    if (a.width != b.width || a.height != b.height) {
        throw DimensionMismatch("compute_flow: frame dimensions differ");
    }
    if (a.width < 16 || a.height < 16) throw InvalidDimensions("compute_flow: frame too small");

    int levels = opts.levels;
    while (levels > 1 && (std::min(a.width, a.height) >> (levels - 1)) < 16) --levels;

    std::vector<Level> pa = build_pyramid(a, levels);
    std::vector<Level> pb = build_pyramid(b, levels);
    for (auto& lv : pa) {
        compute_gradients(lv);
        compute_integrals(lv);
    }

    const int r = opts.window_radius;
    std::vector<float> ux, uy, px, py;  // current and coarser-level flow

    for (int l = levels - 1; l >= 0; --l) {
        const Level& la = pa[l];
        const Level& lb = pb[l];
        const int w = la.w, h = la.h;
        ux.assign(static_cast<size_t>(w) * h, 0.0f);
        uy.assign(static_cast<size_t>(w) * h, 0.0f);
        const int pw = (l == levels - 1) ? 0 : pa[l + 1].w;
        const int ph = (l == levels - 1) ? 0 : pa[l + 1].h;

        const float max_disp = static_cast<float>(std::max(w, h));

#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                float u = 0.0f, v = 0.0f;
                if (pw > 0) {
                    // box-downsample alignment: fine coord -> (c - 0.5) / 2
                    const float cx = (x - 0.5f) * 0.5f;
                    const float cy = (y - 0.5f) * 0.5f;
                    u = 2.0f * sample_clamped(px, pw, ph, cx, cy);
                    v = 2.0f * sample_clamped(py, pw, ph, cx, cy);
                }

                const int wx0 = std::max(0, x - r), wx1 = std::min(w - 1, x + r);
                const int wy0 = std::max(0, y - r), wy1 = std::min(h - 1, y + r);
                const double sxx = box_sum(la.ixx, w + 1, wx0, wy0, wx1, wy1);
                const double sxy = box_sum(la.ixy, w + 1, wx0, wy0, wx1, wy1);
                const double syy = box_sum(la.iyy, w + 1, wx0, wy0, wx1, wy1);
                const double taps = static_cast<double>(wx1 - wx0 + 1) * (wy1 - wy0 + 1);
                const double tr = sxx + syy;
                const double min_eig =
                    0.5 * (tr - std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy));
                if (min_eig / taps < opts.min_eigenvalue) {
                    // untextured: keep the upsampled estimate
                    ux[static_cast<size_t>(y) * w + x] = u;
                    uy[static_cast<size_t>(y) * w + x] = v;
                    continue;
                }
                const double det = sxx * syy - sxy * sxy;
                const double inv00 = syy / det, inv01 = -sxy / det, inv11 = sxx / det;

                for (int it = 0; it < opts.iterations; ++it) {
                    // target window position in b
                    const float tx = x + u, ty = y + v;
                    float bx = std::floor(tx), by = std::floor(ty);
                    float fx = tx - bx, fy = ty - by;
                    int ibx = static_cast<int>(bx), iby = static_cast<int>(by);
                    const float w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
                    const float w01 = (1 - fx) * fy, w11 = fx * fy;

                    float bvx = 0.0f, bvy = 0.0f;
                    const bool fast = wx0 == x - r && wx1 == x + r && wy0 == y - r &&
                                      wy1 == y + r && ibx - r >= 0 && ibx + r + 1 < w &&
                                      iby - r >= 0 && iby + r + 1 < h;
                    if (fast) {
                        for (int dy = -r; dy <= r; ++dy) {
                            const size_t ia = static_cast<size_t>(y + dy) * w + (x - r);
                            const float* arow = &la.img[ia];
                            const float* gxr = &la.gx[ia];
                            const float* gyr = &la.gy[ia];
                            const float* b0 = &lb.img[static_cast<size_t>(iby + dy) * w + (ibx - r)];
                            const float* b1 = b0 + w;
                            float accx = 0.0f, accy = 0.0f;
                            for (int k = 0; k <= 2 * r; ++k) {
                                const float bv = w00 * b0[k] + w10 * b0[k + 1] + w01 * b1[k] +
                                                 w11 * b1[k + 1];
                                const float d = arow[k] - bv;
                                accx += gxr[k] * d;
                                accy += gyr[k] * d;
                            }
                            bvx += accx;
                            bvy += accy;
                        }
                    } else {
                        for (int yy = wy0; yy <= wy1; ++yy) {
                            for (int xx = wx0; xx <= wx1; ++xx) {
                                const size_t ia = static_cast<size_t>(yy) * w + xx;
                                const float bv = sample_clamped(lb.img, w, h, xx + u, yy + v);
                                const float d = la.img[ia] - bv;
                                bvx += la.gx[ia] * d;
                                bvy += la.gy[ia] * d;
                            }
                        }
                    }

                    const double du = inv00 * bvx + inv01 * bvy;
                    const double dv = inv01 * bvx + inv11 * bvy;
                    if (!std::isfinite(du) || !std::isfinite(dv)) break;
                    u += static_cast<float>(du);
                    v += static_cast<float>(dv);
                    if (std::abs(u) > max_disp || std::abs(v) > max_disp) {
                        u = std::clamp(u, -max_disp, max_disp);
                        v = std::clamp(v, -max_disp, max_disp);
                        break;
                    }
                    if (du * du + dv * dv < opts.epsilon * opts.epsilon) break;
                }

                ux[static_cast<size_t>(y) * w + x] = u;
                uy[static_cast<size_t>(y) * w + x] = v;
            }
        }

        px.swap(ux);
        py.swap(uy);
    }

    FlowField flow = make_flow(a.index, a.width, a.height);
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            const size_t i = static_cast<size_t>(y) * a.width + x;
            flow.data[2 * i] = px[i];
            flow.data[2 * i + 1] = py[i];
        }
    }
    return flow;
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

void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void write_flow_file(const std::filesystem::path& path, const FlowField& flow) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_flow_file: cannot open " + path.string());
    os.write("FLO2", 4);
    write_u32(os, static_cast<std::uint32_t>(flow.width));
    write_u32(os, static_cast<std::uint32_t>(flow.height));
    for (float v : flow.data) write_f32(os, v);
    if (!os) throw IoError("write_flow_file: write failed for " + path.string());
}

FlowField read_flow_file(const std::filesystem::path& path, int frame_index) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_flow_file: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FLO2", 4) != 0) {
        throw IoError("read_flow_file: bad magic in " + path.string());
    }
    const std::uint32_t w = read_u32(is);
    const std::uint32_t h = read_u32(is);
    if (!is || w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16) {
        throw IoError("read_flow_file: bad dimensions in " + path.string());
    }
    FlowField flow = make_flow(frame_index, static_cast<int>(w), static_cast<int>(h));
    for (float& v : flow.data) v = read_f32(is);
    if (!is) throw IoError("read_flow_file: truncated file " + path.string());
    return flow;
}

}  // namespace stab
