#include "stab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stab/errors.hpp"
#include "stab/features.hpp"
#include "stab/optical_flow.hpp"

namespace stab {

namespace {

constexpr double kStaticEnergyFloor = 1e-18;

// One-sided spectral band ratio of a real series: energy in bins 2..6 over
// energy in bins 1..floor(n/2).
double band_ratio(const std::vector<double>& series) {
    const int n = static_cast<int>(series.size());
    const int half = n / 2;
    double total = 0.0;
    double band = 0.0;
    for (int k = 1; k <= half; ++k) {
        std::complex<double> acc(0.0, 0.0);
        const double w = -2.0 * M_PI * k / n;
        for (int m = 0; m < n; ++m) {
            acc += series[m] * std::complex<double>(std::cos(w * m), std::sin(w * m));
        }
        const double e = std::norm(acc);
        total += e;
        if (k >= 2 && k <= 6) band += e;
    }
    if (total < kStaticEnergyFloor) return 1.0;
    return band / total;
}

void check_pair(const FrameSequence& in, const FrameSequence& out) {
    if (in.size() != out.size()) throw DimensionMismatch("metrics: sequence lengths differ");
    if (in.empty()) throw DimensionMismatch("metrics: empty sequences");
    for (size_t i = 0; i < in.size(); ++i) {
        if (in[i].width != out[i].width || in[i].height != out[i].height) {
            throw DimensionMismatch("metrics: frame dimensions differ at frame " +
                                    std::to_string(i));
        }
    }
}

void affine_singular_values(const Homography& h, double& smin, double& smax) {
    const double a = h.at(0, 0), b = h.at(0, 1), c = h.at(1, 0), d = h.at(1, 1);
    const double e = (a + d) / 2, f = (a - d) / 2, g = (c + b) / 2, k = (c - b) / 2;
    const double q = std::sqrt(e * e + k * k), r = std::sqrt(f * f + g * g);
    smax = q + r;
    smin = std::abs(q - r);
}

}  // namespace

double stability_score(const TrajectoryField& traj) {
    if (traj.frames < 8) throw TooShort("stability_score: need at least 8 frames");
    const int n = traj.frames - 1;  // increments
    const int nv = traj.vertex_count();
    double sum = 0.0;
    std::vector<double> series(n);
    for (int v = 0; v < nv; ++v) {
        for (int dim = 0; dim < 2; ++dim) {
            for (int i = 0; i < n; ++i) {
                const Vec2 d = traj.at(i + 1, v) - traj.at(i, v);
                series[i] = dim == 0 ? d.dx : d.dy;
            }
            sum += band_ratio(series);
        }
    }
    return sum / (2.0 * nv);
}

std::vector<Homography> frame_pair_homographies(const FrameSequence& in, const FrameSequence& out,
                                                int max_keypoints, std::uint64_t seed) {
    check_pair(in, out);
    std::vector<Homography> hs;
    hs.reserve(in.size());
    for (size_t i = 0; i < in.size(); ++i) {
        KeypointSet kps;
        try {
            kps = detect_keypoints(in[i], max_keypoints);
        } catch (const TooFewFeatures& e) {
            throw InsufficientPoints("frame_pair_homographies: frame " + std::to_string(i) +
                                     ": " + e.what());
        }
        const Frame& a = in[i];
        Frame b = out[i];
        b.index = a.index;
        const FlowField flow = compute_flow(a, b);
        const KeypointSet moved = sample_motions(kps, flow);

        std::vector<Point2> src, dst;
        src.reserve(moved.points.size());
        for (const auto& kp : moved.points) {
            src.push_back(kp.pos);
            dst.push_back(kp.pos + kp.motion);
        }
        RansacConfig cfg;
        cfg.seed = derive_seed(seed, 17, i);
        hs.push_back(fit_homography(src, dst, cfg).h);
    }
    return hs;
}

double distortion_from_homographies(const std::vector<Homography>& hs,
                                    std::vector<double>* per_frame) {
    double worst = 1.0;
    if (per_frame) per_frame->clear();
    for (const Homography& h : hs) {
        double smin, smax;
        affine_singular_values(h, smin, smax);
        const double ratio = smax > 0.0 ? std::clamp(smin / smax, 0.0, 1.0) : 0.0;
        if (per_frame) per_frame->push_back(ratio);
        worst = std::min(worst, ratio);
    }
    return worst;
}

double distortion_score(const FrameSequence& in, const FrameSequence& out,
                        std::vector<double>* per_frame) {
    return distortion_from_homographies(frame_pair_homographies(in, out), per_frame);
}

double cropping_from_homographies(const std::vector<Homography>& hs,
                                  std::vector<double>* per_frame, bool* warning) {
    double sum = 0.0;
    if (per_frame) per_frame->clear();
    if (warning) *warning = false;
    for (const Homography& h : hs) {
        const double det = h.at(0, 0) * h.at(1, 1) - h.at(0, 1) * h.at(1, 0);
        double scale;
        if (det <= 0.0) {
            scale = 0.0;
            if (warning) *warning = true;
        } else {
            scale = std::sqrt(det);
            if (scale > 1.0) scale = 1.0 / scale;  // fold: content scale of the shrinking side
        }
        scale = std::clamp(scale, 0.0, 1.0);
        if (per_frame) per_frame->push_back(scale);
        sum += scale;
    }
    return hs.empty() ? 1.0 : sum / static_cast<double>(hs.size());
}

double cropping_score(const FrameSequence& in, const FrameSequence& out,
                      std::vector<double>* per_frame, bool* warning) {
    return cropping_from_homographies(frame_pair_homographies(in, out), per_frame, warning);
}

double homography_distance(const Homography& h) {
    double sum = 0.0;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double d = h.at(r, c) - (r == c ? 1.0 : 0.0);
            sum += d * d;
        }
    }
    return std::sqrt(sum);
}

FlowField inject_noise(const FlowField& flow, const NoiseSpec& spec) {
    if (!(spec.fraction > 0.0) || spec.fraction > 1.0) {
        throw InvalidDimensions("inject_noise: fraction must be in (0, 1]");
    }
    const int w = flow.width, h = flow.height;
    const size_t total = static_cast<size_t>(w) * h;
    const size_t target = static_cast<size_t>(std::lround(spec.fraction * total));

    std::mt19937_64 rng(spec.seed);
    std::vector<std::uint8_t> sel(total, 0);
    size_t selected = 0;

    // Contiguous random rectangles until exactly `target` pixels are marked;
    // the last rectangle is clipped pixel by pixel in row-major order.
    std::uniform_real_distribution<double> ur(0.05, 0.25);
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    int stalled = 0;
    while (selected < target && stalled < 64) {
        const int rw = std::max(1, static_cast<int>(ur(rng) * w));
        const int rh = std::max(1, static_cast<int>(ur(rng) * h));
        const int x0 = std::min(ux(rng), w - rw);
        const int y0 = std::min(uy(rng), h - rh);
        const size_t before = selected;
        for (int y = y0; y < y0 + rh && selected < target; ++y) {
            for (int x = x0; x < x0 + rw && selected < target; ++x) {
                std::uint8_t& s = sel[static_cast<size_t>(y) * w + x];
                if (!s) {
                    s = 1;
                    ++selected;
                }
            }
        }
        stalled = selected == before ? stalled + 1 : 0;
    }
    // fill any remainder in row-major order once fresh rectangles stop landing
    for (size_t i = 0; i < total && selected < target; ++i) {
        if (!sel[i]) {
            sel[i] = 1;
            ++selected;
        }
    }

    double max_mag = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            max_mag = std::max(max_mag, norm(flow.at(x, y)));
        }
    }

    FlowField out = flow;
    std::normal_distribution<double> gauss(0.0, spec.sigma * max_mag);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!sel[static_cast<size_t>(y) * w + x]) continue;
            const size_t i = 2 * (static_cast<size_t>(y) * w + x);
            switch (spec.kind) {
                case NoiseSpec::Kind::gaussian:
                    if (spec.sigma * max_mag > 0.0) {
                        out.data[i] += static_cast<float>(gauss(rng));
                        out.data[i + 1] += static_cast<float>(gauss(rng));
                    }
                    break;
                case NoiseSpec::Kind::salt_pepper:
                    out.data[i] = static_cast<float>(coin(rng) ? max_mag : -max_mag);
                    out.data[i + 1] = static_cast<float>(coin(rng) ? max_mag : -max_mag);
                    break;
                case NoiseSpec::Kind::blank:
                    out.data[i] = 0.0f;
                    out.data[i + 1] = 0.0f;
                    break;
            }
        }
    }
    return out;
}

std::string StabilizationReport::to_json() const {
    nlohmann::json j;
    j["stability"] = stability;
    j["distortion"] = distortion;
    j["cropping"] = cropping;
    j["distance_mean"] = distance_mean;
    j["per_frame"] = nlohmann::json::array();
    for (const auto& f : per_frame) {
        j["per_frame"].push_back({{"frame", f.frame},
                                  {"distortion", f.distortion},
                                  {"cropping", f.cropping},
                                  {"distance", f.distance}});
    }
    return j.dump(2);
}

}  // namespace stab
