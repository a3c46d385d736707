#include "stab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "stab/errors.hpp"
#include "stab/image_io.hpp"

namespace stab {

namespace {

double smooth_lerp(double a, double b, double t) {
    const double s = t * t * (3.0 - 2.0 * t);
    return a + (b - a) * s;
}

// One octave of value noise: random lattice values, smoothstep-interpolated.
void add_octave(std::vector<double>& img, int w, int h, int period, double amplitude,
                std::mt19937_64& rng) {
    const int gw = w / period + 2, gh = h / period + 2;
    std::vector<double> lattice(static_cast<size_t>(gw) * gh);
    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    for (auto& v : lattice) v = ur(rng);
    for (int y = 0; y < h; ++y) {
        const int gy = y / period;
        const double fy = static_cast<double>(y % period) / period;
        for (int x = 0; x < w; ++x) {
            const int gx = x / period;
            const double fx = static_cast<double>(x % period) / period;
            const double v00 = lattice[static_cast<size_t>(gy) * gw + gx];
            const double v10 = lattice[static_cast<size_t>(gy) * gw + gx + 1];
            const double v01 = lattice[static_cast<size_t>(gy + 1) * gw + gx];
            const double v11 = lattice[static_cast<size_t>(gy + 1) * gw + gx + 1];
            const double top = smooth_lerp(v00, v10, fx);
            const double bot = smooth_lerp(v01, v11, fx);
            img[static_cast<size_t>(y) * w + x] += amplitude * smooth_lerp(top, bot, fy);
        }
    }
}

double sample_base(const Frame& base, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(base.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(base.height - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > base.width - 2) x0 = base.width - 2;
    if (y0 > base.height - 2) y0 = base.height - 2;
    const double fx = x - x0, fy = y - y0;
    const double v00 = base.at(x0, y0), v10 = base.at(x0 + 1, y0);
    const double v01 = base.at(x0, y0 + 1), v11 = base.at(x0 + 1, y0 + 1);
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
}

}  // namespace

Frame make_procedural_base(int width, int height, std::uint64_t seed) {
    if (width < 32 || height < 32) throw InvalidDimensions("make_procedural_base: too small");
    std::mt19937_64 rng(seed);
    std::vector<double> img(static_cast<size_t>(width) * height, 0.0);
    add_octave(img, width, height, 64, 1.0, rng);
    add_octave(img, width, height, 32, 0.6, rng);
    add_octave(img, width, height, 16, 0.35, rng);
    add_octave(img, width, height, 8, 0.2, rng);

    // scattered high-contrast patches give the detector strong corners
    std::uniform_int_distribution<int> ux(0, width - 1), uy(0, height - 1);
    std::uniform_int_distribution<int> usz(3, 14);
    std::uniform_real_distribution<double> uv(-1.5, 1.5);
    const int patches = width * height / 1200;
    for (int p = 0; p < patches; ++p) {
        const int x0 = ux(rng), y0 = uy(rng);
        const int pw = usz(rng), ph = usz(rng);
        const double val = uv(rng);
        for (int y = y0; y < std::min(height, y0 + ph); ++y) {
            for (int x = x0; x < std::min(width, x0 + pw); ++x) {
                img[static_cast<size_t>(y) * width + x] += val;
            }
        }
    }

    double lo = img[0], hi = img[0];
    for (double v : img) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

    Frame base;
    base.width = width;
    base.height = height;
    base.gray.resize(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
        base.gray[i] = static_cast<std::uint8_t>(std::lround((img[i] - lo) * scale));
    }
    return base;
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const Frame& base) {
    if (spec.frames < 3) throw InvalidDimensions("generate_synthetic: need at least 3 frames");
    if (spec.jitter_sigma < 0.0) throw InvalidDimensions("generate_synthetic: negative jitter");
    if (base.width <= 0 || base.height <= 0 || base.gray.empty()) {
        throw BadBaseImage("generate_synthetic: empty base image");
    }

    const int e = spec.frames;
    const auto smooth_at = [&](int i) -> Vec2 {
        return {spec.amp_x * std::sin(2.0 * M_PI * i / spec.period_x + spec.phase_x),
                spec.amp_y * std::sin(2.0 * M_PI * i / spec.period_y + spec.phase_y)};
    };

    std::mt19937_64 rng(derive_seed(spec.seed, 23, 0));
    std::normal_distribution<double> gauss(0.0, spec.jitter_sigma);
    std::vector<Vec2> jitter(e);
    for (int i = 0; i < e; ++i) {
        if (spec.jitter_sigma > 0.0) jitter[i] = {gauss(rng), gauss(rng)};
    }

    // Anchor both paths at frame 0 so trajectories and ground truth share the
    // accumulated-motion convention.
    std::vector<Vec2> smooth_path(e), path(e);
    const Vec2 s0 = smooth_at(0);
    for (int i = 0; i < e; ++i) {
        smooth_path[i] = smooth_at(i) - s0;
        path[i] = smooth_path[i] + (jitter[i] - jitter[0]);
    }

    double max_x = 0.0, max_y = 0.0;
    for (int i = 0; i < e; ++i) {
        max_x = std::max(max_x, std::abs(path[i].dx) + std::abs(spec.plane_velocity.dx) * i);
        max_y = std::max(max_y, std::abs(path[i].dy) + std::abs(spec.plane_velocity.dy) * i);
    }
    const double margin_x = max_x + 2.0, margin_y = max_y + 2.0;
    if (base.width < spec.width + 2 * margin_x || base.height < spec.height + 2 * margin_y) {
        throw BadBaseImage("generate_synthetic: base image too small for the configured motion");
    }
    const double off_x = (base.width - spec.width) / 2.0;
    const double off_y = (base.height - spec.height) / 2.0;

    SyntheticResult res;
    res.frames.resize(e);
    const int split_x =
        spec.plane_split > 0.0 ? static_cast<int>(spec.plane_split * spec.width) : spec.width;

    for (int i = 0; i < e; ++i) {
        Frame& f = res.frames[i];
        f.index = i;
        f.width = spec.width;
        f.height = spec.height;
        f.gray.resize(static_cast<size_t>(spec.width) * spec.height);
        const Vec2 t = path[i];
        const Vec2 t2 = t + static_cast<double>(i) * spec.plane_velocity;
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const Vec2& tt = x < split_x ? t : t2;
                const double v = sample_base(base, off_x + x + tt.dx, off_y + y + tt.dy);
                f.gray[static_cast<size_t>(y) * spec.width + x] =
                    static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }

    res.smooth_truth.frames = e;
    res.smooth_truth.rows = 1;
    res.smooth_truth.cols = 1;
    res.smooth_truth.t = smooth_path;
    res.unstable_truth.frames = e;
    res.unstable_truth.rows = 1;
    res.unstable_truth.cols = 1;
    res.unstable_truth.t = path;
    return res;
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
    if (spec.base.rfind("procedural:", 0) == 0) {
        int w = 0, h = 0;
        if (std::sscanf(spec.base.c_str(), "procedural:%dx%d", &w, &h) != 2 || w <= 0 || h <= 0) {
            throw BadBaseImage("generate_synthetic: bad procedural base spec: " + spec.base);
        }
        return generate_synthetic(spec, make_procedural_base(w, h, derive_seed(spec.seed, 29, 0)));
    }
    Frame base;
    try {
        base = read_png(spec.base);
    } catch (const IoError& e) {
        throw BadBaseImage(std::string("generate_synthetic: ") + e.what());
    }
    return generate_synthetic(spec, base);
}

SyntheticSpec parse_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("parse_synthetic_spec: cannot open " + path.string());
    SyntheticSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw BadConfig("synthetic spec line " + std::to_string(lineno) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "base") spec.base = val;
            else if (key == "frames") spec.frames = std::stoi(val);
            else if (key == "width") spec.width = std::stoi(val);
            else if (key == "height") spec.height = std::stoi(val);
            else if (key == "amp_x") spec.amp_x = std::stod(val);
            else if (key == "period_x") spec.period_x = std::stod(val);
            else if (key == "phase_x") spec.phase_x = std::stod(val);
            else if (key == "amp_y") spec.amp_y = std::stod(val);
            else if (key == "period_y") spec.period_y = std::stod(val);
            else if (key == "phase_y") spec.phase_y = std::stod(val);
            else if (key == "jitter_sigma") spec.jitter_sigma = std::stod(val);
            else if (key == "seed") spec.seed = std::stoull(val);
            else if (key == "plane_split") spec.plane_split = std::stod(val);
            else if (key == "plane_velocity_x") spec.plane_velocity.dx = std::stod(val);
            else if (key == "plane_velocity_y") spec.plane_velocity.dy = std::stod(val);
            else throw BadConfig("synthetic spec: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw BadConfig("synthetic spec: bad value for '" + key + "'");
        } catch (const std::out_of_range&) {
            throw BadConfig("synthetic spec: value out of range for '" + key + "'");
        }
    }
    return spec;
}

}  // namespace stab
