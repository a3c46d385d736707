#include "stab/frame.hpp"

#include <algorithm>
#include <cmath>

namespace stab {

FlowField make_flow(int frame_index, int width, int height) {
    FlowField f;
    f.frame_index = frame_index;
    f.width = width;
    f.height = height;
    f.data.assign(2 * static_cast<size_t>(width) * height, 0.0f);
    return f;
}

Vec2 FlowField::sample(const Point2& p) const {
    const double x = std::clamp(p.x, 0.0, static_cast<double>(width - 1));
    const double y = std::clamp(p.y, 0.0, static_cast<double>(height - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > width - 2) x0 = width - 2;
    if (y0 > height - 2) y0 = height - 2;
    if (width == 1) x0 = 0;
    if (height == 1) y0 = 0;
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const Vec2 v00 = at(x0, y0), v10 = at(x1, y0), v01 = at(x0, y1), v11 = at(x1, y1);
    return {(1 - fx) * (1 - fy) * v00.dx + fx * (1 - fy) * v10.dx + (1 - fx) * fy * v01.dx +
                fx * fy * v11.dx,
            (1 - fx) * (1 - fy) * v00.dy + fx * (1 - fy) * v10.dy + (1 - fx) * fy * v01.dy +
                fx * fy * v11.dy};
}

}  // namespace stab
