#include "featurescope/colors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace featurescope {

double wrap_hue(double h) {
    double w = std::fmod(h, 1.0);
    if (w < 0.0) w += 1.0;
    return w >= 1.0 ? 0.0 : w;
}

double child_hue(double parent_hue, double delta_h) { return wrap_hue(parent_hue + delta_h); }

double hsl_distance(const HslColor& a, const HslColor& b) {
    const double raw = std::abs(a.h - b.h);
    const double dh = std::min(raw, 1.0 - raw);
    const double ds = a.s - b.s, dl = a.l - b.l;
    return std::sqrt(dh * dh + ds * ds + dl * dl);
}

std::string to_hex(const HslColor& c) {
    auto channel = [&](double n) {
        const double k = std::fmod(n + c.h * 12.0, 12.0);
        const double amp = c.s * std::min(c.l, 1.0 - c.l);
        const double v = c.l - amp * std::max(-1.0, std::min({k - 3.0, 9.0 - k, 1.0}));
        return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(0.0), channel(8.0), channel(4.0));
    return buf;
}

}  // namespace featurescope
