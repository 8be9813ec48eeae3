#ifndef FEATURESCOPE_COLORS_HPP
#define FEATURESCOPE_COLORS_HPP

#include <string>

namespace featurescope {

struct HslColor {
    double h = 0.0;  // [0, 1)
    double s = 0.0;  // [0, 1]
    double l = 0.0;  // [0, 1]

    bool operator==(const HslColor&) const = default;
};

/// (h + delta) mod 1, always in [0, 1).
double wrap_hue(double h);
double child_hue(double parent_hue, double delta_h);

/// Euclidean distance in (h, s, l) with hue distance taken around the circle.
double hsl_distance(const HslColor& a, const HslColor& b);

/// "#rrggbb"
std::string to_hex(const HslColor& c);

}  // namespace featurescope

#endif
