#include "ctrlmc/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "ctrlmc/errors.hpp"

namespace ctrlmc {

Axis Axis::centered(double center, double half_width, int count) {
    if (count < 2) throw ConfigError("Axis::centered: count must be >= 2");
    if (!(half_width > 0)) throw ConfigError("Axis::centered: half_width must be > 0");
    if (count % 2 == 0) ++count;
    return Axis{center - half_width, center + half_width, count};
}

InterpStencil interp_stencil(const Axis& axis, double x) {
    if (axis.count < 2) throw ConfigError("interp_stencil: axis too small");
    const double dx = axis.step();
    InterpStencil st;

    // Outside the axis (or on a two-node axis): linear from the edge cell.
    auto linear = [&](int i0) {
        st.base = i0;
        st.taps = 2;
        double t = (x - axis.node(i0)) / dx;
        st.w[0] = 1.0 - t;
        st.w[1] = t;
        return st;
    };

    if (axis.count < 4) {
        int i0 = std::clamp(static_cast<int>(std::floor((x - axis.lo) / dx)), 0, axis.count - 2);
        return linear(i0);
    }
    if (x <= axis.lo) return linear(0);
    if (x >= axis.hi) return linear(axis.count - 2);

    int cell = std::clamp(static_cast<int>(std::floor((x - axis.lo) / dx)), 0, axis.count - 2);
    int base = std::clamp(cell - 1, 0, axis.count - 4);
    st.base = base;
    st.taps = 4;
    double t = (x - axis.node(base)) / dx;
    // Lagrange weights on nodes {0,1,2,3} in cell units.
    st.w[0] = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    st.w[1] = t * (t - 2.0) * (t - 3.0) / 2.0;
    st.w[2] = -t * (t - 1.0) * (t - 3.0) / 2.0;
    st.w[3] = t * (t - 1.0) * (t - 2.0) / 6.0;
    return st;
}

double interp1(const Axis& axis, const double* values, double x) {
    InterpStencil st = interp_stencil(axis, x);
    double out = 0.0;
    for (int i = 0; i < st.taps; ++i) out += st.w[i] * values[st.base + i];
    return out;
}

double interp2(const Axis& ax, const Axis& ay, const Eigen::MatrixXd& values, double x, double y) {
    if (values.rows() != ax.count || values.cols() != ay.count)
        throw ConfigError("interp2: value table does not match axes");
    InterpStencil sx = interp_stencil(ax, x);
    InterpStencil sy = interp_stencil(ay, y);
    double out = 0.0;
    for (int i = 0; i < sx.taps; ++i)
        for (int j = 0; j < sy.taps; ++j)
            out += sx.w[i] * sy.w[j] * values(sx.base + i, sy.base + j);
    return out;
}

}  // namespace ctrlmc
