#include "fd_bsb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace {

// Thomas algorithm for a tridiagonal system; diagonals passed by value since
// the sweep destroys them.
std::vector<double> solve_tridiag(std::vector<double> lo, std::vector<double> di,
                                  std::vector<double> up, std::vector<double> rhs) {
    const int n = static_cast<int>(di.size());
    for (int i = 1; i < n; ++i) {
        const double w = lo[i] / di[i - 1];
        di[i] -= w * up[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / di[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = (rhs[i] - up[i] * x[i + 1]) / di[i];
    return x;
}

}  // namespace

double bsb_call_fd(const BsbFdParams& p) {
    if (p.s_nodes < 3 || p.t_steps < 1) throw std::invalid_argument("bsb_call_fd: grid too small");
    const int n = p.s_nodes;
    const double ds = p.s_max / (n - 1);
    const double dt = p.horizon / p.t_steps;
    const double a_lo = 0.5 * p.vol_lo * p.vol_lo;
    const double a_hi = 0.5 * p.vol_hi * p.vol_hi;

    std::function<double(double)> payoff = p.payoff;
    if (!payoff) {
        const double k = p.strike;
        payoff = [k](double x) { return std::max(x - k, 0.0); };
    }

    std::vector<double> s(n), v(n);
    for (int i = 0; i < n; ++i) {
        s[i] = i * ds;
        v[i] = payoff(s[i]);
    }

    // interior unknowns i = 1..n-2; Dirichlet boundaries frozen at the payoff
    const int m = n - 2;
    const double v_left = payoff(0.0);
    const double v_right = payoff(p.s_max);
    std::vector<double> coef(m);  // a(s_i) under the current policy

    auto refresh_policy = [&](const std::vector<double>& w) {
        bool changed = false;
        for (int i = 0; i < m; ++i) {
            const double curv = w[i] - 2.0 * w[i + 1] + w[i + 2];  // w holds the full grid
            const double c = (curv >= 0.0) ? a_hi : a_lo;
            if (c != coef[i]) changed = true;
            coef[i] = c;
        }
        return changed;
    };

    // start from the maximal policy; for a convex payoff it should be
    // immediately self-consistent, but the iteration below never relies on it
    std::fill(coef.begin(), coef.end(), a_hi);

    // a few fully implicit steps first smooth the payoff kink before
    // Crank-Nicolson takes over (Rannacher start)
    const int rannacher = std::min(4, p.t_steps);

    for (int step = 0; step < p.t_steps; ++step) {
        const double theta = (step < rannacher) ? 1.0 : 0.5;
        for (int pol = 0; pol < 8; ++pol) {
            std::vector<double> lo(m), di(m), up(m), rhs(m);
            for (int i = 0; i < m; ++i) {
                const double q = coef[i] * s[i + 1] * s[i + 1] * dt / (ds * ds);
                lo[i] = -theta * q;
                di[i] = 1.0 + 2.0 * theta * q;
                up[i] = -theta * q;
                const double vim = (i == 0) ? v_left : v[i];
                const double vip = (i == m - 1) ? v_right : v[i + 2];
                const double expl = (1.0 - theta) * q * (vim - 2.0 * v[i + 1] + vip);
                rhs[i] = v[i + 1] + expl;
            }
            rhs[0] += theta * (coef[0] * s[1] * s[1] * dt / (ds * ds)) * v_left;
            rhs[m - 1] += theta * (coef[m - 1] * s[m] * s[m] * dt / (ds * ds)) * v_right;
            std::vector<double> sol = solve_tridiag(lo, di, up, rhs);
            std::vector<double> w(n);
            w[0] = v_left;
            w[n - 1] = v_right;
            for (int i = 0; i < m; ++i) w[i + 1] = sol[i];
            const bool changed = refresh_policy(w);
            if (!changed || pol == 7) {
                v = w;
                break;
            }
        }
    }

    const double pos = p.spot / ds;
    const int i0 = std::clamp(static_cast<int>(pos), 0, n - 2);
    const double frac = pos - i0;
    return (1.0 - frac) * v[i0] + frac * v[i0 + 1];
}
