#include "openhall/cavity.hpp"

#include <algorithm>
#include <cmath>

namespace openhall {

void CavityParams::validate() const {
    if (!(lambda > 0.0)) throw ArgumentError("cavity: lambda must be > 0");
    if (!(gamma >= 0.0)) throw ArgumentError("cavity: gamma must be >= 0");
    if (!(t_max > 0.0)) throw ArgumentError("cavity: t_max must be > 0");
    if (!(dt > 0.0) || dt > t_max) throw ArgumentError("cavity: dt must be in (0, t_max]");
    if (!std::isfinite(delta) || !std::isfinite(omega_drive)) throw ArgumentError("cavity: non-finite parameter");
    if (!(temperature >= 0.0)) throw ArgumentError("cavity: temperature must be >= 0");
    const double n = t_max / dt;
    if (std::abs(n - std::round(n)) > 1e-9 * n) throw ArgumentError("cavity: t_max must be a multiple of dt");
    if (n > 2e5) throw ArgumentError("cavity: more than 2e5 steps requested");
}

cplx memory_kernel(const CavityParams& p, double tau) {
    if (tau < 0.0) throw ArgumentError("memory_kernel: tau must be >= 0");
    return 0.5 * p.gamma * p.lambda * std::exp(-(p.lambda + I1 * p.delta) * tau);
}

namespace {

struct Level {
    std::vector<cplx> u, D;
};

// Implicit trapezoid for u' = -i delta u - int_0^t f(t-s) u(s) ds with the
// trapezoid rule for the convolution; D = cumulative trapezoid of u.
Level trapezoid_level(const CavityParams& p, long n) {
    const double h = p.t_max / n;
    std::vector<cplx> f(n + 1);
    for (long j = 0; j <= n; ++j) f[j] = memory_kernel(p, j * h);
    Level L;
    L.u.resize(n + 1);
    L.D.resize(n + 1);
    L.u[0] = 1.0;
    L.D[0] = 0.0;
    const cplx id = I1 * p.delta;
    cplx F = -id * L.u[0];
    const cplx denom = 1.0 + 0.5 * h * (id + 0.5 * h * f[0]);
    for (long k = 0; k < n; ++k) {
        cplx mem = 0.5 * f[k + 1] * L.u[0];
        for (long j = 1; j <= k; ++j) mem += f[k + 1 - j] * L.u[j];
        L.u[k + 1] = (L.u[k] + 0.5 * h * F - 0.5 * h * h * mem) / denom;
        F = -id * L.u[k + 1] - h * mem - 0.5 * h * f[0] * L.u[k + 1];
        L.D[k + 1] = L.D[k] + 0.5 * h * (L.u[k] + L.u[k + 1]);
    }
    return L;
}

// Two Romberg steps (h^2 and h^4 terms) on the coarse nodes of a, b, c
// (steps h, h/2, h/4).
std::vector<cplx> romberg(const std::vector<cplx>& a, const std::vector<cplx>& b, const std::vector<cplx>& c) {
    std::vector<cplx> r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const cplx r1 = (4.0 * b[2 * k] - a[k]) / 3.0;
        const cplx r2 = (4.0 * c[4 * k] - b[2 * k]) / 3.0;
        r[k] = (16.0 * r2 - r1) / 15.0;
    }
    return r;
}

std::vector<double> grid_of(const CavityParams& p, long n) {
    std::vector<double> t(n + 1);
    for (long k = 0; k <= n; ++k) t[k] = p.t_max * k / n;
    return t;
}

} // namespace

U1Solution solve_u1(const CavityParams& p) {
    p.validate();
    const long n = std::lround(p.t_max / p.dt);
    Level lv[4];
    for (int l = 0; l < 4; ++l) lv[l] = trapezoid_level(p, n << l);
    const auto uA = romberg(lv[0].u, lv[1].u, lv[2].u);
    const auto DA = romberg(lv[0].D, lv[1].D, lv[2].D);
    // same extrapolation one level finer, restricted to the coarse nodes
    auto uB = romberg(lv[1].u, lv[2].u, lv[3].u);
    auto DB = romberg(lv[1].D, lv[2].D, lv[3].D);
    U1Solution s;
    s.times = grid_of(p, n);
    s.u1.resize(n + 1);
    s.integral.resize(n + 1);
    for (long k = 0; k <= n; ++k) {
        s.u1[k] = uB[2 * k];
        s.integral[k] = DB[2 * k];
        s.halving_change = std::max(
            {s.halving_change, std::abs(uB[2 * k] - uA[k]), std::abs(p.omega_drive) * std::abs(DB[2 * k] - DA[k])});
    }
    if (s.halving_change > p.tol)
        throw NumericalError("solve_u1: step halving changes u1 by " + std::to_string(s.halving_change));
    return s;
}

U1Solution solve_u1_local(const CavityParams& p) {
    p.validate();
    const long n = std::lround(p.t_max / p.dt);
    // z = (u, w, D) with w = int_0^t f(t-s) u(s) ds and D = int_0^t u
    Matrix A = Matrix::Zero(3, 3);
    A(0, 0) = -I1 * p.delta;
    A(0, 1) = -1.0;
    A(1, 0) = memory_kernel(p, 0.0);
    A(1, 1) = -(p.lambda + I1 * p.delta);
    A(2, 0) = 1.0;
    U1Solution s;
    s.times = grid_of(p, n);
    s.u1.resize(n + 1);
    s.integral.resize(n + 1);
    Vector z0 = Vector::Zero(3);
    z0(0) = 1.0;
    for (long k = 0; k <= n; ++k) {
        const Vector z = expm(A * s.times[k]) * z0;
        s.u1[k] = z(0);
        s.integral[k] = z(2);
    }
    return s;
}

CavityTrajectory exact_response(const CavityParams& p, const U1Solution& u) {
    CavityTrajectory tr;
    tr.times = u.times;
    tr.u1 = u.u1;
    tr.halving_change = u.halving_change;
    const std::size_t n = u.times.size();
    tr.D1.resize(n);
    tr.n_exact.resize(n);
    tr.n_linear.resize(n);
    tr.n_second.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const cplx D1 = p.omega_drive * u.integral[k];
        const cplx y = -I1 * std::conj(p.alpha) * D1;
        tr.D1[k] = D1;
        tr.n_linear[k] = 2.0 * std::real(std::conj(u.u1[k]) * y);
        tr.n_second[k] = tr.n_linear[k] + std::norm(D1);
        // driven minus undriven coherent amplitude, computed without the expansion
        tr.n_exact[k] = std::norm(u.u1[k] * p.alpha - I1 * D1) - std::norm(u.u1[k] * p.alpha);
    }
    return tr;
}

CavityTrajectory exact_response(const CavityParams& p) { return exact_response(p, solve_u1(p)); }

SeriesDeviation series_crosscheck(const CavityTrajectory& tr, int order) {
    if (order != 1 && order != 2) throw ArgumentError("series_crosscheck: order must be 1 or 2");
    SeriesDeviation d;
    d.order = order;
    const auto& approx = (order == 1) ? tr.n_linear : tr.n_second;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        d.max_deviation = std::max(d.max_deviation, std::abs(approx[k] - tr.n_exact[k]));
        d.peak = std::max(d.peak, std::abs(tr.n_exact[k]));
    }
    d.relative = d.peak > 0.0 ? d.max_deviation / d.peak : 0.0;
    return d;
}

SeriesDeviation series_crosscheck(const CavityParams& p, int order) {
    return series_crosscheck(exact_response(p), order);
}

} // namespace openhall
