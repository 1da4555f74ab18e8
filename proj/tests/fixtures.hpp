#pragma once

#include <cmath>

#include "openhall/response.hpp"

namespace fixtures {

using namespace openhall;

// Truncated bosonic lowering operator on n levels.
inline Matrix ladder(int n) {
    Matrix b = Matrix::Zero(n, n);
    for (int k = 1; k < n; ++k) b(k - 1, k) = std::sqrt(static_cast<double>(k));
    return b;
}

// Qubit (gap Delta, transverse tilt) coupled to an n-level oscillator by g
// (sigma_- b^+ + h.c.). The tilt removes the parity that makes <sigma_x> odd in eps.
inline CompositeSystem qubit_mode(int n, double g, double Delta = 1.0, double w_r = 0.8, double beta = 1.0,
                                  double tilt = 0.15) {
    CompositeSystem s;
    s.dim_S = 2;
    s.dim_R = n;
    s.H_S = 0.5 * Delta * pauli(3) + tilt * pauli(1);
    const Matrix b = ladder(n);
    s.H_R = w_r * b.adjoint() * b;
    s.H_SR = g * (kron(sigma_minus(), b.adjoint()) + kron(sigma_plus(), b));
    s.beta = beta;
    return s;
}

// Single smooth channel C = sigma_x.
inline DriveSpec sigma_x_drive(double eps, double w = 0.9) {
    DriveSpec d;
    d.epsilon = eps;
    d.couplings.push_back({pauli(1), [w](double t) { return std::sin(w * t) + 0.3 * std::cos(0.37 * t); }});
    return d;
}

} // namespace fixtures
