#pragma once

#include <vector>

#include "openhall/core.hpp"

namespace openhall {

// Driven single-mode cavity in a Lorentzian reservoir, rotating frame.
// Rates and energies in units of gamma, times in 1/gamma.
struct CavityParams {
    double delta = 0.2;        // omega_0 - omega_L
    double omega_drive = 0.01; // Omega
    double gamma = 1.0;
    double lambda = 0.2;       // reservoir width
    cplx alpha{4.0, 0.0};      // initial coherent amplitude, dimensionless
    double t_max = 20.0;
    double dt = 0.01;
    double temperature = 0.0;  // accepted, does not enter n_e
    double tol = 1e-8;         // step-halving gate

    void validate() const;
};

// f(tau) = (gamma lambda / 2) exp(-(lambda + i delta) tau)
cplx memory_kernel(const CavityParams& p, double tau);

struct U1Solution {
    std::vector<double> times;
    std::vector<cplx> u1;
    std::vector<cplx> integral; // int_0^t u1
    double halving_change = 0.0;
};

// Volterra time stepping with the sampled kernel.
U1Solution solve_u1(const CavityParams& p);
// Local two-component system (u1, memory integral) from the exponential
// kernel, propagated exactly.
U1Solution solve_u1_local(const CavityParams& p);

struct CavityTrajectory {
    std::vector<double> times;
    std::vector<cplx> u1, D1;
    std::vector<double> n_exact, n_linear, n_second;
    double halving_change = 0.0;
};

CavityTrajectory exact_response(const CavityParams& p);
CavityTrajectory exact_response(const CavityParams& p, const U1Solution& u);

struct SeriesDeviation {
    int order = 1;
    double max_deviation = 0.0; // max_t |n_order - n_exact|
    double peak = 0.0;          // max_t |n_exact|
    double relative = 0.0;      // max_deviation / peak
};

SeriesDeviation series_crosscheck(const CavityParams& p, int order);
SeriesDeviation series_crosscheck(const CavityTrajectory& tr, int order);

} // namespace openhall
