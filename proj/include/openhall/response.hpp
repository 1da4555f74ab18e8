#pragma once

#include <functional>
#include <string>
#include <vector>

#include "openhall/core.hpp"

namespace openhall {

// System (dim_S) coupled to a finite reservoir (dim_R); composite ordering S kron R.
struct CompositeSystem {
    int dim_S = 2, dim_R = 1;
    Matrix H_S, H_R, H_SR; // H_SR on the composite space
    double beta = 1.0;     // 1/meV, +inf allowed

    void validate() const;
    int dim() const { return dim_S * dim_R; }
    Matrix H() const;      // H_S + H_R + H_SR on the composite
    Matrix rho_eq() const; // exp(-beta H)/Z
    Matrix rho_R() const;  // exp(-beta H_R)/Z_R
    Matrix lift_S(const Matrix& A) const; // A kron I_R
};

struct DriveSpec {
    struct Channel {
        Matrix C; // Hermitian, system factor
        std::function<double(double)> f;
    };
    std::vector<Channel> couplings;
    double epsilon = 0.0;

    void validate(int dim_S) const;
    // H_e(t) = -sum_nu f_nu(t) C_nu, lifted to the composite
    Matrix H_e(const CompositeSystem& sys, double t) const;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix> states;
};

struct PropagateOptions {
    double tol = 1e-8;       // step-halving acceptance per output interval
    int initial_substeps = 4;
    int max_substeps = 1 << 16;
};

// rho' = -i[H + eps H_e(t), rho] by classical RK4 with step halving.
Trajectory propagate_driven(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& rho0,
                            const std::vector<double>& t_grid, const PropagateOptions& opt = {});

struct SeriesOptions {
    double t0 = 0.0;
    Matrix rho0;             // empty: rho_eq
    double dt = 0.01;        // cumulative-quadrature step
    bool richardson = true;  // combine dt and dt/2
    double tol = 1e-6;       // bound on the dt / dt/2 difference
};

inline constexpr int kMaxSeriesOrder = 3;

// x^(0)(u) .. x^(N)(u); order n carries its (-eps)^n factor, so the sum
// approximates rho_T(u) up to O(eps^(N+1)).
std::vector<Matrix> x_series(const CompositeSystem& sys, const DriveSpec& drive, double u, int N,
                             const SeriesOptions& opt = {});

struct ResponseRecord {
    std::vector<double> times;
    // order_terms[n][i]: eps^n contribution to <F(t_i)>_e; order_terms[0] == 0
    std::vector<std::vector<double>> order_terms;
    std::vector<double> truncated; // sum of orders 1..n
    std::vector<double> exact;     // Tr_S(rho_e(t) F) from propagate_driven
    double step = 0.0;
    int order = 0;
};

// <F(t)>_e truncated at eps^order (x truncated at order-1). t_grid[0] must be t0.
ResponseRecord response_expectation(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F,
                                    const std::vector<double>& t_grid, int order, const SeriesOptions& opt = {},
                                    bool with_exact = true);

// chi(t,u) = i eps Tr{F g(t,u)[C_nu, x(u)]}, x truncated at x_order; used to
// rebuild <F(t)>_e by an explicit u-integral.
cplx response_kernel(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F, int nu, double t, double u,
                     int x_order, const SeriesOptions& opt = {});

struct SusceptibilityOptions {
    double eta_factor = 1e-3;   // eta = eta_factor * smallest nonzero gap
    double horizon = 30.0;      // T_max = horizon / eta
    bool extrapolate = true;    // 2 chi(eta) - chi(2 eta)
    int channel = 0;
    double dt_series = 0.05;    // orders >= 2: switch-on sweep step
};

inline constexpr double kMaxSwitchOnSteps = 4e6;

struct Susceptibility {
    cplx value{0.0, 0.0};
    cplx value_eta{0.0, 0.0}; // before extrapolation
    double eta = 0.0;
    bool converged = true;
    std::string note;
};

Susceptibility susceptibility(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F, double omega,
                              int order, const SusceptibilityOptions& opt = {});

// q_nu(t) = Tr_R exp(-iLt)[C_nu kron I, x], x = rho_eq unless given.
std::vector<Matrix> q_nu_direct(const CompositeSystem& sys, const Matrix& C_nu, const std::vector<double>& t_grid,
                                const Matrix& x = Matrix());

// ---- Nakajima-Zwanzig -----------------------------------------------------

struct Projectors {
    SuperOp E_R; // X -> X kron rho_R      (dim^2 x dim_S^2)
    SuperOp T_R; // Tr_R                    (dim_S^2 x dim^2)
    SuperOp P, Q;
};
Projectors build_projectors(const CompositeSystem& sys);

struct NZKernel {
    std::vector<double> times; // uniform, starting at 0
    std::vector<SuperOp> c;    // system-space superoperators
    std::vector<Matrix> K;     // system operators
    SuperOp mean_field;        // X -> Tr_R[L (X kron rho_R)]
};

inline constexpr long kMaxLiouvilleDim = 4096;

// Lambda0: composite operator Lambda(0). Lambda_dot: optional samples of
// d/dt Lambda on the same grid (empty: Lambda constant).
NZKernel nz_kernel(const CompositeSystem& sys, const std::vector<double>& t_grid, const Matrix& Lambda0,
                   const std::vector<Matrix>& Lambda_dot = {});

// Integrates q' = -i M q + int_0^t c(t-s) q(s) ds + K(t) on the kernel grid
// (implicit trapezoid, Richardson over h and 2h). Returns q at every requested
// time; each must coincide with an even-index kernel node.
std::vector<Matrix> q_nu_master_solve(const NZKernel& kernel, const Matrix& q0, const std::vector<double>& t_grid);

struct BathCoupling {
    enum class Form { RotatingWave, Other };
    Form form = Form::RotatingWave; // sigma_- b^+ + h.c.
    Matrix lowering;                // system lowering operator, default sigma_-
};

// Markov limit of the memory for a Lorentzian bath: gamma * D(lowering).
SuperOp born_markov_c_omega(const BathCoupling& parts, const SpectralDensity& spectral);

} // namespace openhall
