#pragma once

#include <functional>
#include <limits>
#include <string>

#include "openhall/core.hpp"

namespace openhall {

using Vec3 = Eigen::Vector3d;

// d_alpha derivatives along k_x and k_y (meV nm).
struct DGradient {
    Vec3 dkx = Vec3::Zero();
    Vec3 dky = Vec3::Zero();
};

struct BZDomain {
    enum class Kind { Torus, Disk };
    Kind kind = Kind::Torus;

    // torus: kx in [kx0, kx1), ky in [ky0, ky1)
    double kx0 = 0.0, kx1 = 2.0 * kPi, ky0 = 0.0, ky1 = 2.0 * kPi;

    // disk: polar grid in coordinates kappa with k = metric * kappa.
    // kmax = inf maps the radius onto [0, pi/2) through kappa = tan(u).
    double kmax = std::numeric_limits<double>::infinity();
    Eigen::Matrix2d metric = Eigen::Matrix2d::Identity();
    // finite kmax only: extrapolate a 1/kmax tail from (kmax, 2 kmax)
    bool richardson = false;

    static BZDomain torus(double kx0, double kx1, double ky0, double ky1);
    static BZDomain disk(double kmax, const Eigen::Matrix2d& metric = Eigen::Matrix2d::Identity());
};

struct TwoBandModel {
    std::string name;
    std::function<Vec3(double, double)> d_field;
    std::function<DGradient(double, double)> grad_d;
    std::function<double(double, double)> kinetic;                // empty means 0
    std::function<Eigen::Vector2d(double, double)> grad_kinetic;  // empty means 0
    BZDomain bz;
    double effective_mass = 0.0;

    double eps(double kx, double ky) const { return kinetic ? kinetic(kx, ky) : 0.0; }
};

inline constexpr double kDMin = 1e-9; // meV, gap-closing guard

struct DegeneratePoint : NumericalError {
    double kx, ky;
    DegeneratePoint(double kx_, double ky_);
};

struct BlochPoint {
    double kx = 0.0, ky = 0.0;
    Vec3 d = Vec3::Zero();
    double d_norm = 0.0;
    double theta = 0.0, phi = 0.0;
    double E_plus = 0.0, E_minus = 0.0;
    Matrix eigvecs; // columns |+>, |->
};

BlochPoint diagonalize(const TwoBandModel& model, double kx, double ky, double d_min = kDMin);

enum class Dir { X = 0, Y = 1 };

// <m|v_mu|n> in the (+,-) eigenbasis.
Matrix velocity_matrix(const TwoBandModel& model, const BlochPoint& bp, Dir mu);
// Velocity from an explicit eigenvector matrix (used for gauge tests).
Matrix velocity_matrix(const TwoBandModel& model, const BlochPoint& bp, Dir mu, const Matrix& U);

// Physical sigma_- expressed in the eigenbasis given by the columns of U.
Matrix sigma_minus_eigen(const Matrix& U);

struct Occupations {
    double f_plus = 0.0, f_minus = 0.0;
};

struct QBlock {
    Matrix q = Matrix::Zero(2, 2);
    // intermediates, element (n,m), n != m; eigen index 0 = +, 1 = -
    Matrix e = Matrix::Zero(2, 2); // E_n - E_m
    Matrix S = Matrix::Zero(2, 2); // (f_m - f_n) v_nm
    Matrix A = Matrix::Zero(2, 2);
    Matrix B = Matrix::Zero(2, 2);
    Matrix D = Matrix::Zero(2, 2);
};

// S_nm = (f_m - f_n) v_nm, i.e. q(0) = [v, rho_S] with rho_S = diag(f).
Matrix source_matrix(const Matrix& v, const Occupations& f);

struct ClosedFormOptions {
    // Sign of the Gamma S (w + i Gamma) numerator term. +1 is the value that
    // solves the 4x4 resolvent; -1 reproduces the sign as typeset.
    double third_term_sign = 1.0;
};

QBlock q_closed_form(const BlochPoint& bp, const Matrix& v, double omega, double gamma,
                     const Occupations& f, const ClosedFormOptions& opt = {});

// Solves (i w - i L_S + Gamma D) vec q = -vec q0 in the eigenbasis of U.
Matrix q_resolvent(const BlochPoint& bp, const Matrix& U, const Matrix& q0, double omega, double gamma);
QBlock q_direct_solve(const BlochPoint& bp, const Matrix& v, double omega, double gamma, const Occupations& f);

struct QExpansion {
    Matrix q0 = Matrix::Zero(2, 2);
    Matrix q1 = Matrix::Zero(2, 2);
};
QExpansion q_expansion(const BlochPoint& bp, const Matrix& v, double omega, const Occupations& f);

double g_theta(double theta);
double h_theta(double theta);

// ---- Hall conductance -----------------------------------------------------

struct HallParams {
    double omega = 0.2; // meV
    double gamma = 0.0; // meV
    double mu = 0.0;    // meV
    double T = 0.0;     // K
};

struct HallGrid {
    int n1 = 256; // torus: nkx; disk: radial
    int n2 = 256; // torus: nky; disk: angular
    int workers = 1;
    bool estimate = true;       // also evaluate at half resolution
    double convergence_tol = 0; // > 0: throw ConvergenceError above it
    std::string describe(const BZDomain& bz) const;
};

struct HallResult {
    cplx sigma0{0.0, 0.0};
    cplx sigma1{0.0, 0.0};
    cplx sigma_total{0.0, 0.0};
    double chern = 0.0;
    std::string grid_spec;
    double convergence_estimate = 0.0;
    long excluded_points = 0;
    long total_points = 0;
    bool flagged = false; // excluded fraction above 0.1%
};

struct ConvergenceError : NumericalError {
    HallResult fine, coarse;
    ConvergenceError(const HallResult& f, const HallResult& c, double tol);
};

// Optional per-k eigenvector phases (gauge tests); returns (chi_plus, chi_minus).
using GaugeFn = std::function<std::pair<double, double>(double, double)>;

HallResult hall_conductance(const TwoBandModel& model, const HallParams& p, const HallGrid& grid);

// sigma = (1/(2 pi w)) int Tr[v_x q_y(w)] d^2k with q from the resolvent. The
// optional hook rewrites q(0) per momentum before the solve.
using Q0Hook = std::function<Matrix(const BlochPoint&, const Matrix& U, const Matrix& v_y, const Occupations&)>;
struct ResolventOptions {
    GaugeFn gauge;
    Q0Hook q0;
};
HallResult hall_conductance_resolvent(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                      const ResolventOptions& opt = {});

// Same integrals as hall_conductance with extra phases on the eigenvectors.
// Only the D_ab term of sigma1 depends on them.
HallResult hall_conductance_gauged(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                   const GaugeFn& gauge);

// (1/4 pi) int d.(d_kx d x d_ky d)/d^3 over the model's torus: the Chern number
// of the map k -> d/|d|, an integer for a gapped periodic field.
double torus_chern_number(const TwoBandModel& model, int nkx, int nky);

// ---- second-order initial condition --------------------------------------

struct SecondOrderRho {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;
    Matrix rho2 = Matrix::Zero(2, 2);
};
// rho_S^(2) in the eigenbasis for Lorentzian coupling (gamma, lambda).
SecondOrderRho rho_s_second_order(const BlochPoint& bp, const Occupations& f, double beta, double gamma,
                                  double lambda);

struct SecondOrderComparison {
    HallResult leading;
    HallResult corrected;
    double rel_difference = 0.0;
};
SecondOrderComparison compare_second_order(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                           double lambda);

} // namespace openhall
