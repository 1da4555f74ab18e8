#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace openhall {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
// Superoperators act on column-stacked operators, see vec().
using SuperOp = Eigen::MatrixXcd;

inline constexpr cplx I1{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

// ---- errors ---------------------------------------------------------------

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- units ----------------------------------------------------------------
// hbar = 1. Energies and rates in meV, times in hbar/meV, lengths in nm.
namespace units {
inline constexpr double kB = 0.08617333262;          // meV / K
inline constexpr double hbar2_over_me = 76.19964231; // meV nm^2  (hbar^2 / m_e)

// beta = 1/(kB T); T = 0 maps to +inf.
double beta_from_kelvin(double T);
} // namespace units

// ---- operators ------------------------------------------------------------

enum class Pauli { I = 0, X = 1, Y = 2, Z = 3 };

Matrix pauli(Pauli a);
Matrix pauli(int alpha); // 0..3, throws ArgumentError otherwise
Matrix sigma_plus();     // [[0,1],[0,0]]
Matrix sigma_minus();    // [[0,0],[1,0]]

Matrix commutator(const Matrix& A, const Matrix& B);
Matrix anticommutator(const Matrix& A, const Matrix& B);
Matrix kron(const Matrix& A, const Matrix& B);

bool is_finite(const Matrix& M);
bool is_hermitian(const Matrix& M, double rel_tol = 1e-12);
double max_abs(const Matrix& M);

// ---- vectorization and superoperators -------------------------------------
// Column stacking: vec(A X B) = (B^T kron A) vec(X). Left multiplication by A
// is therefore (I kron A), right multiplication by B is (B^T kron I).

Vector vec(const Matrix& X);
Matrix unvec(const Vector& v);
Matrix unvec(const Vector& v, Eigen::Index d);

SuperOp left_mul(const Matrix& A);
SuperOp right_mul(const Matrix& B);
SuperOp sandwich(const Matrix& A, const Matrix& B); // X -> A X B
SuperOp liouvillian(const Matrix& H);               // X -> [H, X]
// Unit-rate generator X -> 2 L X L^+ - L^+L X - X L^+L.
SuperOp lindblad_dissipator(const Matrix& Lop);
SuperOp identity_super(Eigen::Index d);

Matrix apply_super(const SuperOp& S, const Matrix& X);

// ---- exponentials ---------------------------------------------------------

// exp(M): Schur based for normal M, scaling-and-squaring Pade otherwise.
Matrix expm(const Matrix& M);
// exp(M t) v for a vector (rows(M) == rows(v)) or an operator when M is a
// superoperator acting on vec(V).
Matrix matrix_exp_action(const Matrix& M, double t, const Matrix& V);

// ---- traces and states ----------------------------------------------------

Matrix partial_trace(const Matrix& rho, const std::vector<int>& dims, int keep);
// Trace over the second factor of a bipartite operator, dims (dS, dR).
Matrix trace_R(const Matrix& X, int dS, int dR);
// Trace over the first factor.
Matrix trace_S(const Matrix& X, int dS, int dR);

// exp(-beta H)/Z. beta = +inf gives the (uniform) ground-manifold projector.
Matrix thermal_state(const Matrix& H, double beta);

struct SpectralDensity {
    double gamma = 0.0;
    double lambda = 1.0;
    double center = 0.0;

    void validate() const;
    // J(w) = (gamma/2pi) lambda^2 / ((w-center)^2 + lambda^2)
    double operator()(double w) const;
};

} // namespace openhall
