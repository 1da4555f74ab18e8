#include "openhall/core.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace openhall {

double units::beta_from_kelvin(double T) {
    if (T < 0.0) throw ArgumentError("temperature must be non-negative");
    if (T == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (kB * T);
}

Matrix pauli(Pauli a) { return pauli(static_cast<int>(a)); }

Matrix pauli(int alpha) {
    Matrix s(2, 2);
    switch (alpha) {
    case 0: s << 1, 0, 0, 1; break;
    case 1: s << 0, 1, 1, 0; break;
    case 2: s << 0, -I1, I1, 0; break;
    case 3: s << 1, 0, 0, -1; break;
    default: throw ArgumentError("pauli index must be in 0..3");
    }
    return s;
}

Matrix sigma_plus() {
    Matrix s = Matrix::Zero(2, 2);
    s(0, 1) = 1.0;
    return s;
}

Matrix sigma_minus() {
    Matrix s = Matrix::Zero(2, 2);
    s(1, 0) = 1.0;
    return s;
}

static void require_same(const Matrix& A, const Matrix& B, const char* what) {
    if (A.rows() != B.rows() || A.cols() != B.cols() || A.rows() != A.cols())
        throw ArgumentError(std::string(what) + ": dimension mismatch");
}

Matrix commutator(const Matrix& A, const Matrix& B) {
    require_same(A, B, "commutator");
    return A * B - B * A;
}

Matrix anticommutator(const Matrix& A, const Matrix& B) {
    require_same(A, B, "anticommutator");
    return A * B + B * A;
}

Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

bool is_finite(const Matrix& M) { return M.allFinite(); }

double max_abs(const Matrix& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

bool is_hermitian(const Matrix& M, double rel_tol) {
    if (M.rows() != M.cols()) return false;
    const double scale = max_abs(M);
    return max_abs(M - M.adjoint()) <= rel_tol * (scale > 0 ? scale : 1.0);
}

Vector vec(const Matrix& X) { return Eigen::Map<const Vector>(X.data(), X.size()); }

Matrix unvec(const Vector& v, Eigen::Index d) {
    if (d * d != v.size()) throw ArgumentError("unvec: size is not d^2");
    return Eigen::Map<const Matrix>(v.data(), d, d);
}

Matrix unvec(const Vector& v) {
    const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
    return unvec(v, d);
}

SuperOp left_mul(const Matrix& A) { return kron(Matrix::Identity(A.rows(), A.rows()), A); }

SuperOp right_mul(const Matrix& B) { return kron(B.transpose(), Matrix::Identity(B.rows(), B.rows())); }

SuperOp sandwich(const Matrix& A, const Matrix& B) { return kron(B.transpose(), A); }

SuperOp liouvillian(const Matrix& H) {
    if (H.rows() != H.cols()) throw ArgumentError("liouvillian: H must be square");
    return left_mul(H) - right_mul(H);
}

SuperOp lindblad_dissipator(const Matrix& Lop) {
    if (Lop.rows() != Lop.cols()) throw ArgumentError("lindblad_dissipator: operator must be square");
    const Matrix LdL = Lop.adjoint() * Lop;
    return 2.0 * sandwich(Lop, Lop.adjoint()) - left_mul(LdL) - right_mul(LdL);
}

SuperOp identity_super(Eigen::Index d) { return SuperOp::Identity(d * d, d * d); }

Matrix apply_super(const SuperOp& S, const Matrix& X) {
    if (S.rows() != X.size() || S.cols() != X.size()) throw ArgumentError("apply: superoperator size mismatch");
    return unvec(S * vec(X), X.rows());
}

// ---- exponentials ---------------------------------------------------------

static bool is_normal(const Matrix& M) {
    const double s = max_abs(M);
    if (s == 0.0) return true;
    return max_abs(M * M.adjoint() - M.adjoint() * M) <= 1e-13 * s * s * M.rows();
}

Matrix expm(const Matrix& M) {
    if (M.rows() != M.cols()) throw ArgumentError("expm: matrix must be square");
    if (!M.allFinite()) throw NumericalError("expm: non-finite generator");
    Matrix E;
    if (is_normal(M)) {
        // A normal matrix has a diagonal Schur form up to rounding.
        Eigen::ComplexSchur<Matrix> schur(M);
        if (schur.info() != Eigen::Success) throw NumericalError("expm: Schur decomposition failed");
        const Matrix& U = schur.matrixU();
        const Vector ev = schur.matrixT().diagonal();
        Vector eev(ev.size());
        for (Eigen::Index i = 0; i < ev.size(); ++i) eev(i) = std::exp(ev(i));
        E = U * eev.asDiagonal() * U.adjoint();
    } else {
        E = M.exp();
    }
    if (!E.allFinite())
        throw NumericalError("expm: non-finite result (max|M| = " + std::to_string(max_abs(M)) + ")");
    return E;
}

Matrix matrix_exp_action(const Matrix& M, double t, const Matrix& V) {
    if (M.rows() != M.cols()) throw ArgumentError("matrix_exp_action: generator must be square");
    const Matrix E = expm(M * t);
    if (V.rows() == M.rows()) return E * V;
    if (V.rows() == V.cols() && V.size() == M.rows()) return unvec(E * vec(V), V.rows());
    throw ArgumentError("matrix_exp_action: operand shape does not match generator");
}

// ---- traces and states ----------------------------------------------------

Matrix partial_trace(const Matrix& rho, const std::vector<int>& dims, int keep) {
    if (dims.empty()) throw ArgumentError("partial_trace: empty dims");
    if (keep < 0 || keep >= static_cast<int>(dims.size())) throw ArgumentError("partial_trace: keep out of range");
    long total = 1;
    for (int d : dims) {
        if (d <= 0) throw ArgumentError("partial_trace: non-positive factor dim");
        total *= d;
    }
    if (rho.rows() != total || rho.cols() != total) throw ArgumentError("partial_trace: dims do not match operator");
    // Index i = (i_before * dk + i_keep) * after + i_after, first factor most significant.
    long before = 1, after = 1;
    for (int j = 0; j < keep; ++j) before *= dims[j];
    for (std::size_t j = keep + 1; j < dims.size(); ++j) after *= dims[j];
    const long dk = dims[keep];
    Matrix out = Matrix::Zero(dk, dk);
    for (long a = 0; a < dk; ++a)
        for (long b = 0; b < dk; ++b) {
            cplx s = 0.0;
            for (long p = 0; p < before; ++p)
                for (long q = 0; q < after; ++q) s += rho((p * dk + a) * after + q, (p * dk + b) * after + q);
            out(a, b) = s;
        }
    return out;
}

Matrix trace_R(const Matrix& X, int dS, int dR) { return partial_trace(X, {dS, dR}, 0); }

Matrix trace_S(const Matrix& X, int dS, int dR) { return partial_trace(X, {dS, dR}, 1); }

Matrix thermal_state(const Matrix& H, double beta) {
    if (!is_hermitian(H, 1e-10)) throw ArgumentError("thermal_state: H must be Hermitian");
    if (beta < 0.0 || std::isnan(beta)) throw ArgumentError("thermal_state: beta must be >= 0");
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    const Eigen::VectorXd& E = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    Eigen::VectorXd w(E.size());
    const double e0 = E.minCoeff();
    if (std::isinf(beta)) {
        const double tol = 1e-10 * std::max(1.0, E.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < E.size(); ++i) w(i) = (E(i) - e0 <= tol) ? 1.0 : 0.0;
    } else {
        // shifting by the ground energy keeps every weight <= 1
        for (Eigen::Index i = 0; i < E.size(); ++i) w(i) = std::exp(-beta * (E(i) - e0));
    }
    w /= w.sum();
    return V * w.cast<cplx>().asDiagonal() * V.adjoint();
}

void SpectralDensity::validate() const {
    if (!(gamma >= 0.0)) throw ArgumentError("spectral density: gamma must be >= 0");
    if (!(lambda > 0.0)) throw ArgumentError("spectral density: lambda must be > 0");
}

double SpectralDensity::operator()(double w) const {
    const double x = w - center;
    return gamma / (2.0 * kPi) * lambda * lambda / (x * x + lambda * lambda);
}

} // namespace openhall
