#include "openhall/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

namespace openhall {

// ---- composite and drive ----------------------------------------------------

void CompositeSystem::validate() const {
    if (dim_S <= 0 || dim_R <= 0) throw ArgumentError("composite: dimensions must be positive");
    if (H_S.rows() != dim_S || H_S.cols() != dim_S) throw ArgumentError("composite: H_S has wrong shape");
    if (H_R.rows() != dim_R || H_R.cols() != dim_R) throw ArgumentError("composite: H_R has wrong shape");
    if (H_SR.size() != 0 && (H_SR.rows() != dim() || H_SR.cols() != dim()))
        throw ArgumentError("composite: H_SR has wrong shape");
    if (!is_hermitian(H_S, 1e-10) || !is_hermitian(H_R, 1e-10) || (H_SR.size() && !is_hermitian(H_SR, 1e-10)))
        throw ArgumentError("composite: Hamiltonians must be Hermitian");
    if (std::isnan(beta) || beta < 0.0) throw ArgumentError("composite: beta must be >= 0");
}

Matrix CompositeSystem::lift_S(const Matrix& A) const { return kron(A, Matrix::Identity(dim_R, dim_R)); }

Matrix CompositeSystem::H() const {
    Matrix H = kron(H_S, Matrix::Identity(dim_R, dim_R)) + kron(Matrix::Identity(dim_S, dim_S), H_R);
    if (H_SR.size()) H += H_SR;
    return H;
}

Matrix CompositeSystem::rho_eq() const { return thermal_state(H(), beta); }
Matrix CompositeSystem::rho_R() const { return thermal_state(H_R, beta); }

void DriveSpec::validate(int dim_S) const {
    for (const auto& ch : couplings) {
        if (ch.C.rows() != dim_S || ch.C.cols() != dim_S) throw ArgumentError("drive: C_nu must act on the system");
        if (!is_hermitian(ch.C, 1e-10)) throw ArgumentError("drive: C_nu must be Hermitian");
        if (!ch.f) throw ArgumentError("drive: missing f_nu");
    }
    if (!std::isfinite(epsilon)) throw ArgumentError("drive: epsilon must be finite");
}

Matrix DriveSpec::H_e(const CompositeSystem& sys, double t) const {
    Matrix He = Matrix::Zero(sys.dim(), sys.dim());
    for (const auto& ch : couplings) He -= ch.f(t) * sys.lift_S(ch.C);
    return He;
}

// ---- exact propagation ------------------------------------------------------

static void check_grid(const std::vector<double>& t) {
    if (t.empty()) throw ArgumentError("time grid is empty");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw ArgumentError("time grid must be strictly increasing");
}

static void check_state(const Matrix& rho, int d) {
    if (rho.rows() != d || rho.cols() != d) throw ArgumentError("initial state has wrong shape");
    if (!is_hermitian(rho, 1e-10)) throw ArgumentError("initial state must be Hermitian");
    if (std::abs(rho.trace() - 1.0) > 1e-10) throw ArgumentError("initial state must have unit trace");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    if (es.eigenvalues().minCoeff() < -1e-10) throw ArgumentError("initial state must be positive");
}

namespace {

struct RK4 {
    const Matrix& H;
    const DriveSpec& drive;
    const CompositeSystem& sys;

    Matrix rhs(double t, const Matrix& r) const {
        Matrix Ht = H;
        if (drive.epsilon != 0.0) Ht += drive.epsilon * drive.H_e(sys, t);
        return -I1 * (Ht * r - r * Ht);
    }

    Matrix advance(Matrix r, double t, double t1, int m) const {
        const double h = (t1 - t) / m;
        for (int k = 0; k < m; ++k) {
            const double s = t + k * h;
            const Matrix k1 = rhs(s, r);
            const Matrix k2 = rhs(s + 0.5 * h, r + 0.5 * h * k1);
            const Matrix k3 = rhs(s + 0.5 * h, r + 0.5 * h * k2);
            const Matrix k4 = rhs(s + h, r + h * k3);
            r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return r;
    }
};

} // namespace

Trajectory propagate_driven(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& rho0,
                            const std::vector<double>& t_grid, const PropagateOptions& opt) {
    sys.validate();
    drive.validate(sys.dim_S);
    check_grid(t_grid);
    check_state(rho0, sys.dim());
    const Matrix H = sys.H();
    RK4 rk{H, drive, sys};

    Trajectory tr;
    tr.times = t_grid;
    tr.states.reserve(t_grid.size());
    tr.states.push_back(rho0);
    int m = std::max(1, opt.initial_substeps);
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        const Matrix& r = tr.states.back();
        Matrix coarse = rk.advance(r, t_grid[i - 1], t_grid[i], m);
        for (;;) {
            Matrix fine = rk.advance(r, t_grid[i - 1], t_grid[i], 2 * m);
            const double diff = max_abs(fine - coarse);
            m *= 2;
            if (diff <= opt.tol) {
                coarse = std::move(fine);
                m = std::max(1, m / 4); // let the next interval try a coarser step first
                break;
            }
            if (m > opt.max_substeps)
                throw NumericalError("propagate_driven: step halving did not converge at t = " +
                                     std::to_string(t_grid[i]));
            coarse = std::move(fine);
        }
        if (std::abs(coarse.trace() - 1.0) > 1e-10) throw NumericalError("propagate_driven: trace drift above 1e-10");
        tr.states.push_back(std::move(coarse));
    }
    return tr;
}

// ---- Volterra series --------------------------------------------------------

namespace {

// y_0 = rho, y_n' = -i[H, y_n] - i eps [H_e(t), y_{n-1}], y_n(t0) = 0 (n >= 1).
// Cumulative trapezoid with the exact free propagator on every substep.
class SeriesSweep {
public:
    SeriesSweep(const CompositeSystem& sys, const DriveSpec& drive, int N, double eps)
        : sys_(sys), drive_(drive), N_(N), eps_(eps), H_(sys.H()) {}

    // Calls visit(i, y) at every grid node.
    template <class Visit>
    void run(const Matrix& rho0, const std::vector<double>& grid, double dt, Visit&& visit) {
        std::vector<Matrix> y(N_ + 1, Matrix::Zero(sys_.dim(), sys_.dim()));
        y[0] = rho0;
        std::vector<Matrix> h(N_ + 1);
        double t = grid[0];
        source(t, y, h);
        visit(0, y);
        for (std::size_t i = 1; i < grid.size(); ++i) {
            const int m = std::max(1, static_cast<int>(std::ceil((grid[i] - grid[i - 1]) / dt - 1e-9)));
            const double step = (grid[i] - grid[i - 1]) / m;
            const Matrix& P = propagator(step);
            for (int k = 0; k < m; ++k) {
                const double t1 = (k + 1 == m) ? grid[i] : grid[i - 1] + (k + 1) * step;
                y[0] = P * y[0] * P.adjoint();
                for (int n = 1; n <= N_; ++n) {
                    y[n] = P * (y[n] + 0.5 * step * h[n]) * P.adjoint();
                    h[n] = rate(t1, y[n - 1]);
                    y[n] += 0.5 * step * h[n];
                }
                t = t1;
            }
            visit(i, y);
        }
    }

private:
    Matrix rate(double t, const Matrix& prev) const {
        const Matrix He = drive_.H_e(sys_, t);
        return (-I1 * eps_) * (He * prev - prev * He);
    }

    void source(double t, const std::vector<Matrix>& y, std::vector<Matrix>& h) const {
        for (int n = 1; n <= N_; ++n) h[n] = rate(t, y[n - 1]);
    }

    const Matrix& propagator(double step) {
        auto it = cache_.find(step);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(step, expm(-I1 * step * H_)).first->second;
    }

    const CompositeSystem& sys_;
    const DriveSpec& drive_;
    int N_;
    double eps_;
    Matrix H_;
    std::map<double, Matrix> cache_;
};

void check_order(int N) {
    if (N < 0) throw ArgumentError("series order must be >= 0");
    if (N > kMaxSeriesOrder) throw ArgumentError("series order above the supported maximum of 3");
}

// Sweeps at dt and dt/2 and returns the extrapolated y_n at every node.
std::vector<std::vector<Matrix>> series_on_grid(const CompositeSystem& sys, const DriveSpec& drive,
                                                const Matrix& rho0, const std::vector<double>& grid, int N,
                                                const SeriesOptions& opt) {
    if (!(opt.dt > 0.0)) throw ArgumentError("series: dt must be > 0");
    auto collect = [&](double dt) {
        std::vector<std::vector<Matrix>> out(grid.size());
        SeriesSweep sw(sys, drive, N, drive.epsilon);
        sw.run(rho0, grid, dt, [&](std::size_t i, const std::vector<Matrix>& y) { out[i] = y; });
        return out;
    };
    auto coarse = collect(opt.dt);
    if (N == 0 || grid.size() < 2) return coarse;
    auto fine = collect(0.5 * opt.dt);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (int n = 1; n <= N; ++n) {
            err = std::max(err, max_abs(fine[i][n] - coarse[i][n]) / 3.0);
            if (opt.richardson) fine[i][n] = (4.0 * fine[i][n] - coarse[i][n]) / 3.0;
        }
    if (err > opt.tol)
        throw NumericalError("series: quadrature grid too coarse (estimated error " + std::to_string(err) + ")");
    return fine;
}

Matrix initial_state(const CompositeSystem& sys, const SeriesOptions& opt) {
    if (opt.rho0.size() == 0) return sys.rho_eq();
    check_state(opt.rho0, sys.dim());
    return opt.rho0;
}

} // namespace

std::vector<Matrix> x_series(const CompositeSystem& sys, const DriveSpec& drive, double u, int N,
                             const SeriesOptions& opt) {
    sys.validate();
    drive.validate(sys.dim_S);
    check_order(N);
    if (u < opt.t0) throw ArgumentError("x_series: u precedes the switch-on time t0");
    const Matrix rho0 = initial_state(sys, opt);
    if (u == opt.t0) {
        std::vector<Matrix> x(N + 1, Matrix::Zero(sys.dim(), sys.dim()));
        x[0] = rho0;
        return x;
    }
    return series_on_grid(sys, drive, rho0, {opt.t0, u}, N, opt).back();
}

ResponseRecord response_expectation(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F,
                                    const std::vector<double>& t_grid, int order, const SeriesOptions& opt,
                                    bool with_exact) {
    sys.validate();
    drive.validate(sys.dim_S);
    check_grid(t_grid);
    if (order < 1) throw ArgumentError("response_expectation: order must be >= 1");
    check_order(order);
    if (F.rows() != sys.dim_S || !is_hermitian(F, 1e-10))
        throw ArgumentError("response_expectation: F must be Hermitian on the system");
    if (std::abs(t_grid.front() - opt.t0) > 1e-12) throw ArgumentError("response_expectation: grid must start at t0");
    const Matrix rho0 = initial_state(sys, opt);
    const Matrix FF = sys.lift_S(F);

    const auto ys = series_on_grid(sys, drive, rho0, t_grid, order, opt);
    ResponseRecord rec;
    rec.times = t_grid;
    rec.step = opt.dt;
    rec.order = order;
    rec.order_terms.assign(order + 1, std::vector<double>(t_grid.size(), 0.0));
    rec.truncated.assign(t_grid.size(), 0.0);
    for (std::size_t i = 0; i < t_grid.size(); ++i)
        for (int n = 1; n <= order; ++n) {
            const double v = (FF * ys[i][n]).trace().real();
            rec.order_terms[n][i] = v;
            rec.truncated[i] += v;
        }

    if (with_exact) {
        const Trajectory tr = propagate_driven(sys, drive, rho0, t_grid);
        const Matrix H = sys.H();
        rec.exact.resize(t_grid.size());
        for (std::size_t i = 0; i < t_grid.size(); ++i) {
            const Matrix U = expm(-I1 * (t_grid[i] - t_grid[0]) * H);
            const Matrix free = U * rho0 * U.adjoint();
            rec.exact[i] = (FF * (tr.states[i] - free)).trace().real();
        }
    }
    return rec;
}

cplx response_kernel(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F, int nu, double t, double u,
                     int x_order, const SeriesOptions& opt) {
    if (nu < 0 || nu >= static_cast<int>(drive.couplings.size()))
        throw ArgumentError("response_kernel: channel index out of range");
    if (t < u) throw ArgumentError("response_kernel: requires t >= u");
    const auto x = x_series(sys, drive, u, x_order, opt);
    Matrix xs = Matrix::Zero(sys.dim(), sys.dim());
    for (const auto& xn : x) xs += xn;
    const Matrix C = sys.lift_S(drive.couplings[nu].C);
    const Matrix U = expm(-I1 * (t - u) * sys.H());
    const Matrix g = U * (C * xs - xs * C) * U.adjoint();
    return I1 * drive.epsilon * (sys.lift_S(F) * g).trace();
}

// ---- susceptibility ---------------------------------------------------------

namespace {

struct Spectrum {
    Eigen::VectorXd E;
    Matrix V;
};

Spectrum spectrum(const Matrix& H) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    return {es.eigenvalues(), es.eigenvectors()};
}

double smallest_gap(const Eigen::VectorXd& E) {
    const double scale = std::max(1.0, E.cwiseAbs().maxCoeff());
    double g = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < E.size(); ++a)
        for (Eigen::Index b = 0; b < E.size(); ++b) {
            const double d = std::abs(E(a) - E(b));
            if (d > 1e-9 * scale) g = std::min(g, d);
        }
    return g;
}

// i int_0^T e^{(i w - eta) t} sum_ab c_ab e^{-i w_ab t} dt. The integrand is a
// finite sum of exponentials, so every term is integrated in closed form; the
// e^{zT} pieces are the horizon truncation and are reported as the tail.
cplx laplace_exponentials(const Matrix& c, const Eigen::VectorXd& E, double omega, double eta, double T,
                          double* tail) {
    cplx sum = 0.0, cut = 0.0;
    for (Eigen::Index a = 0; a < E.size(); ++a)
        for (Eigen::Index b = 0; b < E.size(); ++b) {
            if (c(a, b) == 0.0) continue;
            const cplx z = I1 * (omega - (E(a) - E(b))) - eta;
            const cplx ezT = std::exp(z * T);
            sum += c(a, b) * (ezT - 1.0) / z;
            cut += c(a, b) * ezT / z;
        }
    *tail = std::abs(cut);
    return I1 * sum;
}

} // namespace

Susceptibility susceptibility(const CompositeSystem& sys, const DriveSpec& drive, const Matrix& F, double omega,
                              int order, const SusceptibilityOptions& opt) {
    sys.validate();
    drive.validate(sys.dim_S);
    if (order < 1) throw ArgumentError("susceptibility: order must be >= 1");
    check_order(order);
    if (opt.channel < 0 || opt.channel >= static_cast<int>(drive.couplings.size()))
        throw ArgumentError("susceptibility: channel index out of range");
    if (F.rows() != sys.dim_S || F.cols() != sys.dim_S) throw ArgumentError("susceptibility: F has wrong shape");

    const Matrix H = sys.H();
    const Spectrum sp = spectrum(H);
    Susceptibility res;
    double gap = smallest_gap(sp.E);
    if (!std::isfinite(gap)) {
        gap = 1.0;
        res.note = "degenerate spectrum: eta set relative to 1 meV";
    }
    const double eta = opt.eta_factor * gap;
    res.eta = eta;
    const Matrix rho = sys.rho_eq();
    const Matrix C = sys.lift_S(drive.couplings[opt.channel].C);
    const Matrix FF = sys.lift_S(F);
    const Matrix Fe = sp.V.adjoint() * FF * sp.V;

    auto one_eta = [&](double et, double* tail) -> cplx {
        const double T = opt.horizon / et;
        if (order == 1) {
            const Matrix X = sp.V.adjoint() * (C * rho - rho * C) * sp.V;
            // Tr[F' e^{-iEt} X' e^{iEt}] = sum_ab F'_ba X'_ab e^{-i(E_a - E_b)t}
            const Matrix c = Fe.transpose().cwiseProduct(X);
            return laplace_exponentials(c, sp.E, omega, et, T, tail);
        }
        // Orders >= 2: switch the drive on as f(u) e^{eta u} from u = -T and
        // record Tr[F e^{-iLt}[C, x^(n-1)(-t)]] while sweeping u upward.
        DriveSpec ramped = drive;
        ramped.epsilon = 1.0;
        for (auto& ch : ramped.couplings) {
            auto f = ch.f;
            ch.f = [f, et](double u) { return f(u) * std::exp(et * std::min(u, 0.0)); };
        }
        const double nd = std::ceil(T / opt.dt_series);
        if (nd > kMaxSwitchOnSteps)
            throw NumericalError("susceptibility: switch-on sweep needs " + std::to_string(nd) +
                                 " steps; raise eta_factor or dt_series");
        const long n = static_cast<long>(nd);
        const double dt = T / n;
        std::vector<double> grid(n + 1);
        for (long k = 0; k <= n; ++k) grid[k] = -T + k * dt;
        std::vector<cplx> g(n + 1);
        SeriesSweep sw(sys, ramped, order - 1, 1.0);
        sw.run(rho, grid, dt, [&](std::size_t k, const std::vector<Matrix>& y) {
            const double t = -grid[k];
            const Matrix X = sp.V.adjoint() * (C * y[order - 1] - y[order - 1] * C) * sp.V;
            cplx s = 0.0;
            for (Eigen::Index a = 0; a < X.rows(); ++a)
                for (Eigen::Index b = 0; b < X.cols(); ++b)
                    s += Fe(b, a) * X(a, b) * std::exp(-I1 * (sp.E(a) - sp.E(b)) * t);
            g[k] = s * std::exp((I1 * omega - et) * t);
        });
        cplx sum = 0.0;
        for (long k = 0; k <= n; ++k) sum += ((k == 0 || k == n) ? 0.5 : 1.0) * g[k];
        *tail = std::abs(g[0]) / et;
        return I1 * sum * dt;
    };

    double tail1 = 0.0, tail2 = 0.0;
    const cplx c1 = one_eta(eta, &tail1);
    res.value_eta = c1;
    res.value = c1;
    if (opt.extrapolate) {
        const cplx c2 = one_eta(2.0 * eta, &tail2);
        res.value = 2.0 * c1 - c2;
    }
    const double scale = std::max(std::abs(res.value), 1e-300);
    if (std::max(tail1, tail2) > 1e-8 * scale + 1e-14) {
        res.converged = false;
        res.note += (res.note.empty() ? "" : "; ") + std::string("integrand not decayed at the horizon");
    }
    return res;
}

std::vector<Matrix> q_nu_direct(const CompositeSystem& sys, const Matrix& C_nu, const std::vector<double>& t_grid,
                                const Matrix& x) {
    sys.validate();
    if (C_nu.rows() != sys.dim_S || !is_hermitian(C_nu, 1e-10))
        throw ArgumentError("q_nu_direct: C_nu must be Hermitian on the system");
    const Matrix X0 = x.size() ? x : sys.rho_eq();
    if (X0.rows() != sys.dim()) throw ArgumentError("q_nu_direct: x has wrong shape");
    const Matrix C = sys.lift_S(C_nu);
    const Spectrum sp = spectrum(sys.H());
    const Matrix Xe = sp.V.adjoint() * (C * X0 - X0 * C) * sp.V;
    std::vector<Matrix> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        Matrix Y = Xe;
        for (Eigen::Index a = 0; a < Y.rows(); ++a)
            for (Eigen::Index b = 0; b < Y.cols(); ++b) Y(a, b) *= std::exp(-I1 * (sp.E(a) - sp.E(b)) * t);
        out.push_back(trace_R(sp.V * Y * sp.V.adjoint(), sys.dim_S, sys.dim_R));
    }
    return out;
}

// ---- Nakajima-Zwanzig -------------------------------------------------------

Projectors build_projectors(const CompositeSystem& sys) {
    sys.validate();
    const long dS = sys.dim_S, dR = sys.dim_R, d = sys.dim();
    if (d * d > kMaxLiouvilleDim)
        throw ArgumentError("nz: Liouville dimension " + std::to_string(d * d) + " exceeds the dense limit " +
                            std::to_string(kMaxLiouvilleDim));
    const Matrix rR = sys.rho_R();
    Projectors pr;
    pr.E_R = SuperOp::Zero(d * d, dS * dS);
    pr.T_R = SuperOp::Zero(dS * dS, d * d);
    // column stacking: (i, j) -> i + j*d
    for (long a = 0; a < dS; ++a)
        for (long b = 0; b < dS; ++b)
            for (long r = 0; r < dR; ++r) {
                for (long s = 0; s < dR; ++s) pr.E_R((a * dR + r) + (b * dR + s) * d, a + b * dS) = rR(r, s);
                pr.T_R(a + b * dS, (a * dR + r) + (b * dR + r) * d) = 1.0;
            }
    pr.P = pr.E_R * pr.T_R;
    pr.Q = SuperOp::Identity(d * d, d * d) - pr.P;
    return pr;
}

static bool uniform_from_zero(const std::vector<double>& t, double* h) {
    if (t.size() < 2 || std::abs(t[0]) > 1e-14) return false;
    *h = t[1] - t[0];
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs((t[i] - t[i - 1]) - *h) > 1e-9 * *h) return false;
    return true;
}

NZKernel nz_kernel(const CompositeSystem& sys, const std::vector<double>& t_grid, const Matrix& Lambda0,
                   const std::vector<Matrix>& Lambda_dot) {
    check_grid(t_grid);
    const Projectors pr = build_projectors(sys);
    const long d = sys.dim();
    if (Lambda0.rows() != d || Lambda0.cols() != d) throw ArgumentError("nz_kernel: Lambda(0) has wrong shape");
    if (!Lambda_dot.empty() && Lambda_dot.size() != t_grid.size())
        throw ArgumentError("nz_kernel: Lambda_dot must be sampled on the kernel grid");
    if (t_grid.front() < 0.0) throw ArgumentError("nz_kernel: grid must start at t >= 0");

    const SuperOp L = liouvillian(sys.H());
    const SuperOp QL = pr.Q * L;
    const SuperOp left = pr.T_R * L;          // Tr_R L
    const SuperOp right = QL * pr.E_R;        // Q L (. kron rho_R)
    const Vector QLam = pr.Q * vec(Lambda0);

    NZKernel k;
    k.times = t_grid;
    k.mean_field = pr.T_R * L * pr.E_R;
    k.c.reserve(t_grid.size());
    k.K.reserve(t_grid.size());

    double h = 0.0;
    const bool uniform = uniform_from_zero(t_grid, &h);
    SuperOp G = SuperOp::Identity(d * d, d * d); // e^{-iQL t}
    SuperOp Gstep;
    if (uniform) Gstep = expm(-I1 * h * QL);

    // Lambda_dot pieces, accumulated by the trapezoid rule
    std::vector<Vector> ULd; // e^{-iL tau} Lambda_dot(tau)
    std::vector<SuperOp> Gs;
    const bool have_dot = !Lambda_dot.empty();
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        if (uniform) {
            if (i > 0) G = Gstep * G;
        } else {
            G = expm(-I1 * t * QL);
        }
        k.c.push_back(-(left * G * right));
        Vector Kv = -I1 * (left * (G * QLam));
        if (have_dot) {
            const Matrix U = expm(-I1 * t * sys.H());
            ULd.push_back(vec(U * Lambda_dot[i] * U.adjoint()));
            Gs.push_back(G);
            Kv += pr.T_R * ULd.back();
            if (i > 0) {
                if (!uniform) throw ArgumentError("nz_kernel: a time-dependent Lambda needs a uniform grid from 0");
                // int_0^t e^{-iQL(t - tau)} Q e^{-iL tau} Lambda_dot(tau) dtau
                Vector acc = Vector::Zero(d * d);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double w = (j == 0 || j == i) ? 0.5 : 1.0;
                    acc += w * (Gs[i - j] * (pr.Q * ULd[j]));
                }
                Kv += -I1 * (left * acc) * h;
            }
        }
        k.K.push_back(unvec(Kv, sys.dim_S));
    }
    return k;
}

namespace {

// Implicit trapezoid on every `stride`-th kernel node.
std::vector<Matrix> master_trapezoid(const NZKernel& k, const Matrix& q0, std::size_t stride, double h) {
    const std::size_t total = (k.times.size() - 1) / stride + 1;
    const long D = q0.size();
    const long dS = q0.rows();
    std::vector<Vector> q(total), f(total);
    const SuperOp M = -I1 * k.mean_field;
    auto cval = [&](std::size_t j) -> const SuperOp& { return k.c[j * stride]; };
    auto Kval = [&](std::size_t j) { return vec(k.K[j * stride]); };

    q[0] = vec(q0);
    f[0] = M * q[0] + Kval(0);
    const SuperOp A = SuperOp::Identity(D, D) - 0.5 * h * (M + 0.5 * h * cval(0));
    const Eigen::PartialPivLU<SuperOp> lu(A);
    for (std::size_t n = 0; n + 1 < total; ++n) {
        // memory part of f_{n+1} that does not involve q_{n+1}
        Vector mem = 0.5 * cval(n + 1) * q[0];
        for (std::size_t j = 1; j <= n; ++j) mem += cval(n + 1 - j) * q[j];
        const Vector rhs = q[n] + 0.5 * h * f[n] + 0.5 * h * (h * mem + Kval(n + 1));
        q[n + 1] = lu.solve(rhs);
        f[n + 1] = M * q[n + 1] + h * mem + 0.5 * h * (cval(0) * q[n + 1]) + Kval(n + 1);
    }
    std::vector<Matrix> out(total);
    for (std::size_t n = 0; n < total; ++n) out[n] = unvec(q[n], dS);
    return out;
}

} // namespace

std::vector<Matrix> q_nu_master_solve(const NZKernel& kernel, const Matrix& q0, const std::vector<double>& t_grid) {
    double h = 0.0;
    if (!uniform_from_zero(kernel.times, &h) || kernel.times.size() < 3)
        throw ArgumentError("master solve: convolution-grid mismatch (kernel grid must be uniform from 0, >= 3 nodes)");
    if (kernel.c.size() != kernel.times.size() || kernel.K.size() != kernel.times.size())
        throw ArgumentError("master solve: kernel samples do not match the grid");
    const long D = kernel.mean_field.rows();
    if (q0.size() != D || q0.rows() != q0.cols()) throw ArgumentError("master solve: q0 has wrong shape");

    const auto fine = master_trapezoid(kernel, q0, 1, h);
    const auto coarse = master_trapezoid(kernel, q0, 2, 2.0 * h);
    std::vector<Matrix> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        const double x = t / (2.0 * h);
        const long j = std::lround(x);
        if (std::abs(x - j) > 1e-6 || j < 0 || j >= static_cast<long>(coarse.size()))
            throw ArgumentError("master solve: convolution-grid mismatch (t = " + std::to_string(t) +
                                " is not an even kernel node)");
        out.push_back((4.0 * fine[2 * j] - coarse[j]) / 3.0);
    }
    return out;
}

SuperOp born_markov_c_omega(const BathCoupling& parts, const SpectralDensity& spectral) {
    spectral.validate();
    if (parts.form != BathCoupling::Form::RotatingWave)
        throw UnsupportedModel("born_markov_c_omega: only the rotating-wave sigma_- b^+ + h.c. coupling is supported");
    const Matrix Lop = parts.lowering.size() ? parts.lowering : sigma_minus();
    return spectral.gamma * lindblad_dissipator(Lop);
}

} // namespace openhall
