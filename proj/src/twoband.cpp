#include "openhall/twoband.hpp"

#include <cmath>
#include <sstream>

#include "openhall/models.hpp"
#include "openhall/parallel.hpp"

namespace openhall {

BZDomain BZDomain::torus(double kx0, double kx1, double ky0, double ky1) {
    if (!(kx1 > kx0) || !(ky1 > ky0)) throw ArgumentError("torus: empty range");
    BZDomain b;
    b.kind = Kind::Torus;
    b.kx0 = kx0;
    b.kx1 = kx1;
    b.ky0 = ky0;
    b.ky1 = ky1;
    return b;
}

BZDomain BZDomain::disk(double kmax, const Eigen::Matrix2d& metric) {
    if (!(kmax > 0.0)) throw ArgumentError("disk: kmax must be > 0");
    if (!(std::abs(metric.determinant()) > 0.0)) throw ArgumentError("disk: singular metric");
    BZDomain b;
    b.kind = Kind::Disk;
    b.kmax = kmax;
    b.metric = metric;
    return b;
}

DegeneratePoint::DegeneratePoint(double kx_, double ky_)
    : NumericalError("gap closing at k = (" + std::to_string(kx_) + ", " + std::to_string(ky_) + ")"),
      kx(kx_), ky(ky_) {}

ConvergenceError::ConvergenceError(const HallResult& f, const HallResult& c, double tol)
    : NumericalError([&] {
          std::ostringstream os;
          os.precision(10);
          os << "hall quadrature unconverged: sigma(fine) = " << f.sigma_total << ", sigma(coarse) = " << c.sigma_total
             << ", tol = " << tol;
          return os.str();
      }()),
      fine(f), coarse(c) {}

// ---- eigen-system -----------------------------------------------------------

BlochPoint diagonalize(const TwoBandModel& model, double kx, double ky, double d_min) {
    BlochPoint b;
    b.kx = kx;
    b.ky = ky;
    b.d = model.d_field(kx, ky);
    b.d_norm = b.d.norm();
    if (!(b.d_norm >= d_min)) throw DegeneratePoint(kx, ky);
    const double ct = std::clamp(b.d.z() / b.d_norm, -1.0, 1.0);
    b.theta = std::acos(ct);
    b.phi = (b.d.x() == 0.0 && b.d.y() == 0.0) ? 0.0 : std::atan2(b.d.y(), b.d.x());
    const double e = model.eps(kx, ky);
    b.E_plus = e + b.d_norm;
    b.E_minus = e - b.d_norm;
    // half-angle functions from cos(theta) directly, accurate near both poles
    const double c = std::sqrt(0.5 * (1.0 + ct)), s = std::sqrt(0.5 * (1.0 - ct));
    const cplx ph = std::polar(1.0, -b.phi);
    b.eigvecs.resize(2, 2);
    b.eigvecs << c * ph, -s * ph, s, c;
    return b;
}

Matrix sigma_minus_eigen(const Matrix& U) { return U.adjoint() * sigma_minus() * U; }

Matrix velocity_matrix(const TwoBandModel& model, const BlochPoint& bp, Dir mu, const Matrix& U) {
    const DGradient g = model.grad_d(bp.kx, bp.ky);
    const Vec3& gd = (mu == Dir::X) ? g.dkx : g.dky;
    Matrix v = gd.x() * pauli(1) + gd.y() * pauli(2) + gd.z() * pauli(3);
    if (model.grad_kinetic) {
        const Eigen::Vector2d ge = model.grad_kinetic(bp.kx, bp.ky);
        v += (mu == Dir::X ? ge.x() : ge.y()) * Matrix::Identity(2, 2);
    }
    return U.adjoint() * v * U;
}

Matrix velocity_matrix(const TwoBandModel& model, const BlochPoint& bp, Dir mu) {
    return velocity_matrix(model, bp, mu, bp.eigvecs);
}

// ---- q blocks ---------------------------------------------------------------

double g_theta(double theta) { return 5.0 - std::cos(2.0 * theta); }
double h_theta(double theta) { return 1.0 - std::cos(2.0 * theta); }

Matrix source_matrix(const Matrix& v, const Occupations& f) {
    const double fm[2] = {f.f_plus, f.f_minus};
    Matrix S = Matrix::Zero(2, 2);
    for (int n = 0; n < 2; ++n)
        for (int m = 0; m < 2; ++m) S(n, m) = (fm[m] - fm[n]) * v(n, m);
    return S;
}

static double energy(const BlochPoint& bp, int n) { return n == 0 ? bp.E_plus : bp.E_minus; }

QBlock q_closed_form(const BlochPoint& bp, const Matrix& v, double w, double G, const Occupations& f,
                     const ClosedFormOptions& opt) {
    QBlock qb;
    qb.S = source_matrix(v, f);
    const double c2 = std::cos(2.0 * bp.theta);
    const cplx wg = w + I1 * G;
    for (int n = 0; n < 2; ++n) {
        const int m = 1 - n;
        qb.e(n, m) = energy(bp, n) - energy(bp, m);
        const double e = energy(bp, m) - energy(bp, n);
        const cplx Snm = qb.S(n, m), Smn = qb.S(m, n);
        const cplx A = 4.0 * I1 * w * w - w * (11.0 * G + 4.0 * I1 * e) - G * (7.0 * I1 * G - 6.0 * e);
        const cplx B = Smn * wg + Snm * (wg - 2.0 * e);
        const cplx D = -2.0 * w * (5.0 * G * G + e * e) - I1 * G * (4.0 * G * G + 3.0 * e * e);
        qb.A(n, m) = A;
        qb.B(n, m) = B;
        qb.D(n, m) = D;
        const cplx den = 2.0 * (D + 2.0 * w * w * w + 8.0 * I1 * w * w * G - I1 * G * e * e * c2);
        if (std::abs(den) == 0.0) throw NumericalError("q_closed_form: vanishing denominator");
        qb.q(n, m) = (Snm * A - G * B * c2 + opt.third_term_sign * Smn * wg * G) / den;
    }
    return qb;
}

Matrix q_resolvent(const BlochPoint& bp, const Matrix& U, const Matrix& q0, double w, double G) {
    Matrix H = Matrix::Zero(2, 2);
    H(0, 0) = bp.E_plus;
    H(1, 1) = bp.E_minus;
    SuperOp M = I1 * w * identity_super(2) - I1 * liouvillian(H);
    if (G != 0.0) M += G * lindblad_dissipator(sigma_minus_eigen(U));
    Eigen::FullPivLU<SuperOp> lu(M);
    if (!lu.isInvertible()) throw NumericalError("q_resolvent: singular system");
    return unvec(lu.solve(Vector(-vec(q0))), 2);
}

QBlock q_direct_solve(const BlochPoint& bp, const Matrix& v, double w, double G, const Occupations& f) {
    QBlock qb;
    qb.S = source_matrix(v, f);
    for (int n = 0; n < 2; ++n) qb.e(n, 1 - n) = energy(bp, n) - energy(bp, 1 - n);
    qb.q = q_resolvent(bp, bp.eigvecs, qb.S, w, G);
    qb.q.diagonal().setZero();
    return qb;
}

QExpansion q_expansion(const BlochPoint& bp, const Matrix& v, double w, const Occupations& f) {
    QExpansion x;
    const Matrix S = source_matrix(v, f);
    const double g = g_theta(bp.theta), h = h_theta(bp.theta);
    for (int n = 0; n < 2; ++n) {
        const int m = 1 - n;
        const double e = energy(bp, n) - energy(bp, m);
        if (w == e || w == -e) throw NumericalError("q_expansion: resonant denominator");
        x.q0(n, m) = I1 * S(n, m) / (w - e);
        x.q1(n, m) = g * S(n, m) / (4.0 * (w - e) * (w - e)) + h * S(m, n) / (4.0 * (w * w - e * e));
    }
    return x;
}

// ---- quadrature -------------------------------------------------------------

std::string HallGrid::describe(const BZDomain& bz) const {
    std::ostringstream os;
    if (bz.kind == BZDomain::Kind::Torus) {
        os << "torus " << n1 << "x" << n2 << " kx[" << bz.kx0 << "," << bz.kx1 << ") ky[" << bz.ky0 << "," << bz.ky1
           << ")";
    } else {
        os << "disk " << n1 << "r x " << n2 << "t kmax=" << bz.kmax;
        if (bz.richardson && std::isfinite(bz.kmax)) os << " richardson";
    }
    return os.str();
}

namespace {

struct Acc {
    cplx a{0.0, 0.0};
    cplx b{0.0, 0.0};
    long excluded = 0;
    long points = 0;
};

// Point functor: void(double kx, double ky, double weight, Acc&). Rows are
// summed independently and reduced in index order.
template <class F>
Acc integrate(const BZDomain& bz, int n1, int n2, int workers, const F& f) {
    if (n1 < 1 || n2 < 1) throw ArgumentError("hall grid: sizes must be >= 1");
    std::vector<Acc> rows(n1);
    if (bz.kind == BZDomain::Kind::Torus) {
        const double hx = (bz.kx1 - bz.kx0) / n1, hy = (bz.ky1 - bz.ky0) / n2;
        parallel_for(n1, workers, [&](long i) {
            Acc r;
            const double kx = bz.kx0 + (i + 0.5) * hx;
            for (int j = 0; j < n2; ++j) f(kx, bz.ky0 + (j + 0.5) * hy, hx * hy, r);
            rows[i] = r;
        });
    } else {
        const Eigen::Matrix2d& M = bz.metric;
        const double detM = std::abs(M.determinant());
        const double ht = 2.0 * kPi / n2;
        const bool mapped = std::isinf(bz.kmax);
        parallel_for(n1, workers, [&](long i) {
            Acc r;
            const double x = (i + 0.5) / n1;
            double rad, w;
            if (mapped) {
                const double u = 0.5 * kPi * x;
                const double cu = std::cos(u);
                rad = std::tan(u);
                w = rad * (0.5 * kPi / (cu * cu)) / n1;
            } else {
                rad = x * bz.kmax;
                w = rad * bz.kmax / n1;
            }
            for (int j = 0; j < n2; ++j) {
                const double t = (j + 0.5) * ht;
                const Eigen::Vector2d k = M * Eigen::Vector2d(rad * std::cos(t), rad * std::sin(t));
                f(k.x(), k.y(), w * ht * detM, r);
            }
            rows[i] = r;
        });
    }
    Acc tot;
    for (const Acc& r : rows) {
        tot.a += r.a;
        tot.b += r.b;
        tot.excluded += r.excluded;
        tot.points += r.points;
    }
    return tot;
}

Acc integrate_extrapolated(const BZDomain& bz, int n1, int n2, int workers, const std::function<void(double, double, double, Acc&)>& f) {
    if (bz.kind == BZDomain::Kind::Disk && bz.richardson && std::isfinite(bz.kmax)) {
        BZDomain b2 = bz;
        b2.kmax = 2.0 * bz.kmax;
        const Acc a1 = integrate(bz, n1, n2, workers, f);
        const Acc a2 = integrate(b2, 2 * n1, n2, workers, f);
        Acc r;
        r.a = 2.0 * a2.a - a1.a;
        r.b = 2.0 * a2.b - a1.b;
        r.excluded = a2.excluded;
        r.points = a2.points;
        return r;
    }
    return integrate(bz, n1, n2, workers, f);
}

Matrix gauged(const Matrix& U, const GaugeFn& gauge, double kx, double ky) {
    if (!gauge) return U;
    const auto [cp, cm] = gauge(kx, ky);
    Matrix V = U;
    V.col(0) *= std::polar(1.0, cp);
    V.col(1) *= std::polar(1.0, cm);
    return V;
}

HallResult finish(const Acc& a, const TwoBandModel& model, const HallGrid& grid, double scale) {
    HallResult r;
    r.sigma0 = a.a * scale;
    r.sigma1 = a.b * scale;
    r.sigma_total = r.sigma0 + r.sigma1;
    r.chern = r.sigma_total.real();
    r.excluded_points = a.excluded;
    r.total_points = a.points;
    r.flagged = a.points > 0 && a.excluded > 1e-3 * a.points;
    r.grid_spec = grid.describe(model.bz);
    return r;
}

template <class Eval>
HallResult run_with_estimate(const TwoBandModel& model, const HallGrid& grid, const Eval& eval) {
    HallResult fine = eval(grid.n1, grid.n2);
    if (!grid.estimate && grid.convergence_tol <= 0.0) return fine;
    const HallResult coarse = eval(std::max(1, grid.n1 / 2), std::max(1, grid.n2 / 2));
    fine.convergence_estimate = std::abs(fine.sigma_total - coarse.sigma_total);
    if (grid.convergence_tol > 0.0 && fine.convergence_estimate > grid.convergence_tol)
        throw ConvergenceError(fine, coarse, grid.convergence_tol);
    (void)model;
    return fine;
}

} // namespace

static HallResult hall_eq_gauged(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                 const GaugeFn& gauge) {
    if (!(p.omega > 0.0)) throw ArgumentError("hall_conductance: omega must be > 0");
    if (p.gamma < 0.0) throw ArgumentError("hall_conductance: gamma must be >= 0");
    const Matrix sig[3] = {pauli(1), pauli(2), pauli(3)};
    auto point = [&](double kx, double ky, double w, Acc& acc) {
        ++acc.points;
        BlochPoint bp;
        try {
            bp = diagonalize(model, kx, ky);
        } catch (const DegeneratePoint&) {
            ++acc.excluded;
            return;
        }
        const double F = fermi_dirac(bp.E_plus, p.mu, p.T) - fermi_dirac(bp.E_minus, p.mu, p.T);
        if (F == 0.0) return;
        const DGradient g = model.grad_d(kx, ky);
        const Vec3& d = bp.d;
        const double dn = bp.d_norm, d3 = dn * dn * dn;
        const double triple = d.dot(g.dkx.cross(g.dky));
        acc.a += w * F * triple / d3;
        if (p.gamma == 0.0) return;
        const Matrix U = gauged(bp.eigvecs, gauge, kx, ky);
        cplx vx = 0.0, vy = 0.0;
        for (int a = 0; a < 3; ++a) {
            const cplx pm = (U.col(0).adjoint() * sig[a] * U.col(1))(0, 0);
            vx += g.dkx(a) * pm;
            vy += g.dky(a) * pm;
        }
        const double t1 = 0.25 * g_theta(bp.theta) * g.dkx.dot(d) * g.dky.dot(d) / (dn * dn);
        const double t2 = dn / (4.0 * p.omega) * h_theta(bp.theta) * std::imag(vx * vy);
        acc.b += w * p.gamma * F / d3 * cplx(t1, t2);
    };
    return run_with_estimate(model, grid, [&](int n1, int n2) {
        return finish(integrate_extrapolated(model.bz, n1, n2, grid.workers, point), model, HallGrid{n1, n2}, 1.0 / (4.0 * kPi));
    });
}

HallResult hall_conductance(const TwoBandModel& model, const HallParams& p, const HallGrid& grid) {
    HallResult r = hall_eq_gauged(model, p, grid, {});
    r.grid_spec = grid.describe(model.bz);
    return r;
}

HallResult hall_conductance_gauged(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                   const GaugeFn& gauge) {
    HallResult r = hall_eq_gauged(model, p, grid, gauge);
    r.grid_spec = grid.describe(model.bz);
    return r;
}

HallResult hall_conductance_resolvent(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                      const ResolventOptions& opt) {
    if (!(p.omega > 0.0)) throw ArgumentError("hall_conductance_resolvent: omega must be > 0");
    auto point = [&](double kx, double ky, double w, Acc& acc) {
        ++acc.points;
        BlochPoint bp;
        try {
            bp = diagonalize(model, kx, ky);
        } catch (const DegeneratePoint&) {
            ++acc.excluded;
            return;
        }
        const Occupations f{fermi_dirac(bp.E_plus, p.mu, p.T), fermi_dirac(bp.E_minus, p.mu, p.T)};
        const Matrix U = gauged(bp.eigvecs, opt.gauge, kx, ky);
        const Matrix vx = velocity_matrix(model, bp, Dir::X, U);
        const Matrix vy = velocity_matrix(model, bp, Dir::Y, U);
        const Matrix q0 = opt.q0 ? opt.q0(bp, U, vy, f) : source_matrix(vy, f);
        Matrix qa = q_resolvent(bp, U, q0, p.omega, 0.0);
        qa.diagonal().setZero();
        const cplx s_closed = (vx * qa).trace();
        cplx s_open = s_closed;
        if (p.gamma != 0.0) {
            Matrix qb = q_resolvent(bp, U, q0, p.omega, p.gamma);
            qb.diagonal().setZero();
            s_open = (vx * qb).trace();
        }
        acc.a += w * s_closed;
        acc.b += w * (s_open - s_closed);
    };
    HallResult r = run_with_estimate(model, grid, [&](int n1, int n2) {
        return finish(integrate_extrapolated(model.bz, n1, n2, grid.workers, point), model, HallGrid{n1, n2},
                      1.0 / (2.0 * kPi * p.omega));
    });
    r.grid_spec = grid.describe(model.bz) + " resolvent";
    return r;
}

double torus_chern_number(const TwoBandModel& model, int nkx, int nky) {
    if (model.bz.kind != BZDomain::Kind::Torus) throw ArgumentError("torus_chern_number: model must live on a torus");
    auto point = [&](double kx, double ky, double w, Acc& acc) {
        const Vec3 d = model.d_field(kx, ky);
        const double dn = d.norm();
        if (dn < kDMin) throw DegeneratePoint(kx, ky);
        const DGradient g = model.grad_d(kx, ky);
        acc.a += w * d.dot(g.dkx.cross(g.dky)) / (dn * dn * dn);
    };
    return integrate(model.bz, nkx, nky, 1, point).a.real() / (4.0 * kPi);
}

// ---- second-order initial condition --------------------------------------

SecondOrderRho rho_s_second_order(const BlochPoint& bp, const Occupations& f, double beta, double G, double lambda) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ArgumentError("rho_s_second_order: beta must be finite and >= 0");
    if (G < 0.0 || !(lambda > 0.0)) throw ArgumentError("rho_s_second_order: need gamma >= 0, lambda > 0");
    SecondOrderRho r;
    const double b2 = beta * beta;
    r.a1 = G * lambda * b2 * b2 / 16.0;
    r.a2 = G * lambda * b2 * beta / 4.0;
    r.a3 = G * lambda * b2 / 4.0;
    if (!std::isfinite(r.a1)) throw NumericalError("rho_s_second_order: coefficient overflow");
    Matrix H = Matrix::Zero(2, 2);
    H(0, 0) = bp.E_plus;
    H(1, 1) = bp.E_minus;
    Matrix rho = Matrix::Zero(2, 2);
    rho(0, 0) = f.f_plus;
    rho(1, 1) = f.f_minus;
    const Matrix sm = sigma_minus_eigen(bp.eigvecs);
    const Matrix sp = sm.adjoint();
    const Matrix bracket = r.a1 * (H * sp * H * sm + sp * H * sm * H - H * sp * sm * H - sp * H * H * sm) +
                           r.a2 * (sp * H * sm) + r.a3 * (sp * sm);
    r.rho2 = rho * bracket;
    return r;
}

SecondOrderComparison compare_second_order(const TwoBandModel& model, const HallParams& p, const HallGrid& grid,
                                           double lambda) {
    const double beta = units::beta_from_kelvin(p.T);
    SecondOrderComparison c;
    c.leading = hall_conductance_resolvent(model, p, grid);
    ResolventOptions opt;
    opt.q0 = [&](const BlochPoint& bp, const Matrix&, const Matrix& vy, const Occupations& f) {
        const SecondOrderRho r2 = rho_s_second_order(bp, f, beta, p.gamma, lambda);
        return Matrix(source_matrix(vy, f) + commutator(vy, r2.rho2));
    };
    c.corrected = hall_conductance_resolvent(model, p, grid, opt);
    const double ref = std::abs(c.leading.sigma_total);
    c.rel_difference = std::abs(c.corrected.sigma_total - c.leading.sigma_total) / (ref > 0 ? ref : 1.0);
    return c;
}

} // namespace openhall
