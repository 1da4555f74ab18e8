#include "openhall/models.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace openhall {

double fermi_dirac(double E, double mu, double T) {
    if (T < 0.0 || std::isnan(T)) throw ArgumentError("fermi_dirac: T must be >= 0");
    const double x = E - mu;
    if (T == 0.0) return x < 0.0 ? 1.0 : (x > 0.0 ? 0.0 : 0.5);
    const double y = x / (units::kB * T);
    // evaluate on the decaying side so exp never overflows
    if (y >= 0.0) {
        const double e = std::exp(-y);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(y));
}

// ---- Rashba + Dresselhaus ---------------------------------------------------

void RashbaDresselhausParams::validate() const {
    if (h0 == 0.0) throw ArgumentError("rashba-dresselhaus: h0 must be nonzero (gap at k=0)");
    if (include_kinetic && !(m_star > 0.0)) throw ArgumentError("rashba-dresselhaus: m_star must be > 0");
    if (T < 0.0) throw ArgumentError("rashba-dresselhaus: T must be >= 0");
    if (gamma < 0.0) throw ArgumentError("rashba-dresselhaus: gamma must be >= 0");
    if (!(omega > 0.0)) throw ArgumentError("rashba-dresselhaus: omega must be > 0");
    if (!(kmax > 0.0)) throw ArgumentError("rashba-dresselhaus: kmax must be > 0");
}

// Positive square root of (J^T J)^{-1} scaled by h0: in kappa = M^{-1} k the
// linear part of d becomes isotropic with |d_xy| = |h0| |kappa|.
static Eigen::Matrix2d whitening(const Eigen::Matrix2d& J, double h0) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(J.transpose() * J);
    Eigen::Vector2d sv = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const double floor = 1e-3 * std::max(sv.maxCoeff(), 1e-300);
    for (int i = 0; i < 2; ++i) sv(i) = std::max(sv(i), floor);
    const Eigen::Matrix2d V = es.eigenvectors();
    return std::abs(h0) * V * sv.cwiseInverse().asDiagonal() * V.transpose();
}

TwoBandModel build_rashba_dresselhaus(const RashbaDresselhausParams& p) {
    p.validate();
    const double lam = p.lambda0, bet = p.beta0, h0 = p.h0;
    const double sy = (p.variant == RDVariant::Transition) ? 1.0 : -1.0;
    Eigen::Matrix2d J;
    J << -bet, lam, -lam, sy * bet;

    TwoBandModel m;
    m.name = "rashba-dresselhaus";
    m.d_field = [=](double kx, double ky) { return Vec3(lam * ky - bet * kx, -lam * kx + sy * bet * ky, h0); };
    m.grad_d = [=](double, double) {
        DGradient g;
        g.dkx = Vec3(-bet, -lam, 0.0);
        g.dky = Vec3(lam, sy * bet, 0.0);
        return g;
    };
    if (p.include_kinetic) {
        const double c = units::hbar2_over_me / p.m_star;
        m.kinetic = [=](double kx, double ky) { return 0.5 * c * (kx * kx + ky * ky); };
        m.grad_kinetic = [=](double kx, double ky) { return Eigen::Vector2d(c * kx, c * ky); };
    }
    m.effective_mass = p.m_star;
    if (std::isinf(p.kmax)) {
        m.bz = BZDomain::disk(p.kmax, whitening(J, h0));
    } else {
        m.bz = BZDomain::disk(p.kmax);
        m.bz.richardson = p.richardson;
    }
    return m;
}

HallParams hall_params(const RashbaDresselhausParams& p) { return {p.omega, p.gamma, p.mu, p.T}; }

// ---- flux lattice ----------------------------------------------------------

void LatticeParams::validate() const {
    if (q <= 0) throw ArgumentError("lattice: q must be > 0");
    if (std::gcd(p, q) != 1) throw ArgumentError("lattice: p and q must be coprime");
    if (l == 0) throw ArgumentError("lattice: winding l must be nonzero");
    if (m0 < 1) throw ArgumentError("lattice: m0 must be >= 1");
    if (T < 0.0) throw ArgumentError("lattice: T must be >= 0");
    if (gamma < 0.0) throw ArgumentError("lattice: gamma must be >= 0");
    if (!(omega > 0.0)) throw ArgumentError("lattice: omega must be > 0");
}

MFamily m0_family(int m0) {
    if (m0 < 1) throw ArgumentError("m0 must be >= 1");
    const int r = m0 % 4;
    return (r == 1 || r == 0) ? MFamily::M1 : MFamily::M2;
}

TwoBandModel build_lattice(const LatticeParams& p) {
    p.validate();
    const double ta = p.t_a, dl = p.delta;
    const int l = p.l;
    const double shift = 2.0 * kPi * p.p * p.m0 / p.q;
    TwoBandModel m;
    m.name = "lattice";
    m.d_field = [=](double kx, double ky) {
        return Vec3(dl * std::cos(l * ky), dl * std::sin(l * ky), 2.0 * ta * std::cos(kx + shift));
    };
    m.grad_d = [=](double kx, double ky) {
        DGradient g;
        g.dkx = Vec3(0.0, 0.0, -2.0 * ta * std::sin(kx + shift));
        g.dky = Vec3(-l * dl * std::sin(l * ky), l * dl * std::cos(l * ky), 0.0);
        return g;
    };
    const double kx1 = p.magnetic_bz ? 2.0 * kPi / p.q : 2.0 * kPi;
    // full ky circle: the winding l then enters the result linearly
    m.bz = BZDomain::torus(0.0, kx1, 0.0, 2.0 * kPi);
    return m;
}

HallParams hall_params(const LatticeParams& p) { return {p.omega, p.gamma, p.mu, p.T}; }

double lattice_min_gap(const LatticeParams& p) {
    p.validate();
    const double a = 2.0 * kPi * p.p * p.m0 / p.q;
    const double b = a + (p.magnetic_bz ? 2.0 * kPi / p.q : 2.0 * kPi);
    // smallest |cos| on [a, b]: zero if a node pi/2 + n pi lies inside
    double cmin = std::min(std::abs(std::cos(a)), std::abs(std::cos(b)));
    const double n = std::ceil((a - kPi / 2) / kPi);
    if (kPi / 2 + n * kPi <= b) cmin = 0.0;
    return 2.0 * std::sqrt(p.delta * p.delta + 4.0 * p.t_a * p.t_a * cmin * cmin);
}

TwoBandModel build_qwz(double mass) {
    TwoBandModel m;
    m.name = "qwz";
    m.d_field = [=](double kx, double ky) {
        return Vec3(std::sin(kx), std::sin(ky), mass + std::cos(kx) + std::cos(ky));
    };
    m.grad_d = [](double kx, double ky) {
        DGradient g;
        g.dkx = Vec3(std::cos(kx), 0.0, -std::sin(kx));
        g.dky = Vec3(0.0, std::cos(ky), -std::sin(ky));
        return g;
    };
    m.bz = BZDomain::torus(0.0, 2.0 * kPi, 0.0, 2.0 * kPi);
    return m;
}

// ---- analytic references ---------------------------------------------------

static double sgn(double x) { return (x > 0) - (x < 0); }

AnalyticReference analytic_reference(const RashbaDresselhausParams& p) {
    if (p.T != 0.0) throw UnsupportedModel("analytic reference: zero temperature only");
    AnalyticReference r;
    const double s = 0.5 * sgn(p.beta0 * p.beta0 - p.lambda0 * p.lambda0);
    r.sigma0_ref = s;
    r.sigma0_ref_limit = s;
    r.validity = "closed system, T = 0, band filling from +-d";
    return r;
}

AnalyticReference analytic_reference(const LatticeParams& p) {
    p.validate();
    if (p.T != 0.0) throw UnsupportedModel("analytic reference: zero temperature only");
    const double M = 4.0 * p.t_a * p.t_a + p.delta * p.delta;
    if (!(M > 0.0)) throw UnsupportedModel("analytic reference: gapless point t_a = delta = 0");
    const double fam = (m0_family(p.m0) == MFamily::M1) ? 1.0 : -1.0;
    const double A = -p.l * p.t_a / std::sqrt(M);
    const double B = p.gamma * (13.0 * M + 2.0 * p.delta * p.delta) / (12.0 * p.omega * M);
    AnalyticReference r;
    r.sigma0_ref = 0.5 * A * fam;
    r.sigma1_ref = I1 * B * r.sigma0_ref;
    r.sigma0_ref_limit = -0.5 * p.l * sgn(p.t_a) * fam;
    r.sigma1_ref_limit = I1 * (13.0 * p.gamma / (12.0 * p.omega)) * r.sigma0_ref_limit;
    r.validity = "T = 0; limit form is the delta -> 0 expression";
    return r;
}

} // namespace openhall
