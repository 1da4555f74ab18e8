#include "doctest.h"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "openhall/models.hpp"
#include "openhall/twoband.hpp"
#include "test_util.hpp"

using namespace openhall;
using namespace testutil;

namespace {

TwoBandModel constant_model(const Vec3& d, double eps = 0.0) {
    TwoBandModel m;
    m.d_field = [=](double, double) { return d; };
    m.grad_d = [](double, double) { return DGradient{}; };
    if (eps != 0.0) m.kinetic = [=](double, double) { return eps; };
    return m;
}

// Linear d-field with random gradients around a random point, plus a kinetic term.
TwoBandModel random_linear_model() {
    const Vec3 d0(normal(), normal(), normal());
    const Vec3 gx(normal(), normal(), normal()), gy(normal(), normal(), normal());
    const double e0 = normal(), ex = normal(), ey = normal();
    TwoBandModel m;
    m.d_field = [=](double kx, double ky) { return Vec3(d0 + kx * gx + ky * gy); };
    m.grad_d = [=](double, double) { return DGradient{gx, gy}; };
    m.kinetic = [=](double kx, double ky) { return e0 + ex * kx + ey * ky; };
    m.grad_kinetic = [=](double, double) { return Eigen::Vector2d(ex, ey); };
    return m;
}

Matrix hamiltonian(const TwoBandModel& m, double kx, double ky) {
    const Vec3 d = m.d_field(kx, ky);
    return m.eps(kx, ky) * Matrix::Identity(2, 2) + d.x() * pauli(1) + d.y() * pauli(2) + d.z() * pauli(3);
}

// Same resolvent assembled in the physical spin basis, rotated at the end.
Matrix spin_basis_resolvent(const TwoBandModel& m, const BlochPoint& bp, const Matrix& q0_eigen, double w, double G) {
    const Matrix& U = bp.eigvecs;
    const Matrix q0 = U * q0_eigen * U.adjoint();
    const Matrix H = hamiltonian(m, bp.kx, bp.ky);
    const Matrix M = I1 * w * Matrix::Identity(4, 4) - I1 * (kron(Matrix::Identity(2, 2), H) - kron(H.transpose(), Matrix::Identity(2, 2))) +
                     G * (2.0 * kron(sigma_plus().transpose(), sigma_minus()) -
                          kron(Matrix::Identity(2, 2), sigma_plus() * sigma_minus()) -
                          kron((sigma_plus() * sigma_minus()).transpose(), Matrix::Identity(2, 2)));
    const Vector x = M.fullPivLu().solve(Vector(-vec(q0)));
    return U.adjoint() * unvec(x, 2) * U;
}

struct Sample {
    TwoBandModel m;
    BlochPoint bp;
    Matrix v;
    Occupations f;
    double w, G;
};

Sample random_sample() {
    Sample s{random_linear_model(), {}, {}, {}, 0, 0};
    s.bp = diagonalize(s.m, uniform(-1, 1), uniform(-1, 1));
    s.v = velocity_matrix(s.m, s.bp, uniform(0, 1) < 0.5 ? Dir::X : Dir::Y);
    s.f = {uniform(0, 1), uniform(0, 1)};
    s.w = uniform(0.05, 1.0);
    s.G = uniform(0.0, 0.3);
    return s;
}

} // namespace

TEST_CASE("diagonalize examples") {
    const BlochPoint a = diagonalize(constant_model(Vec3(0, 0, 2)), 0, 0);
    CHECK(a.E_plus == doctest::Approx(2.0));
    CHECK(a.E_minus == doctest::Approx(-2.0));
    CHECK(a.theta == 0.0);
    CHECK(a.phi == 0.0);
    CHECK(std::abs(a.eigvecs(0, 0) - 1.0) < 1e-15);
    CHECK(std::abs(a.eigvecs(1, 0)) < 1e-15);

    const BlochPoint b = diagonalize(constant_model(Vec3(1, 0, 0)), 0, 0);
    CHECK(b.theta == doctest::Approx(kPi / 2));
    CHECK(b.phi == 0.0);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(b.eigvecs(0, 0) - r) < 1e-15);
    CHECK(std::abs(b.eigvecs(1, 0) - r) < 1e-15);
    // |-> = (-1, 1)/sqrt2 in this phase convention
    CHECK(std::abs(b.eigvecs(0, 1) + r) < 1e-15);
    CHECK(std::abs(b.eigvecs(1, 1) - r) < 1e-15);

    CHECK_THROWS_AS(diagonalize(constant_model(Vec3(0, 0, 1e-12)), 0.1, 0.2), DegeneratePoint);
    try {
        diagonalize(constant_model(Vec3(0, 0, 0)), 0.25, -0.5);
    } catch (const DegeneratePoint& e) {
        CHECK(e.kx == 0.25);
        CHECK(e.ky == -0.5);
    }
}

TEST_CASE("diagonalize random points") {
    for (int t = 0; t < 1000; ++t) {
        const TwoBandModel m = random_linear_model();
        const double kx = uniform(-1, 1), ky = uniform(-1, 1);
        const BlochPoint bp = diagonalize(m, kx, ky);
        const Matrix H = hamiltonian(m, kx, ky);
        const Matrix& U = bp.eigvecs;
        REQUIRE(std::abs(std::cos(bp.theta) - bp.d.z() / bp.d_norm) < 1e-12);
        REQUIRE(std::abs(U.col(0).dot(U.col(1))) < 1e-12);
        REQUIRE(max_abs(U * U.adjoint() - Matrix::Identity(2, 2)) < 1e-12);
        REQUIRE((H * U.col(0) - bp.E_plus * U.col(0)).norm() < 1e-10 * std::max(1.0, std::abs(bp.E_plus)));
        REQUIRE((H * U.col(1) - bp.E_minus * U.col(1)).norm() < 1e-10 * std::max(1.0, std::abs(bp.E_minus)));
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        REQUIRE(std::abs(es.eigenvalues()(0) - bp.E_minus) < 1e-12 * (1 + std::abs(bp.E_minus)));
        REQUIRE(std::abs(es.eigenvalues()(1) - bp.E_plus) < 1e-12 * (1 + std::abs(bp.E_plus)));
    }
}

TEST_CASE("velocity matrix") {
    LatticeParams lp;
    lp.t_a = 0.8;
    lp.delta = 0.5;
    const TwoBandModel lat = build_lattice(lp);
    const double kx = 0.3, ky = 1.1;
    const BlochPoint bp = diagonalize(lat, kx, ky);
    const Matrix vx = velocity_matrix(lat, bp, Dir::X);
    const Matrix ref = bp.eigvecs.adjoint() * (-2 * 0.8 * std::sin(kx + kPi / 2) * pauli(3)) * bp.eigvecs;
    CHECK(max_abs(vx - ref) < 1e-14);

    const TwoBandModel c = constant_model(Vec3(0.3, -0.2, 0.9));
    CHECK(max_abs(velocity_matrix(c, diagonalize(c, 0, 0), Dir::Y)) == 0.0);

    // kinetic gradient only on the diagonal
    RashbaDresselhausParams rp;
    const TwoBandModel rd = build_rashba_dresselhaus(rp);
    rp.include_kinetic = false;
    const TwoBandModel rd0 = build_rashba_dresselhaus(rp);
    const BlochPoint b1 = diagonalize(rd, 0.4, -0.3);
    const Matrix dv = velocity_matrix(rd, b1, Dir::X) - velocity_matrix(rd0, b1, Dir::X);
    CHECK(std::abs(dv(0, 1)) < 1e-12);
    CHECK(std::abs(dv(0, 0) - units::hbar2_over_me / 0.9 * 0.4) < 1e-10);
}

TEST_CASE("pauli matrix-element identities in the eigenbasis") {
    // Im[<m|s_a|n><n|s_b|m>] = m eps_abc d_c/d, Re[...] = delta_ab - d_a d_b/d^2 (m != n)
    for (int t = 0; t < 500; ++t) {
        const Vec3 d(normal(), normal(), normal());
        const BlochPoint bp = diagonalize(constant_model(d), 0, 0);
        const Vec3 dh = d / d.norm();
        for (int m = 0; m < 2; ++m) {
            const int n = 1 - m;
            const double sm = m == 0 ? 1.0 : -1.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const cplx x = (bp.eigvecs.col(m).adjoint() * pauli(a + 1) * bp.eigvecs.col(n))(0, 0) *
                                   (bp.eigvecs.col(n).adjoint() * pauli(b + 1) * bp.eigvecs.col(m))(0, 0);
                    const int c = 3 - a - b;
                    double eps = 0.0;
                    if (a != b) eps = ((a + 1) % 3 == b) ? 1.0 : -1.0;
                    const double im_ref = (a != b) ? sm * eps * dh(c) : 0.0;
                    REQUIRE(std::abs(x.imag() - im_ref) < 1e-10);
                    if (a != b) REQUIRE(std::abs(x.real() + dh(a) * dh(b)) < 1e-10);
                    else REQUIRE(std::abs(x.real() - (1.0 - dh(a) * dh(a))) < 1e-10);
                }
        }
    }
}

TEST_CASE("closed-form q block") {
    // Gamma = 0 reduces to i S_nm / (w - e_nm)
    for (int t = 0; t < 200; ++t) {
        Sample s = random_sample();
        const QBlock qb = q_closed_form(s.bp, s.v, s.w, 0.0, s.f);
        for (int n = 0; n < 2; ++n) {
            const int m = 1 - n;
            const double e = (n == 0 ? 1.0 : -1.0) * 2 * s.bp.d_norm;
            REQUIRE(std::abs(qb.e(n, m).real() - e) < 1e-12 * (1 + std::abs(e)));
            REQUIRE(rel_err(qb.q(n, m), I1 * qb.S(n, m) / (s.w - e)) < 1e-12);
        }
        REQUIRE(qb.q(0, 0) == cplx(0.0));
        REQUIRE(qb.q(1, 1) == cplx(0.0));
    }
    Sample s = random_sample();
    s.f = {0.3, 0.3};
    CHECK(max_abs(q_closed_form(s.bp, s.v, s.w, s.G, s.f).q) == 0.0);
}

TEST_CASE("closed form matches the resolvent on random samples") {
    double worst = 0.0, worst_flipped = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Sample s = random_sample();
        const QBlock c = q_closed_form(s.bp, s.v, s.w, s.G, s.f);
        const QBlock d = q_direct_solve(s.bp, s.v, s.w, s.G, s.f);
        const QBlock p = q_closed_form(s.bp, s.v, s.w, s.G, s.f, ClosedFormOptions{-1.0});
        for (int n = 0; n < 2; ++n) {
            worst = std::max(worst, rel_err(c.q(n, 1 - n), d.q(n, 1 - n)));
            if (s.G > 0.05) worst_flipped = std::max(worst_flipped, rel_err(p.q(n, 1 - n), d.q(n, 1 - n)));
        }
    }
    CHECK(worst < 1e-8);
    // the flipped sign is detectably wrong
    CHECK(worst_flipped > 1e-3);
}

TEST_CASE("direct solve against a spin-basis assembly") {
    for (int t = 0; t < 300; ++t) {
        const Sample s = random_sample();
        const Matrix S = source_matrix(s.v, s.f);
        const Matrix a = q_resolvent(s.bp, s.bp.eigvecs, S, s.w, s.G);
        const Matrix b = spin_basis_resolvent(s.m, s.bp, S, s.w, s.G);
        REQUIRE(max_abs(a - b) < 1e-10 * (1 + max_abs(b)));
    }
}

TEST_CASE("direct solve limits") {
    for (int t = 0; t < 100; ++t) {
        const Sample s = random_sample();
        const QBlock d = q_direct_solve(s.bp, s.v, s.w, 0.0, s.f);
        const QExpansion x = q_expansion(s.bp, s.v, s.w, s.f);
        REQUIRE(max_abs(d.q - x.q0) < 1e-12 * (1 + max_abs(x.q0)));
        // w -> 0+, Gamma = 0: anti-Hermitian
        const QBlock z = q_direct_solve(s.bp, s.v, 1e-13, 0.0, s.f);
        REQUIRE(max_abs(z.q + z.q.adjoint()) < 1e-10 * (1 + max_abs(z.q)));
    }
}

TEST_CASE("weak-dissipation expansion") {
    CHECK(g_theta(0.0) == 4.0);
    CHECK(h_theta(0.0) == 0.0);
    // theta = 0 drops the S_mn part
    const TwoBandModel lin = random_linear_model();
    const BlochPoint bp = diagonalize(constant_model(Vec3(0, 0, 1.5)), 0, 0);
    const Matrix v = velocity_matrix(lin, diagonalize(lin, 0.1, 0.2), Dir::X);
    const Occupations f{0.2, 0.9};
    const QExpansion x = q_expansion(bp, v, 0.4, f);
    const Matrix S = source_matrix(v, f);
    CHECK(rel_err(x.q1(0, 1), 4.0 * S(0, 1) / (4.0 * std::pow(0.4 - 3.0, 2))) < 1e-14);

    for (int t = 0; t < 200; ++t) {
        Sample s = random_sample();
        const QExpansion e = q_expansion(s.bp, s.v, s.w, s.f);
        const double G = 1e-3;
        double r[2];
        for (int k = 0; k < 2; ++k) {
            const double g = G / (1 << k);
            const QBlock c = q_closed_form(s.bp, s.v, s.w, g, s.f);
            r[k] = max_abs(c.q - (e.q0 + g * e.q1));
        }
        if (r[0] < 1e-13 * max_abs(e.q0)) continue;
        const double ratio = r[0] / r[1];
        REQUIRE(ratio > 4.0 * 0.7);
        REQUIRE(ratio < 4.0 * 1.3);
        REQUIRE(max_abs(q_closed_form(s.bp, s.v, s.w, 0.0, s.f).q - e.q0) < 1e-12 * (1 + max_abs(e.q0)));
    }
}

TEST_CASE("hall conductance, Rashba-Dresselhaus closed system") {
    RashbaDresselhausParams p;
    p.include_kinetic = false;
    p.T = 0;
    p.gamma = 0;
    HallGrid g{128, 128};
    for (double beta : {10.0, 7.0, 2.0, 0.0, -3.0, -8.0}) {
        p.beta0 = beta;
        const HallResult r = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), g);
        const double ref = analytic_reference(p).sigma0_ref.real();
        CHECK(r.sigma0.real() == doctest::Approx(ref).epsilon(1e-4));
        CHECK(std::abs(r.sigma0.imag()) == 0.0);
        CHECK(r.sigma1 == cplx(0.0));
        CHECK(r.excluded_points == 0);
    }
    // opposite sign of beta0 in d_y: no transition, same value on both sides
    p.variant = RDVariant::NoTransition;
    p.beta0 = 10.0;
    const double a = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), g).sigma0.real();
    p.beta0 = 2.0;
    const double b = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), g).sigma0.real();
    CHECK(a == doctest::Approx(b).epsilon(1e-4));
}

TEST_CASE("hall conductance, Rashba-Dresselhaus open system is real") {
    RashbaDresselhausParams p;
    p.include_kinetic = false;
    p.gamma = 0.2;
    for (double beta : {10.0, 2.0, -6.0}) {
        p.beta0 = beta;
        const HallResult r = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), HallGrid{128, 128});
        CHECK(std::abs(r.sigma1.imag()) < 1e-8 * std::abs(r.sigma1.real()) + 1e-12);
        // sign of the correction follows beta0 (enhanced above -> at +lambda0 side)
        CHECK(r.sigma1.real() * beta > 0.0);
    }
}

TEST_CASE("hall conductance, lattice closed form of the zero-order integral") {
    // T = 0 with mu in the gap: sigma0 = l t_a [c / sqrt(delta^2 + 4 t_a^2 c^2)] between
    // c = cos(kx + 2 pi p m0 / q) at the two ends of the kx range.
    for (int t = 0; t < 12; ++t) {
        LatticeParams lp;
        lp.t_a = uniform(-2, 2);
        lp.delta = uniform(0.3, 2);
        lp.m0 = 1 + t % 4;
        lp.l = (t % 3 == 0) ? 2 : 1;
        const TwoBandModel m = build_lattice(lp);
        const double u0 = 2 * kPi * lp.p * lp.m0 / lp.q, u1 = u0 + 2 * kPi / lp.q;
        auto F = [&](double u) {
            const double c = std::cos(u);
            return c / std::sqrt(lp.delta * lp.delta + 4 * lp.t_a * lp.t_a * c * c);
        };
        const double ref = lp.l * lp.t_a * (F(u1) - F(u0));
        const HallResult r = hall_conductance(m, hall_params(lp), HallGrid{1024, 8});
        CHECK(r.sigma0.real() == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("hall conductance, lattice open-system correction is imaginary") {
    LatticeParams lp;
    lp.t_a = 0.9;
    lp.delta = 0.7;
    lp.gamma = 0.1;
    lp.omega = 0.2;
    const HallResult r = hall_conductance(build_lattice(lp), hall_params(lp), HallGrid{128, 64});
    CHECK(std::abs(r.sigma1.real()) < 1e-8 * std::abs(r.sigma1.imag()));
    // pointwise the D_ab term reduces to -Gamma (2M + delta^2)/(6 w M) times the zero-order integrand
    const double M = 4 * 0.81 + 0.49;
    CHECK(r.sigma1.imag() / r.sigma0.real() == doctest::Approx(-0.1 * (2 * M + 0.49) / (6 * 0.2 * M)).epsilon(1e-6));
}

TEST_CASE("torus chern number is integral") {
    for (double m : {-3.0, -1.5, -0.5, 0.5, 1.5, 3.0}) {
        const double c = torus_chern_number(build_qwz(m), 128, 128);
        const double ref = (std::abs(m) > 2) ? 0.0 : (m > 0 ? -1.0 : 1.0);
        CHECK(c == doctest::Approx(ref).epsilon(1e-6));
        CHECK(std::abs(c - std::round(c)) < 1e-6);
    }
    LatticeParams lp;
    lp.magnetic_bz = false;
    CHECK(std::abs(torus_chern_number(build_lattice(lp), 128, 128)) < 1e-10);
}

TEST_CASE("convergence gate") {
    RashbaDresselhausParams p;
    p.include_kinetic = false;
    HallGrid g{8, 8};
    g.convergence_tol = 1e-12;
    CHECK_THROWS_AS(hall_conductance(build_rashba_dresselhaus(p), hall_params(p), g), ConvergenceError);
    HallGrid ok{64, 64};
    const HallResult r = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), ok);
    CHECK(r.convergence_estimate < 1e-3);
}

TEST_CASE("finite disk with richardson extrapolation") {
    RashbaDresselhausParams p;
    p.include_kinetic = false;
    p.beta0 = 0.0;
    p.kmax = 3.0;
    const double plain = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), HallGrid{1024, 64}).sigma0.real();
    p.richardson = true;
    const double rich = hall_conductance(build_rashba_dresselhaus(p), hall_params(p), HallGrid{1024, 64}).sigma0.real();
    // isotropic case: exact cut-off value -(1/2)(1 - h0/sqrt(h0^2 + lambda0^2 kmax^2))
    CHECK(plain == doctest::Approx(-0.5 * (1 - 2.0 / std::sqrt(4.0 + 225.0))).epsilon(1e-5));
    CHECK(std::abs(rich + 0.5) < std::abs(plain + 0.5));
}

TEST_CASE("second-order initial state") {
    const TwoBandModel lin = random_linear_model();
    const BlochPoint bp = diagonalize(lin, 0.2, 0.1);
    const Occupations f{0.1, 0.8};
    CHECK(max_abs(rho_s_second_order(bp, f, 0.4, 0.0, 25.0).rho2) == 0.0);
    CHECK(max_abs(rho_s_second_order(bp, f, 0.0, 0.1, 25.0).rho2) == 0.0);
    const SecondOrderRho r = rho_s_second_order(bp, f, 0.5, 0.1, 25.0);
    CHECK(r.a1 == doctest::Approx(0.1 * 25 * std::pow(0.5, 4) / 16));
    CHECK(r.a2 == doctest::Approx(0.1 * 25 * std::pow(0.5, 3) / 4));
    CHECK(r.a3 == doctest::Approx(0.1 * 25 * std::pow(0.5, 2) / 4));
    CHECK_THROWS_AS(rho_s_second_order(bp, f, std::numeric_limits<double>::infinity(), 0.1, 25.0), ArgumentError);

    LatticeParams lp;
    lp.T = 30;
    lp.delta = 0.5;
    lp.gamma = 0.0;
    const SecondOrderComparison c = compare_second_order(build_lattice(lp), hall_params(lp), HallGrid{64, 32}, 25.0);
    CHECK(c.rel_difference == 0.0);
}

TEST_CASE("resolvent route reproduces the zero-order integral at small w") {
    LatticeParams lp;
    lp.t_a = 1.0;
    lp.delta = 1.0;
    lp.omega = 1e-3;
    const TwoBandModel m = build_lattice(lp);
    const HallResult a = hall_conductance(m, hall_params(lp), HallGrid{128, 64});
    const HallResult b = hall_conductance_resolvent(m, hall_params(lp), HallGrid{128, 64});
    CHECK(b.sigma0.real() == doctest::Approx(a.sigma0.real()).epsilon(1e-5));
}
