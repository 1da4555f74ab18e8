#pragma once

#include <string>

#include "openhall/twoband.hpp"

namespace openhall {

// 1/(exp((E-mu)/kT)+1); T = 0 gives a step with f(mu) = 1/2.
double fermi_dirac(double E, double mu, double T);

// ---- Rashba + Dresselhaus ferromagnet --------------------------------------

// Transition: d_y = -lambda0 k_x + beta0 k_y, which has the sgn(beta0^2 - lambda0^2)
// phase diagram. NoTransition: d_y = -lambda0 k_x - beta0 k_y (det J = beta0^2 + lambda0^2,
// no transition). Both share d_x = lambda0 k_y - beta0 k_x and d_z = h0.
enum class RDVariant { Transition, NoTransition };

struct RashbaDresselhausParams {
    double lambda0 = 5.0; // meV nm
    double beta0 = 10.0;  // meV nm
    double h0 = 2.0;      // meV
    double m_star = 0.9;  // m_e
    double mu = 1.0;      // meV
    double T = 0.0;       // K
    double gamma = 0.0;   // meV
    double omega = 0.2;   // meV
    RDVariant variant = RDVariant::Transition;
    bool include_kinetic = true;
    // inf: whole plane in whitened coordinates; finite: plain polar disk
    double kmax = std::numeric_limits<double>::infinity();
    bool richardson = false;

    void validate() const;
};

TwoBandModel build_rashba_dresselhaus(const RashbaDresselhausParams& p);
HallParams hall_params(const RashbaDresselhausParams& p);

// ---- effective two-band lattice -------------------------------------------

enum class MFamily { M1, M2 };

struct LatticeParams {
    double t_a = 1.0;   // meV
    double delta = 1.0; // meV
    int l = 1;
    int p = 1, q = 4;
    int m0 = 1;
    double mu = 0.0;
    double T = 0.0;
    double gamma = 0.0;
    double omega = 0.2;
    // magnetic zone kx in [0, 2 pi/q); false integrates kx over [0, 2 pi)
    bool magnetic_bz = true;

    void validate() const;
};

// m1 = 4n+1 or 4n+4, m2 = 4n+2 or 4n+3 (n >= 0)
MFamily m0_family(int m0);

TwoBandModel build_lattice(const LatticeParams& p);
HallParams hall_params(const LatticeParams& p);
// 2 min_k |d(k)| over the chosen zone, from the interval of cos(kx + 2 pi p m0/q).
double lattice_min_gap(const LatticeParams& p);

// Qi-Wu-Zhang d = (sin kx, sin ky, m + cos kx + cos ky), used as a Chern test bed.
TwoBandModel build_qwz(double m);

// ---- analytic references ---------------------------------------------------

struct AnalyticReference {
    cplx sigma0_ref{0.0, 0.0};
    cplx sigma1_ref{0.0, 0.0};
    // delta -> 0 form of the lattice result; the form used by the continuum model
    cplx sigma0_ref_limit{0.0, 0.0};
    cplx sigma1_ref_limit{0.0, 0.0};
    std::string validity;
};

AnalyticReference analytic_reference(const RashbaDresselhausParams& p);
AnalyticReference analytic_reference(const LatticeParams& p);

} // namespace openhall
