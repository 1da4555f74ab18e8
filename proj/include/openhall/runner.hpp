#pragma once

#include <string>
#include <vector>

#include "openhall/config.hpp"
#include "openhall/response.hpp"

namespace openhall {

// One evaluated scan point. Failed points keep NaN values and the error text.
struct HallPoint {
    std::vector<double> axis_values;
    HallResult result;
    bool ok = true;
    std::string error;
};

// Model and Hall parameters for the current parameter block of cfg.
struct HallJob {
    TwoBandModel model;
    HallParams params;
};
HallJob hall_job(const RunConfig& cfg);

// Parameter values of every requested point, outer axis first.
std::vector<std::vector<double>> scan_points(const RunConfig& cfg);

// Evaluates all points of cfg (one point if there is no scan axis). Scan
// points are distributed over cfg.workers; a single point hands the workers to
// the k-grid instead. Results are index-addressed.
std::vector<HallPoint> evaluate_hall(const RunConfig& cfg);

// Qubit (gap Delta, tilt along x) coupled by g (sigma_- b^+ + h.c.) to a
// dim_R-level oscillator of frequency w_r.
CompositeSystem composite_system(const CompositeParams& p);

struct KernelCheck {
    std::vector<double> times;
    std::vector<Matrix> direct, master;
    double max_deviation = 0.0; // sup_t max_ij |master - direct| / sup_t max_ij |direct|
    double trace_error = 0.0;
    double hermiticity_error = 0.0;
};
KernelCheck kernel_check(const CompositeParams& p);

inline constexpr double kKernelCheckTol = 1e-6;
inline constexpr double kFailedPointFraction = 1e-3;

struct RunOutcome {
    int exit_code = 0;
    std::string dir;     // out/<hash>
    std::string data;    // main CSV path
    bool cached = false;
    std::string summary; // one line for stdout
};

// Runs hall-point, hall-scan, cavity or kernel-check and persists the results
// under cfg.out_dir/<hash>/. A complete manifest with the same hash is reused.
RunOutcome run(const RunConfig& cfg);

// "%.17g"
std::string format_double(double x);

} // namespace openhall
