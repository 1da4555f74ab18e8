#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "openhall/cavity.hpp"
#include "openhall/models.hpp"

namespace openhall {

inline constexpr const char* kVersion = OPENHALL_VERSION;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Plain sectioned key = value text. '#' and ';' start comments.
struct IniFile {
    std::map<std::string, std::map<std::string, std::string>> sections;
    static IniFile parse(const std::string& text);
    bool has(const std::string& section, const std::string& key) const;
    const std::string* get(const std::string& section, const std::string& key) const;
};

enum class Command { HallPoint, HallScan, Cavity, KernelCheck, Verify };
Command parse_command(const std::string& s); // throws ConfigError
std::string to_string(Command c);

struct ScanAxis {
    std::string name;
    double min = 0.0, max = 0.0;
    int points = 1;
    bool skip_zero = false; // drop points with |x| < 1e-12 (gapless parameter values)
    std::vector<double> values() const;
};

// Qubit coupled to a truncated oscillator, for kernel-check.
struct CompositeParams {
    int dim_R = 2;
    double g = 0.3, Delta = 1.0, w_r = 0.8, beta = 1.0, tilt = 0.15;
    double t_max = 10.0, dt = 0.01, epsilon = 0.1;
};

struct RunConfig {
    Command command = Command::HallPoint;
    std::string model; // rashba-dresselhaus | lattice | qwz | cavity | composite | (empty for verify)

    RashbaDresselhausParams rd;
    LatticeParams lattice;
    double qwz_mass = 1.0;
    HallParams qwz;
    CavityParams cavity;
    CompositeParams composite;

    int nk1 = 256, nk2 = 256;
    std::vector<ScanAxis> axes; // one or two

    int workers = 1;
    bool estimate = true;
    double convergence_tol = 0.0;
    std::string route = "formula";   // formula | resolvent
    std::string mutation = "none"; // none | closed-form-sign
    std::string suite = "all";

    std::string out_dir = "out";
    bool plot = true;

    // raw keys that enter the hash (no numerics.workers, no [output])
    std::map<std::string, std::map<std::string, std::string>> hashed;
    std::string canonical; // hashed text
    std::string hash;      // 16 hex digits

    bool is_hall_model() const { return model == "rashba-dresselhaus" || model == "lattice" || model == "qwz"; }
};

std::uint64_t fnv1a64(const std::string& s);

// Parses and validates; numerics.workers and [output] do not enter the hash.
RunConfig load_config(Command command, const std::string& text);
RunConfig load_config_file(Command command, const std::string& path);

// Sets a numeric model parameter by its config key (used by scans).
void set_param(RunConfig& cfg, const std::string& key, double value);
double get_param(const RunConfig& cfg, const std::string& key);
// CSV column label of a parameter, with units.
std::string param_label(const std::string& model, const std::string& key);

} // namespace openhall
