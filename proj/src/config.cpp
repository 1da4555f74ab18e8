#include "openhall/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace openhall {

static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

IniFile IniFile::parse(const std::string& text) {
    IniFile ini;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto c = line.find_first_of("#;");
        if (c != std::string::npos) line = line.substr(0, c);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(where + "empty section name");
            ini.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of a section");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + "empty key");
        auto& sec = ini.sections[section];
        if (sec.count(key)) throw ConfigError(where + "duplicate key " + section + "." + key);
        sec[key] = value;
    }
    return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const { return get(section, key) != nullptr; }

const std::string* IniFile::get(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

Command parse_command(const std::string& s) {
    if (s == "hall-point") return Command::HallPoint;
    if (s == "hall-scan") return Command::HallScan;
    if (s == "cavity") return Command::Cavity;
    if (s == "kernel-check") return Command::KernelCheck;
    if (s == "verify") return Command::Verify;
    throw ConfigError("unknown command '" + s + "'");
}

std::string to_string(Command c) {
    switch (c) {
    case Command::HallPoint: return "hall-point";
    case Command::HallScan: return "hall-scan";
    case Command::Cavity: return "cavity";
    case Command::KernelCheck: return "kernel-check";
    case Command::Verify: return "verify";
    }
    return "?";
}

std::vector<double> ScanAxis::values() const {
    std::vector<double> v;
    for (int i = 0; i < points; ++i) {
        const double x = points == 1 ? min : min + (max - min) * i / (points - 1);
        if (skip_zero && std::abs(x) < 1e-12) continue;
        v.push_back(x);
    }
    return v;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

const std::map<std::string, std::vector<std::string>> kParamKeys = {
    {"rashba-dresselhaus", {"lambda0", "beta0", "h0", "m_star", "mu", "T", "gamma", "omega", "kmax"}},
    {"lattice", {"t_a", "delta", "l", "p", "q", "m0", "mu", "T", "gamma", "omega"}},
    {"qwz", {"mass", "mu", "T", "gamma", "omega"}},
    {"cavity", {"delta", "omega_drive", "gamma", "lambda", "alpha_re", "alpha_im", "t_max", "dt", "temperature",
                "tol"}},
    {"composite", {"dim_R", "g", "Delta", "w_r", "beta", "tilt", "t_max", "dt", "epsilon"}},
};

const std::map<std::string, std::set<std::string>> kSectionKeys = {
    {"model", {"type", "variant", "include_kinetic", "magnetic_bz", "richardson"}},
    {"params", {}}, // model dependent
    {"grid",
     {"nk1", "nk2", "scan_axis", "scan_min", "scan_max", "scan_points", "scan_skip_zero", "scan_axis2", "scan_min2",
      "scan_max2", "scan_points2", "scan_skip_zero2"}},
    {"numerics", {"workers", "estimate", "convergence_tol", "route", "mutation"}},
    {"output", {"dir", "plot"}},
};

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        if (std::isnan(x)) throw std::invalid_argument("nan");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != std::round(x) || std::abs(x) > 1e9) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

int checked_int(const std::string& key, double x) {
    if (x != std::round(x)) throw ConfigError(key + " must be an integer");
    return static_cast<int>(x);
}

} // namespace

void set_param(RunConfig& c, const std::string& key, double x) {
    const std::string& m = c.model;
    if (m == "rashba-dresselhaus") {
        auto& p = c.rd;
        if (key == "lambda0") p.lambda0 = x;
        else if (key == "beta0") p.beta0 = x;
        else if (key == "h0") p.h0 = x;
        else if (key == "m_star") p.m_star = x;
        else if (key == "mu") p.mu = x;
        else if (key == "T") p.T = x;
        else if (key == "gamma") p.gamma = x;
        else if (key == "omega") p.omega = x;
        else if (key == "kmax") p.kmax = x;
        else throw ConfigError("unknown parameter '" + key + "' for model " + m);
    } else if (m == "lattice") {
        auto& p = c.lattice;
        if (key == "t_a") p.t_a = x;
        else if (key == "delta") p.delta = x;
        else if (key == "l") p.l = checked_int(key, x);
        else if (key == "p") p.p = checked_int(key, x);
        else if (key == "q") p.q = checked_int(key, x);
        else if (key == "m0") p.m0 = checked_int(key, x);
        else if (key == "mu") p.mu = x;
        else if (key == "T") p.T = x;
        else if (key == "gamma") p.gamma = x;
        else if (key == "omega") p.omega = x;
        else throw ConfigError("unknown parameter '" + key + "' for model " + m);
    } else if (m == "qwz") {
        if (key == "mass") c.qwz_mass = x;
        else if (key == "mu") c.qwz.mu = x;
        else if (key == "T") c.qwz.T = x;
        else if (key == "gamma") c.qwz.gamma = x;
        else if (key == "omega") c.qwz.omega = x;
        else throw ConfigError("unknown parameter '" + key + "' for model " + m);
    } else if (m == "cavity") {
        auto& p = c.cavity;
        if (key == "delta") p.delta = x;
        else if (key == "omega_drive") p.omega_drive = x;
        else if (key == "gamma") p.gamma = x;
        else if (key == "lambda") p.lambda = x;
        else if (key == "alpha_re") p.alpha.real(x);
        else if (key == "alpha_im") p.alpha.imag(x);
        else if (key == "t_max") p.t_max = x;
        else if (key == "dt") p.dt = x;
        else if (key == "temperature") p.temperature = x;
        else if (key == "tol") p.tol = x;
        else throw ConfigError("unknown parameter '" + key + "' for model " + m);
    } else if (m == "composite") {
        auto& p = c.composite;
        if (key == "dim_R") p.dim_R = checked_int(key, x);
        else if (key == "g") p.g = x;
        else if (key == "Delta") p.Delta = x;
        else if (key == "w_r") p.w_r = x;
        else if (key == "beta") p.beta = x;
        else if (key == "tilt") p.tilt = x;
        else if (key == "t_max") p.t_max = x;
        else if (key == "dt") p.dt = x;
        else if (key == "epsilon") p.epsilon = x;
        else throw ConfigError("unknown parameter '" + key + "' for model " + m);
    } else {
        throw ConfigError("parameters need a [model] type");
    }
}

double get_param(const RunConfig& c, const std::string& key) {
    const std::string& m = c.model;
    if (m == "rashba-dresselhaus") {
        const auto& p = c.rd;
        const std::map<std::string, double> v = {{"lambda0", p.lambda0}, {"beta0", p.beta0}, {"h0", p.h0},
                                                 {"m_star", p.m_star},   {"mu", p.mu},       {"T", p.T},
                                                 {"gamma", p.gamma},     {"omega", p.omega}, {"kmax", p.kmax}};
        if (v.count(key)) return v.at(key);
    } else if (m == "lattice") {
        const auto& p = c.lattice;
        const std::map<std::string, double> v = {{"t_a", p.t_a}, {"delta", p.delta}, {"l", p.l},   {"p", p.p},
                                                 {"q", p.q},     {"m0", p.m0},       {"mu", p.mu}, {"T", p.T},
                                                 {"gamma", p.gamma}, {"omega", p.omega}};
        if (v.count(key)) return v.at(key);
    } else if (m == "qwz") {
        const std::map<std::string, double> v = {{"mass", c.qwz_mass}, {"mu", c.qwz.mu}, {"T", c.qwz.T},
                                                 {"gamma", c.qwz.gamma}, {"omega", c.qwz.omega}};
        if (v.count(key)) return v.at(key);
    }
    throw ConfigError("unknown parameter '" + key + "' for model " + m);
}

std::string param_label(const std::string& model, const std::string& key) {
    static const std::map<std::string, std::string> units = {
        {"lambda0", "mevnm"}, {"beta0", "mevnm"}, {"h0", "mev"},  {"m_star", "me"},   {"mu", "mev"},
        {"T", "k"},           {"gamma", "mev"},   {"omega", "mev"}, {"kmax", "invnm"}, {"t_a", "mev"},
        {"delta", "mev"},     {"l", "1"},         {"p", "1"},      {"q", "1"},        {"m0", "1"},
        {"mass", "1"}};
    auto it = units.find(key);
    (void)model;
    return key + "_" + (it == units.end() ? std::string("1") : it->second);
}

RunConfig load_config(Command command, const std::string& text) {
    const IniFile ini = IniFile::parse(text);
    RunConfig c;
    c.command = command;

    for (const auto& [sec, keys] : ini.sections) {
        auto allowed = kSectionKeys.find(sec);
        if (allowed == kSectionKeys.end()) throw ConfigError("unknown section [" + sec + "]");
        if (sec == "params") continue;
        for (const auto& kv : keys)
            if (!allowed->second.count(kv.first)) throw ConfigError("unknown key " + sec + "." + kv.first);
    }

    if (auto t = ini.get("model", "type")) c.model = *t;
    if (!c.model.empty() && !kParamKeys.count(c.model)) throw ConfigError("unknown model type '" + c.model + "'");
    if (command != Command::Verify && c.model.empty()) throw ConfigError("model.type is required");
    if ((command == Command::HallPoint || command == Command::HallScan) && !c.is_hall_model())
        throw ConfigError(to_string(command) + " needs a Hall model (rashba-dresselhaus, lattice, qwz)");
    if (command == Command::Cavity && c.model != "cavity") throw ConfigError("cavity needs model.type = cavity");
    if (command == Command::KernelCheck && c.model != "composite")
        throw ConfigError("kernel-check needs model.type = composite");

    // model switches
    if (auto v = ini.get("model", "variant")) {
        if (c.model != "rashba-dresselhaus") throw ConfigError("model.variant applies to rashba-dresselhaus only");
        if (*v == "transition") c.rd.variant = RDVariant::Transition;
        else if (*v == "no-transition") c.rd.variant = RDVariant::NoTransition;
        else throw ConfigError("model.variant: expected transition or no-transition");
    }
    if (auto v = ini.get("model", "include_kinetic")) {
        if (c.model != "rashba-dresselhaus") throw ConfigError("model.include_kinetic applies to rashba-dresselhaus only");
        c.rd.include_kinetic = to_bool("model.include_kinetic", *v);
    }
    if (auto v = ini.get("model", "richardson")) {
        if (c.model != "rashba-dresselhaus") throw ConfigError("model.richardson applies to rashba-dresselhaus only");
        c.rd.richardson = to_bool("model.richardson", *v);
    }
    if (auto v = ini.get("model", "magnetic_bz")) {
        if (c.model != "lattice") throw ConfigError("model.magnetic_bz applies to lattice only");
        c.lattice.magnetic_bz = to_bool("model.magnetic_bz", *v);
    }

    if (auto s = ini.sections.find("params"); s != ini.sections.end()) {
        if (c.model.empty()) throw ConfigError("[params] needs a model type");
        const auto& keys = kParamKeys.at(c.model);
        for (const auto& [k, v] : s->second) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end())
                throw ConfigError("unknown key params." + k + " for model " + c.model);
            set_param(c, k, to_double("params." + k, v));
        }
    }

    // grid
    if (auto v = ini.get("grid", "nk1")) c.nk1 = to_int("grid.nk1", *v);
    if (auto v = ini.get("grid", "nk2")) c.nk2 = to_int("grid.nk2", *v);
    if (c.nk1 < 2 || c.nk2 < 1) throw ConfigError("grid: nk1 >= 2 and nk2 >= 1 required");
    for (const std::string suffix : {"", "2"}) {
        auto name = ini.get("grid", "scan_axis" + suffix);
        const bool any = ini.has("grid", "scan_min" + suffix) || ini.has("grid", "scan_max" + suffix) ||
                         ini.has("grid", "scan_points" + suffix);
        if (!name) {
            if (any) throw ConfigError("grid.scan_axis" + suffix + " missing");
            continue;
        }
        if (suffix == "2" && c.axes.empty()) throw ConfigError("grid.scan_axis2 needs grid.scan_axis");
        ScanAxis a;
        a.name = *name;
        for (const char* k : {"scan_min", "scan_max", "scan_points"})
            if (!ini.has("grid", k + suffix)) throw ConfigError(std::string("grid.") + k + suffix + " missing");
        a.min = to_double("grid.scan_min" + suffix, *ini.get("grid", "scan_min" + suffix));
        a.max = to_double("grid.scan_max" + suffix, *ini.get("grid", "scan_max" + suffix));
        a.points = to_int("grid.scan_points" + suffix, *ini.get("grid", "scan_points" + suffix));
        if (auto z = ini.get("grid", "scan_skip_zero" + suffix)) a.skip_zero = to_bool("grid.scan_skip_zero", *z);
        if (a.points < 1 || a.points > 100000) throw ConfigError("grid.scan_points must be in 1..100000");
        if (!c.is_hall_model()) throw ConfigError("scan axes apply to Hall models only");
        get_param(c, a.name); // validates the axis name
        if (a.values().empty()) throw ConfigError("scan axis " + a.name + " has no points");
        c.axes.push_back(a);
    }
    if (command == Command::HallScan && c.axes.empty()) throw ConfigError("hall-scan needs grid.scan_axis");

    // numerics
    if (auto v = ini.get("numerics", "workers")) c.workers = to_int("numerics.workers", *v);
    if (auto v = ini.get("numerics", "estimate")) c.estimate = to_bool("numerics.estimate", *v);
    if (auto v = ini.get("numerics", "convergence_tol")) c.convergence_tol = to_double("numerics.convergence_tol", *v);
    if (auto v = ini.get("numerics", "route")) c.route = *v;
    if (auto v = ini.get("numerics", "mutation")) c.mutation = *v;
    if (c.workers < 1 || c.workers > 1024) throw ConfigError("numerics.workers must be in 1..1024");
    if (c.route != "formula" && c.route != "resolvent") throw ConfigError("numerics.route: expected formula or resolvent");
    if (c.mutation != "none" && c.mutation != "closed-form-sign")
        throw ConfigError("numerics.mutation: expected none or closed-form-sign");
    if (c.convergence_tol < 0) throw ConfigError("numerics.convergence_tol must be >= 0");

    // output
    if (auto v = ini.get("output", "dir")) c.out_dir = *v;
    if (auto v = ini.get("output", "plot")) c.plot = to_bool("output.plot", *v);

    // model-level validation
    try {
        if (c.model == "rashba-dresselhaus") c.rd.validate();
        if (c.model == "lattice") c.lattice.validate();
        if (c.model == "cavity") c.cavity.validate();
        if (c.model == "qwz" && (c.qwz.T < 0 || !(c.qwz.omega > 0) || c.qwz.gamma < 0))
            throw ArgumentError("qwz: T >= 0, omega > 0, gamma >= 0 required");
        if (c.model == "composite") {
            const auto& p = c.composite;
            if (p.dim_R < 1 || p.dim_R > 16) throw ArgumentError("composite: dim_R must be in 1..16");
            if (!(p.dt > 0) || !(p.t_max > p.dt)) throw ArgumentError("composite: 0 < dt < t_max required");
            if (!(p.beta >= 0)) throw ArgumentError("composite: beta must be >= 0");
        }
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }

    // canonical text: every parsed key except workers and the output block
    std::ostringstream can;
    can << "openhall " << kVersion << "\ncommand=" << to_string(command) << "\n";
    for (const auto& [sec, keys] : ini.sections) {
        if (sec == "output") continue;
        for (const auto& [k, v] : keys) {
            if (sec == "numerics" && k == "workers") continue;
            c.hashed[sec][k] = v;
            can << sec << "." << k << "=" << v << "\n";
        }
    }
    c.canonical = can.str();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(c.canonical)));
    c.hash = buf;
    return c;
}

RunConfig load_config_file(Command command, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config(command, ss.str());
}

} // namespace openhall
