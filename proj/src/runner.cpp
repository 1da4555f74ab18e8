#include "openhall/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "openhall/parallel.hpp"

namespace openhall {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

HallJob hall_job(const RunConfig& c) {
    try {
        if (c.model == "rashba-dresselhaus") {
            c.rd.validate();
            return {build_rashba_dresselhaus(c.rd), hall_params(c.rd)};
        }
        if (c.model == "lattice") {
            c.lattice.validate();
            return {build_lattice(c.lattice), hall_params(c.lattice)};
        }
        if (c.model == "qwz") return {build_qwz(c.qwz_mass), c.qwz};
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("model '" + c.model + "' has no Hall conductance");
}

std::vector<std::vector<double>> scan_points(const RunConfig& cfg) {
    std::vector<std::vector<double>> pts;
    if (cfg.axes.empty()) return {{}};
    const auto a = cfg.axes[0].values();
    if (cfg.axes.size() == 1) {
        for (double x : a) pts.push_back({x});
        return pts;
    }
    const auto b = cfg.axes[1].values();
    for (double x : a)
        for (double y : b) pts.push_back({x, y});
    return pts;
}

namespace {

HallResult failed_result() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    HallResult r;
    r.sigma0 = r.sigma1 = r.sigma_total = cplx(nan, nan);
    r.chern = r.convergence_estimate = nan;
    return r;
}

RunConfig at_point(const RunConfig& cfg, const std::vector<double>& x) {
    RunConfig c = cfg;
    for (std::size_t i = 0; i < x.size(); ++i) set_param(c, cfg.axes[i].name, x[i]);
    return c;
}

} // namespace

std::vector<HallPoint> evaluate_hall(const RunConfig& cfg) {
    const auto pts = scan_points(cfg);
    const long n = static_cast<long>(pts.size());
    // build every job up front so that invalid scan values are config errors
    std::vector<HallJob> jobs;
    jobs.reserve(n);
    for (const auto& x : pts) jobs.push_back(hall_job(at_point(cfg, x)));

    HallGrid grid;
    grid.n1 = cfg.nk1;
    grid.n2 = cfg.nk2;
    grid.estimate = cfg.estimate;
    grid.convergence_tol = cfg.convergence_tol;
    grid.workers = n == 1 ? cfg.workers : 1;
    const int outer = n == 1 ? 1 : cfg.workers;

    std::vector<HallPoint> out(n);
    parallel_for(n, outer, [&](long i) {
        HallPoint& hp = out[i];
        hp.axis_values = pts[i];
        try {
            hp.result = cfg.route == "resolvent" ? hall_conductance_resolvent(jobs[i].model, jobs[i].params, grid)
                                                 : hall_conductance(jobs[i].model, jobs[i].params, grid);
        } catch (const std::runtime_error& e) {
            hp.ok = false;
            hp.error = e.what();
            hp.result = failed_result();
        }
    });
    return out;
}

CompositeSystem composite_system(const CompositeParams& p) {
    CompositeSystem s;
    s.dim_S = 2;
    s.dim_R = p.dim_R;
    s.H_S = 0.5 * p.Delta * pauli(3) + p.tilt * pauli(1);
    Matrix b = Matrix::Zero(p.dim_R, p.dim_R);
    for (int k = 1; k < p.dim_R; ++k) b(k - 1, k) = std::sqrt(static_cast<double>(k));
    s.H_R = p.w_r * b.adjoint() * b;
    s.H_SR = p.g * (kron(sigma_minus(), b.adjoint()) + kron(sigma_plus(), b));
    s.beta = p.beta;
    return s;
}

KernelCheck kernel_check(const CompositeParams& p) {
    const CompositeSystem sys = composite_system(p);
    const long nk = std::lround(p.t_max / p.dt);
    if (nk % 2 != 0 || std::abs(nk * p.dt - p.t_max) > 1e-9 * p.t_max)
        throw ConfigError("kernel-check: t_max must be an even multiple of dt");
    std::vector<double> tk(nk + 1), tout;
    for (long i = 0; i <= nk; ++i) tk[i] = p.t_max * i / nk;
    for (long i = 0; i <= nk; i += 2) tout.push_back(tk[i]);

    const Matrix C = pauli(1);
    const Matrix Lam = commutator(sys.lift_S(C), sys.rho_eq());
    KernelCheck kc;
    kc.times = tout;
    kc.direct = q_nu_direct(sys, C, tout);
    kc.master = q_nu_master_solve(nz_kernel(sys, tk, Lam), trace_R(Lam, 2, p.dim_R), tout);
    double scale = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < tout.size(); ++i) {
        dev = std::max(dev, max_abs(kc.master[i] - kc.direct[i]));
        scale = std::max(scale, max_abs(kc.direct[i]));
        kc.trace_error = std::max(kc.trace_error, std::abs(kc.master[i].trace()));
        kc.hermiticity_error = std::max(kc.hermiticity_error, max_abs(kc.master[i] + kc.master[i].adjoint()));
    }
    kc.max_deviation = scale > 0.0 ? dev / scale : dev;
    return kc;
}

// ---- persistence -----------------------------------------------------------

namespace {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_text(const RunConfig& cfg, const Table& t) {
    std::ostringstream o;
    o << "# openhall " << kVersion << " config_hash=" << cfg.hash << "\n";
    for (std::size_t i = 0; i < t.header.size(); ++i) o << (i ? "," : "") << t.header[i];
    o << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << r[i];
        o << "\n";
    }
    return o.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw NumericalError("cannot write " + p.string());
    out << text;
    if (!out) throw NumericalError("write failed for " + p.string());
}

json pair_json(cplx z) { return json::array({z.real(), z.imag()}); }

json base_json(const RunConfig& cfg) {
    json j;
    j["openhall_version"] = kVersion;
    j["command"] = to_string(cfg.command);
    j["config"] = cfg.hashed;
    j["config_hash"] = cfg.hash;
    return j;
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

std::string plot_script(const RunConfig& cfg, const std::string& data, const std::string& xcol,
                        const std::vector<std::pair<int, std::string>>& ycols, int xindex, const std::string& ylabel) {
    std::ostringstream o;
    o << "# openhall " << kVersion << " config_hash=" << cfg.hash << "\n";
    o << "set datafile separator ','\n";
    o << "set terminal pngcairo size 900,600\n";
    o << "set output '" << fs::path(data).stem().string() << ".png'\n";
    o << "set xlabel '" << xcol << "'\nset ylabel '" << ylabel << "'\nset grid\n";
    o << "plot ";
    for (std::size_t i = 0; i < ycols.size(); ++i)
        o << (i ? ", \\\n     " : "") << "'" << data << "' skip 2 using " << xindex << ":" << ycols[i].first
          << " with lines title '" << ycols[i].second << "'";
    o << "\n";
    return o.str();
}

std::string plot_script_2d(const RunConfig& cfg, const std::string& data, const std::string& x, const std::string& y,
                           int zcol) {
    std::ostringstream o;
    o << "# openhall " << kVersion << " config_hash=" << cfg.hash << "\n";
    o << "set datafile separator ','\n";
    o << "set terminal pngcairo size 900,700\n";
    o << "set output '" << fs::path(data).stem().string() << ".png'\n";
    o << "set xlabel '" << x << "'\nset ylabel '" << y << "'\nset view map\n";
    o << "splot '" << data << "' skip 2 using 1:2:" << zcol << " with points pointtype 5 palette title 'sigma_re_e2h'\n";
    return o.str();
}

struct Persisted {
    std::vector<std::pair<std::string, std::string>> files; // name, text
    json diagnostics = json::object();
    std::string status = "complete";
    long points = 0, failed = 0;
    json failures = json::array();
    std::string data;
    std::string summary;
};

Persisted hall_outputs(const RunConfig& cfg, const std::vector<HallPoint>& pts) {
    Persisted out;
    Table t;
    for (const auto& a : cfg.axes) t.header.push_back(param_label(cfg.model, a.name));
    for (const char* h : {"sigma0_re_e2h", "sigma0_im_e2h", "sigma1_re_e2h", "sigma1_im_e2h", "sigma_re_e2h",
                          "sigma_im_e2h", "chern_1", "convergence_estimate_e2h", "excluded_points", "total_points",
                          "status"})
        t.header.push_back(h);

    json results = json::array();
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        const HallResult& r = p.result;
        std::vector<std::string> row;
        for (double x : p.axis_values) row.push_back(format_double(x));
        for (double x : {r.sigma0.real(), r.sigma0.imag(), r.sigma1.real(), r.sigma1.imag(), r.sigma_total.real(),
                         r.sigma_total.imag(), r.chern, r.convergence_estimate})
            row.push_back(format_double(x));
        row.push_back(std::to_string(r.excluded_points));
        row.push_back(std::to_string(r.total_points));
        const std::string status = !p.ok ? "failed" : (r.flagged ? "flagged" : "ok");
        row.push_back(status);
        t.rows.push_back(row);

        json e;
        json axis = json::object();
        for (std::size_t k = 0; k < cfg.axes.size(); ++k) axis[cfg.axes[k].name] = p.axis_values[k];
        e["axis"] = axis;
        e["sigma0_e2h"] = pair_json(r.sigma0);
        e["sigma1_e2h"] = pair_json(r.sigma1);
        e["sigma_e2h"] = pair_json(r.sigma_total);
        e["chern"] = r.chern;
        e["convergence_estimate_e2h"] = r.convergence_estimate;
        e["excluded_points"] = r.excluded_points;
        e["total_points"] = r.total_points;
        e["grid"] = r.grid_spec;
        e["status"] = status;
        if (!p.ok) {
            e["error"] = p.error;
            out.failures.push_back({{"index", i}, {"error", p.error}});
            ++out.failed;
        } else {
            worst = std::max(worst, r.convergence_estimate);
        }
        results.push_back(e);
    }
    out.points = static_cast<long>(pts.size());

    const bool scan = cfg.command == Command::HallScan;
    out.data = scan ? "scan.csv" : "point.csv";
    out.files.push_back({out.data, csv_text(cfg, t)});

    json j = base_json(cfg);
    j["results"] = results;
    out.diagnostics = {{"route", cfg.route},
                       {"points", out.points},
                       {"failed_points", out.failed},
                       {"max_convergence_estimate_e2h", worst}};
    j["diagnostics"] = out.diagnostics;
    j["timings"] = {{"file", "manifest.json"}};
    out.files.push_back({scan ? "scan.json" : "point.json", json_text(j)});

    if (cfg.plot && scan) {
        const std::string x = t.header[0];
        const int off = static_cast<int>(cfg.axes.size());
        const std::string script =
            cfg.axes.size() == 2
                ? plot_script_2d(cfg, out.data, x, t.header[1], off + 5)
                : plot_script(cfg, out.data, x,
                              {{off + 1, "sigma0_re"}, {off + 5, "sigma_re"}, {off + 6, "sigma_im"}}, 1,
                              "e^2/h");
        out.files.push_back({"plot.gp", script});
    }

    if (out.failed > 0 && static_cast<double>(out.failed) / out.points > kFailedPointFraction) out.status = "failed";
    std::ostringstream s;
    s << to_string(cfg.command) << ": " << out.points << " point(s), " << out.failed << " failed";
    if (!scan && pts.size() == 1 && pts[0].ok)
        s << ", sigma = " << format_double(pts[0].result.sigma_total.real()) << " + "
          << format_double(pts[0].result.sigma_total.imag()) << "i e^2/h";
    out.summary = s.str();
    return out;
}

Persisted cavity_outputs(const RunConfig& cfg) {
    Persisted out;
    const CavityTrajectory tr = exact_response(cfg.cavity);
    Table t;
    t.header = {"t_invgamma", "n_exact_1", "n_linear_1", "n_second_1", "u1_re_1", "u1_im_1", "d1_re_1", "d1_im_1"};
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        t.rows.push_back({format_double(tr.times[k]), format_double(tr.n_exact[k]), format_double(tr.n_linear[k]),
                          format_double(tr.n_second[k]), format_double(tr.u1[k].real()),
                          format_double(tr.u1[k].imag()), format_double(tr.D1[k].real()),
                          format_double(tr.D1[k].imag())});
    out.data = "cavity.csv";
    out.files.push_back({out.data, csv_text(cfg, t)});

    json results = json::array();
    for (int order : {1, 2}) {
        const SeriesDeviation d = series_crosscheck(tr, order);
        results.push_back(
            {{"order", order}, {"max_deviation", d.max_deviation}, {"peak", d.peak}, {"relative", d.relative}});
        if (order == 1) {
            std::ostringstream s;
            s << "cavity: " << tr.times.size() << " samples, linear deviation " << format_double(d.relative)
              << " of peak";
            out.summary = s.str();
        }
    }
    json j = base_json(cfg);
    j["results"] = results;
    out.diagnostics = {{"samples", tr.times.size()}, {"halving_change", tr.halving_change}};
    j["diagnostics"] = out.diagnostics;
    j["timings"] = {{"file", "manifest.json"}};
    out.files.push_back({"cavity.json", json_text(j)});
    if (cfg.plot)
        out.files.push_back({"plot.gp", plot_script(cfg, out.data, "t_invgamma",
                                                    {{2, "n_exact"}, {3, "n_linear"}, {4, "n_second"}}, 1, "n_e")});
    out.points = static_cast<long>(tr.times.size());
    return out;
}

Persisted kernel_outputs(const RunConfig& cfg) {
    Persisted out;
    const KernelCheck kc = kernel_check(cfg.composite);
    Table t;
    t.header = {"t_invmev"};
    for (const char* who : {"direct", "master"})
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (const char* part : {"re", "im"})
                    t.header.push_back(std::string(who) + "_q" + std::to_string(i) + std::to_string(j) + "_" + part);
    t.header.push_back("abs_deviation");
    for (std::size_t k = 0; k < kc.times.size(); ++k) {
        std::vector<std::string> row{format_double(kc.times[k])};
        for (const Matrix* m : {&kc.direct[k], &kc.master[k]})
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    row.push_back(format_double((*m)(i, j).real()));
                    row.push_back(format_double((*m)(i, j).imag()));
                }
        row.push_back(format_double(max_abs(kc.master[k] - kc.direct[k])));
        t.rows.push_back(row);
    }
    out.data = "kernel.csv";
    out.files.push_back({out.data, csv_text(cfg, t)});

    const bool pass = kc.max_deviation <= kKernelCheckTol;
    json j = base_json(cfg);
    j["results"] = json::array({{{"relative_deviation", kc.max_deviation},
                                 {"threshold", kKernelCheckTol},
                                 {"trace_error", kc.trace_error},
                                 {"hermiticity_error", kc.hermiticity_error},
                                 {"pass", pass}}});
    out.diagnostics = {{"samples", kc.times.size()}};
    j["diagnostics"] = out.diagnostics;
    j["timings"] = {{"file", "manifest.json"}};
    out.files.push_back({"kernel.json", json_text(j)});
    if (cfg.plot)
        out.files.push_back({"plot.gp", plot_script(cfg, out.data, "t_invmev", {{3, "direct Re q01"}, {11, "master Re q01"}},
                                                    1, "q")});
    out.points = static_cast<long>(kc.times.size());
    if (!pass) {
        out.status = "failed";
        out.failures.push_back({{"index", -1}, {"error", "master/direct deviation above threshold"}});
    }
    std::ostringstream s;
    s << "kernel-check: relative deviation " << format_double(kc.max_deviation) << (pass ? " (pass)" : " (FAIL)");
    out.summary = s.str();
    return out;
}

} // namespace

RunOutcome run(const RunConfig& cfg) {
    if (cfg.command == Command::Verify) throw ConfigError("run: use run_verify for the verify command");
    RunOutcome oc;
    const fs::path dir = fs::path(cfg.out_dir) / cfg.hash;
    oc.dir = dir.string();
    const fs::path manifest = dir / "manifest.json";

    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        json m = json::parse(in, nullptr, false);
        if (!m.is_discarded() && m.value("config_hash", "") == cfg.hash) {
            if (m.value("canonical_config", "") != cfg.canonical)
                throw ConfigError("cache entry " + dir.string() + " holds a different configuration");
            if (m.value("status", "") == "complete") {
                oc.cached = true;
                oc.data = (dir / m.value("data", "")).string();
                oc.summary = to_string(cfg.command) + ": cached result " + oc.data;
                return oc;
            }
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    Persisted res;
    switch (cfg.command) {
    case Command::HallPoint:
    case Command::HallScan: res = hall_outputs(cfg, evaluate_hall(cfg)); break;
    case Command::Cavity: res = cavity_outputs(cfg); break;
    case Command::KernelCheck: res = kernel_outputs(cfg); break;
    default: break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(dir);
    json files = json::array();
    for (const auto& [name, text] : res.files) {
        write_file(dir / name, text);
        files.push_back(name);
    }
    json m;
    m["openhall_version"] = kVersion;
    m["config_hash"] = cfg.hash;
    m["canonical_config"] = cfg.canonical;
    m["command"] = to_string(cfg.command);
    m["status"] = res.status;
    m["data"] = res.data;
    m["files"] = files;
    m["points"] = res.points;
    m["failed_points"] = res.failed;
    m["failures"] = res.failures;
    m["workers"] = cfg.workers;
    m["timings"] = {{"wall_time_s", wall}};
    write_file(manifest, json_text(m));

    oc.data = (dir / res.data).string();
    oc.exit_code = res.status == "complete" ? 0 : 2;
    oc.summary = res.summary + " -> " + oc.data;
    return oc;
}

} // namespace openhall
